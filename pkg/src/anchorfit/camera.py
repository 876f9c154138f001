"""Rigid objects, pinhole cameras and keypoint observations."""

from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, ContractError, InvalidInputError
from .rotations import axis_angle_to_matrix

Z_MIN = 1e-4
# sharpness of the softplus depth clamp; beyond 40/k above Z_MIN the clamp is exact
_CLAMP_K = 1.0 / Z_MIN
_CLAMP_CUTOFF = 40.0


def _ro(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ObjectMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", _ro(self.vertices))
        object.__setattr__(self, "faces", _ro(self.faces, dtype=np.int64).reshape(-1, 3))
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3 or len(self.vertices) == 0:
            raise InvalidInputError("object mesh needs a non-empty (V, 3) vertex array")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise ContractError("object face index out of range")


@dataclass(frozen=True, eq=False)
class ObjectState:
    rotation: np.ndarray
    translation: np.ndarray
    mesh: ObjectMesh

    def __post_init__(self):
        object.__setattr__(self, "rotation", _ro(self.rotation))
        object.__setattr__(self, "translation", _ro(self.translation))
        if self.rotation.shape != (3,) or self.translation.shape != (3,):
            raise ContractError("object rotation/translation must be 3-vectors")
        if not (np.all(np.isfinite(self.rotation)) and np.all(np.isfinite(self.translation))):
            raise InvalidInputError("non-finite object pose")
        if np.linalg.norm(self.rotation) > np.pi + 1e-6:
            raise InvalidInputError("object axis-angle norm exceeds pi")

    def replace(self, rotation=None, translation=None):
        return ObjectState(
            self.rotation if rotation is None else rotation,
            self.translation if translation is None else translation,
            self.mesh,
        )


def transform_object(state, normals=None):
    """World vertices of the object (and rotated normals when given)."""
    R = axis_angle_to_matrix(state.rotation)
    verts = state.mesh.vertices @ R.T + state.translation
    if normals is None:
        return verts
    return verts, np.asarray(normals, dtype=float) @ R.T


def transform_points(rotation, translation, points):
    """Apply per-frame rigid motions: (F,3),(F,3),(N,3) -> (F,N,3)."""
    R = axis_angle_to_matrix(rotation)
    return np.einsum("fab,nb->fna", R, points) + np.asarray(translation)[:, None, :]


@dataclass(frozen=True, eq=False)
class Camera:
    focal: np.ndarray
    principal: np.ndarray
    image_size: tuple
    rotation: np.ndarray  # world -> camera
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "focal", _ro(self.focal))
        object.__setattr__(self, "principal", _ro(self.principal))
        object.__setattr__(self, "image_size", tuple(int(x) for x in self.image_size))
        object.__setattr__(self, "rotation", _ro(self.rotation))
        object.__setattr__(self, "translation", _ro(self.translation))
        if self.focal.shape != (2,) or np.any(self.focal <= 0):
            raise InvalidInputError("focal lengths must be two positive numbers")
        if self.principal.shape != (2,):
            raise ContractError("principal point must be a 2-vector")
        if len(self.image_size) != 2 or min(self.image_size) <= 0:
            raise InvalidInputError("image_size must be two positive integers")
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise ContractError("extrinsic must be a 3x3 rotation and a 3-vector")
        if np.abs(self.rotation @ self.rotation.T - np.eye(3)).max() > 1e-9 or np.linalg.det(self.rotation) < 0:
            raise InvalidInputError("extrinsic rotation is not orthonormal")

    @classmethod
    def from_extrinsic(cls, focal, principal, image_size, extrinsic):
        E = np.asarray(extrinsic, dtype=float).reshape(3, 4)
        return cls(focal, principal, image_size, E[:, :3], E[:, 3])

    @property
    def extrinsic(self):
        return np.hstack([self.rotation, self.translation[:, None]])

    @property
    def center(self):
        return -self.rotation.T @ self.translation

    def intrinsic_matrix(self):
        fx, fy = self.focal
        cx, cy = self.principal
        return np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])


def project(camera, point):
    """Normalized image coordinates of world points ``(..., 3) -> (..., 2)``."""
    point = np.asarray(point, dtype=float)
    pc = point @ camera.rotation.T + camera.translation
    z = pc[..., 2]
    if np.any(~(z > Z_MIN)):
        raise BehindCameraError(f"point behind camera (depth {np.min(z)!r} <= {Z_MIN})")
    w, h = camera.image_size
    u = (camera.focal[0] * pc[..., 0] / z + camera.principal[0]) / w
    v = (camera.focal[1] * pc[..., 1] / z + camera.principal[1]) / h
    return np.stack([u, v], axis=-1)


def clamp_depth(z):
    """Smooth lower clamp of depth at Z_MIN and its derivative.

    Exact identity once ``z`` exceeds the clamp region, so well-posed
    geometry projects identically to ``project``.
    """
    x = _CLAMP_K * (z - Z_MIN)
    far = x > _CLAMP_CUTOFF
    xs = np.where(far, 0.0, x)
    e = np.exp(-np.abs(xs))
    soft = Z_MIN + (np.maximum(xs, 0.0) + np.log1p(e)) / _CLAMP_K
    zc = np.where(far, z, soft)
    dz = np.where(far, 1.0, np.where(xs >= 0, 1.0 / (1.0 + e), e / (1.0 + e)))
    return zc, dz


@dataclass
class Projection:
    uv: np.ndarray  # (..., 2)
    cam_points: np.ndarray
    depth: np.ndarray
    depth_grad: np.ndarray


def project_smooth(camera, points):
    """Projection used inside the optimizer: depth is softly clamped."""
    points = np.asarray(points, dtype=float)
    pc = points @ camera.rotation.T + camera.translation
    zc, dz = clamp_depth(pc[..., 2])
    w, h = camera.image_size
    u = (camera.focal[0] * pc[..., 0] / zc + camera.principal[0]) / w
    v = (camera.focal[1] * pc[..., 1] / zc + camera.principal[1]) / h
    return Projection(np.stack([u, v], axis=-1), pc, zc, dz)


def project_smooth_backward(camera, proj, grad_uv):
    """Gradient w.r.t. world points given gradient w.r.t. normalized uv."""
    w, h = camera.image_size
    fx, fy = camera.focal
    x, y = proj.cam_points[..., 0], proj.cam_points[..., 1]
    z = proj.depth
    gu = grad_uv[..., 0] * fx / w
    gv = grad_uv[..., 1] * fy / h
    gx = gu / z
    gy = gv / z
    gz = -(gu * x + gv * y) / (z * z) * proj.depth_grad
    g_cam = np.stack([gx, gy, gz], axis=-1)
    return g_cam @ camera.rotation


@dataclass(frozen=True, eq=False)
class KeypointFrame:
    view_id: int
    points: np.ndarray  # (K, 2) normalized
    confidence: np.ndarray  # (K,)

    def __post_init__(self):
        object.__setattr__(self, "view_id", int(self.view_id))
        object.__setattr__(self, "points", _ro(self.points).reshape(-1, 2))
        object.__setattr__(self, "confidence", _ro(self.confidence).reshape(-1))
        if len(self.points) != len(self.confidence):
            raise ContractError("points and confidence differ in length")
        if not np.all(np.isfinite(self.points)):
            raise InvalidInputError("non-finite keypoint")
        c = self.confidence
        if not np.all(np.isfinite(c)) or np.any((c < 0) | (c > 1)):
            raise InvalidInputError("keypoint confidence must lie in [0, 1]")


def camera_ring(target, radius=3.0, count=4, focal=1000.0, size=(1000, 1000), height=0.0):
    """Cameras evenly spaced on a horizontal circle, all looking at ``target``."""
    from .geometry import look_at

    target = np.asarray(target, dtype=float)
    cams = []
    for i in range(count):
        phi = 2.0 * np.pi * i / count
        eye = target + np.array([radius * np.sin(phi), height, radius * np.cos(phi)])
        R, t = look_at(eye, target)
        cams.append(Camera((focal, focal), (size[0] / 2.0, size[1] / 2.0), size, R, t))
    return cams


def triangulate(cameras, uv, confidence):
    """Linear (DLT) triangulation of points seen in several views.

    ``uv`` is ``(V, K, 2)`` normalized, ``confidence`` ``(V, K)``. Returns
    ``(K, 3)`` points and a mask of the points seen confidently in two or
    more views; other rows are NaN.
    """
    uv = np.asarray(uv, dtype=float)
    conf = np.asarray(confidence, dtype=float)
    V, K = conf.shape
    out = np.full((K, 3), np.nan)
    ok = np.sum(conf > 0, axis=0) >= 2
    mats = []
    for cam in cameras:
        P = cam.intrinsic_matrix() @ cam.extrinsic
        w, h = cam.image_size
        mats.append(np.diag([1.0 / w, 1.0 / h, 1.0]) @ P)
    for k in np.flatnonzero(ok):
        rows = []
        for v in range(V):
            if conf[v, k] > 0:
                P = mats[v]
                u, vv = uv[v, k]
                rows.append(u * P[2] - P[0])
                rows.append(vv * P[2] - P[1])
        _, _, vt = np.linalg.svd(np.array(rows))
        X = vt[-1]
        if abs(X[3]) > 1e-12:
            out[k] = X[:3] / X[3]
        else:
            ok[k] = False
    return out, ok
