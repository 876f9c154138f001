"""Articulated body: kinematic tree, forward kinematics, skinning, capsules.

The batched kernels (``fk_batch``, ``skin_batch``, ``fk_backward``) operate on
``F`` frames at once and carry the intermediates needed for exact reverse-mode
gradients. The state-level helpers (``forward_kinematics``, ``skin_vertices``)
wrap them for single-frame use.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ContractError, InvalidInputError
from .geometry import segment_segment
from .rotations import axis_angle_to_matrix, axis_angle_to_matrix_and_jacobian

DETECTOR_KEYPOINTS = 18
_ROT_TOL = 1e-6


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class KinematicTree:
    parent: tuple
    rest_offset: np.ndarray
    joint_name: tuple

    def __post_init__(self):
        parent = tuple(-1 if p is None else int(p) for p in self.parent)
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "rest_offset", _frozen(self.rest_offset))
        object.__setattr__(self, "joint_name", tuple(self.joint_name))
        n = len(parent)
        if n < 2:
            raise ContractError("kinematic tree needs at least 2 joints")
        if parent[0] != -1:
            raise ContractError("joint 0 must be the root")
        for k in range(1, n):
            if not 0 <= parent[k] < k:
                raise ContractError(f"joint {k}: parent {parent[k]} breaks topological order")
        if self.rest_offset.shape != (n, 3):
            raise ContractError(f"rest_offset shape {self.rest_offset.shape}, expected ({n}, 3)")
        if len(self.joint_name) != n:
            raise ContractError("joint_name length differs from joint count")

    @property
    def joint_count(self):
        return len(self.parent)

    @cached_property
    def rest_positions(self):
        """Cumulative rest offsets (model space, zero pose)."""
        out = np.zeros((self.joint_count, 3))
        for k, p in enumerate(self.parent):
            out[k] = self.rest_offset[k] if p < 0 else out[p] + self.rest_offset[k]
        out.setflags(write=False)
        return out

    @cached_property
    def bones(self):
        """(parent, child) index pairs, one per non-root joint."""
        return tuple((p, k) for k, p in enumerate(self.parent) if p >= 0)


@dataclass(frozen=True, eq=False)
class BodyModel:
    tree: KinematicTree
    template_vertices: np.ndarray
    faces: np.ndarray
    skin_weights: np.ndarray  # dense (V, J); rig files store the sparse form
    contact_candidates: np.ndarray
    keypoint_map: tuple
    bone_radii: np.ndarray
    shape_dirs: np.ndarray = None  # (V, 3, n_shape)
    name: str = "rig"

    def __post_init__(self):
        object.__setattr__(self, "template_vertices", _frozen(self.template_vertices))
        object.__setattr__(self, "faces", _frozen(self.faces, dtype=np.int64))
        object.__setattr__(self, "skin_weights", _frozen(self.skin_weights))
        object.__setattr__(self, "contact_candidates", _frozen(self.contact_candidates, dtype=np.int64))
        object.__setattr__(self, "bone_radii", _frozen(self.bone_radii))
        object.__setattr__(
            self, "keypoint_map", tuple((int(d), int(j)) for d, j in self.keypoint_map)
        )
        if self.shape_dirs is not None:
            object.__setattr__(self, "shape_dirs", _frozen(self.shape_dirs))
        self._validate()

    def _validate(self):
        J = self.tree.joint_count
        V = len(self.template_vertices)
        if self.template_vertices.ndim != 2 or self.template_vertices.shape[1] != 3 or V == 0:
            raise ContractError("template_vertices must be a non-empty (V, 3) array")
        if self.faces.size and (self.faces.ndim != 2 or self.faces.shape[1] != 3):
            raise ContractError("faces must be (F, 3) triangles")
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= V):
            raise ContractError("face index out of range")
        if self.skin_weights.shape != (V, J):
            raise ContractError(f"skin_weights shape {self.skin_weights.shape}, expected ({V}, {J})")
        if np.any(self.skin_weights < 0):
            raise ContractError("negative skin weight")
        row = self.skin_weights.sum(axis=1)
        bad = np.flatnonzero(np.abs(row - 1.0) > 1e-6)
        if bad.size:
            raise ContractError(f"skin weights of vertex {bad[0]} sum to {row[bad[0]]!r}")
        if self.bone_radii.shape != (J,):
            raise ContractError("bone_radii needs one entry per joint")
        if np.any(self.bone_radii < 0):
            raise ContractError("negative bone radius")
        cc = self.contact_candidates
        if cc.size and (cc.min() < 0 or cc.max() >= V):
            raise ContractError("contact candidate out of range")
        dets = [d for d, _ in self.keypoint_map]
        if len(dets) > DETECTOR_KEYPOINTS or len(set(dets)) != len(dets):
            raise ContractError("keypoint_map needs <= 18 entries with distinct detector indices")
        for d, j in self.keypoint_map:
            if not 0 <= d < DETECTOR_KEYPOINTS or not 0 <= j < J:
                raise ContractError(f"keypoint_map entry ({d}, {j}) out of range")
        if self.shape_dirs is not None and self.shape_dirs.shape[:2] != (V, 3):
            raise ContractError("shape_dirs must be (V, 3, n_shape)")

    @property
    def joint_count(self):
        return self.tree.joint_count

    @property
    def n_shape(self):
        return 0 if self.shape_dirs is None else self.shape_dirs.shape[2]

    @cached_property
    def keypoint_joints(self):
        return np.array([j for _, j in self.keypoint_map], dtype=np.int64)

    @cached_property
    def keypoint_detectors(self):
        return np.array([d for d, _ in self.keypoint_map], dtype=np.int64)

    def shaped_vertices(self, shape_coeffs=None):
        v = np.array(self.template_vertices)
        if self.shape_dirs is not None and shape_coeffs is not None and len(shape_coeffs):
            v = v + self.shape_dirs @ np.asarray(shape_coeffs, dtype=float)
        return v

    @cached_property
    def height(self):
        """Vertical (y) extent of the rest template, model units."""
        y = self.template_vertices[:, 1]
        return float(y.max() - y.min())

    @cached_property
    def self_collision_pairs(self):
        """Bone index pairs checked for self-penetration.

        Bones sharing a joint are skipped, as are pairs already within 1 cm
        of touching in the rest pose (shoulder/torso style overlaps).
        """
        bones = self.tree.bones
        rest = self.tree.rest_positions
        pairs = []
        for a in range(len(bones)):
            for b in range(a + 1, len(bones)):
                if set(bones[a]) & set(bones[b]):
                    continue
                (pa, ka), (pb, kb) = bones[a], bones[b]
                d, _, _ = segment_segment(rest[pa], rest[ka], rest[pb], rest[kb])
                if d > self.bone_radii[ka] + self.bone_radii[kb] + 0.01:
                    pairs.append((a, b))
        return np.array(pairs, dtype=np.int64).reshape(-1, 2)


@dataclass(frozen=True, eq=False)
class HumanState:
    scale: float
    root_rotation: np.ndarray
    root_translation: np.ndarray
    joint_rotations: np.ndarray
    shape_coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        object.__setattr__(self, "scale", float(self.scale))
        for name in ("root_rotation", "root_translation", "joint_rotations", "shape_coeffs"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not np.isfinite(self.scale) or self.scale <= 0:
            raise InvalidInputError(f"scale must be positive and finite, got {self.scale!r}")
        if self.root_rotation.shape != (3,) or self.root_translation.shape != (3,):
            raise ContractError("root rotation/translation must be 3-vectors")
        if self.joint_rotations.ndim != 2 or self.joint_rotations.shape[1] != 3:
            raise ContractError("joint_rotations must be (J, 3)")
        for name in ("root_rotation", "root_translation", "joint_rotations", "shape_coeffs"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InvalidInputError(f"non-finite {name}")
        norms = np.linalg.norm(np.vstack([self.root_rotation, self.joint_rotations]), axis=1)
        if np.any(norms > np.pi + _ROT_TOL):
            raise InvalidInputError("axis-angle norm exceeds pi; canonicalize first")

    @classmethod
    def rest(cls, model, scale=1.0, translation=(0.0, 0.0, 0.0)):
        return cls(scale, np.zeros(3), np.asarray(translation, float),
                   np.zeros((model.joint_count, 3)), np.zeros(model.n_shape))

    def replace(self, **changes):
        values = {k: getattr(self, k) for k in
                  ("scale", "root_rotation", "root_translation", "joint_rotations", "shape_coeffs")}
        values.update(changes)
        return HumanState(**values)


def check_state(model, state):
    if state.joint_rotations.shape[0] != model.joint_count:
        raise ContractError(
            f"state has {state.joint_rotations.shape[0]} joint rotations, model has {model.joint_count} joints"
        )
    if len(state.shape_coeffs) not in (0, model.n_shape):
        raise ContractError(f"state has {len(state.shape_coeffs)} shape coefficients, model has {model.n_shape}")


@dataclass
class FKResult:
    """Batched forward kinematics with cached intermediates."""

    positions: np.ndarray  # (F, J, 3) world
    chain_rot: np.ndarray  # (F, J, 3, 3) model space
    chain_pos: np.ndarray  # (F, J, 3) model space
    global_rot: np.ndarray  # (F, 3, 3)
    local_rot: np.ndarray  # (F, J, 3, 3)
    scale: float
    translation: np.ndarray  # (F, 3)
    local_jac: np.ndarray = None  # (F, J, 3, 3, 3)
    global_jac: np.ndarray = None  # (F, 3, 3, 3)


def fk_batch(model, root_rot, root_trans, joint_rots, scale, with_jacobian=False):
    """Forward kinematics over frames.

    ``root_rot``/``root_trans``: (F, 3); ``joint_rots``: (F, J, 3); ``scale``
    is a shared scalar. World joint position is ``s * Rg @ chain + t``.
    """
    root_rot = np.asarray(root_rot, dtype=float)
    root_trans = np.asarray(root_trans, dtype=float)
    joint_rots = np.asarray(joint_rots, dtype=float)
    tree = model.tree
    F, J = joint_rots.shape[:2]
    if J != tree.joint_count:
        raise ContractError(f"{J} joint rotations for {tree.joint_count} joints")
    if with_jacobian:
        R_loc, dR_loc = axis_angle_to_matrix_and_jacobian(joint_rots)
        Rg, dRg = axis_angle_to_matrix_and_jacobian(root_rot)
    else:
        R_loc, dR_loc = axis_angle_to_matrix(joint_rots), None
        Rg, dRg = axis_angle_to_matrix(root_rot), None

    Rc = np.empty((F, J, 3, 3))
    pc = np.empty((F, J, 3))
    offsets = tree.rest_offset
    for k, p in enumerate(tree.parent):
        if p < 0:
            Rc[:, k] = R_loc[:, k]
            pc[:, k] = offsets[k]
        else:
            Rc[:, k] = Rc[:, p] @ R_loc[:, k]
            pc[:, k] = pc[:, p] + Rc[:, p] @ offsets[k]
    positions = scale * np.einsum("fab,fjb->fja", Rg, pc) + root_trans[:, None, :]
    return FKResult(positions, Rc, pc, Rg, R_loc, scale, root_trans, dR_loc, dRg)


@dataclass
class SkinCache:
    indices: np.ndarray
    weights: np.ndarray  # (M, J)
    local: np.ndarray  # (M, J, 3) shaped vertex minus rest joint
    model_space: np.ndarray  # (F, M, 3)
    world: np.ndarray  # (F, M, 3)


def skin_batch(model, fk, indices=None, shape_coeffs=None):
    """Linear blend skinning of the selected vertices for every frame."""
    if indices is None:
        indices = np.arange(len(model.template_vertices))
    indices = np.asarray(indices, dtype=np.int64)
    shaped = model.shaped_vertices(shape_coeffs)[indices]
    W = model.skin_weights[indices]
    U = shaped[:, None, :] - model.tree.rest_positions[None, :, :]
    vm = np.einsum("mk,fkab,mkb->fma", W, fk.chain_rot, U) + np.einsum("mk,fka->fma", W, fk.chain_pos)
    world = fk.scale * np.einsum("fab,fmb->fma", fk.global_rot, vm) + fk.translation[:, None, :]
    return SkinCache(indices, W, U, vm, world)


def fk_backward(model, fk, grad_joints=None, skin=None, grad_vertices=None):
    """Reverse-mode pass through skinning and forward kinematics.

    Returns gradients ``(root_rot (F,3), root_trans (F,3), joint_rots (F,J,3),
    scale)`` given upstream gradients on world joint positions and/or on the
    world positions of the skinned vertices in ``skin``.
    """
    F, J = fk.chain_pos.shape[:2]
    s = fk.scale
    Rg = fk.global_rot
    g_t = np.zeros((F, 3))
    G_Rg = np.zeros((F, 3, 3))
    g_s = 0.0
    g_pc = np.zeros((F, J, 3))
    g_Rc = np.zeros((F, J, 3, 3))

    if grad_joints is not None:
        g_t += grad_joints.sum(axis=1)
        G_Rg += s * np.einsum("fja,fjb->fab", grad_joints, fk.chain_pos)
        g_s += float(np.einsum("fja,fab,fjb->", grad_joints, Rg, fk.chain_pos))
        g_pc += s * np.einsum("fba,fjb->fja", Rg, grad_joints)
    if grad_vertices is not None:
        vm = skin.model_space
        g_t += grad_vertices.sum(axis=1)
        G_Rg += s * np.einsum("fma,fmb->fab", grad_vertices, vm)
        g_s += float(np.einsum("fma,fab,fmb->", grad_vertices, Rg, vm))
        g_vm = s * np.einsum("fba,fmb->fma", Rg, grad_vertices)
        g_Rc += np.einsum("mk,fma,mkb->fkab", skin.weights, g_vm, skin.local)
        g_pc += np.einsum("mk,fma->fka", skin.weights, g_vm)

    g_r = np.einsum("fab,fabi->fi", G_Rg, fk.global_jac)

    g_Rloc = np.zeros((F, J, 3, 3))
    offsets = model.tree.rest_offset
    Rc, Rl = fk.chain_rot, fk.local_rot
    for k in range(J - 1, -1, -1):
        p = model.tree.parent[k]
        if p < 0:
            g_Rloc[:, k] = g_Rc[:, k]
            continue
        g_Rloc[:, k] = np.swapaxes(Rc[:, p], -1, -2) @ g_Rc[:, k]
        g_Rc[:, p] += g_Rc[:, k] @ np.swapaxes(Rl[:, k], -1, -2)
        g_Rc[:, p] += g_pc[:, k, :, None] * offsets[k][None, None, :]
        g_pc[:, p] += g_pc[:, k]
    g_theta = np.einsum("fjab,fjabi->fji", g_Rloc, fk.local_jac)
    return g_r, g_t, g_theta, g_s


def _state_fk(model, state, with_jacobian=False):
    check_state(model, state)
    return fk_batch(
        model,
        state.root_rotation[None],
        state.root_translation[None],
        state.joint_rotations[None],
        state.scale,
        with_jacobian,
    )


def forward_kinematics(model, state):
    """World joint positions ``(J, 3)`` and world transforms ``(J, 4, 4)``.

    Each transform's linear part is ``s * R`` with ``R`` orthonormal.
    """
    fk = _state_fk(model, state)
    J = model.joint_count
    T = np.zeros((J, 4, 4))
    T[:, :3, :3] = fk.scale * np.einsum("ab,jbc->jac", fk.global_rot[0], fk.chain_rot[0])
    T[:, :3, 3] = fk.positions[0]
    T[:, 3, 3] = 1.0
    return fk.positions[0], T


def skin_vertices(model, joint_transforms, state):
    """Posed world vertices from world joint transforms (``forward_kinematics``)."""
    joint_transforms = np.asarray(joint_transforms, dtype=float)
    if joint_transforms.shape != (model.joint_count, 4, 4):
        raise ContractError("joint_transforms must be (J, 4, 4)")
    row = model.skin_weights.sum(axis=1)
    if np.any(np.abs(row - 1.0) > 1e-6):
        raise ContractError("skin weight rows must sum to 1")
    v = model.shaped_vertices(state.shape_coeffs)
    rest = model.tree.rest_positions
    lin = joint_transforms[:, :3, :3]
    trans = joint_transforms[:, :3, 3] - np.einsum("jab,jb->ja", lin, rest)
    per_joint = np.einsum("jab,vb->vja", lin, v) + trans[None]
    return np.einsum("vj,vja->va", model.skin_weights, per_joint)


def posed_vertices(model, state):
    fk = _state_fk(model, state)
    return skin_batch(model, fk, shape_coeffs=state.shape_coeffs).world[0]


@dataclass(frozen=True, eq=False)
class Capsules:
    start: np.ndarray  # (..., B, 3)
    end: np.ndarray
    radius: np.ndarray  # (B,)

    def __len__(self):
        return self.radius.shape[-1]


def capsule_proxies(model, joint_positions, scale=1.0):
    """One capsule per bone, spanning parent to child joint."""
    joint_positions = np.asarray(joint_positions, dtype=float)
    bones = np.array(model.tree.bones, dtype=np.int64)
    return Capsules(
        joint_positions[..., bones[:, 0], :],
        joint_positions[..., bones[:, 1], :],
        scale * model.bone_radii[bones[:, 1]],
    )


# ---------------------------------------------------------------------------
# bundled rig

_RIG18_JOINTS = (
    # name, parent, offset, radius of the bone ending at this joint
    ("pelvis", None, (0.0, 0.0, 0.0), 0.0),
    ("spine", 0, (0.0, 0.22, 0.0), 0.12),
    ("neck", 1, (0.0, 0.28, 0.0), 0.13),
    ("head", 2, (0.0, 0.18, 0.0), 0.10),
    ("r_shoulder", 2, (-0.18, -0.04, 0.0), 0.06),
    ("r_elbow", 4, (-0.28, 0.0, 0.0), 0.05),
    ("r_wrist", 5, (-0.25, 0.0, 0.0), 0.04),
    ("l_shoulder", 2, (0.18, -0.04, 0.0), 0.06),
    ("l_elbow", 7, (0.28, 0.0, 0.0), 0.05),
    ("l_wrist", 8, (0.25, 0.0, 0.0), 0.04),
    ("r_hip", 0, (-0.10, -0.05, 0.0), 0.07),
    ("r_knee", 10, (0.0, -0.42, 0.0), 0.07),
    ("r_ankle", 11, (0.0, -0.42, 0.0), 0.05),
    ("l_hip", 0, (0.10, -0.05, 0.0), 0.07),
    ("l_knee", 13, (0.0, -0.42, 0.0), 0.07),
    ("l_ankle", 14, (0.0, -0.42, 0.0), 0.05),
    ("r_hand", 6, (-0.09, 0.0, 0.0), 0.045),
    ("l_hand", 9, (0.09, 0.0, 0.0), 0.045),
)

# OpenPose COCO-18 index -> rig18 joint; eyes and ears stay unmapped
_RIG18_KEYPOINTS = (
    (0, 3), (1, 2), (2, 4), (3, 5), (4, 6), (5, 7), (6, 8), (7, 9),
    (8, 10), (9, 11), (10, 12), (11, 13), (12, 14), (13, 15),
)

TUBE_SEGMENTS = 8
TUBE_RINGS = (0.0, 0.25, 0.5, 0.75, 1.0)


def ring_frame(direction):
    """Unit vectors (e1, e2) spanning the plane normal to ``direction``.

    ``e1`` is the projection of +z (or +y for bones along z), so ring
    vertex 0 faces forward on limbs in the rest pose.
    """
    d = direction / np.linalg.norm(direction)
    ref = np.array([0.0, 0.0, 1.0]) if abs(d[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = ref - np.dot(ref, d) * d
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(d, e1)


def build_rig18():
    """Procedural 18-joint rig: one capped tube per bone, radius = capsule radius."""
    names = [j[0] for j in _RIG18_JOINTS]
    parents = [j[1] for j in _RIG18_JOINTS]
    offsets = np.array([j[2] for j in _RIG18_JOINTS])
    radii = np.array([j[3] for j in _RIG18_JOINTS])
    tree = KinematicTree(tuple(parents), offsets, tuple(names))
    rest = tree.rest_positions
    J = tree.joint_count

    verts, faces, weights, shape0, shape1 = [], [], [], [], []
    candidates = []
    torso = {names.index("spine"), names.index("neck")}
    hands = {names.index("r_hand"), names.index("l_hand")}
    thighs = {names.index("r_knee"), names.index("l_knee")}
    n = TUBE_SEGMENTS
    angles = 2.0 * np.pi * np.arange(n) / n

    for p, k in tree.bones:
        a, b = rest[p], rest[k]
        d = b - a
        e1, e2 = ring_frame(d)
        r = radii[k]
        base = len(verts)
        for ring, t in enumerate(TUBE_RINGS):
            for ang in angles:
                radial = np.cos(ang) * e1 + np.sin(ang) * e2
                verts.append(a + t * d + r * radial)
                w = np.zeros(J)
                if t > 0.75:
                    w[k] = 0.5
                    w[p] = 0.5
                else:
                    w[p] = 1.0
                weights.append(w)
                shape0.append(0.02 * radial)
                shape1.append(0.03 * radial if k in torso else np.zeros(3))
                if k in hands and 0.0 < t < 1.0:
                    candidates.append(len(verts) - 1)
                if k in thighs and t == 0.5:
                    candidates.append(len(verts) - 1)
        for ring in range(len(TUBE_RINGS) - 1):
            for j in range(n):
                A = base + ring * n + j
                B = base + ring * n + (j + 1) % n
                C = B + n
                D = A + n
                faces.append((A, B, C))
                faces.append((A, C, D))
        # end caps
        for t, w_end, flip in ((0.0, "start", True), (1.0, "end", False)):
            c = len(verts)
            verts.append(a + t * d)
            w = np.zeros(J)
            if w_end == "start":
                w[p] = 1.0
            else:
                w[k] = 0.5
                w[p] = 0.5
            weights.append(w)
            shape0.append(np.zeros(3))
            shape1.append(np.zeros(3))
            ring0 = base + (0 if w_end == "start" else (len(TUBE_RINGS) - 1) * n)
            for j in range(n):
                A = ring0 + j
                B = ring0 + (j + 1) % n
                faces.append((c, B, A) if flip else (c, A, B))

    shape_dirs = np.stack([np.array(shape0), np.array(shape1)], axis=-1)
    return BodyModel(
        tree=tree,
        template_vertices=np.array(verts),
        faces=np.array(faces),
        skin_weights=np.array(weights),
        contact_candidates=np.array(candidates),
        keypoint_map=_RIG18_KEYPOINTS,
        bone_radii=radii,
        shape_dirs=shape_dirs,
        name="rig18",
    )
