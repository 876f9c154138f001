"""Ground-truth interaction sequences, synthetic detections and recovery metrics.

Scenarios are procedural: every frame's human and object state is a smooth
function of the frame index. Keypoints are projections of the true joints
plus isotropic Gaussian noise, with random drop-outs.
"""

from dataclasses import dataclass, field

import numpy as np

from .body_model import (
    DETECTOR_KEYPOINTS,
    HumanState,
    TUBE_SEGMENTS,
    build_rig18,
    capsule_proxies,
    fk_batch,
    forward_kinematics,
    ring_frame,
    skin_batch,
)
from .camera import Camera, KeypointFrame, ObjectMesh, ObjectState, camera_ring, project
from .contact import ContactPairSet, contacts_from_composition, sample_surface
from .errors import BehindCameraError, ContractError, InvalidInputError, ScenarioError
from .geometry import look_at, point_segment
from .gradients import pack
from .losses import LossWeights
from .objective import Scene
from .rotations import axis_angle_to_matrix, matrix_to_axis_angle

SCENARIOS = ("carry-box", "sit-still", "mop-sweep")
CONTACT_GAP = 0.002  # ground-truth clearance between object faces and palms
INSIDE_TOLERANCE = 1e-3  # samples count as inside when deeper than this


# --- meshes ------------------------------------------------------------------


def grid_box(xs, ys, zs):
    """Closed box surface on the tensor grid of sorted coordinate lists.

    Every face is triangulated on the grid lines lying in it, so placing a
    coordinate in a list guarantees a vertex there.
    """
    coords = [np.asarray(sorted(c), dtype=float) for c in (xs, ys, zs)]
    n = [len(c) - 1 for c in coords]
    if min(n) < 1:
        raise InvalidInputError("each axis needs at least two coordinates")
    index = {}
    verts = []

    def vid(i, j, k):
        key = (i, j, k)
        if key not in index:
            index[key] = len(verts)
            verts.append((coords[0][i], coords[1][j], coords[2][k]))
        return index[key]

    faces = []
    for axis in range(3):
        a1, a2 = [a for a in range(3) if a != axis]
        for side in (0, n[axis]):
            outward = 1.0 if side else -1.0
            for u in range(n[a1]):
                for v in range(n[a2]):
                    quad = []
                    for du, dv in ((0, 0), (1, 0), (1, 1), (0, 1)):
                        idx = [0, 0, 0]
                        idx[axis], idx[a1], idx[a2] = side, u + du, v + dv
                        quad.append(vid(*idx))
                    tri1 = (quad[0], quad[1], quad[2])
                    tri2 = (quad[0], quad[2], quad[3])
                    p = np.array([verts[q] for q in tri1])
                    normal = np.cross(p[1] - p[0], p[2] - p[0])
                    if normal[axis] * outward < 0:
                        tri1, tri2 = tri1[::-1], tri2[::-1]
                    faces += [tri1, tri2]
    return ObjectMesh(np.array(verts), np.array(faces))


def icosphere(subdivisions=2, radius=1.0):
    """Geodesic sphere from a subdivided icosahedron (outward faces)."""
    t = (1.0 + 5 ** 0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return ObjectMesh(radius * np.array(verts), np.array(faces))


# --- rig helpers ---------------------------------------------------------------


def tube_vertex(model, child, t, angle_index):
    """Template index of a rig18 tube vertex on the bone ending at ``child``."""
    tree = model.tree
    parent = tree.parent[child]
    a, b = tree.rest_positions[parent], tree.rest_positions[child]
    e1, e2 = ring_frame(b - a)
    ang = 2.0 * np.pi * angle_index / TUBE_SEGMENTS
    target = a + t * (b - a) + model.bone_radii[child] * (np.cos(ang) * e1 + np.sin(ang) * e2)
    d = np.linalg.norm(model.template_vertices - target, axis=1)
    i = int(np.argmin(d))
    if d[i] > 1e-9:
        raise ContractError("rig has no tube vertex at the requested place")
    return i


def joint_frame(model, human, joint):
    """World rotation and origin of a joint's frame (unit scale assumed for objects)."""
    fk = fk_batch(model, human.root_rotation[None], human.root_translation[None],
                  human.joint_rotations[None], human.scale)
    R = fk.global_rot[0] @ fk.chain_rot[0, joint]
    return R, fk.positions[0, joint]


def attach(model, human, joint, local_rot, local_pos, mesh):
    """Object rigidly attached to ``joint``: pose = joint frame * local pose."""
    R, origin = joint_frame(model, human, joint)
    Ro = R @ local_rot
    return ObjectState(matrix_to_axis_angle(Ro), origin + human.scale * (R @ local_pos), mesh)


def relative_pose(model, human, joint, world_rot, world_pos):
    R, origin = joint_frame(model, human, joint)
    return R.T @ world_rot, R.T @ (world_pos - origin) / human.scale


def world_aligned(mesh, rotation):
    """Re-express a mesh built in a rotated frame so its own pose starts at identity.

    Keeps attached objects' rotation vectors far from the wrap at pi.
    """
    return ObjectMesh(mesh.vertices @ np.asarray(rotation).T, mesh.faces)


def _rx(a):
    return np.array([a, 0.0, 0.0])


def _ry(a):
    return np.array([0.0, a, 0.0])


def _rz(a):
    return np.array([0.0, 0.0, a])


def _compose(*vs):
    R = np.eye(3)
    for v in vs:
        R = R @ axis_angle_to_matrix(v)
    return matrix_to_axis_angle(R)


# --- scenarios ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SyntheticScenario:
    """A procedural sequence plus the detector simulation settings.

    ``motion_program(f)`` returns the true ``(HumanState, ObjectState)`` of
    frame ``f``. ``views`` are the motion-stage cameras and ``static_views``
    the multi-view ring used for the static fit.
    """

    name: str
    motion_program: object
    noise_sigma: float
    occlusion_rate: float
    views: tuple
    frames: int
    seed: int
    static_views: tuple = ()
    model: object = None
    mesh: object = None

    def __post_init__(self):
        if not 0.0 <= self.occlusion_rate < 1.0:
            raise ScenarioError(f"occlusion_rate must lie in [0, 1), got {self.occlusion_rate!r}")
        if not self.noise_sigma >= 0:
            raise ScenarioError(f"noise_sigma must be non-negative, got {self.noise_sigma!r}")
        if int(self.frames) != self.frames or self.frames < 1:
            raise ScenarioError(f"frames must be a positive integer, got {self.frames!r}")
        if not self.views:
            raise ScenarioError("scenario needs at least one view")


def _carry_box(model, frames):
    J = model.joint_count
    names = model.tree.joint_name
    ji = {n: i for i, n in enumerate(names)}
    w = 2.0 * np.pi / max(frames, 2)

    def human_at(f):
        th = np.zeros((J, 3))
        ph = w * f
        th[ji["spine"]] = _rz(0.05 * np.sin(ph)) + _ry(0.08 * np.sin(0.5 * ph))
        th[ji["r_shoulder"]] = _ry(np.pi / 2)
        th[ji["l_shoulder"]] = _ry(-np.pi / 2)
        th[ji["r_hip"]] = _rx(0.3 * np.sin(ph))
        th[ji["l_hip"]] = _rx(-0.3 * np.sin(ph))
        th[ji["r_knee"]] = _rx(0.2 * (1.0 - np.cos(ph)))
        th[ji["l_knee"]] = _rx(0.2 * (1.0 + np.cos(ph)))
        root = _ry(0.25 * np.sin(0.5 * ph))
        trans = np.array([-0.3 + 0.6 * f / max(frames - 1, 1), 0.94 + 0.01 * np.cos(2 * ph), 0.0])
        return HumanState(1.0, root, trans, th, np.zeros(model.n_shape))

    h0 = human_at(0)
    verts = skin_batch(model, fk_batch(model, h0.root_rotation[None], h0.root_translation[None],
                                       h0.joint_rotations[None], 1.0)).world[0]
    palm_r = verts[tube_vertex(model, ji["r_hand"], 0.5, 0)]
    palm_l = verts[tube_vertex(model, ji["l_hand"], 0.5, 0)]
    across = palm_l - palm_r
    width = np.linalg.norm(across)
    ux = across / width
    R_wr, _ = joint_frame(model, h0, ji["r_wrist"])
    fwd = R_wr @ model.tree.rest_offset[ji["r_hand"]]
    uz = fwd - np.dot(fwd, ux) * ux
    uz /= np.linalg.norm(uz)
    uy = np.cross(uz, ux)
    R_box = np.stack([ux, uy, uz], axis=1)
    half = width / 2.0 - CONTACT_GAP
    step = np.linalg.norm(fwd) / 4.0  # ring spacing along the hand
    mesh = grid_box([-half, -half / 2, 0.0, half / 2, half], [-0.15, -0.1, 0.0, 0.1, 0.15],
                    [-0.15, -step, 0.0, step, 0.15])
    mesh = world_aligned(mesh, R_box)
    local_R, local_p = relative_pose(model, h0, ji["neck"], np.eye(3), (palm_r + palm_l) / 2.0)

    def program(f):
        h = human_at(f)
        return h, attach(model, h, ji["neck"], local_R, local_p, mesh)

    return program, mesh


def _sit_still(model, frames):
    J = model.joint_count
    ji = {n: i for i, n in enumerate(model.tree.joint_name)}
    w = 2.0 * np.pi / max(frames, 2)
    seat_height = 0.47  # thighs horizontal, shins vertical, feet near the floor

    def human_at(f):
        th = np.zeros((J, 3))
        ph = w * f
        th[ji["r_hip"]] = _rx(-np.pi / 2)
        th[ji["l_hip"]] = _rx(-np.pi / 2)
        th[ji["r_knee"]] = _rx(np.pi / 2)
        th[ji["l_knee"]] = _rx(np.pi / 2)
        th[ji["spine"]] = _rx(0.15 * np.sin(ph)) + _rz(0.05 * np.sin(2 * ph))
        th[ji["neck"]] = _ry(0.2 * np.sin(ph))
        th[ji["r_shoulder"]] = _rz(0.9 + 0.3 * np.sin(ph))
        th[ji["l_shoulder"]] = _rz(-0.9 + 0.3 * np.cos(ph))
        th[ji["r_elbow"]] = _ry(0.5 + 0.3 * np.sin(ph))
        return HumanState(1.0, np.zeros(3), np.array([0.0, seat_height + 0.05, 0.0]), th, np.zeros(model.n_shape))

    h0 = human_at(0)
    verts = skin_batch(model, fk_batch(model, h0.root_rotation[None], h0.root_translation[None],
                                       h0.joint_rotations[None], 1.0)).world[0]
    under_r = verts[tube_vertex(model, ji["r_knee"], 0.5, TUBE_SEGMENTS // 2)]
    under_l = verts[tube_vertex(model, ji["l_knee"], 0.5, TUBE_SEGMENTS // 2)]
    top = min(under_r[1], under_l[1]) - CONTACT_GAP
    zc = under_r[2]
    mesh = grid_box([-0.2, under_r[0], 0.0, under_l[0], 0.2], [0.0, top / 2, top],
                    [0.05, zc - 0.08, zc, zc + 0.08, 0.35])
    obj = ObjectState(np.zeros(3), np.zeros(3), mesh)

    def program(f):
        return human_at(f), obj

    return program, mesh


def _mop_sweep(model, frames):
    J = model.joint_count
    ji = {n: i for i, n in enumerate(model.tree.joint_name)}
    w = 2.0 * np.pi / max(frames, 2)

    def human_at(f):
        th = np.zeros((J, 3))
        ph = w * f
        # right arm hangs outward and sweeps side to side, facing the camera
        th[ji["r_shoulder"]] = _compose(_rz(0.9 + 0.35 * np.sin(ph)), _rx(-0.3))
        th[ji["r_elbow"]] = _rz(0.2 + 0.15 * np.sin(ph))
        th[ji["l_shoulder"]] = _rz(-1.3)
        th[ji["spine"]] = _ry(0.15 * np.sin(ph))
        th[ji["r_hip"]] = _rx(0.05 * np.sin(ph))
        root = _ry(0.1 * np.sin(0.5 * ph))
        return HumanState(1.0, root, np.array([0.0, 0.94, 0.0]), th, np.zeros(model.n_shape))

    h0 = human_at(0)
    verts = skin_batch(model, fk_batch(model, h0.root_rotation[None], h0.root_translation[None],
                                       h0.joint_rotations[None], 1.0)).world[0]
    hand = ji["r_hand"]
    palm = verts[tube_vertex(model, hand, 0.5, 0)]
    R_wr, _ = joint_frame(model, h0, ji["r_wrist"])
    along = R_wr @ model.tree.rest_offset[hand]
    step = np.linalg.norm(along) / 4.0
    along /= np.linalg.norm(along)
    normal = palm - verts[tube_vertex(model, hand, 0.5, TUBE_SEGMENTS // 2)]
    normal -= np.dot(normal, along) * along
    normal /= np.linalg.norm(normal)
    # handle frame: x across, y along the hand, z out of the palm
    uy = along
    uz = normal
    ux = np.cross(uy, uz)
    R_handle = np.stack([ux, uy, uz], axis=1)
    mesh = grid_box([-0.015, 0.0, 0.015], [-0.08, -step, 0.0, step, 0.1, 0.4, 0.7],
                    [0.0, 0.03])
    mesh = world_aligned(mesh, R_handle)
    local_R, local_p = relative_pose(model, h0, ji["r_wrist"], np.eye(3), palm + CONTACT_GAP * normal)

    def program(f):
        h = human_at(f)
        return h, attach(model, h, ji["r_wrist"], local_R, local_p, mesh)

    return program, mesh


_BUILDERS = {"carry-box": _carry_box, "sit-still": _sit_still, "mop-sweep": _mop_sweep}


def frontal_camera(target, distance=3.5, height=0.2, focal=1000.0, size=(1000, 1000)):
    target = np.asarray(target, dtype=float)
    R, t = look_at(target + np.array([0.0, height, distance]), target)
    return Camera((focal, focal), (size[0] / 2.0, size[1] / 2.0), size, R, t)


def scenario(name, frames=30, noise_sigma=0.0, occlusion_rate=0.0, seed=0, model=None):
    """One of the bundled scenarios with the default camera rigs."""
    if name not in _BUILDERS:
        raise ScenarioError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    if isinstance(frames, bool) or int(frames) != frames or frames < 1:
        raise ScenarioError(f"frames must be a positive integer, got {frames!r}")
    model = model or build_rig18()
    program, mesh = _BUILDERS[name](model, frames)
    joints = np.array([forward_kinematics(model, program(f)[0])[0] for f in range(frames)])
    center0 = joints[0].mean(axis=0)
    center_all = joints.reshape(-1, 3).mean(axis=0)
    return SyntheticScenario(
        name, program, float(noise_sigma), float(occlusion_rate),
        (frontal_camera(center_all),), int(frames), int(seed),
        tuple(camera_ring(center0, radius=3.0, count=4)), model, mesh,
    )


# --- generation ----------------------------------------------------------------


@dataclass
class SyntheticData:
    scenario: SyntheticScenario
    humans: list
    objects: list
    keypoints: list  # keypoints[f] = list of KeypointFrame over motion views
    static_keypoints: list  # frame-0 KeypointFrames over static views
    contacts: ContactPairSet


def _detect(model, cameras, joints, rng, noise, occlusion, frame):
    kj = model.keypoint_joints
    det = model.keypoint_detectors
    out = []
    for v, cam in enumerate(cameras):
        try:
            uv = project(cam, joints[kj])
        except BehindCameraError as exc:
            raise ScenarioError(f"frame {frame} view {v}: joint behind camera") from exc
        noisy = uv + rng.normal(0.0, 1.0, uv.shape) * noise
        kept = rng.uniform(size=len(kj)) >= occlusion
        pts = np.zeros((DETECTOR_KEYPOINTS, 2))
        conf = np.zeros(DETECTOR_KEYPOINTS)
        pts[det[kept]] = noisy[kept]
        conf[det[kept]] = 1.0
        out.append(KeypointFrame(v, pts, conf))
    return out


def generate(sc, n_samples=256, seed_index=0, tau_n=0.3, tau_d=0.25, gm_sigma_dist=None):
    """Ground truth, detections for both camera rigs, and frame-0 contacts.

    Random draws come from two independent streams derived from the seed,
    one for the static views and one for the motion views.
    """
    model = sc.model
    humans, objects = [], []
    for f in range(sc.frames):
        h, o = sc.motion_program(f)
        humans.append(h)
        objects.append(o)
    rng_static = np.random.default_rng([sc.seed, 0])
    rng_motion = np.random.default_rng([sc.seed, 1])
    joints0 = forward_kinematics(model, humans[0])[0]
    static_kp = _detect(model, sc.static_views, joints0, rng_static, sc.noise_sigma, sc.occlusion_rate, 0) \
        if sc.static_views else []
    motion_kp = []
    for f, h in enumerate(humans):
        joints = forward_kinematics(model, h)[0]
        motion_kp.append(_detect(model, sc.views, joints, rng_motion, sc.noise_sigma, sc.occlusion_rate, f))
    contacts = None
    if objects[0] is not None:
        contacts = contacts_from_composition(model, humans[0], objects[0], n_samples, seed_index, tau_n, tau_d,
                                             gm_sigma_dist)
    return SyntheticData(sc, humans, objects, motion_kp, static_kp, contacts)


# --- metrics -----------------------------------------------------------------------


METRIC_FIELDS = (
    "joint_error",
    "joint_error_root_aligned",
    "reprojection_error",
    "contact_distance",
    "penetration_fraction",
    "penetration_depth",
)


def _joints(model, humans):
    return np.array([forward_kinematics(model, h)[0] for h in humans])


def evaluate(recovered, truth, model, contacts=None, cameras=(), recovered_objects=None, truth_objects=None):
    """Per-frame and mean recovery metrics.

    ``joint_error`` is the mean joint distance in world units and
    ``joint_error_root_aligned`` the same after subtracting each root.
    ``reprojection_error`` compares projections of recovered and true joints
    (normalized units, mean over views and mapped joints). Contact distance
    and penetration are measured on the recovered human/object pair.
    ``jitter`` is the mean norm of second differences of the recovered
    parameter track; ``joint_jitter`` the same for joint positions.
    """
    if len(recovered) != len(truth):
        raise ContractError(f"{len(recovered)} recovered frames vs {len(truth)} ground-truth frames")
    if recovered_objects is not None and len(recovered_objects) != len(recovered):
        raise ContractError("object and human frame counts differ")
    F = len(recovered)
    Jr = _joints(model, recovered)
    Jt = _joints(model, truth)
    diff = Jr - Jt
    per = {k: np.zeros(F) for k in METRIC_FIELDS}
    per["joint_error"] = np.linalg.norm(diff, axis=-1).mean(axis=1)
    aligned = diff - diff[:, :1]
    per["joint_error_root_aligned"] = np.linalg.norm(aligned, axis=-1).mean(axis=1)
    kj = model.keypoint_joints
    if cameras:
        errs = []
        for cam in cameras:
            errs.append(np.linalg.norm(project(cam, Jr[:, kj]) - project(cam, Jt[:, kj]), axis=-1).mean(axis=1))
        per["reprojection_error"] = np.mean(errs, axis=0)

    objects = recovered_objects
    if objects is not None and objects[0] is not None:
        mesh = objects[0].mesh
        if contacts is not None and contacts.sample_vertices is not None:
            local = mesh.vertices[contacts.sample_vertices]
        else:
            local = sample_surface(mesh.vertices, mesh.faces).points
        fk = fk_batch(model, np.array([h.root_rotation for h in recovered]),
                      np.array([h.root_translation for h in recovered]),
                      np.array([h.joint_rotations for h in recovered]), recovered[0].scale)
        R = axis_angle_to_matrix(np.array([o.rotation for o in objects]))
        world = np.einsum("fab,nb->fna", R, local) + np.array([o.translation for o in objects])[:, None]
        if contacts is not None and len(contacts):
            skin = skin_batch(model, fk, contacts.human_index, recovered[0].shape_coeffs)
            d = np.linalg.norm(skin.world - world[:, contacts.object_index], axis=-1)
            per["contact_distance"] = d.mean(axis=1)
        caps = capsule_proxies(model, fk.positions, recovered[0].scale)
        dist, _, _ = point_segment(world[:, :, None, :], caps.start[:, None], caps.end[:, None])
        sd = np.min(dist - caps.radius, axis=2)
        inside = sd < -INSIDE_TOLERANCE
        per["penetration_fraction"] = inside.mean(axis=1)
        per["penetration_depth"] = np.where(inside.any(axis=1),
                                            np.sum(np.where(inside, -sd, 0.0), axis=1) / np.maximum(inside.sum(axis=1), 1),
                                            0.0)

    track = [np.concatenate([h.root_rotation, h.root_translation, h.joint_rotations.reshape(-1)]) for h in recovered]
    if objects is not None and objects[0] is not None:
        track = [np.concatenate([t, o.rotation, o.translation]) for t, o in zip(track, objects)]
    track = np.array(track)
    jitter = float(np.linalg.norm(np.diff(track, 2, axis=0), axis=1).mean()) if F >= 3 else 0.0
    joint_jitter = float(np.linalg.norm(np.diff(Jr, 2, axis=0), axis=-1).mean()) if F >= 3 else 0.0
    mean = {k: float(np.mean(v)) for k, v in per.items()}
    mean["jitter"] = jitter
    mean["joint_jitter"] = joint_jitter
    return {"frames": F, "mean": mean, "per_frame": {k: v.tolist() for k, v in per.items()}}


# --- random objective instances ----------------------------------------------------


def random_configuration(seed, frames=30, n_samples=256, model=None, n_pairs=24):
    """A random motion objective for gradient checking.

    Poses, object placement, detections, confidences and contact pairs are
    all random; the object overlaps the torso so penetration is active.
    Returns ``(vector, scene, weights)``.
    """
    rng = np.random.default_rng(seed)
    model = model or build_rig18()
    J = model.joint_count
    base = rng.normal(0.0, 0.3, (J, 3))
    humans, objects = [], []
    mesh = icosphere(3, 0.18)
    mesh = ObjectMesh(mesh.vertices * rng.uniform(0.7, 1.3, 3), mesh.faces)
    for f in range(frames):
        th = base + rng.normal(0.0, 0.05, (J, 3))
        humans.append(HumanState(1.0 + 0.1 * (seed % 3), rng.normal(0.0, 0.2, 3),
                                 np.array([0.0, 0.94, 0.0]) + rng.normal(0.0, 0.03, 3), th,
                                 np.zeros(model.n_shape)))
        objects.append(ObjectState(rng.normal(0.0, 0.5, 3), np.array([0.0, 1.15, 0.1]) + rng.normal(0.0, 0.05, 3),
                                   mesh))
    cam = frontal_camera(np.array([0.0, 1.0, 0.0]))
    K = DETECTOR_KEYPOINTS
    kp = []
    for f in range(frames):
        joints = forward_kinematics(model, humans[f])[0]
        uv = project(cam, joints[model.keypoint_joints]) + rng.normal(0.0, 0.02, (len(model.keypoint_joints), 2))
        pts = rng.uniform(0.0, 1.0, (K, 2))
        pts[model.keypoint_detectors] = uv
        conf = rng.uniform(0.0, 1.0, K) * (rng.uniform(size=K) > 0.15)
        kp.append([KeypointFrame(0, pts, conf)])
    samples = sample_surface(mesh.vertices, mesh.faces, n_samples, 0)
    obj_idx = rng.choice(len(samples), size=min(n_pairs, len(samples)), replace=False)
    hum_idx = rng.choice(model.contact_candidates, size=len(obj_idx))
    contacts = ContactPairSet(np.stack([obj_idx, hum_idx], axis=1), 0.3, 0.25, samples.source_vertex)
    scene = Scene.motion(model, (cam,), kp, samples.points, contacts)
    weights = LossWeights(
        lambda_J=rng.uniform(0.5, 2.0), lambda_C=rng.uniform(1.0, 20.0), lambda_pen=rng.uniform(1.0, 10.0),
        lambda_reg=rng.uniform(0.5, 2.0), self_pen_weight=rng.uniform(0.05, 1.0),
    )
    return pack(humans, objects), scene, weights
