"""Adam and the two fitting stages (static multi-view alignment, motion tracking)."""

import math
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .body_model import HumanState
from .camera import ObjectState, triangulate
from .contact import sample_surface
from .errors import (
    ContractError,
    DivergedError,
    InvalidConfigError,
    NonFiniteError,
    UnderconstrainedError,
)
from .gradients import evaluate_vector, pack, stack_frames, unpack
from .losses import LossWeights
from .objective import Scene

DIVERGENCE_FACTOR = 1e6
DIVERGENCE_FLOOR = 1.0  # Adam jitters at step ~lr near an exact optimum; that is not an explosion
CONVERGENCE_PATIENCE = 50
MIN_CONFIDENT_KEYPOINTS = 4


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    iterations_static: int = 3000
    iterations_motion: int = 1000
    convergence_tol: float = 1e-7
    seed: int = 0
    warmup_fraction: float = 0.6

    def __post_init__(self):
        if not (math.isfinite(self.learning_rate) and self.learning_rate > 0):
            raise InvalidConfigError(f"learning_rate must be positive, got {self.learning_rate!r}")
        for name in ("beta1", "beta2"):
            b = getattr(self, name)
            if not 0.0 <= b < 1.0:
                raise InvalidConfigError(f"{name} must lie in [0, 1), got {b!r}")
        if not self.eps > 0:
            raise InvalidConfigError("eps must be positive")
        for name in ("iterations_static", "iterations_motion"):
            n = getattr(self, name)
            if isinstance(n, bool) or int(n) != n or n < 1:
                raise InvalidConfigError(f"{name} must be an integer >= 1, got {n!r}")
        if not self.convergence_tol >= 0:
            raise InvalidConfigError("convergence_tol must be non-negative")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise InvalidConfigError("warmup_fraction must lie in [0, 1)")

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return AdamConfig(**d)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(values, grad, state, config, step=None, frozen=None):
    """One bias-corrected Adam update; frozen entries are left bitwise untouched.

    Returns ``(new_values, new_state)``; the inputs are not modified.
    """
    values = np.asarray(values, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != values.shape or state.m.shape != values.shape:
        raise ContractError("parameter, gradient and moment shapes differ")
    if not np.all(np.isfinite(grad)):
        raise DivergedError("non-finite gradient")
    t = state.step + 1 if step is None else int(step)
    if t < 1:
        raise ContractError("Adam step index starts at 1")
    b1, b2 = config.beta1, config.beta2
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    update = config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    out = values - update
    if frozen is not None:
        out[frozen] = values[frozen]
        m[frozen] = 0.0
        v[frozen] = 0.0
    return out, AdamState(m, v, t)


@dataclass
class TraceEntry:
    iteration: int
    phase: str  # 'static', 'sequential' or 'joint'
    frame: int  # window start frame (-1 for full-sequence phases)
    loss: object  # LossBreakdown


@dataclass
class OptimizationTrace:
    entries: list = field(default_factory=list)
    reason: str = "max-iters"
    best_index: int = -1
    wall_time: float = 0.0
    final: object = None  # LossBreakdown at the returned parameters
    humans: list = None  # returned states
    objects: list = None

    def __len__(self):
        return len(self.entries)

    @property
    def totals(self):
        return np.array([e.loss.total for e in self.entries])

    def phase_entries(self, phase):
        return [e for e in self.entries if e.phase == phase]


def _run_adam(vector, scene, weights, config, iterations, trace, phase, frame=-1, include_smooth=True,
              state=None):
    """Minimize from ``vector``; returns the best-so-far vector and its breakdown.

    ``state`` continues an earlier run's moments (warm start of the optimizer).
    """
    values = vector.values.copy()
    state = AdamState.zeros(len(values)) if state is None else state
    best_values, best_loss, best_idx = values.copy(), None, -1
    initial = None
    streak = 0
    prev = None
    reason = "max-iters"
    for it in range(iterations):
        try:
            bd, grad = evaluate_vector(vector, scene, weights, True, include_smooth, values)
        except NonFiniteError as exc:
            trace.reason = "diverged"
            raise DivergedError(f"{phase} phase iteration {it}: {exc}", trace) from exc
        trace.entries.append(TraceEntry(len(trace.entries), phase, frame, bd))
        total = bd.total
        if initial is None:
            initial = total
        if not math.isfinite(total) or total > DIVERGENCE_FACTOR * max(initial, DIVERGENCE_FLOOR):
            trace.reason = "diverged"
            raise DivergedError(f"{phase} phase iteration {it}: loss {total!r} (initial {initial!r})", trace)
        if best_loss is None or total < best_loss.total:
            best_values, best_loss, best_idx = values.copy(), bd, len(trace.entries) - 1
        if prev is not None:
            change = abs(total - prev)
            scale = abs(prev)
            rel = change / scale if scale > 0 else (0.0 if change == 0 else math.inf)
            streak = streak + 1 if rel < config.convergence_tol else 0
            if streak >= CONVERGENCE_PATIENCE:
                reason = "converged"
                break
        prev = total
        if it == iterations - 1:
            break
        values, state = adam_step(values, grad, state, config, frozen=vector.frozen)
    return vector.with_values(best_values), best_loss, best_idx, reason, state


# --- static stage ------------------------------------------------------------


def _confident_counts(scene):
    return np.sum(scene.confidence[0] > 0, axis=-1)


def default_static_init(model, cameras, scene, shape=None):
    """Zero pose, unit scale, facing the first camera at the triangulated depth.

    With a single usable view the body is placed 3 units along the ray
    through the mean confident keypoint. World up is assumed to be +y.
    """
    shape = np.zeros(model.n_shape) if shape is None else np.asarray(shape, dtype=float)
    uv = scene.keypoints[0]
    conf = scene.confidence[0]
    rest_joints = model.tree.rest_positions[model.keypoint_joints]
    pts, ok = triangulate(cameras, uv, conf) if len(cameras) >= 2 else (None, np.zeros(0, dtype=bool))
    if np.count_nonzero(ok) >= 1:
        # place the rest-pose keypoint centroid at the median triangulated point
        center = np.median(pts[ok], axis=0)
        offset = np.mean(rest_joints[ok], axis=0)
    else:
        view = int(np.argmax(_confident_counts(scene)))
        cam = cameras[view]
        mask = conf[view] > 0
        u, v = np.mean(uv[view][mask], axis=0)
        w, h = cam.image_size
        ray = np.array([(u * w - cam.principal[0]) / cam.focal[0], (v * h - cam.principal[1]) / cam.focal[1], 1.0])
        ray /= np.linalg.norm(ray)
        center = cam.center + 3.0 * (cam.rotation.T @ ray)
        offset = np.mean(rest_joints[mask], axis=0)
    to_cam = cameras[0].center - center
    yaw = math.atan2(to_cam[0], to_cam[2])
    root_rot = np.array([0.0, yaw, 0.0])
    from .rotations import axis_angle_to_matrix

    trans = center - axis_angle_to_matrix(root_rot) @ offset
    return HumanState(1.0, root_rot, trans, np.zeros((model.joint_count, 3)), shape)


def fit_static(model, cameras, frames, init=None, weights=None, config=None):
    """Fit scale, root pose and joint rotations to multi-view keypoints.

    ``frames`` holds one KeypointFrame per view. Shape stays frozen.
    Returns the best-so-far state and the trace.
    """
    weights = weights or LossWeights()
    config = config or AdamConfig()
    cameras = tuple(cameras)
    scene = Scene.static(model, cameras, frames)
    if not np.any(_confident_counts(scene) >= MIN_CONFIDENT_KEYPOINTS):
        raise UnderconstrainedError(
            f"static fit needs a view with at least {MIN_CONFIDENT_KEYPOINTS} confident mapped keypoints")
    if init is None:
        init = default_static_init(model, cameras, scene)
    if init.joint_rotations.shape[0] != model.joint_count:
        raise ContractError("init joint count does not match the model")
    started = time.perf_counter()
    trace = OptimizationTrace()
    vector = pack([init], None, freeze=("human_shape",))
    best, best_loss, best_idx, reason, _ = _run_adam(vector, scene, weights, config, config.iterations_static,
                                                  trace, "static")
    humans, _ = unpack(best, canonical=True)
    trace.reason = reason
    trace.best_index = best_idx
    trace.final = evaluate_vector(pack(humans, None, freeze=("human_shape",)), scene, weights)[0]
    trace.humans = humans
    trace.wall_time = time.perf_counter() - started
    return humans[0], trace


def static_loss(model, cameras, frames, state, weights=None):
    """The static objective's breakdown at ``state`` (what ``fit_static`` minimizes)."""
    scene = Scene.static(model, tuple(cameras), frames)
    return evaluate_vector(pack([state], None, freeze=("human_shape",)), scene, weights or LossWeights())[0]


# --- motion stage ------------------------------------------------------------


def object_samples_for(mesh, contacts=None, n_samples=256, seed_index=0):
    """Object-frame sample points indexed like the contact pairs."""
    if contacts is not None and contacts.sample_vertices is not None:
        return np.asarray(mesh.vertices)[contacts.sample_vertices]
    return sample_surface(mesh.vertices, mesh.faces, n_samples, seed_index).points


def motion_scene(model, camera, frames_by_time, mesh, contacts, n_samples=256, seed_index=0):
    cameras = tuple(camera) if isinstance(camera, (list, tuple)) else (camera,)
    pts = object_samples_for(mesh, contacts, n_samples, seed_index)
    if contacts is not None and len(contacts) and contacts.pairs[:, 0].max() >= len(pts):
        raise ContractError("contact pairs reference more object samples than exist")
    return Scene.motion(model, cameras, frames_by_time, pts, contacts)


def _split_budget(total, frames, fraction):
    warm = int(round(fraction * total)) if frames > 1 or fraction > 0 else 0
    warm = min(warm, total - 1)
    base, extra = divmod(warm, frames)
    per_frame = [base + (1 if f < extra else 0) for f in range(frames)]
    return per_frame, total - warm


def fit_motion(model, camera, frames_by_time, contacts, static_human, static_object, weights=None,
               config=None, n_samples=256, seed_index=0):
    """Track human and object over ``L`` frames from single- or multi-view keypoints.

    Phase one fits each frame on its own, warm-started from the previous
    one; phase two refines all frames jointly under the full objective.
    Scale, shape and the object mesh are frozen at their static values.
    Returns ``(humans, objects, trace)``.
    """
    weights = weights or LossWeights()
    config = config or AdamConfig()
    L = len(frames_by_time)
    if L < 1:
        raise ContractError("motion fitting needs at least one frame")
    mesh = static_object.mesh
    scene = motion_scene(model, camera, frames_by_time, mesh, contacts, n_samples, seed_index)
    started = time.perf_counter()
    trace = OptimizationTrace()
    per_frame, joint_iters = _split_budget(config.iterations_motion, L, config.warmup_fraction)
    freeze = ("human_scale", "human_shape")

    # warm starts are carried as raw vectors so no angle is re-wrapped mid-track
    current = pack([static_human], [static_object], freeze=freeze)
    # the Adam moments travel with the warm start: frame f begins with frame
    # f-1's momentum, which already points along the motion
    per_frame_vectors = []
    moments = None
    for f in range(L):
        if per_frame[f] > 0:
            current, _, _, _, moments = _run_adam(current, scene.window(f, f + 1), weights, config, per_frame[f],
                                                  trace, "sequential", f, include_smooth=False, state=moments)
        per_frame_vectors.append(current)

    vec = stack_frames(per_frame_vectors)
    best, _, best_idx, reason, _ = _run_adam(vec, scene, weights, config, joint_iters, trace, "joint")
    humans, objects = unpack(best, mesh, canonical=True)
    trace.reason = reason
    trace.best_index = best_idx
    trace.final = evaluate_vector(pack(humans, objects, freeze=freeze), scene, weights)[0]
    trace.humans, trace.objects = humans, objects
    trace.wall_time = time.perf_counter() - started
    return humans, objects, trace


def motion_loss(model, camera, frames_by_time, contacts, humans, objects, weights=None, n_samples=256,
                seed_index=0):
    """Full motion objective at explicit states (what ``fit_motion`` reports)."""
    scene = motion_scene(model, camera, frames_by_time, objects[0].mesh, contacts, n_samples, seed_index)
    return evaluate_vector(pack(humans, objects), scene, weights or LossWeights())[0]
