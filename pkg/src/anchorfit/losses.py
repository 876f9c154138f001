"""Scalar objectives for static alignment and motion tracking.

Array-level kernels return ``(value, grads...)`` and are what the optimizer
differentiates; the state-level functions below them are thin wrappers for
single evaluations.
"""

from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ContractError, InvalidConfigError, InvalidInputError, UnderconstrainedError
from .geometry import point_segment, segment_segment


@dataclass(frozen=True)
class LossWeights:
    lambda_J: float = 1.0
    lambda_C: float = 100.0
    lambda_pen: float = 1e4
    lambda_reg: float = 1.0
    gm_sigma_align: float = 0.02
    gm_sigma_dist: float = 0.0  # 0 means 5% of the body height
    smooth_weight: float = 1000.0
    self_pen_weight: float = 0.1
    pose_prior_weight: float = 1e-3

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise InvalidConfigError(f"{f.name} must be a finite non-negative number, got {v!r}")
        if self.gm_sigma_align <= 0:
            raise InvalidConfigError("gm_sigma_align must be positive")

    def replace(self, **changes):
        d = asdict(self)
        d.update(changes)
        return LossWeights(**d)


@dataclass(frozen=True)
class LossBreakdown:
    body: float
    contact: float
    penetration: float
    regularization: float
    total: float

    FIELDS = ("body", "contact", "penetration", "regularization", "total")

    def as_dict(self):
        return {k: getattr(self, k) for k in self.FIELDS}


def weighted_total(weights, body, contact, penetration, regularization):
    """The one place the four terms are combined (fixed order)."""
    return (
        weights.lambda_J * body
        + weights.lambda_C * contact
        + weights.lambda_pen * penetration
        + weights.lambda_reg * regularization
    )


def breakdown(weights, body, contact, penetration, regularization):
    body, contact, penetration, regularization = (
        float(body), float(contact), float(penetration), float(regularization))
    return LossBreakdown(body, contact, penetration, regularization,
                         float(weighted_total(weights, body, contact, penetration, regularization)))


def geman_mcclure(residual, sigma):
    """Bounded robust error ``e^2 / (sigma^2 + e^2)``."""
    if not sigma > 0:
        raise InvalidConfigError(f"Geman-McClure sigma must be positive, got {sigma!r}")
    e2 = np.square(residual)
    return e2 / (sigma * sigma + e2)


def gm_squared(e2, sigma):
    """Geman-McClure of a squared residual and its derivative w.r.t. ``e2``."""
    s2 = sigma * sigma
    denom = s2 + e2
    return e2 / denom, s2 / (denom * denom)


# --- keypoint terms --------------------------------------------------------


def keypoint_rho(pred, obs, sigma):
    """Per-keypoint robust error on the 2D residual norm, with d(rho)/d(pred)."""
    diff = pred - obs
    e2 = np.sum(diff * diff, axis=-1)
    rho, drho = gm_squared(e2, sigma)
    return rho, 2.0 * drho[..., None] * diff


def static_alignment_kernel(pred, obs, conf, sigma):
    """Sum of rho over confident keypoints of every view (``(V, K, 2)`` inputs)."""
    rho, drho = keypoint_rho(pred, obs, sigma)
    mask = conf > 0
    value = np.sum(np.where(mask, rho, 0.0))
    return value, np.where(mask[..., None], drho, 0.0)


def body_keypoint_kernel(pred, obs, conf, sigma):
    """Per-observation ``(1/N) sum_i w_i rho_i`` over the last keypoint axis.

    Returns the per-observation values (shape ``pred.shape[:-2]``) and the
    gradient of their sum.
    """
    N = pred.shape[-2]
    if N == 0:
        raise InvalidInputError("no mapped keypoints")
    rho, drho = keypoint_rho(pred, obs, sigma)
    values = np.sum(conf * rho, axis=-1) / N
    return values, (conf / N)[..., None] * drho


# --- geometric terms -------------------------------------------------------


def contact_kernel(p_h, p_o):
    """Per-frame mean squared distance between paired points ``(F, P, 3)``."""
    P = p_h.shape[-2]
    if P == 0:
        z = np.zeros(p_h.shape[:-2])
        return z, np.zeros_like(p_h), np.zeros_like(p_o)
    diff = p_h - p_o
    values = np.sum(diff * diff, axis=(-1, -2)) / P
    g = 2.0 * diff / P
    return values, g, -g


def _min_capsule(samples, start, end, radius):
    # samples (F,N,3); start/end (F,B,3); radius (B,)
    # pick the nearest capsule from an expanded-square form (matmuls only),
    # then recompute the exact distance to the chosen one
    ab = end - start
    ab2 = np.sum(ab * ab, axis=-1)  # (F,B)
    p_ab = samples @ ab.transpose(0, 2, 1)  # (F,N,B)
    p_a = samples @ start.transpose(0, 2, 1)
    a_ab = np.sum(start * ab, axis=-1)
    pa_ab = p_ab - a_ab[:, None, :]
    inv = np.where(ab2 > 1e-12, 1.0 / np.where(ab2 > 1e-12, ab2, 1.0), 0.0)
    t = pa_ab * inv[:, None, :]
    np.maximum(t, 0.0, out=t)
    np.minimum(t, 1.0, out=t)
    # |p - a - t ab|^2 = |p|^2 - 2 p.a + |a|^2 - 2 t (p - a).ab + t^2 |ab|^2
    d2 = t * ab2[:, None, :]
    d2 -= 2.0 * pa_ab
    d2 *= t
    d2 -= 2.0 * p_a
    d2 += np.sum(samples * samples, axis=-1)[..., None]
    d2 += np.sum(start * start, axis=-1)[:, None, :]
    np.maximum(d2, 0.0, out=d2)
    np.sqrt(d2, out=d2)
    d2 -= radius
    which = np.argmin(d2, axis=2)
    fi = np.arange(samples.shape[0])[:, None]
    dist, t, closest = point_segment(samples, start[fi, which], end[fi, which])
    return dist - radius[which], which, dist, t, closest


def penetration_kernel(samples, start, end, radius, with_grad=True):
    """Per-frame ``(1/N) sum max(0, -sd)^2`` against the union of capsules.

    Gradients are returned for samples, capsule starts/ends and radii.
    """
    F, N = samples.shape[:2]
    sd, which, dist, t, closest = _min_capsule(samples, start, end, radius)
    depth = np.maximum(-sd, 0.0)
    values = np.sum(depth * depth, axis=1) / N
    if not with_grad:
        return values
    dsd = -2.0 * depth / N  # d value / d sd
    n = np.where(dist[..., None] > 0, (samples - closest) / np.where(dist > 0, dist, 1.0)[..., None], 0.0)
    g_samples = dsd[..., None] * n
    B = start.shape[1]
    g_start = np.zeros((F, B, 3))
    g_end = np.zeros((F, B, 3))
    frames = np.repeat(np.arange(F), N)
    flat_w = which.reshape(-1)
    contrib = (dsd[..., None] * n).reshape(-1, 3)
    tt = t.reshape(-1, 1)
    np.add.at(g_start, (frames, flat_w), -(1.0 - tt) * contrib)
    np.add.at(g_end, (frames, flat_w), -tt * contrib)
    g_radius = np.zeros(B)
    np.add.at(g_radius, flat_w, -dsd.reshape(-1))
    return values, g_samples, g_start, g_end, g_radius


def self_penetration_kernel(start, end, radius, pairs, with_grad=True):
    """Per-frame mean squared overlap of capsule pairs ``(a, b)``."""
    F, B = start.shape[:2]
    P = len(pairs)
    if P == 0:
        values = np.zeros(F)
        if not with_grad:
            return values
        return values, np.zeros((F, B, 3)), np.zeros((F, B, 3)), np.zeros(B)
    a, b = pairs[:, 0], pairs[:, 1]
    d, s, t = segment_segment(start[:, a], end[:, a], start[:, b], end[:, b])
    overlap = np.maximum(radius[a] + radius[b] - d, 0.0)
    values = np.sum(overlap * overlap, axis=1) / P
    if not with_grad:
        return values
    dd = -2.0 * overlap / P  # d value / d distance
    c1 = start[:, a] + s[..., None] * (end[:, a] - start[:, a])
    c2 = start[:, b] + t[..., None] * (end[:, b] - start[:, b])
    n = np.where(d[..., None] > 0, (c1 - c2) / np.where(d > 0, d, 1.0)[..., None], 0.0)
    gn = dd[..., None] * n
    g_start = np.zeros((F, B, 3))
    g_end = np.zeros((F, B, 3))
    np.add.at(g_start, (slice(None), a), (1.0 - s)[..., None] * gn)
    np.add.at(g_end, (slice(None), a), s[..., None] * gn)
    np.add.at(g_start, (slice(None), b), -(1.0 - t)[..., None] * gn)
    np.add.at(g_end, (slice(None), b), -t[..., None] * gn)
    g_radius = np.zeros(B)
    np.add.at(g_radius, a, -dd.sum(axis=0))
    np.add.at(g_radius, b, -dd.sum(axis=0))
    return values, g_start, g_end, g_radius


def smoothness_kernel(X):
    """Mean squared second difference over frames of a ``(F, D)`` parameter track."""
    F, D = X.shape
    if F < 3 or D == 0:
        return 0.0, np.zeros_like(X)
    dd = X[2:] - 2.0 * X[1:-1] + X[:-2]
    count = (F - 2) * D
    value = np.sum(dd * dd) / count
    g = 2.0 * dd / count
    gX = np.zeros_like(X)
    gX[2:] += g
    gX[1:-1] -= 2.0 * g
    gX[:-2] += g
    return value, gX


def pose_prior_kernel(joint_rots):
    """Per-frame mean squared joint-rotation magnitude, ``(F, J, 3)`` input."""
    J = joint_rots.shape[1]
    values = np.sum(joint_rots * joint_rots, axis=(1, 2)) / J
    return values, 2.0 * joint_rots / J


# --- state-level wrappers --------------------------------------------------


def _keypoints_for(model, frame):
    det = model.keypoint_detectors
    if len(frame.points) <= (det.max() if len(det) else -1):
        raise ContractError(
            f"view {frame.view_id}: {len(frame.points)} keypoints, keypoint_map needs index {det.max()}")
    return frame.points[det], frame.confidence[det]


def static_alignment_loss(model, state, cameras, frames, weights=None):
    """Robust multi-view joint alignment, summed over views and mapped joints."""
    from .body_model import forward_kinematics
    from .camera import project_smooth

    weights = weights or LossWeights()
    if not any(np.any(_keypoints_for(model, f)[1] > 0) for f in frames):
        raise UnderconstrainedError("no view has a confident keypoint")
    joints, _ = forward_kinematics(model, state)
    mapped = joints[model.keypoint_joints]
    total = 0.0
    for frame in frames:
        obs, conf = _keypoints_for(model, frame)
        pred = project_smooth(cameras[frame.view_id], mapped).uv
        total += static_alignment_kernel(pred, obs, conf, weights.gm_sigma_align)[0]
    return float(total)


def body_keypoint_loss(model, human, camera, frame, weights=None):
    from .body_model import forward_kinematics
    from .camera import project_smooth

    weights = weights or LossWeights()
    obs, conf = _keypoints_for(model, frame)
    joints, _ = forward_kinematics(model, human)
    pred = project_smooth(camera, joints[model.keypoint_joints]).uv
    return float(body_keypoint_kernel(pred, obs, conf, weights.gm_sigma_align)[0])


def contact_loss(human_vertices, object_samples, pairs):
    """Mean squared distance over contact pairs; 0 for an empty set.

    ``pairs`` is a ContactPairSet or an ``(P, 2)`` array of (object sample,
    human vertex) indices into the two point arrays.
    """
    idx = getattr(pairs, "pairs", pairs)
    idx = np.asarray(idx, dtype=np.int64).reshape(-1, 2)
    hv = np.asarray(human_vertices, dtype=float)
    os_ = np.asarray(object_samples, dtype=float)
    value, _, _ = contact_kernel(hv[None, idx[:, 1]], os_[None, idx[:, 0]])
    return float(value[0])


def penetration_loss(object_samples, capsules):
    samples = np.asarray(object_samples, dtype=float)
    if len(samples) == 0 or len(capsules) == 0:
        return 0.0
    if not (np.all(np.isfinite(samples)) and np.all(np.isfinite(capsules.start)) and np.all(np.isfinite(capsules.end))):
        raise InvalidInputError("non-finite penetration input")
    return float(penetration_kernel(samples[None], capsules.start[None], capsules.end[None],
                                    capsules.radius, with_grad=False)[0])


def parameter_track(humans, objects=None):
    """Stack motion-dependent parameters per frame into ``(F, D)``."""
    rows = []
    for f, h in enumerate(humans):
        parts = [h.root_rotation, h.root_translation, h.joint_rotations.reshape(-1)]
        if objects is not None:
            parts += [objects[f].rotation, objects[f].translation]
        rows.append(np.concatenate(parts))
    return np.array(rows)


def regularization_loss(humans, model, weights=None, objects=None):
    """Smoothness + self-penetration + pose-magnitude prior over a window."""
    from .body_model import capsule_proxies, forward_kinematics

    weights = weights or LossWeights()
    if len(humans) < 1:
        raise InvalidInputError("empty window")
    smooth, _ = smoothness_kernel(parameter_track(humans, objects))
    joints = np.array([forward_kinematics(model, h)[0] for h in humans])
    caps = capsule_proxies(model, joints, humans[0].scale)
    selfpen = self_penetration_kernel(caps.start, caps.end, caps.radius, model.self_collision_pairs,
                                      with_grad=False)
    prior, _ = pose_prior_kernel(np.array([h.joint_rotations for h in humans]))
    return float(regularization_value(weights, smooth, selfpen, prior))


def regularization_value(weights, smooth, self_pen_frames, prior_frames):
    return (
        weights.smooth_weight * smooth
        + weights.self_pen_weight * np.mean(self_pen_frames)
        + weights.pose_prior_weight * np.mean(prior_frames)
    )


def total_loss(*args, **kwargs):
    """Weighted motion objective for a set of states; see ``objective.total_loss``."""
    from .objective import total_loss as _total

    return _total(*args, **kwargs)
