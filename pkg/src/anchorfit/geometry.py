"""Closest-point queries on segments and capsules, vectorized with numpy."""

import numpy as np

_EPS = 1e-12


def point_segment(p, a, b):
    """Distance from points to segments, broadcasting over leading axes.

    Returns ``(dist, t, closest)`` where ``closest = a + t * (b - a)`` and
    ``t`` is clamped to ``[0, 1]``.
    """
    p = np.asarray(p, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ab = b - a
    denom = np.sum(ab * ab, axis=-1)
    num = np.sum((p - a) * ab, axis=-1)
    t = np.clip(num / np.where(denom > _EPS, denom, 1.0), 0.0, 1.0)
    t = np.where(denom > _EPS, t, 0.0)
    closest = a + t[..., None] * ab
    diff = p - closest
    return np.sqrt(np.sum(diff * diff, axis=-1)), t, closest


def segment_segment(p1, q1, p2, q2):
    """Closest points between segment pairs ``[p1, q1]`` and ``[p2, q2]``.

    Returns ``(dist, s, t)`` with closest points ``p1 + s (q1 - p1)`` and
    ``p2 + t (q2 - p2)``. Parallel segments fall back to ``s = 0`` with
    ``t`` projected, which is one of the (non-unique) minimizers.
    """
    p1, q1, p2, q2 = (np.asarray(x, dtype=float) for x in (p1, q1, p2, q2))
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.sum(d1 * d1, axis=-1)
    e = np.sum(d2 * d2, axis=-1)
    f = np.sum(d2 * r, axis=-1)
    c = np.sum(d1 * r, axis=-1)
    b = np.sum(d1 * d2, axis=-1)
    denom = a * e - b * b

    a_ok = a > _EPS
    e_ok = e > _EPS
    safe_a = np.where(a_ok, a, 1.0)
    safe_e = np.where(e_ok, e, 1.0)
    nonparallel = denom > _EPS * np.maximum(a * e, _EPS)
    s = np.where(nonparallel, np.clip((b * f - c * e) / np.where(nonparallel, denom, 1.0), 0.0, 1.0), 0.0)
    t = (b * s + f) / safe_e
    # t outside [0,1]: clamp and recompute s
    t_lo = t < 0.0
    t_hi = t > 1.0
    s = np.where(t_lo, np.clip(-c / safe_a, 0.0, 1.0), s)
    s = np.where(t_hi, np.clip((b - c) / safe_a, 0.0, 1.0), s)
    t = np.clip(t, 0.0, 1.0)

    # degenerate segments
    s = np.where(a_ok, s, 0.0)
    t = np.where(e_ok, t, np.where(a_ok, 0.0, t))
    s = np.where(a_ok & ~e_ok, np.clip(-c / safe_a, 0.0, 1.0), s)
    t = np.where(~a_ok & e_ok, np.clip(f / safe_e, 0.0, 1.0), t)
    t = np.where(~a_ok & ~e_ok, 0.0, t)

    c1 = p1 + s[..., None] * d1
    c2 = p2 + t[..., None] * d2
    diff = c1 - c2
    return np.sqrt(np.sum(diff * diff, axis=-1)), s, t


def capsule_signed_distance(p, a, b, radius):
    """Signed distance from points to capsules (negative inside)."""
    dist, _, _ = point_segment(p, a, b)
    return dist - radius


def look_at(eye, target, up=(0.0, 1.0, 0.0)):
    """World-to-camera rotation and translation, camera looking along +z, y down."""
    eye = np.asarray(eye, dtype=float)
    target = np.asarray(target, dtype=float)
    forward = target - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=float))
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        raise ValueError("look_at: up vector parallel to viewing direction")
    right /= norm
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    return R, -R @ eye
