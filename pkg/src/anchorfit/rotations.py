"""Axis-angle rotations with exact derivatives.

All functions broadcast over leading dimensions: a rotation vector array of
shape ``(..., 3)`` maps to matrices of shape ``(..., 3, 3)``.
"""

import numpy as np
from scipy.spatial.transform import Rotation

# Below this angle the trigonometric coefficients switch to their Taylor
# series; the closed forms lose precision to cancellation well above 1e-7.
SERIES_THRESHOLD = 0.05

_LEVI = np.zeros((3, 3, 3))
_LEVI[0, 1, 2] = _LEVI[1, 2, 0] = _LEVI[2, 0, 1] = 1.0
_LEVI[0, 2, 1] = _LEVI[2, 1, 0] = _LEVI[1, 0, 2] = -1.0
# hat(e_i) for the three basis vectors, shape (3, 3, 3) indexed [i, row, col]
_BASIS_HAT = -_LEVI.copy()


def hat(v):
    """Skew-symmetric cross-product matrix, ``hat(v) @ w == cross(v, w)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _coefficients(theta2, with_derivatives):
    theta2 = np.asarray(theta2, dtype=float)
    theta = np.sqrt(theta2)
    small = theta < SERIES_THRESHOLD
    # avoid division warnings on the series branch
    safe = np.where(small, 1.0, theta)
    s = np.sin(safe)
    half = np.sin(0.5 * safe)
    one_minus_cos = 2.0 * half * half

    t2 = theta2
    t4 = t2 * t2
    t6 = t4 * t2
    a = np.where(small, 1.0 - t2 / 6.0 + t4 / 120.0 - t6 / 5040.0, s / safe)
    b = np.where(small, 0.5 - t2 / 24.0 + t4 / 720.0 - t6 / 40320.0, one_minus_cos / (safe * safe))
    if not with_derivatives:
        return a, b
    c = np.cos(safe)
    # (da/dtheta) / theta and (db/dtheta) / theta
    ca = np.where(
        small,
        -1.0 / 3.0 + t2 / 30.0 - t4 / 840.0 + t6 / 45360.0,
        (safe * c - s) / safe**3,
    )
    cb = np.where(
        small,
        -1.0 / 12.0 + t2 / 180.0 - t4 / 6720.0 + t6 / 453600.0,
        (safe * s - 2.0 * one_minus_cos) / safe**4,
    )
    return a, b, ca, cb


def axis_angle_to_matrix(v):
    v = np.asarray(v, dtype=float)
    a, b = _coefficients(np.sum(v * v, axis=-1), False)
    K = hat(v)
    K2 = K @ K
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + a[..., None, None] * K + b[..., None, None] * K2


def axis_angle_to_matrix_and_jacobian(v):
    """Rotation matrices and their partials.

    Returns ``R`` with shape ``(..., 3, 3)`` and ``dR`` with shape
    ``(..., 3, 3, 3)`` where ``dR[..., :, :, i]`` is ``dR/dv_i``.
    """
    v = np.asarray(v, dtype=float)
    a, b, ca, cb = _coefficients(np.sum(v * v, axis=-1), True)
    K = hat(v)
    K2 = K @ K
    eye = np.broadcast_to(np.eye(3), K.shape)
    a4 = a[..., None, None]
    b4 = b[..., None, None]
    R = eye + a4 * K + b4 * K2

    E = _BASIS_HAT  # (3, 3, 3) [i, r, c]
    # E_i K + K E_i for each i -> (..., i, 3, 3)
    EK = np.einsum("irk,...kc->...irc", E, K)
    KE = np.einsum("...rk,ikc->...irc", K, E)
    vi = v[..., :, None, None]
    dR = (
        (ca[..., None, None, None] * vi) * K[..., None, :, :]
        + a[..., None, None, None] * E
        + (cb[..., None, None, None] * vi) * K2[..., None, :, :]
        + b[..., None, None, None] * (EK + KE)
    )
    return R, np.moveaxis(dR, -3, -1)


def matrix_to_axis_angle(R):
    R = np.asarray(R, dtype=float)
    flat = R.reshape(-1, 3, 3)
    out = Rotation.from_matrix(flat).as_rotvec()
    return out.reshape(R.shape[:-2] + (3,))


def canonicalize(v):
    """Map rotation vectors to the equivalent one with norm <= pi."""
    v = np.array(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1, keepdims=True)
    over = theta > np.pi
    if not np.any(over):
        return v
    turns = np.floor((theta + np.pi) / (2.0 * np.pi))
    scale = np.where(over, 1.0 - 2.0 * np.pi * turns / np.where(over, theta, 1.0), 1.0)
    return v * scale


def compose(v_outer, v_inner):
    """Rotation vector of ``R(v_outer) @ R(v_inner)``."""
    return matrix_to_axis_angle(axis_angle_to_matrix(v_outer) @ axis_angle_to_matrix(v_inner))
