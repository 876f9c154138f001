"""Slow, independent reference implementations used as test oracles.

Nothing here imports the vectorized kernels it checks; everything is
explicit loops over scalars or small matrices.
"""

import math

import numpy as np


def rodrigues(v):
    v = [float(x) for x in v]
    theta = math.sqrt(v[0] ** 2 + v[1] ** 2 + v[2] ** 2)
    if theta == 0.0:
        return np.eye(3)
    k = [x / theta for x in v]
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) * math.cos(theta) + math.sin(theta) * K + (1.0 - math.cos(theta)) * np.outer(k, k)


def homogeneous(R=None, t=None, s=1.0):
    T = np.eye(4)
    if R is not None:
        T[:3, :3] = s * np.asarray(R)
    if t is not None:
        T[:3, 3] = t
    return T


def fk_chain(parents, offsets, root_rot, root_trans, joint_rots, scale):
    """World 4x4 per joint via explicit homogeneous products."""
    W = homogeneous(rodrigues(root_rot), root_trans, scale)
    local = []
    for k, p in enumerate(parents):
        Tk = homogeneous(rodrigues(joint_rots[k]), offsets[k])
        local.append(Tk if p < 0 else local[p] @ Tk)
    return [W @ T for T in local]


def lbs_dense(parents, offsets, vertices, weights, root_rot, root_trans, joint_rots, scale):
    """Each vertex = sum_k w_k * (G_k @ inverse(rest_k) @ v) with dense 4x4 algebra."""
    J = len(parents)
    rest = []
    for k, p in enumerate(parents):
        rest.append(np.array(offsets[k], dtype=float) if p < 0 else rest[p] + offsets[k])
    G = fk_chain(parents, offsets, root_rot, root_trans, joint_rots, scale)
    out = np.zeros((len(vertices), 3))
    for i, v in enumerate(vertices):
        hv = np.append(v, 1.0)
        acc = np.zeros(4)
        for k in range(J):
            if weights[i][k] == 0.0:
                continue
            acc += weights[i][k] * (G[k] @ np.linalg.inv(homogeneous(t=rest[k])) @ hv)
        out[i] = acc[:3]
    return out


def project_matrix(camera, point):
    """Normalized projection through the 3x4 matrix K [R | t]."""
    P = camera.intrinsic_matrix() @ np.hstack([camera.rotation, camera.translation[:, None]])
    x = P @ np.append(point, 1.0)
    w, h = camera.image_size
    return np.array([x[0] / x[2] / w, x[1] / x[2] / h])


def gm(e, sigma):
    return e * e / (sigma * sigma + e * e)


def body_keypoint_naive(pred, obs, conf, sigma):
    total = 0.0
    for i in range(len(pred)):
        e = math.hypot(pred[i][0] - obs[i][0], pred[i][1] - obs[i][1])
        total += conf[i] * gm(e, sigma)
    return total / len(pred)


def static_alignment_naive(preds, obs, conf, sigma):
    total = 0.0
    for v in range(len(preds)):
        for j in range(len(preds[v])):
            if conf[v][j] > 0:
                e = math.hypot(preds[v][j][0] - obs[v][j][0], preds[v][j][1] - obs[v][j][1])
                total += gm(e, sigma)
    return total


def contact_naive(human, obj, pairs):
    if len(pairs) == 0:
        return 0.0
    total = 0.0
    for i, j in pairs:
        total += sum((human[j][c] - obj[i][c]) ** 2 for c in range(3))
    return total / len(pairs)


def point_segment_distance(p, a, b):
    ab = [b[c] - a[c] for c in range(3)]
    ap = [p[c] - a[c] for c in range(3)]
    denom = sum(x * x for x in ab)
    t = 0.0 if denom == 0 else min(1.0, max(0.0, sum(ap[c] * ab[c] for c in range(3)) / denom))
    q = [a[c] + t * ab[c] for c in range(3)]
    return math.sqrt(sum((p[c] - q[c]) ** 2 for c in range(3)))


def penetration_naive(samples, starts, ends, radii):
    total = 0.0
    for p in samples:
        sd = min(point_segment_distance(p, starts[b], ends[b]) - radii[b] for b in range(len(radii)))
        total += max(0.0, -sd) ** 2
    return total / len(samples)


def second_difference_naive(track):
    F = len(track)
    if F < 3:
        return 0.0
    total, count = 0.0, 0
    for f in range(1, F - 1):
        for d in range(len(track[f])):
            total += (track[f + 1][d] - 2.0 * track[f][d] + track[f - 1][d]) ** 2
            count += 1
    return total / count


def segment_distance_sampled(p1, q1, p2, q2, n=400):
    """Dense grid minimum; an upper bound close to the true distance."""
    s = np.linspace(0.0, 1.0, n)
    A = p1 + s[:, None] * (q1 - p1)
    B = p2 + s[:, None] * (q2 - p2)
    return float(np.min(np.linalg.norm(A[:, None] - B[None], axis=-1)))


def nearest_naive(obj, hum):
    out = []
    for i, p in enumerate(obj):
        best, best_j = None, -1
        for j, q in enumerate(hum):
            d = (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 + (p[2] - q[2]) ** 2
            if best is None or d < best:
                best, best_j = d, j
        out.append((i, best_j))
    return out


def contact_filter_naive(obj_pts, obj_normals, obj_valid, hum_pts, hum_normals, hum_valid, tau_n, tau_d, sigma,
                         convention):
    """Every nearest pair that passes both gates, by explicit scan."""
    keep = set()
    for i, j in nearest_naive(obj_pts, hum_pts):
        dot = sum(obj_normals[i][c] * hum_normals[j][c] for c in range(3))
        g = 1.0 + dot if convention == "prose" else 1.0 - dot
        d = math.sqrt(sum((obj_pts[i][c] - hum_pts[j][c]) ** 2 for c in range(3)))
        if g < tau_n and gm(d, sigma) < tau_d and obj_valid[i] and hum_valid[j]:
            keep.add((i, j))
    return keep


def fps_naive(points, n, seed):
    chosen = [seed]
    while len(chosen) < n:
        best, best_i = -1.0, -1
        for i, p in enumerate(points):
            d = min(sum((p[c] - points[k][c]) ** 2 for c in range(3)) for k in chosen)
            if d > best:
                best, best_i = d, i
        chosen.append(best_i)
    return chosen


def central_difference(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        g.flat[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g
