"""Flat parameter vectors, exact objective gradients and a finite-difference checker."""

from dataclasses import dataclass

import numpy as np

from .body_model import HumanState
from .camera import ObjectState
from .errors import ContractError
from .objective import Params, evaluate
from .rotations import canonicalize

BLOCKS = (
    "human_scale",
    "human_shape",
    "human_root_rot",
    "human_root_trans",
    "human_joint_rots",
    "object_rot",
    "object_trans",
)
SHARED = -1  # frame index of blocks shared by all frames


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Flat optimization vector with its ``(frame, block, length)`` layout.

    ``frozen`` marks entries the optimizer must never move: scale and shape
    (when motion-invariant) and the root joint's own rotation, which would
    duplicate the global rotation.
    """

    values: np.ndarray
    layout: tuple
    frozen: np.ndarray
    joint_count: int

    def __post_init__(self):
        total = sum(n for _, _, n in self.layout)
        if total != len(self.values) or len(self.frozen) != len(self.values):
            raise ContractError(f"layout covers {total} entries, vector has {len(self.values)}")

    @property
    def frames(self):
        return 1 + max(f for f, _, _ in self.layout)

    @property
    def has_object(self):
        return any(b == "object_rot" for _, b, _ in self.layout)

    @property
    def unfrozen_count(self):
        return int(np.count_nonzero(~self.frozen))

    def with_values(self, values):
        values = np.asarray(values, dtype=float)
        if values.shape != self.values.shape:
            raise ContractError("value vector has the wrong length")
        return ParamVector(values, self.layout, self.frozen, self.joint_count)

    def offsets(self):
        out, pos = {}, 0
        for f, b, n in self.layout:
            out[(f, b)] = (pos, n)
            pos += n
        return out

    def to_params(self, values=None):
        v = self.values if values is None else values
        F, J = self.frames, self.joint_count
        off = self.offsets()
        get = lambda f, b: v[off[(f, b)][0]:off[(f, b)][0] + off[(f, b)][1]]
        p = Params(
            float(get(SHARED, "human_scale")[0]),
            np.array(get(SHARED, "human_shape")),
            np.array([get(f, "human_root_rot") for f in range(F)]),
            np.array([get(f, "human_root_trans") for f in range(F)]),
            np.array([get(f, "human_joint_rots") for f in range(F)]).reshape(F, J, 3),
        )
        if self.has_object:
            p.obj_rot = np.array([get(f, "object_rot") for f in range(F)])
            p.obj_trans = np.array([get(f, "object_trans") for f in range(F)])
        return p

    def flatten(self, params):
        """Inverse of ``to_params`` (also used to flatten gradients)."""
        out = np.empty_like(self.values)
        for (f, b), (pos, n) in self.offsets().items():
            if b == "human_scale":
                out[pos] = params.scale
            elif b == "human_shape":
                out[pos:pos + n] = params.shape
            else:
                src = {
                    "human_root_rot": params.root_rot,
                    "human_root_trans": params.root_trans,
                    "human_joint_rots": params.joint_rots.reshape(params.frames, -1) if params.joint_rots is not None else None,
                    "object_rot": params.obj_rot,
                    "object_trans": params.obj_trans,
                }[b]
                out[pos:pos + n] = src[f]
        return out

    def entry_name(self, i):
        pos = 0
        for f, b, n in self.layout:
            if i < pos + n:
                return f"frame {f} {b}[{i - pos}]" if f >= 0 else f"{b}[{i - pos}]"
            pos += n
        raise IndexError(i)


def pack(humans, objects=None, freeze=("human_scale", "human_shape")):
    """Flatten per-frame states; shared scale/shape are taken from frame 0."""
    humans = list(humans)
    F = len(humans)
    if F == 0:
        raise ContractError("no frames to pack")
    J = humans[0].joint_rotations.shape[0]
    n_shape = len(humans[0].shape_coeffs)
    for h in humans[1:]:
        if h.scale != humans[0].scale or not np.array_equal(h.shape_coeffs, humans[0].shape_coeffs):
            raise ContractError("scale and shape must be shared across frames")
    if objects is not None and len(objects) != F:
        raise ContractError("object and human frame counts differ")

    layout = [(SHARED, "human_scale", 1), (SHARED, "human_shape", n_shape)]
    values = [[humans[0].scale], list(humans[0].shape_coeffs)]
    frozen = [["human_scale" in freeze], ["human_shape" in freeze] * n_shape]
    for f, h in enumerate(humans):
        layout += [(f, "human_root_rot", 3), (f, "human_root_trans", 3), (f, "human_joint_rots", 3 * J)]
        values += [list(h.root_rotation), list(h.root_translation), list(h.joint_rotations.reshape(-1))]
        frozen += [[False] * 3, [False] * 3, [True] * 3 + [False] * (3 * J - 3)]
        if objects is not None:
            o = objects[f]
            layout += [(f, "object_rot", 3), (f, "object_trans", 3)]
            values += [list(o.rotation), list(o.translation)]
            frozen += [[False] * 3, [False] * 3]
    flat = np.array([x for chunk in values for x in chunk], dtype=float)
    mask = np.array([x for chunk in frozen for x in chunk], dtype=bool)
    return ParamVector(flat, tuple(layout), mask, J)


def unpack(vector, mesh=None, canonical=False):
    """States per frame; objects need the (shared) mesh.

    ``canonical=True`` maps every axis-angle to norm <= pi; otherwise values
    are copied verbatim, which makes ``pack(unpack(v))`` exact.
    """
    p = vector.to_params()
    fix = canonicalize if canonical else (lambda a: a)
    humans = [
        HumanState(p.scale, fix(p.root_rot[f]), p.root_trans[f], fix(p.joint_rots[f]), p.shape)
        for f in range(p.frames)
    ]
    if not vector.has_object:
        return humans, None
    if mesh is None:
        raise ContractError("object blocks present but no mesh given")
    objects = [ObjectState(fix(p.obj_rot[f]), p.obj_trans[f], mesh) for f in range(p.frames)]
    return humans, objects


def evaluate_vector(vector, scene, weights, with_grad=False, include_smooth=True, values=None):
    params = vector.to_params(values)
    bd, g = evaluate(scene, params, weights, with_grad, include_smooth)
    if not with_grad:
        return bd, None
    flat = vector.flatten(g)
    flat[vector.frozen] = 0.0
    return bd, flat


def grad_total(vector, scene, weights, include_smooth=True):
    """Exact gradient of the weighted objective; zero on frozen entries."""
    return evaluate_vector(vector, scene, weights, True, include_smooth)[1]


@dataclass
class FDReport:
    """Finite-difference comparison.

    Entries whose numeric derivative is at least ``abs_floor`` in magnitude
    are judged by relative error; smaller ones by absolute error.
    """

    max_abs_error: float
    max_rel_error: float  # over relatively-judged entries
    max_small_abs_error: float  # over absolutely-judged entries
    worst_entry: str  # entry with max_rel_error
    entries: list  # (name, analytic, numeric, abs_err, rel_err), sorted by rel_err desc
    checked: int

    def passed(self, tol=1e-4, abs_tol=1e-7):
        return self.max_rel_error < tol and self.max_small_abs_error < abs_tol


def finite_difference_check(vector, scene, weights, h=1e-5, entries=None, include_smooth=True,
                            abs_floor=1e-8, gradient=None):
    """Compare the analytic gradient with central differences.

    ``rel_err`` is ``|analytic - numeric| / max(|numeric|, abs_floor)``.
    ``entries`` restricts the indices checked (all unfrozen by default);
    frozen entries are reported as exact zeros.
    """
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    analytic = grad_total(vector, scene, weights, include_smooth) if gradient is None else gradient
    idx = np.flatnonzero(~vector.frozen) if entries is None else np.asarray(entries, dtype=np.int64)
    rows = []
    max_rel = max_small = 0.0
    worst = ""
    x0 = vector.values
    for i in idx:
        if vector.frozen[i]:
            rows.append((vector.entry_name(i), 0.0, 0.0, 0.0, 0.0))
            continue
        xp = x0.copy()
        xm = x0.copy()
        xp[i] += h
        xm[i] -= h
        fp = evaluate_vector(vector, scene, weights, False, include_smooth, xp)[0].total
        fm = evaluate_vector(vector, scene, weights, False, include_smooth, xm)[0].total
        num = (fp - fm) / (2.0 * h)
        a = float(analytic[i])
        abs_err = abs(a - num)
        rel_err = abs_err / max(abs(num), abs_floor)
        if abs(num) >= abs_floor:
            if rel_err >= max_rel:
                max_rel, worst = rel_err, vector.entry_name(i)
        else:
            max_small = max(max_small, abs_err)
        rows.append((vector.entry_name(i), a, num, abs_err, rel_err))
    rows.sort(key=lambda r: -r[4])
    if not rows:
        return FDReport(0.0, 0.0, 0.0, "", [], 0)
    return FDReport(max(r[3] for r in rows), max_rel, max_small, worst, rows, len(rows))


def stack_frames(vectors):
    """Concatenate single-frame vectors into one multi-frame vector.

    Shared blocks (scale, shape) and their frozen flags come from the first
    vector; frame blocks are renumbered in order.
    """
    if not vectors:
        raise ContractError("no vectors to stack")
    first = vectors[0]
    layout, values, frozen = [], [], []
    pos = 0
    for f, b, n in first.layout:
        if f == SHARED:
            layout.append((f, b, n))
            values.append(first.values[pos:pos + n])
            frozen.append(first.frozen[pos:pos + n])
        pos += n
    for out_f, vec in enumerate(vectors):
        if vec.frames != 1 or vec.joint_count != first.joint_count or vec.has_object != first.has_object:
            raise ContractError("stack_frames expects compatible single-frame vectors")
        pos = 0
        for f, b, n in vec.layout:
            if f != SHARED:
                layout.append((out_f, b, n))
                values.append(vec.values[pos:pos + n])
                frozen.append(vec.frozen[pos:pos + n])
            pos += n
    return ParamVector(np.concatenate(values), tuple(layout), np.concatenate(frozen), first.joint_count)
