"""JSON file formats, run configuration, CSV metrics and OBJ export.

Every document is a JSON object with ``format_version`` (currently 1) and a
``kind`` naming the document type. Parsing is strict: unknown or missing keys,
wrong types and out-of-range values raise ``SchemaError`` naming the file and
the field path (``frames[3].human.scale``). Floats are written with Python's
shortest round-trip repr, so a save/load cycle is bitwise exact.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .body_model import BodyModel, HumanState, KinematicTree
from .camera import Camera, KeypointFrame, ObjectMesh, ObjectState
from .contact import NORMAL_CONVENTIONS, ContactPairSet
from .errors import AnchorFitError, InvalidConfigError, SchemaError, VersionError
from .losses import LossBreakdown, LossWeights
from .optimize import AdamConfig

FORMAT_VERSION = 1
STAGES = ("fit-static", "fit-motion", "extract-contacts", "eval")

# paths each stage needs (required, optional); output_dir is always required
STAGE_PATHS = {
    "fit-static": (("rig", "cameras", "keypoints"), ("init",)),
    "fit-motion": (("rig", "cameras", "keypoints", "contacts", "mesh", "init"), ("object_pose",)),
    "extract-contacts": (("rig", "mesh", "init"), ()),
    "eval": (("rig", "truth", "recovered"), ("cameras", "contacts", "mesh")),
}
PATH_KEYS = ("rig", "cameras", "keypoints", "contacts", "mesh", "init", "object_pose", "truth", "recovered",
             "output_dir")


# --- writing -------------------------------------------------------------------


def _plain(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _scalar(x):
    return not isinstance(x, (list, dict))


def _render(obj, depth=0):
    pad = "  " * depth
    inner = "  " * (depth + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        body = ",\n".join(f"{inner}{json.dumps(k)}: {_render(v, depth + 1)}" for k, v in obj.items())
        return "{\n" + body + "\n" + pad + "}"
    if isinstance(obj, list):
        if all(_scalar(v) for v in obj):
            return json.dumps(obj, allow_nan=False)
        body = ",\n".join(inner + _render(v, depth + 1) for v in obj)
        return "[\n" + body + "\n" + pad + "]"
    return json.dumps(obj, allow_nan=False)


def dumps(doc):
    """Deterministic text for a document (numeric arrays stay on one line)."""
    try:
        return _render(_plain(doc)) + "\n"
    except ValueError as exc:
        raise AnchorFitError(f"cannot serialize non-finite value: {exc}") from exc


def write_document(path, doc):
    Path(path).write_text(dumps(doc), encoding="utf-8")


# --- reading -------------------------------------------------------------------


def _reject_constant(name):
    raise ValueError(f"non-finite literal {name}")


def _unique_keys(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ValueError(f"duplicate key {k!r}")
        out[k] = v
    return out


class _Doc:
    """Field checks bound to one document name, for error messages."""

    def __init__(self, name):
        self.name = str(name)

    def fail(self, path, message):
        raise SchemaError(self.name, path or "<root>", message)

    def object(self, x, path, required, optional=()):
        if not isinstance(x, dict):
            self.fail(path, "expected an object")
        for k in x:
            if k not in required and k not in optional:
                self.fail(_join(path, k), "unknown key")
        for k in required:
            if k not in x:
                self.fail(_join(path, k), "missing required key")
        return x

    def number(self, x, path, lo=None, hi=None, lo_open=False, hi_open=False):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            self.fail(path, f"expected a number, got {type(x).__name__}")
        x = float(x)
        if not math.isfinite(x):
            self.fail(path, "must be finite")
        if lo is not None and (x < lo or (lo_open and x == lo)):
            self.fail(path, f"{x!r} is below the allowed range")
        if hi is not None and (x > hi or (hi_open and x == hi)):
            self.fail(path, f"{x!r} is above the allowed range")
        return x

    def integer(self, x, path, lo=None, hi=None):
        if isinstance(x, bool) or not isinstance(x, int):
            self.fail(path, f"expected an integer, got {type(x).__name__}")
        if lo is not None and x < lo:
            self.fail(path, f"{x} is below the minimum {lo}")
        if hi is not None and x > hi:
            self.fail(path, f"{x} is above the maximum {hi}")
        return x

    def string(self, x, path, choices=None):
        if not isinstance(x, str):
            self.fail(path, "expected a string")
        if choices is not None and x not in choices:
            self.fail(path, f"{x!r} is not one of {', '.join(choices)}")
        return x

    def array(self, x, path, shape, integer=False):
        """Numeric array whose shape matches ``shape`` (None = any length)."""
        if not isinstance(x, list):
            self.fail(path, "expected an array")
        try:
            arr = np.asarray(x)
        except ValueError:
            self.fail(path, "ragged array")
        if arr.size == 0:
            tail = tuple(0 if s is None else s for s in shape[1:])
            return np.zeros((0,) + tail, dtype=np.int64 if integer else float)
        kinds = "iu" if integer else "iuf"
        if arr.dtype.kind not in kinds:
            self.fail(path, "expected " + ("integers" if integer else "numbers"))
        if arr.ndim != len(shape) or any(s is not None and s != n for s, n in zip(shape, arr.shape)):
            want = "x".join("n" if s is None else str(s) for s in shape)
            self.fail(path, f"expected shape {want}, got {'x'.join(map(str, arr.shape))}")
        if integer:
            return arr.astype(np.int64)
        arr = arr.astype(float)
        if not np.all(np.isfinite(arr)):
            self.fail(path, "non-finite value")
        return arr

    def build(self, path, fn, *args, **kwargs):
        """Run a constructor, reporting its validation errors at ``path``."""
        try:
            return fn(*args, **kwargs)
        except SchemaError:
            raise
        except AnchorFitError as exc:
            self.fail(path, str(exc))


def _join(path, key):
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else key


def read_document(path, kind):
    """Parse a file and check its version and kind; returns ``(doc, checker)``."""
    path = Path(path)
    d = _Doc(path)
    if not path.is_file():
        d.fail("", f"file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"), parse_constant=_reject_constant,
                         object_pairs_hook=_unique_keys)
    except (ValueError, UnicodeDecodeError) as exc:
        d.fail("", f"not valid JSON: {exc}")
    return check_header(raw, kind, d), d


def check_header(raw, kind, d):
    if not isinstance(raw, dict):
        d.fail("", "top level must be an object")
    if "format_version" not in raw:
        d.fail("format_version", "missing required key")
    v = raw["format_version"]
    if isinstance(v, bool) or not isinstance(v, int) or v != FORMAT_VERSION:
        raise VersionError(d.name, "format_version", f"unsupported version {v!r}, expected {FORMAT_VERSION}")
    if raw.get("kind") != kind:
        d.fail("kind", f"expected a {kind!r} document, got {raw.get('kind')!r}")
    return raw


def _header(kind):
    return {"format_version": FORMAT_VERSION, "kind": kind}


# --- rig -------------------------------------------------------------------------


def rig_document(model):
    tree = model.tree
    joints = [
        {"name": tree.joint_name[k], "parent": None if tree.parent[k] < 0 else tree.parent[k],
         "offset": tree.rest_offset[k], "radius": float(model.bone_radii[k])}
        for k in range(tree.joint_count)
    ]
    weights = []
    for i, row in enumerate(model.skin_weights):
        nz = np.flatnonzero(row)
        weights.append({"vertex": i, "joints": [[int(j), float(row[j])] for j in nz]})
    doc = _header("rig")
    doc.update({
        "name": model.name,
        "joints": joints,
        "vertices": model.template_vertices,
        "faces": model.faces,
        "weights": weights,
        "contact_candidates": model.contact_candidates,
        "keypoint_map": [list(p) for p in model.keypoint_map],
    })
    if model.shape_dirs is not None:
        doc["shape_dirs"] = model.shape_dirs
    return doc


def save_rig(path, model):
    write_document(path, rig_document(model))


def parse_rig(raw, d):
    d.object(raw, "", ("format_version", "kind", "name", "joints", "vertices", "faces", "weights",
                       "contact_candidates", "keypoint_map"), ("shape_dirs",))
    name = d.string(raw["name"], "name")
    if not isinstance(raw["joints"], list) or not raw["joints"]:
        d.fail("joints", "expected a non-empty array")
    names, parents, offsets, radii = [], [], [], []
    for k, j in enumerate(raw["joints"]):
        p = _join("joints", k)
        d.object(j, p, ("name", "parent", "offset", "radius"))
        names.append(d.string(j["name"], _join(p, "name")))
        parents.append(-1 if j["parent"] is None else d.integer(j["parent"], _join(p, "parent"), 0))
        offsets.append(d.array(j["offset"], _join(p, "offset"), (3,)))
        radii.append(d.number(j["radius"], _join(p, "radius"), 0.0))
    J = len(names)
    verts = d.array(raw["vertices"], "vertices", (None, 3))
    faces = d.array(raw["faces"], "faces", (None, 3), integer=True)
    V = len(verts)
    if not isinstance(raw["weights"], list) or len(raw["weights"]) != V:
        d.fail("weights", f"expected one entry per vertex ({V})")
    W = np.zeros((V, J))
    for i, w in enumerate(raw["weights"]):
        p = _join("weights", i)
        d.object(w, p, ("vertex", "joints"))
        if d.integer(w["vertex"], _join(p, "vertex")) != i:
            d.fail(_join(p, "vertex"), f"entries must be listed in vertex order (expected {i})")
        pairs = w["joints"]
        if not isinstance(pairs, list) or not pairs:
            d.fail(_join(p, "joints"), "expected a non-empty array of [joint, weight]")
        for m, pair in enumerate(pairs):
            q = _join(_join(p, "joints"), m)
            if not isinstance(pair, list) or len(pair) != 2:
                d.fail(q, "expected [joint, weight]")
            jj = d.integer(pair[0], _join(q, 0), 0, J - 1)
            W[i, jj] = d.number(pair[1], _join(q, 1), 0.0)
    cand = d.array(raw["contact_candidates"], "contact_candidates", (None,), integer=True)
    kmap = d.array(raw["keypoint_map"], "keypoint_map", (None, 2), integer=True)
    shape_dirs = None
    if "shape_dirs" in raw:
        shape_dirs = d.array(raw["shape_dirs"], "shape_dirs", (V, 3, None))
    tree = d.build("joints", KinematicTree, tuple(parents), np.array(offsets), tuple(names))
    return d.build("", BodyModel, tree, verts, faces, W, cand, [tuple(r) for r in kmap], np.array(radii),
                   shape_dirs, name)


def load_rig(path):
    raw, d = read_document(path, "rig")
    return parse_rig(raw, d)


def bundled_rig_path():
    return resources.files("anchorfit") / "data" / "rig18.json"


def load_bundled_rig():
    """The packaged 18-joint rig."""
    ref = bundled_rig_path()
    with resources.as_file(ref) as p:
        return load_rig(p)


# --- cameras ---------------------------------------------------------------------


def save_cameras(path, cameras):
    doc = _header("cameras")
    doc["cameras"] = [
        {"focal": c.focal, "principal": c.principal, "image_size": list(c.image_size),
         "extrinsic": c.extrinsic.reshape(-1)}
        for c in cameras
    ]
    write_document(path, doc)


def load_cameras(path):
    raw, d = read_document(path, "cameras")
    d.object(raw, "", ("format_version", "kind", "cameras"))
    if not isinstance(raw["cameras"], list) or not raw["cameras"]:
        d.fail("cameras", "expected a non-empty array")
    out = []
    for i, c in enumerate(raw["cameras"]):
        p = _join("cameras", i)
        d.object(c, p, ("focal", "principal", "image_size", "extrinsic"))
        focal = d.array(c["focal"], _join(p, "focal"), (2,))
        principal = d.array(c["principal"], _join(p, "principal"), (2,))
        size = d.array(c["image_size"], _join(p, "image_size"), (2,), integer=True)
        ext = d.array(c["extrinsic"], _join(p, "extrinsic"), (12,))
        out.append(d.build(p, Camera.from_extrinsic, focal, principal, tuple(size), ext))
    return out


# --- keypoints ---------------------------------------------------------------------


def save_keypoints(path, frames):
    """``frames[t]`` is the list of KeypointFrame observations (one per view) at time t."""
    doc = _header("keypoints")
    doc["frames"] = [
        [{"view_id": kf.view_id, "points": kf.points, "confidence": kf.confidence} for kf in views]
        for views in frames
    ]
    write_document(path, doc)


def load_keypoints(path):
    raw, d = read_document(path, "keypoints")
    d.object(raw, "", ("format_version", "kind", "frames"))
    if not isinstance(raw["frames"], list) or not raw["frames"]:
        d.fail("frames", "expected a non-empty array")
    out = []
    for t, views in enumerate(raw["frames"]):
        p = _join("frames", t)
        if not isinstance(views, list) or not views:
            d.fail(p, "expected a non-empty array of views")
        row = []
        for v, kf in enumerate(views):
            q = _join(p, v)
            d.object(kf, q, ("view_id", "points", "confidence"))
            vid = d.integer(kf["view_id"], _join(q, "view_id"), 0)
            pts = d.array(kf["points"], _join(q, "points"), (None, 2))
            conf = d.array(kf["confidence"], _join(q, "confidence"), (len(pts),))
            bad = np.flatnonzero((conf < 0) | (conf > 1))
            if bad.size:
                d.fail(_join(_join(q, "confidence"), int(bad[0])),
                       f"{conf[bad[0]]!r} outside [0, 1]")
            row.append(d.build(q, KeypointFrame, vid, pts, conf))
        out.append(row)
    return out


# --- object mesh -----------------------------------------------------------------


def save_mesh(path, mesh):
    doc = _header("mesh")
    doc.update({"vertices": mesh.vertices, "faces": mesh.faces})
    write_document(path, doc)


def load_mesh(path):
    raw, d = read_document(path, "mesh")
    d.object(raw, "", ("format_version", "kind", "vertices", "faces"))
    verts = d.array(raw["vertices"], "vertices", (None, 3))
    faces = d.array(raw["faces"], "faces", (None, 3), integer=True)
    return d.build("", ObjectMesh, verts, faces)


# --- contacts ----------------------------------------------------------------------


def save_contacts(path, contacts, diagnostics=None):
    doc = _header("contacts")
    doc.update({"tau_n": contacts.tau_n, "tau_d": contacts.tau_d, "pairs": contacts.pairs})
    if contacts.sample_vertices is not None:
        doc["sample_vertices"] = contacts.sample_vertices
    if diagnostics is not None:
        doc["diagnostics"] = [
            {"distance": float(a), "normal_gate": float(b), "proximity_gate": float(c)}
            for a, b, c in zip(diagnostics["distance"], diagnostics["normal_gate"], diagnostics["proximity_gate"])
        ]
    write_document(path, doc)


def load_contacts(path, with_diagnostics=False):
    raw, d = read_document(path, "contacts")
    d.object(raw, "", ("format_version", "kind", "tau_n", "tau_d", "pairs"), ("sample_vertices", "diagnostics"))
    tau_n = d.number(raw["tau_n"], "tau_n", 0.0, 4.0)
    tau_d = d.number(raw["tau_d"], "tau_d", 0.0, 1.0, lo_open=True, hi_open=True)
    pairs = d.array(raw["pairs"], "pairs", (None, 2), integer=True)
    sv = None
    if "sample_vertices" in raw:
        sv = d.array(raw["sample_vertices"], "sample_vertices", (None,), integer=True)
    diag = None
    if "diagnostics" in raw:
        items = raw["diagnostics"]
        if not isinstance(items, list) or len(items) != len(pairs):
            d.fail("diagnostics", "expected one entry per pair")
        keys = ("distance", "normal_gate", "proximity_gate")
        diag = {k: np.zeros(len(pairs)) for k in keys}
        for i, it in enumerate(items):
            p = _join("diagnostics", i)
            d.object(it, p, keys)
            for k in keys:
                diag[k][i] = d.number(it[k], _join(p, k))
    contacts = d.build("pairs", ContactPairSet, pairs, tau_n, tau_d, sv)
    return (contacts, diag) if with_diagnostics else contacts


# --- parameter sequences --------------------------------------------------------------


def save_params(path, humans, objects=None):
    doc = _header("params")
    frames = []
    for f, h in enumerate(humans):
        entry = {"human": {"scale": h.scale, "root_rot": h.root_rotation, "root_trans": h.root_translation,
                           "joint_rots": h.joint_rotations, "shape": h.shape_coeffs}}
        o = None if objects is None else objects[f]
        entry["object"] = None if o is None else {"rot": o.rotation, "trans": o.translation}
        frames.append(entry)
    doc["frames"] = frames
    write_document(path, doc)


def load_params(path, mesh=None):
    """Returns ``(humans, objects)``; objects is None when no frame has one.

    Object poses need ``mesh``; without it they are returned as
    ``(rotation, translation)`` tuples.
    """
    raw, d = read_document(path, "params")
    d.object(raw, "", ("format_version", "kind", "frames"))
    if not isinstance(raw["frames"], list) or not raw["frames"]:
        d.fail("frames", "expected a non-empty array")
    humans, objects = [], []
    for f, fr in enumerate(raw["frames"]):
        p = _join("frames", f)
        d.object(fr, p, ("human", "object"))
        hp = _join(p, "human")
        h = d.object(fr["human"], hp, ("scale", "root_rot", "root_trans", "joint_rots", "shape"))
        scale = d.number(h["scale"], _join(hp, "scale"), 0.0, lo_open=True)
        humans.append(d.build(hp, HumanState, scale,
                              d.array(h["root_rot"], _join(hp, "root_rot"), (3,)),
                              d.array(h["root_trans"], _join(hp, "root_trans"), (3,)),
                              d.array(h["joint_rots"], _join(hp, "joint_rots"), (None, 3)),
                              d.array(h["shape"], _join(hp, "shape"), (None,))))
        if fr["object"] is None:
            objects.append(None)
            continue
        op = _join(p, "object")
        o = d.object(fr["object"], op, ("rot", "trans"))
        rot = d.array(o["rot"], _join(op, "rot"), (3,))
        trans = d.array(o["trans"], _join(op, "trans"), (3,))
        objects.append((rot, trans) if mesh is None else d.build(op, ObjectState, rot, trans, mesh))
    has = [o is not None for o in objects]
    if any(has) and not all(has):
        d.fail("frames", "either every frame or no frame may carry an object pose")
    return humans, (objects if all(has) else None)


# --- run configuration -----------------------------------------------------------------


@dataclass(frozen=True)
class ContactConfig:
    n_samples: int = 256
    tau_n: float = 0.3
    tau_d: float = 0.25
    seed_index: int = 0
    convention: str = "prose"

    def __post_init__(self):
        if isinstance(self.n_samples, bool) or not isinstance(self.n_samples, int) or self.n_samples < 1:
            raise InvalidConfigError(f"n_samples must be an integer >= 1, got {self.n_samples!r}")
        if not 0.0 <= self.tau_n <= 4.0:
            raise InvalidConfigError(f"tau_n must lie in [0, 4], got {self.tau_n!r}")
        if not 0.0 < self.tau_d < 1.0:
            raise InvalidConfigError(f"tau_d must lie in (0, 1), got {self.tau_d!r}")
        if isinstance(self.seed_index, bool) or not isinstance(self.seed_index, int) or self.seed_index < 0:
            raise InvalidConfigError(f"seed_index must be an integer >= 0, got {self.seed_index!r}")
        if self.convention not in NORMAL_CONVENTIONS:
            raise InvalidConfigError(f"convention must be one of {NORMAL_CONVENTIONS}")


@dataclass(frozen=True)
class RunConfig:
    stage: str
    paths: dict  # names -> path strings as written (relative to base_dir)
    weights: LossWeights = field(default_factory=LossWeights)
    contact: ContactConfig = field(default_factory=ContactConfig)
    adam: AdamConfig = field(default_factory=AdamConfig)
    base_dir: str = "."

    def path(self, name):
        value = self.paths.get(name)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p


def config_document(cfg):
    doc = _header("config")
    doc.update({
        "stage": cfg.stage,
        "paths": dict(cfg.paths),
        "weights": asdict(cfg.weights),
        "contact": asdict(cfg.contact),
        "adam": asdict(cfg.adam),
    })
    return doc


def save_config(path, cfg):
    write_document(path, config_document(cfg))


def _section(d, raw, name, cls, integer_fields=(), string_fields=()):
    """Build a config dataclass field by field so range errors name the field."""
    if name not in raw:
        return cls()
    sec = d.object(raw[name], name, (), tuple(f.name for f in fields(cls)))
    values = {}
    for key, v in sec.items():
        p = _join(name, key)
        if key in integer_fields:
            values[key] = d.integer(v, p)
        elif key in string_fields:
            values[key] = d.string(v, p)
        else:
            values[key] = d.number(v, p)
        try:
            cls(**{key: values[key]})
        except InvalidConfigError as exc:
            d.fail(p, str(exc))
    return d.build(name, cls, **values)


def parse_config(raw, d, base_dir, check_paths=True):
    d.object(raw, "", ("format_version", "kind", "stage", "paths"), ("weights", "contact", "adam"))
    stage = d.string(raw["stage"], "stage", STAGES)
    required, optional = STAGE_PATHS[stage]
    paths = d.object(raw["paths"], "paths", required + ("output_dir",), optional)
    for k, v in paths.items():
        d.string(v, _join("paths", k))
    weights = _section(d, raw, "weights", LossWeights)
    contact = _section(d, raw, "contact", ContactConfig, ("n_samples", "seed_index"), ("convention",))
    adam = _section(d, raw, "adam", AdamConfig, ("iterations_static", "iterations_motion", "seed"))
    cfg = RunConfig(stage, dict(paths), weights, contact, adam, str(base_dir))
    if check_paths:
        for k in paths:
            if k != "output_dir" and not cfg.path(k).is_file():
                d.fail(_join("paths", k), f"file not found: {cfg.path(k)}")
    return cfg


def load_config(path, check_paths=True):
    """Read a run configuration; relative paths resolve against the file's directory."""
    raw, d = read_document(path, "config")
    return parse_config(raw, d, Path(path).parent, check_paths)


# --- metrics ---------------------------------------------------------------------------


TRACE_COLUMNS = ("iteration", "phase", "frame") + LossBreakdown.FIELDS


def fit_metrics_document(trace):
    doc = _header("fit-metrics")
    doc.update({
        "reason": trace.reason,
        "iterations": len(trace),
        "best_index": trace.best_index,
        "final": trace.final.as_dict(),
    })
    return doc


def save_fit_metrics(path, trace):
    write_document(path, fit_metrics_document(trace))


def load_fit_metrics(path):
    raw, d = read_document(path, "fit-metrics")
    d.object(raw, "", ("format_version", "kind", "reason", "iterations", "best_index", "final"))
    d.string(raw["reason"], "reason", ("converged", "max-iters", "diverged"))
    d.integer(raw["iterations"], "iterations", 0)
    d.integer(raw["best_index"], "best_index", -1)
    fin = d.object(raw["final"], "final", LossBreakdown.FIELDS)
    final = LossBreakdown(*(d.number(fin[k], _join("final", k)) for k in LossBreakdown.FIELDS))
    return {"reason": raw["reason"], "iterations": raw["iterations"], "best_index": raw["best_index"],
            "final": final}


def _csv_float(x):
    return repr(float(x))


def save_trace_csv(path, trace):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for e in trace.entries:
            w.writerow([e.iteration, e.phase, e.frame] + [_csv_float(getattr(e.loss, k)) for k in LossBreakdown.FIELDS])


def load_trace_csv(path):
    """Rows as dicts with typed values; checks the header exactly."""
    d = _Doc(path)
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRACE_COLUMNS:
            d.fail("header", f"expected columns {','.join(TRACE_COLUMNS)}")
        for n, r in enumerate(reader, start=1):
            if len(r) != len(TRACE_COLUMNS):
                d.fail(f"row {n}", "wrong number of columns")
            try:
                rows.append({"iteration": int(r[0]), "phase": r[1], "frame": int(r[2]),
                             **{k: float(v) for k, v in zip(LossBreakdown.FIELDS, r[3:])}})
            except ValueError as exc:
                d.fail(f"row {n}", str(exc))
    return rows


def evaluation_document(metrics, body_height):
    doc = _header("evaluation")
    doc.update({"frames": metrics["frames"], "body_height": float(body_height), "mean": metrics["mean"],
                "per_frame": metrics["per_frame"]})
    return doc


def save_evaluation(path, metrics, body_height):
    write_document(path, evaluation_document(metrics, body_height))


def load_evaluation(path):
    raw, d = read_document(path, "evaluation")
    d.object(raw, "", ("format_version", "kind", "frames", "body_height", "mean", "per_frame"))
    F = d.integer(raw["frames"], "frames", 1)
    d.number(raw["body_height"], "body_height", 0.0, lo_open=True)
    if not isinstance(raw["mean"], dict):
        d.fail("mean", "expected an object")
    mean = {k: d.number(v, _join("mean", k)) for k, v in raw["mean"].items()}
    if not isinstance(raw["per_frame"], dict):
        d.fail("per_frame", "expected an object")
    per = {k: d.array(v, _join("per_frame", k), (F,)) for k, v in raw["per_frame"].items()}
    return {"frames": F, "body_height": float(raw["body_height"]), "mean": mean, "per_frame": per}


def save_evaluation_csv(path, metrics):
    keys = list(metrics["per_frame"])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame"] + keys)
        for f in range(metrics["frames"]):
            w.writerow([f] + [_csv_float(metrics["per_frame"][k][f]) for k in keys])


def load_evaluation_csv(path):
    d = _Doc(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "frame":
            d.fail("header", "first column must be 'frame'")
        out = {k: [] for k in header[1:]}
        for n, r in enumerate(reader, start=1):
            if len(r) != len(header) or int(r[0]) != n - 1:
                d.fail(f"row {n}", "malformed row")
            for k, v in zip(header[1:], r[1:]):
                out[k].append(float(v))
    return {k: np.array(v) for k, v in out.items()}


# --- OBJ export ------------------------------------------------------------------------


def save_obj(path, vertices, faces):
    """Triangle mesh as Wavefront OBJ (1-based indices, round-trip floats)."""
    lines = ["v " + " ".join(repr(float(c)) for c in v) for v in np.asarray(vertices)]
    lines += ["f " + " ".join(str(int(i) + 1) for i in f) for f in np.asarray(faces)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_obj(path):
    """Vertices and triangles of an OBJ written by ``save_obj``."""
    d = _Doc(path)
    verts, faces = [], []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            if parts[0] == "v" and len(parts) == 4:
                verts.append([float(x) for x in parts[1:]])
            elif parts[0] == "f" and len(parts) == 4:
                faces.append([int(x.split("/")[0]) - 1 for x in parts[1:]])
            else:
                d.fail(f"line {n}", f"unsupported record {parts[0]!r}")
        except ValueError as exc:
            d.fail(f"line {n}", str(exc))
    return np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)
