"""Contact anchors between a posed human and an object.

Object surface samples come from farthest point sampling over mesh vertices;
each sample is paired with its nearest human contact candidate and kept only
if the pair passes a normal-opposition gate and a robust proximity gate.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, InvalidConfigError, InvalidInputError
from .losses import geman_mcclure

# 'prose': g = 1 + n_o . n_h (0 for opposing normals)
# 'printed': g = 1 - n_o . n_h (0 for co-oriented normals), kept for comparison
NORMAL_CONVENTIONS = ("prose", "printed")


@dataclass(frozen=True, eq=False)
class SurfaceSamples:
    points: np.ndarray
    normals: np.ndarray
    source_vertex: np.ndarray
    valid_normal: np.ndarray = None

    def __post_init__(self):
        n = len(self.points)
        if len(self.normals) != n or len(self.source_vertex) != n:
            raise ContractError("sample points, normals and source indices differ in length")
        if self.valid_normal is None:
            object.__setattr__(self, "valid_normal", np.ones(n, dtype=bool))

    def __len__(self):
        return len(self.points)

    def transformed(self, rotation_matrix, translation):
        return SurfaceSamples(
            self.points @ rotation_matrix.T + translation,
            self.normals @ rotation_matrix.T,
            self.source_vertex,
            self.valid_normal,
        )


@dataclass(frozen=True, eq=False)
class ContactPairSet:
    pairs: np.ndarray  # (P, 2): object sample index, human vertex index
    tau_n: float
    tau_d: float
    sample_vertices: np.ndarray = None  # object mesh vertex per sample index
    empty_warning: bool = field(init=False, default=False)

    def __post_init__(self):
        pairs = np.array(self.pairs, dtype=np.int64).reshape(-1, 2)
        pairs.setflags(write=False)
        object.__setattr__(self, "pairs", pairs)
        object.__setattr__(self, "tau_n", float(self.tau_n))
        object.__setattr__(self, "tau_d", float(self.tau_d))
        if self.sample_vertices is not None:
            sv = np.array(self.sample_vertices, dtype=np.int64)
            sv.setflags(write=False)
            object.__setattr__(self, "sample_vertices", sv)
        if np.any(pairs < 0):
            raise ContractError("negative pair index")
        if len(np.unique(pairs[:, 0])) != len(pairs):
            raise ContractError("an object sample appears in more than one pair")
        if self.sample_vertices is not None and len(pairs) and pairs[:, 0].max() >= len(self.sample_vertices):
            raise ContractError("pair references a missing object sample")
        object.__setattr__(self, "empty_warning", len(pairs) == 0)

    def __len__(self):
        return len(self.pairs)

    @property
    def object_index(self):
        return self.pairs[:, 0]

    @property
    def human_index(self):
        return self.pairs[:, 1]


def farthest_point_sampling(points, n, seed_index=0):
    """Greedy max-min subset; ties go to the lowest index."""
    points = np.asarray(points, dtype=float)
    count = len(points)
    if not 1 <= n <= count:
        raise InvalidInputError(f"cannot select {n} of {count} points")
    if not 0 <= seed_index < count:
        raise InvalidInputError(f"seed index {seed_index} out of range")
    selected = np.empty(n, dtype=np.int64)
    selected[0] = seed_index
    diff = points - points[seed_index]
    mind = np.sum(diff * diff, axis=1)
    for i in range(1, n):
        nxt = int(np.argmax(mind))
        selected[i] = nxt
        diff = points - points[nxt]
        np.minimum(mind, np.sum(diff * diff, axis=1), out=mind)
    return selected


def vertex_normals(vertices, faces):
    """Area-weighted vertex normals plus a validity mask.

    Vertices whose incident faces have zero total area (or no faces) get a
    zero normal and ``False`` in the mask.
    """
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if len(vertices) == 0 or len(faces) == 0:
        raise InvalidInputError("vertex_normals needs a non-empty mesh")
    v0, v1, v2 = (vertices[faces[:, i]] for i in range(3))
    # cross product length is twice the area, so summing it weights by area
    fn = np.cross(v1 - v0, v2 - v0)
    acc = np.zeros_like(vertices)
    for i in range(3):
        np.add.at(acc, faces[:, i], fn)
    norm = np.linalg.norm(acc, axis=1)
    valid = norm > 1e-12
    normals = np.zeros_like(vertices)
    normals[valid] = acc[valid] / norm[valid, None]
    return normals, valid


def sample_surface(vertices, faces, n_samples=256, seed_index=0):
    """FPS over mesh vertices; ``n_samples`` is capped at the vertex count."""
    vertices = np.asarray(vertices, dtype=float)
    normals, valid = vertex_normals(vertices, faces)
    idx = farthest_point_sampling(vertices, min(n_samples, len(vertices)), seed_index)
    return SurfaceSamples(vertices[idx], normals[idx], idx, valid[idx])


def nearest_pairs(object_points, human_points, chunk=2048):
    """Exact nearest human point for every object point (lowest index on ties)."""
    obj = np.asarray(getattr(object_points, "points", object_points), dtype=float)
    hum = np.asarray(human_points, dtype=float)
    if len(hum) == 0:
        raise InvalidInputError("no human contact candidates")
    if len(obj) == 0:
        raise InvalidInputError("no object samples")
    out = np.empty(len(obj), dtype=np.int64)
    for start in range(0, len(obj), chunk):
        diff = obj[start:start + chunk, None, :] - hum[None, :, :]
        d2 = np.sum(diff * diff, axis=-1)
        out[start:start + chunk] = np.argmin(d2, axis=1)
    return np.stack([np.arange(len(obj)), out], axis=1)


def normal_gate(n_o, n_h, convention="prose"):
    dot = np.sum(np.asarray(n_o) * np.asarray(n_h), axis=-1)
    if convention == "prose":
        return 1.0 + dot
    if convention == "printed":
        return 1.0 - dot
    raise InvalidConfigError(f"unknown normal convention {convention!r}")


def extract_contacts(
    samples,
    human_points,
    human_normals,
    tau_n=0.3,
    tau_d=0.25,
    gm_sigma_dist=0.05,
    convention="prose",
    human_valid=None,
    human_indices=None,
    return_diagnostics=False,
):
    """Filter nearest pairs by the normal gate and the robust proximity gate.

    Pair human indices refer to rows of ``human_points`` unless
    ``human_indices`` maps those rows to mesh vertex ids.
    """
    if not 0.0 <= tau_n <= 4.0:
        raise InvalidConfigError(f"tau_n must lie in [0, 4], got {tau_n!r}")
    if not 0.0 < tau_d < 1.0:
        raise InvalidConfigError(f"tau_d must lie in (0, 1), got {tau_d!r}")
    if not gm_sigma_dist > 0:
        raise InvalidConfigError(f"gm_sigma_dist must be positive, got {gm_sigma_dist!r}")
    human_points = np.asarray(human_points, dtype=float)
    human_normals = np.asarray(human_normals, dtype=float)
    for arr, name in ((samples.points, "object samples"), (human_points, "human points"),
                      (samples.normals, "object normals"), (human_normals, "human normals")):
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError(f"non-finite {name}")
    if human_valid is None:
        human_valid = np.ones(len(human_points), dtype=bool)

    nn = nearest_pairs(samples.points, human_points)
    i, j = nn[:, 0], nn[:, 1]
    gate_n = normal_gate(samples.normals[i], human_normals[j], convention)
    dist = np.linalg.norm(samples.points[i] - human_points[j], axis=1)
    gate_d = geman_mcclure(dist, gm_sigma_dist)
    keep = (gate_n < tau_n) & (gate_d < tau_d) & samples.valid_normal[i] & np.asarray(human_valid)[j]
    pairs = nn[keep]
    if human_indices is not None:
        pairs = np.stack([pairs[:, 0], np.asarray(human_indices, dtype=np.int64)[pairs[:, 1]]], axis=1)
    result = ContactPairSet(pairs, tau_n, tau_d, samples.source_vertex)
    if return_diagnostics:
        return result, {"distance": dist[keep], "normal_gate": gate_n[keep], "proximity_gate": gate_d[keep]}
    return result


def contacts_from_composition(model, human, obj, n_samples=256, seed_index=0, tau_n=0.3, tau_d=0.25,
                              gm_sigma_dist=None, convention="prose", return_diagnostics=False):
    """Extract contact pairs from a static human/object composition.

    ``gm_sigma_dist`` defaults to 5% of the scaled body height.
    """
    from .body_model import posed_vertices
    from .rotations import axis_angle_to_matrix

    if gm_sigma_dist is None:
        gm_sigma_dist = 0.05 * model.height * human.scale
    local = sample_surface(obj.mesh.vertices, obj.mesh.faces, n_samples, seed_index)
    world = local.transformed(axis_angle_to_matrix(obj.rotation), obj.translation)
    verts = posed_vertices(model, human)
    normals, valid = vertex_normals(verts, model.faces)
    cand = model.contact_candidates
    return extract_contacts(
        world, verts[cand], normals[cand], tau_n, tau_d, gm_sigma_dist, convention,
        human_valid=valid[cand], human_indices=cand, return_diagnostics=return_diagnostics,
    )
