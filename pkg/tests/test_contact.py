import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from anchorfit.contact import (
    ContactPairSet,
    SurfaceSamples,
    extract_contacts,
    farthest_point_sampling,
    nearest_pairs,
    normal_gate,
    sample_surface,
    vertex_normals,
)
from anchorfit.errors import ContractError, InvalidConfigError, InvalidInputError
from anchorfit.rotations import axis_angle_to_matrix
from anchorfit.synthetic import grid_box, icosphere
from oracles import contact_filter_naive, fps_naive, nearest_naive


def plane(n=6, y=0.0, up=True):
    """Square grid in the x-z plane; faces wound so the normal is +y (or -y)."""
    xs = np.linspace(-0.1, 0.1, n)
    X, Z = np.meshgrid(xs, xs, indexing="ij")
    verts = np.stack([X.ravel(), np.full(X.size, y), Z.ravel()], axis=1)
    faces = []
    for i in range(n - 1):
        for k in range(n - 1):
            a, b, c, d = i * n + k, (i + 1) * n + k, (i + 1) * n + k + 1, i * n + k + 1
            faces += [(a, d, c), (a, c, b)] if up else [(a, c, d), (a, b, c)]
    return verts, np.array(faces)


# --- farthest point sampling ------------------------------------------------------


@pytest.mark.trivial
def test_fps_line_example():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [3.0, 0, 0]])
    assert farthest_point_sampling(pts, 2).tolist() == [0, 3]
    assert farthest_point_sampling(pts, 3).tolist() == [0, 3, 1]  # tie between 1 and 2: lowest index


@pytest.mark.trivial
def test_fps_with_n_equal_count_is_a_permutation(rng):
    pts = rng.normal(size=(30, 3))
    assert sorted(farthest_point_sampling(pts, 30).tolist()) == list(range(30))


def test_fps_matches_brute_force(rng):
    for seed in range(4):
        pts = rng.normal(size=(120, 3))
        assert farthest_point_sampling(pts, 25, seed).tolist() == fps_naive(pts.tolist(), 25, seed)


def test_fps_rejects_bad_counts(rng):
    pts = rng.normal(size=(5, 3))
    for n in (0, 6):
        with pytest.raises(InvalidInputError):
            farthest_point_sampling(pts, n)
    with pytest.raises(InvalidInputError):
        farthest_point_sampling(pts, 2, seed_index=5)


@given(st.integers(0, 2**32 - 1), st.integers(2, 20))
def test_fps_spread_property(seed, n):
    # every selected point is at least as far from earlier picks as any later pick is
    pts = np.random.default_rng(seed).normal(size=(60, 3))
    sel = farthest_point_sampling(pts, n)
    gaps = [np.min(np.linalg.norm(pts[sel[:k]] - pts[sel[k]], axis=1)) for k in range(1, n)]
    assert np.all(np.diff(gaps) <= 1e-12)
    assert len(set(sel.tolist())) == n


# --- vertex normals ---------------------------------------------------------------------


@pytest.mark.trivial
def test_cube_corner_normal():
    box = grid_box([0, 1], [0, 1], [0, 1])
    normals, valid = vertex_normals(box.vertices, box.faces)
    assert valid.all()
    for v, n in zip(box.vertices, normals):
        expected = np.where(v > 0.5, 1.0, -1.0)
        # area weighting on a 2-triangle face split is uneven, but the octant is right
        assert np.all(np.sign(n) == expected)
        assert np.isclose(np.linalg.norm(n), 1.0)


@pytest.mark.trivial
def test_plane_normals_are_constant():
    v, f = plane()
    normals, valid = vertex_normals(v, f)
    assert valid.all()
    assert np.allclose(normals, [0.0, 1.0, 0.0], atol=1e-12)


def test_icosphere_normals_are_radial():
    mesh = icosphere(3)
    normals, _ = vertex_normals(mesh.vertices, mesh.faces)
    radial = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
    angle = np.degrees(np.arccos(np.clip(np.sum(normals * radial, axis=1), -1, 1)))
    assert angle.max() < 2.0


def test_degenerate_vertices_are_flagged():
    v = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [5.0, 5, 5]])
    normals, valid = vertex_normals(v, [[0, 1, 2]])
    assert not valid.any()
    assert np.array_equal(normals, np.zeros((4, 3)))


# --- nearest pairs ----------------------------------------------------------------------


@pytest.mark.trivial
def test_nearest_pairs_example():
    obj = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    hum = np.array([[0.9, 0, 0], [0.1, 0, 0], [0.5, 0, 0]])
    assert nearest_pairs(obj, hum).tolist() == [[0, 1], [1, 0]]


def test_nearest_pairs_exhaustive(rng):
    obj, hum = rng.normal(size=(500, 3)), rng.normal(size=(300, 3))
    assert [tuple(p) for p in nearest_pairs(obj, hum, chunk=97)] == nearest_naive(obj.tolist(), hum.tolist())


# --- extraction ----------------------------------------------------------------------------


def _samples_from(verts, faces):
    normals, valid = vertex_normals(verts, faces)
    return SurfaceSamples(verts, normals, np.arange(len(verts)), valid)


@pytest.mark.trivial
def test_facing_planes_keep_every_sample():
    ov, of = plane(y=0.0, up=True)
    hv, hf = plane(y=0.01, up=False)
    hn, _ = vertex_normals(hv, hf)
    pairs = extract_contacts(_samples_from(ov, of), hv, hn, gm_sigma_dist=0.05)
    assert len(pairs) == len(ov)
    assert np.array_equal(pairs.pairs, np.stack([np.arange(len(ov))] * 2, axis=1))


@pytest.mark.trivial
def test_co_oriented_planes_keep_nothing_under_opposing_convention():
    ov, of = plane(y=0.0, up=True)
    hv, hf = plane(y=0.01, up=True)
    hn, _ = vertex_normals(hv, hf)
    pairs = extract_contacts(_samples_from(ov, of), hv, hn, gm_sigma_dist=0.05)
    assert len(pairs) == 0 and pairs.empty_warning
    flipped = extract_contacts(_samples_from(ov, of), hv, hn, gm_sigma_dist=0.05, convention="printed")
    assert len(flipped) == len(ov)


def test_far_planes_fail_the_proximity_gate():
    ov, of = plane(y=0.0, up=True)
    hv, hf = plane(y=0.5, up=False)
    hn, _ = vertex_normals(hv, hf)
    assert len(extract_contacts(_samples_from(ov, of), hv, hn, gm_sigma_dist=0.05)) == 0


def test_normal_gate_values():
    n = np.array([0.0, 1.0, 0.0])
    assert normal_gate(n, -n) == 0.0 and normal_gate(n, n) == 2.0
    assert normal_gate(n, n, "printed") == 0.0
    with pytest.raises(InvalidConfigError):
        normal_gate(n, n, "other")


def test_threshold_validation(rng):
    s = _samples_from(*plane())
    hv, hf = plane(y=0.01, up=False)
    hn, _ = vertex_normals(hv, hf)
    for kw in ({"tau_n": -0.1}, {"tau_n": 4.5}, {"tau_d": 0.0}, {"tau_d": 1.0}, {"gm_sigma_dist": 0.0}):
        with pytest.raises(InvalidConfigError):
            extract_contacts(s, hv, hn, **kw)
    bad = hv.copy()
    bad[0, 0] = np.nan
    with pytest.raises(InvalidInputError):
        extract_contacts(s, bad, hn)


def test_pair_set_contract():
    with pytest.raises(ContractError):
        ContactPairSet([[0, 1], [0, 2]], 0.3, 0.25)
    with pytest.raises(ContractError):
        ContactPairSet([[-1, 1]], 0.3, 0.25)
    with pytest.raises(ContractError):
        ContactPairSet([[3, 1]], 0.3, 0.25, sample_vertices=[0, 1])


def random_pair_problem(rng):
    mesh = icosphere(2, radius=rng.uniform(0.1, 0.3))
    R = axis_angle_to_matrix(rng.normal(size=3))
    obj_v = mesh.vertices @ R.T
    samples = sample_surface(obj_v, mesh.faces, int(rng.integers(20, 120)), int(rng.integers(0, len(obj_v))))
    hum = icosphere(1, radius=rng.uniform(0.1, 0.3))
    offset = rng.normal(size=3)
    offset *= rng.uniform(0.15, 0.5) / np.linalg.norm(offset)
    hv = hum.vertices + offset
    hn, hvalid = vertex_normals(hv, hum.faces)
    return samples, hv, hn, hvalid


@pytest.mark.parametrize("convention", ["prose", "printed"])
def test_extraction_matches_brute_force_filter(rng, convention):
    total = 0
    for _ in range(20):
        s, hv, hn, hvalid = random_pair_problem(rng)
        tau_n, tau_d, sigma = rng.uniform(0.2, 1.5), rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.3)
        got = extract_contacts(s, hv, hn, tau_n, tau_d, sigma, convention, human_valid=hvalid)
        want = contact_filter_naive(s.points.tolist(), s.normals.tolist(), s.valid_normal.tolist(), hv.tolist(),
                                    hn.tolist(), hvalid.tolist(), tau_n, tau_d, sigma, convention)
        assert set(map(tuple, got.pairs.tolist())) == want
        total += len(want)
    assert total > 0


@given(st.integers(0, 2**32 - 1))
def test_pairs_are_a_subset_of_nearest_and_pass_gates(seed):
    rng = np.random.default_rng(seed)
    s, hv, hn, hvalid = random_pair_problem(rng)
    got, diag = extract_contacts(s, hv, hn, 0.8, 0.5, 0.1, human_valid=hvalid, return_diagnostics=True)
    nn = {tuple(p) for p in nearest_pairs(s.points, hv).tolist()}
    assert set(map(tuple, got.pairs.tolist())) <= nn
    assert np.all(diag["normal_gate"] < 0.8) and np.all(diag["proximity_gate"] < 0.5)
    assert len(np.unique(got.object_index)) == len(got)


@given(arrays(np.float64, 3, elements=st.floats(-3, 3)), arrays(np.float64, 3, elements=st.floats(-2, 2)))
def test_extraction_invariant_under_shared_rigid_motion(r, t):
    rng = np.random.default_rng(11)
    s, hv, hn, hvalid = random_pair_problem(rng)
    base = extract_contacts(s, hv, hn, 1.0, 0.6, 0.15, human_valid=hvalid)
    R = axis_angle_to_matrix(r)
    moved = extract_contacts(s.transformed(R, t), hv @ R.T + t, hn @ R.T, 1.0, 0.6, 0.15, human_valid=hvalid)
    # gates are evaluated in floating point; pairs sitting on a threshold may flip
    assert set(map(tuple, base.pairs.tolist())) ^ set(map(tuple, moved.pairs.tolist())) <= _marginal(
        s, hv, hn, hvalid)


def _marginal(s, hv, hn, hvalid, eps=1e-9):
    from anchorfit.losses import geman_mcclure

    nn = nearest_pairs(s.points, hv)
    i, j = nn[:, 0], nn[:, 1]
    g = normal_gate(s.normals[i], hn[j])
    d = geman_mcclure(np.linalg.norm(s.points[i] - hv[j], axis=1), 0.15)
    near = (np.abs(g - 1.0) < eps) | (np.abs(d - 0.6) < eps)
    # ties in nearest distance can also flip under rounding
    d2 = np.sum((s.points[:, None] - hv[None]) ** 2, axis=-1)
    srt = np.sort(d2, axis=1)
    near |= (srt[:, 1] - srt[:, 0]) < 1e-9
    out = set(map(tuple, nn[near].tolist()))
    for k in np.flatnonzero(near):
        out |= {(int(k), int(m)) for m in range(len(hv))}
    return out


def test_extraction_is_deterministic(rng):
    s, hv, hn, hvalid = random_pair_problem(rng)
    a = extract_contacts(s, hv, hn, 1.0, 0.6, 0.15, human_valid=hvalid)
    b = extract_contacts(s, hv, hn, 1.0, 0.6, 0.15, human_valid=hvalid)
    assert np.array_equal(a.pairs, b.pairs)


def test_sample_count_is_capped_at_vertex_count():
    box = grid_box([0, 1], [0, 1], [0, 1])
    s = sample_surface(box.vertices, box.faces, 256)
    assert len(s) == 8
