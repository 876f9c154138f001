import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from anchorfit.camera import (
    Z_MIN,
    Camera,
    KeypointFrame,
    ObjectMesh,
    ObjectState,
    camera_ring,
    clamp_depth,
    project,
    project_smooth,
    transform_object,
    triangulate,
)
from anchorfit.errors import BehindCameraError, InvalidInputError
from anchorfit.geometry import look_at
from anchorfit.rotations import axis_angle_to_matrix, canonicalize, compose
from oracles import project_matrix, rodrigues

vec3 = arrays(np.float64, 3, elements=st.floats(-2.0, 2.0))


def simple_camera():
    return Camera((1000.0, 1000.0), (500.0, 500.0), (1000, 1000), np.eye(3), np.zeros(3))


def random_camera(rng):
    eye = rng.normal(0, 3, 3)
    R, t = look_at(eye, rng.normal(0, 0.3, 3))
    return Camera(rng.uniform(300, 1500, 2), rng.uniform(200, 600, 2), (int(rng.integers(400, 1200)),
                                                                       int(rng.integers(400, 1200))), R, t)


@pytest.mark.trivial
def test_optical_axis_hits_principal_point():
    cam = Camera((800.0, 900.0), (310.0, 250.0), (640, 480), np.eye(3), np.zeros(3))
    assert np.allclose(project(cam, np.array([0.0, 0.0, 4.0])), [310 / 640, 250 / 480])


@pytest.mark.trivial
def test_pinhole_example():
    assert np.allclose(project(simple_camera(), np.array([1.0, 0.0, 10.0])), [0.6, 0.5], atol=1e-15)


def test_projection_matches_matrix_oracle(rng):
    for _ in range(20):
        cam = random_camera(rng)
        p = cam.center + 2.0 * (cam.rotation.T @ np.array([0.0, 0.0, 1.0])) + rng.normal(0, 0.5, 3)
        assert np.abs(project(cam, p) - project_matrix(cam, p)).max() < 1e-9


def test_behind_camera_raises():
    with pytest.raises(BehindCameraError):
        project(simple_camera(), np.array([0.0, 0.0, -1.0]))
    with pytest.raises(BehindCameraError):
        project(simple_camera(), np.array([0.0, 0.0, Z_MIN]))


def test_smooth_projection_is_exact_away_from_the_plane(rng):
    cam = simple_camera()
    pts = rng.normal(0, 1, (50, 3)) + [0.0, 0.0, 3.0]
    assert np.array_equal(project_smooth(cam, pts).uv, project(cam, pts))


def test_depth_clamp_is_smooth_and_positive():
    z = np.linspace(-1.0, 0.01, 2001)
    zc, dz = clamp_depth(z)
    assert np.all(zc >= Z_MIN) and np.all(np.isfinite(dz))
    assert np.all(np.diff(zc) >= 0)


def test_camera_validation():
    with pytest.raises(InvalidInputError):
        Camera((0.0, 1.0), (0.0, 0.0), (10, 10), np.eye(3), np.zeros(3))
    with pytest.raises(InvalidInputError):
        Camera((1.0, 1.0), (0.0, 0.0), (10, 10), np.diag([1.0, 1.0, 1.0 + 1e-6]), np.zeros(3))
    with pytest.raises(InvalidInputError):
        Camera((1.0, 1.0), (0.0, 0.0), (0, 10), np.eye(3), np.zeros(3))


def test_keypoint_confidence_range():
    with pytest.raises(InvalidInputError):
        KeypointFrame(0, np.zeros((2, 2)), [1.5, 0.0])


@given(vec3, vec3, arrays(np.float64, 3, elements=st.floats(-0.5, 0.5)))
def test_projection_invariant_to_shared_rigid_motion(r, t, p):
    cam = Camera((900.0, 900.0), (400.0, 300.0), (800, 600), np.eye(3), np.array([0.0, 0.0, 4.0]))
    R = axis_angle_to_matrix(r)
    # move the world by x -> R x + t; the camera's world->camera map absorbs the inverse
    moved = Camera(cam.focal, cam.principal, cam.image_size, cam.rotation @ R.T, cam.translation - cam.rotation @ R.T @ t)
    assert np.abs(project(moved, R @ p + t) - project(cam, p)).max() < 1e-9


@given(arrays(np.float64, 2, elements=st.floats(0.0, 1.0)), st.floats(0.5, 20.0))
def test_points_inside_image_are_normalized(uv, depth):
    cam = Camera((700.0, 800.0), (320.0, 240.0), (640, 480), np.eye(3), np.zeros(3))
    x = (uv[0] * 640 - 320) / 700 * depth
    y = (uv[1] * 480 - 240) / 800 * depth
    out = project(cam, np.array([x, y, depth]))
    assert np.all(out >= -1e-12) and np.all(out <= 1 + 1e-12)


@pytest.mark.trivial
def test_identity_object_state():
    mesh = ObjectMesh(np.array([[1.0, 2.0, 3.0], [0.0, -1.0, 0.5]]), [[0, 1, 1]])
    assert np.array_equal(transform_object(ObjectState(np.zeros(3), np.zeros(3), mesh)), mesh.vertices)


@pytest.mark.trivial
def test_object_half_turn_about_z():
    mesh = ObjectMesh(np.array([[1.0, 2.0, 3.0], [0.5, -1.0, 0.5]]), [[0, 1, 1]])
    normals = np.array([[0.0, 1.0, 0.0], [0.6, 0.0, 0.8]])
    v, n = transform_object(ObjectState(np.array([0.0, 0.0, np.pi]), np.zeros(3), mesh), normals)
    assert np.allclose(v[:, :2], -mesh.vertices[:, :2], atol=1e-12)
    assert np.allclose(v[:, 2], mesh.vertices[:, 2])
    assert np.allclose(n[:, :2], -normals[:, :2], atol=1e-12)


def test_object_transform_composes(rng):
    mesh = ObjectMesh(rng.normal(size=(30, 3)), [[0, 1, 2]])
    for _ in range(10):
        r1, t1, r2, t2 = rng.normal(0, 1, 3), rng.normal(size=3), rng.normal(0, 1, 3), rng.normal(size=3)
        step1 = transform_object(ObjectState(canonicalize(r1), t1, mesh))
        step2 = step1 @ rodrigues(r2).T + t2
        R21 = rodrigues(r2) @ rodrigues(r1)
        direct = transform_object(ObjectState(canonicalize(compose(r2, r1)), rodrigues(r2) @ t1 + t2, mesh))
        assert np.abs(step2 - direct).max() < 1e-10
        assert np.abs(direct - (mesh.vertices @ R21.T + rodrigues(r2) @ t1 + t2)).max() < 1e-10


@given(vec3, vec3)
def test_object_transform_is_isometry(r, t):
    pts = np.random.default_rng(0).normal(size=(12, 3))
    mesh = ObjectMesh(pts, [[0, 1, 2]])
    out = transform_object(ObjectState(canonicalize(r), t, mesh))
    d0 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    d1 = np.linalg.norm(out[:, None] - out[None], axis=-1)
    assert np.abs(d0 - d1).max() < 1e-9


def test_triangulation_recovers_points(rng):
    cams = camera_ring(np.zeros(3), radius=3.0, count=4)
    X = rng.normal(0, 0.4, (10, 3))
    uv = np.array([project(c, X) for c in cams])
    conf = np.ones((4, 10))
    conf[1:, 3] = 0.0  # seen once: not triangulated
    pts, ok = triangulate(cams, uv, conf)
    assert not ok[3] and np.all(np.isnan(pts[3]))
    assert np.abs(pts[ok] - X[ok]).max() < 1e-9


def test_camera_ring_looks_at_target():
    target = np.array([0.2, 1.0, -0.5])
    for cam in camera_ring(target, radius=3.0, count=4):
        assert np.allclose(project(cam, target), [0.5, 0.5], atol=1e-12)
        assert np.isclose(np.linalg.norm(cam.center - target), 3.0)
