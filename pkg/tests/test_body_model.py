import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from anchorfit.body_model import (
    BodyModel,
    HumanState,
    KinematicTree,
    capsule_proxies,
    forward_kinematics,
    posed_vertices,
    skin_vertices,
)
from anchorfit.errors import ContractError, InvalidInputError
from anchorfit.geometry import capsule_signed_distance
from anchorfit.rotations import axis_angle_to_matrix, canonicalize, compose
from oracles import fk_chain, lbs_dense

small_rot = arrays(np.float64, 3, elements=st.floats(-1.2, 1.2))


def chain_model(offsets, radii=None, vertices=None, weights=None):
    J = len(offsets)
    tree = KinematicTree(tuple([-1] + list(range(J - 1))), np.array(offsets, float), tuple(f"j{k}" for k in range(J)))
    if vertices is None:
        vertices = np.array([[0.0, 0.0, 0.0]])
        weights = np.eye(J)[:1]
    return BodyModel(tree, vertices, np.zeros((0, 3), int), weights, [], [], np.full(J, 0.1) if radii is None else radii)


def random_state(model, rng, scale=1.0, spread=0.6):
    return HumanState(scale, rng.normal(0, spread, 3), rng.normal(0, 1, 3),
                      canonicalize(rng.normal(0, spread, (model.joint_count, 3))), np.zeros(model.n_shape))


@pytest.mark.trivial
def test_identity_pose_gives_cumulative_offsets(rig):
    joints, T = forward_kinematics(rig, HumanState.rest(rig))
    assert np.array_equal(joints, rig.tree.rest_positions)
    assert np.array_equal(T[:, :3, :3], np.broadcast_to(np.eye(3), (rig.joint_count, 3, 3)))


@pytest.mark.trivial
def test_root_half_turn_about_z_negates_xy(rig):
    rest = forward_kinematics(rig, HumanState.rest(rig))[0]
    turned = forward_kinematics(rig, HumanState.rest(rig).replace(root_rotation=np.array([0.0, 0.0, np.pi])))[0]
    assert np.allclose(turned[:, :2], -rest[:, :2], atol=1e-12)
    assert np.allclose(turned[:, 2], rest[:, 2], atol=1e-12)


def test_three_joint_chain_against_matrix_chain():
    model = chain_model([(0, 0, 0), (0, 1, 0), (0, 1, 0)])
    rots = np.zeros((3, 3))
    rots[1] = [np.pi / 2, 0, 0]
    state = HumanState(1.0, np.zeros(3), np.zeros(3), rots)
    joints = forward_kinematics(model, state)[0]
    G = fk_chain((-1, 0, 1), model.tree.rest_offset, np.zeros(3), np.zeros(3), rots, 1.0)
    assert np.allclose(joints[2], G[2][:3, 3], atol=1e-12)
    assert np.allclose(joints[2], [0.0, 1.0, 1.0], atol=1e-12)


def test_rig18_fk_matches_matrix_chain(rig, rng):
    for _ in range(5):
        st_ = random_state(rig, rng, scale=rng.uniform(0.5, 2.0))
        joints, T = forward_kinematics(rig, st_)
        G = fk_chain(rig.tree.parent, rig.tree.rest_offset, st_.root_rotation, st_.root_translation,
                     st_.joint_rotations, st_.scale)
        assert np.allclose(T, np.array(G), atol=1e-12)


def test_transforms_are_scaled_rotations(rig, rng):
    st_ = random_state(rig, rng, scale=1.7)
    _, T = forward_kinematics(rig, st_)
    L = T[:, :3, :3] / 1.7
    assert np.allclose(np.einsum("jab,jcb->jac", L, L), np.eye(3), atol=1e-12)


def test_fk_rejects_bad_input(rig):
    with pytest.raises(ContractError):
        forward_kinematics(rig, HumanState(1.0, np.zeros(3), np.zeros(3), np.zeros((3, 3))))
    with pytest.raises(InvalidInputError):
        HumanState(1.0, np.array([np.nan, 0, 0]), np.zeros(3), np.zeros((rig.joint_count, 3)))
    with pytest.raises(InvalidInputError):
        HumanState(-1.0, np.zeros(3), np.zeros(3), np.zeros((rig.joint_count, 3)))
    with pytest.raises(InvalidInputError):
        HumanState(1.0, np.array([4.0, 0, 0]), np.zeros(3), np.zeros((rig.joint_count, 3)))


@pytest.mark.trivial
def test_all_weight_on_root_moves_template_rigidly():
    model = chain_model([(0, 0, 0), (0, 1, 0)], vertices=np.array([[0.3, 0.2, 0.1], [-1.0, 2.0, 0.5]]),
                        weights=np.array([[1.0, 0.0], [1.0, 0.0]]))
    rots = np.array([[0.0, 0.0, 0.0], [0.7, -0.2, 0.4]])
    r, t, s = np.array([0.2, 0.5, -0.1]), np.array([1.0, -2.0, 0.5]), 1.3
    st_ = HumanState(s, r, t, rots)
    expected = s * model.template_vertices @ axis_angle_to_matrix(r).T + t
    assert np.allclose(posed_vertices(model, st_), expected, atol=1e-12)


@pytest.mark.trivial
def test_half_half_weights_average_transforms():
    model = chain_model([(0, 0, 0), (0, 1, 0)], vertices=np.array([[0.0, 0.5, 0.0]]),
                        weights=np.array([[0.5, 0.5]]))
    rest = model.tree.rest_positions
    T = np.tile(np.eye(4), (2, 1, 1))
    T[:, :3, 3] = rest
    T[1, :3, 3] += [1.0, 0.0, 0.0]
    out = skin_vertices(model, T, HumanState.rest(model))
    assert np.allclose(out[0] - model.template_vertices[0], [0.5, 0.0, 0.0], atol=1e-15)


def test_two_bone_rig_matches_dense_lbs(rng):
    verts = rng.normal(0, 0.5, (40, 3))
    w = rng.uniform(0, 1, (40, 3)) * (rng.uniform(size=(40, 3)) > 0.3)
    w[:, 0] += 1e-3
    w /= w.sum(axis=1, keepdims=True)
    model = chain_model([(0.1, 0, 0), (0, 0.8, 0.1), (0.2, 0.7, 0)], vertices=verts, weights=w)
    for _ in range(5):
        st_ = random_state(model, rng, scale=rng.uniform(0.5, 2.0))
        got = posed_vertices(model, st_)
        want = lbs_dense(model.tree.parent, model.tree.rest_offset, verts, w, st_.root_rotation,
                         st_.root_translation, st_.joint_rotations, st_.scale)
        assert np.abs(got - want).max() < 1e-9
        # the transform-based wrapper agrees with the batched path
        _, T = forward_kinematics(model, st_)
        assert np.abs(skin_vertices(model, T, st_) - got).max() < 1e-12


def test_rig18_skinning_matches_dense_lbs(rig, rng):
    st_ = random_state(rig, rng)
    idx = rng.choice(len(rig.template_vertices), 60, replace=False)
    got = posed_vertices(rig, st_)[idx]
    want = lbs_dense(rig.tree.parent, rig.tree.rest_offset, rig.template_vertices[idx], rig.skin_weights[idx],
                     st_.root_rotation, st_.root_translation, st_.joint_rotations, st_.scale)
    assert np.abs(got - want).max() < 1e-9


def test_unnormalized_weights_rejected():
    with pytest.raises(ContractError):
        chain_model([(0, 0, 0), (0, 1, 0)], vertices=np.zeros((1, 3)), weights=np.array([[0.6, 0.6]]))


def test_tree_order_enforced():
    with pytest.raises(ContractError):
        KinematicTree((-1, 2, 0), np.zeros((3, 3)), ("a", "b", "c"))
    with pytest.raises(ContractError):
        KinematicTree((-1,), np.zeros((1, 3)), ("a",))


@pytest.mark.trivial
def test_two_joint_rig_has_one_capsule():
    model = chain_model([(0, 0, 0), (0, 1, 0)])
    joints = forward_kinematics(model, HumanState.rest(model))[0]
    assert len(capsule_proxies(model, joints)) == 1


@pytest.mark.trivial
def test_capsules_scale_homogeneously(rig, rng):
    st_ = random_state(rig, rng).replace(root_translation=np.zeros(3))
    c1 = capsule_proxies(rig, forward_kinematics(rig, st_)[0], 1.0)
    c2 = capsule_proxies(rig, forward_kinematics(rig, st_.replace(scale=2.0))[0], 2.0)
    assert np.allclose(c2.radius, 2 * c1.radius)
    assert np.allclose(np.linalg.norm(c2.start, axis=1), 2 * np.linalg.norm(c1.start, axis=1), atol=1e-12)
    assert np.allclose(np.linalg.norm(c2.end, axis=1), 2 * np.linalg.norm(c1.end, axis=1), atol=1e-12)


@pytest.mark.trivial
def test_capsule_signed_distance_definition():
    a, b = np.zeros(3), np.array([0.0, 2.0, 0.0])
    for d in (0.0, 0.05, 0.3, 1.5):
        p = np.array([d, 0.7, 0.0])
        assert np.isclose(capsule_signed_distance(p, a, b, 0.2), d - 0.2, atol=1e-15)


def test_capsule_count_and_radii_match_bones(rig):
    caps = capsule_proxies(rig, rig.tree.rest_positions)
    assert len(caps) == rig.joint_count - 1
    assert np.array_equal(caps.radius, rig.bone_radii[[k for _, k in rig.tree.bones]])


# --- properties --------------------------------------------------------------


@given(small_rot, small_rot, st.floats(0.5, 2.0))
def test_fk_is_deterministic(rig, r, theta, s):
    st_ = HumanState(s, r, np.zeros(3), np.tile(theta, (rig.joint_count, 1)))
    a = forward_kinematics(rig, st_)
    b = forward_kinematics(rig, st_)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


@given(small_rot, small_rot, arrays(np.float64, 3, elements=st.floats(-2, 2)))
def test_global_rotation_acts_about_root(rig, r, extra, t):
    theta = np.tile(np.array([0.1, -0.2, 0.3]), (rig.joint_count, 1))
    base = HumanState(1.1, r, t, theta)
    turned = base.replace(root_rotation=canonicalize(compose(extra, r)))
    j0 = forward_kinematics(rig, base)[0]
    j1 = forward_kinematics(rig, turned)[0]
    R = axis_angle_to_matrix(extra)
    assert np.abs((j1 - t) - (j0 - t) @ R.T).max() < 1e-9


@given(st.floats(0.2, 5.0), small_rot)
def test_scale_multiplies_joint_to_root_distances(rig, c, r):
    theta = np.tile(np.array([0.2, 0.1, -0.3]), (rig.joint_count, 1))
    a = forward_kinematics(rig, HumanState(1.0, r, np.ones(3), theta))[0]
    b = forward_kinematics(rig, HumanState(c, r, np.ones(3), theta))[0]
    da = np.linalg.norm(a - a[0], axis=1)
    db = np.linalg.norm(b - b[0], axis=1)
    assert np.allclose(db, c * da, atol=1e-12)


def test_identity_transforms_reproduce_template(rig):
    T = np.tile(np.eye(4), (rig.joint_count, 1, 1))
    T[:, :3, 3] = rig.tree.rest_positions
    out = skin_vertices(rig, T, HumanState.rest(rig))
    assert np.allclose(out, rig.template_vertices, atol=1e-12)


@given(st.randoms(use_true_random=False))
def test_sibling_relabeling_does_not_change_fk(rig, rnd):
    parents = rig.tree.parent
    J = len(parents)
    order, placed = [0], {0}
    while len(order) < J:
        ready = [k for k in range(J) if k not in placed and parents[k] in placed]
        k = rnd.choice(ready)
        order.append(k)
        placed.add(k)
    new_index = {old: new for new, old in enumerate(order)}
    tree = KinematicTree(tuple(-1 if parents[o] < 0 else new_index[parents[o]] for o in order),
                         rig.tree.rest_offset[order], tuple(rig.tree.joint_name[o] for o in order))
    model = BodyModel(tree, np.zeros((1, 3)), np.zeros((0, 3), int), np.eye(J)[:1], [], [], rig.bone_radii[order])
    rng = np.random.default_rng(rnd.randint(0, 2**31))
    theta = canonicalize(rng.normal(0, 0.5, (J, 3)))
    r, t = rng.normal(0, 0.5, 3), rng.normal(0, 1, 3)
    a = forward_kinematics(rig, HumanState(1.2, r, t, theta))[0]
    b = forward_kinematics(model, HumanState(1.2, r, t, theta[order]))[0]
    assert np.array_equal(a[order], b)
