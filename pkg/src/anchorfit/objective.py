"""Scene bundles and the weighted objective with its exact gradient.

``evaluate`` is the single forward path used by the optimizer, the metrics
trace and the finite-difference oracle, so a breakdown recomputed at the
returned parameters matches the recorded one bit for bit.
"""

from dataclasses import dataclass, replace

import numpy as np

from .body_model import fk_backward, fk_batch, skin_batch
from .camera import project_smooth, project_smooth_backward, transform_points
from .errors import ContractError, NonFiniteError, UnderconstrainedError
from .losses import (
    LossWeights,
    body_keypoint_kernel,
    breakdown,
    contact_kernel,
    penetration_kernel,
    pose_prior_kernel,
    regularization_value,
    self_penetration_kernel,
    smoothness_kernel,
    static_alignment_kernel,
)
from .rotations import axis_angle_to_matrix, axis_angle_to_matrix_and_jacobian


@dataclass
class Params:
    """Unpacked optimization variables; object fields are None without an object."""

    scale: float
    shape: np.ndarray
    root_rot: np.ndarray  # (F, 3)
    root_trans: np.ndarray  # (F, 3)
    joint_rots: np.ndarray  # (F, J, 3)
    obj_rot: np.ndarray = None
    obj_trans: np.ndarray = None

    @property
    def frames(self):
        return self.root_rot.shape[0]

    def track(self):
        parts = [self.root_rot, self.root_trans, self.joint_rots.reshape(self.frames, -1)]
        if self.obj_rot is not None:
            parts += [self.obj_rot, self.obj_trans]
        return np.concatenate(parts, axis=1)

    def copy(self):
        c = lambda a: None if a is None else np.array(a)
        return Params(float(self.scale), c(self.shape), c(self.root_rot), c(self.root_trans),
                      c(self.joint_rots), c(self.obj_rot), c(self.obj_trans))


def stack_keypoints(model, frames_by_time, n_views):
    """``frames_by_time[f]`` is a list of KeypointFrame -> mapped (F,V,K,2), (F,V,K)."""
    det = model.keypoint_detectors
    F = len(frames_by_time)
    K = len(det)
    pts = np.zeros((F, n_views, K, 2))
    conf = np.zeros((F, n_views, K))
    for f, views in enumerate(frames_by_time):
        for kf in views:
            if not 0 <= kf.view_id < n_views:
                raise ContractError(f"frame {f}: view_id {kf.view_id} has no camera")
            if len(det) and len(kf.points) <= det.max():
                raise ContractError(
                    f"frame {f} view {kf.view_id}: {len(kf.points)} keypoints, keypoint_map needs index {det.max()}")
            pts[f, kf.view_id] = kf.points[det]
            conf[f, kf.view_id] = kf.confidence[det]
    return pts, conf


@dataclass(frozen=True, eq=False)
class Scene:
    """Everything the objective needs besides the optimization variables.

    ``mode='static'`` sums robust alignment over all views of frame 0 and
    regularizes with the pose prior only; ``mode='motion'`` is the full
    weighted tracking objective.
    """

    model: object
    cameras: tuple
    keypoints: np.ndarray  # (F, V, K, 2) mapped keypoints
    confidence: np.ndarray  # (F, V, K)
    mode: str = "motion"
    object_points: np.ndarray = None  # (N, 3) object samples in the object frame
    contacts: object = None  # ContactPairSet indexing object_points rows and mesh vertices

    @classmethod
    def static(cls, model, cameras, frames):
        pts, conf = stack_keypoints(model, [frames], len(cameras))
        return cls(model, tuple(cameras), pts, conf, "static")

    @classmethod
    def motion(cls, model, cameras, frames_by_time, object_points=None, contacts=None):
        pts, conf = stack_keypoints(model, frames_by_time, len(cameras))
        return cls(model, tuple(cameras), pts, conf, "motion",
                   None if object_points is None else np.asarray(object_points, dtype=float),
                   contacts)

    @property
    def frames(self):
        return self.keypoints.shape[0]

    def window(self, start, stop):
        """Sub-scene over frames ``[start, stop)``."""
        return replace(self, keypoints=self.keypoints[start:stop], confidence=self.confidence[start:stop])

    def sigma_dist(self, weights, scale):
        if weights.gm_sigma_dist > 0:
            return weights.gm_sigma_dist
        return 0.05 * self.model.height * scale


def _check(term, *arrays):
    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise NonFiniteError(term)


def evaluate(scene, params, weights=None, with_grad=False, include_smooth=True):
    """Loss breakdown (and gradient as a ``Params``) at ``params``."""
    weights = weights or LossWeights()
    model = scene.model
    F = params.frames
    if scene.keypoints.shape[0] != F:
        raise ContractError(f"{F} parameter frames for {scene.keypoints.shape[0]} keypoint frames")
    J = model.joint_count
    s = params.scale
    fk = fk_batch(model, params.root_rot, params.root_trans, params.joint_rots, s, with_jacobian=with_grad)
    _check("forward_kinematics", fk.positions)

    gP = np.zeros((F, J, 3)) if with_grad else None
    g_theta_direct = np.zeros((F, J, 3)) if with_grad else None
    g_s = 0.0

    # --- body keypoints ---------------------------------------------------
    kj = model.keypoint_joints
    mapped = fk.positions[:, kj]
    V = len(scene.cameras)
    if scene.mode == "static":
        if not np.any(scene.confidence > 0):
            raise UnderconstrainedError("no confident keypoint in any view")
        body = 0.0
    else:
        per_view = np.zeros((F, V))
    g_mapped = np.zeros_like(mapped) if with_grad else None
    for v, cam in enumerate(scene.cameras):
        proj = project_smooth(cam, mapped)
        if scene.mode == "static":
            val, guv = static_alignment_kernel(proj.uv[0], scene.keypoints[0, v], scene.confidence[0, v],
                                               weights.gm_sigma_align)
            body += val
            guv = guv[None]
            scale_b = weights.lambda_J
        else:
            vals, guv = body_keypoint_kernel(proj.uv, scene.keypoints[:, v], scene.confidence[:, v],
                                             weights.gm_sigma_align)
            per_view[:, v] = vals
            scale_b = weights.lambda_J / (F * V)
        if with_grad and scale_b != 0.0:
            g_mapped += project_smooth_backward(cam, proj, scale_b * guv)
    if scene.mode != "static":
        body = np.mean(per_view)
    _check("body", body, g_mapped)
    if with_grad:
        np.add.at(gP, (slice(None), kj), g_mapped)

    # --- contact and penetration -----------------------------------------
    contact = 0.0
    penetration = 0.0
    g_obj_pts = None
    skin = gV = None
    has_object = scene.mode == "motion" and scene.object_points is not None and params.obj_rot is not None
    if has_object:
        R_o = axis_angle_to_matrix(params.obj_rot)
        obj_world = np.einsum("fab,nb->fna", R_o, scene.object_points) + params.obj_trans[:, None, :]
        if with_grad:
            g_obj_pts = np.zeros_like(obj_world)

        pairs = scene.contacts.pairs if scene.contacts is not None else np.zeros((0, 2), dtype=np.int64)
        if len(pairs):
            human_ids, inverse = np.unique(pairs[:, 1], return_inverse=True)
            skin = skin_batch(model, fk, human_ids, params.shape)
            p_h = skin.world[:, inverse]
            p_o = obj_world[:, pairs[:, 0]]
            vals, gh, go = contact_kernel(p_h, p_o)
            contact = np.mean(vals)
            _check("contact", contact, gh)
            if with_grad:
                c = weights.lambda_C / F
                gV = np.zeros_like(skin.world)
                np.add.at(gV, (slice(None), inverse), c * gh)
                np.add.at(g_obj_pts, (slice(None), pairs[:, 0]), c * go)

        bones = np.array(model.tree.bones)
        radii = s * model.bone_radii[bones[:, 1]]
        start, end = fk.positions[:, bones[:, 0]], fk.positions[:, bones[:, 1]]
        if with_grad:
            vals, g_smp, g_st, g_en, g_rad = penetration_kernel(obj_world, start, end, radii)
        else:
            vals = penetration_kernel(obj_world, start, end, radii, with_grad=False)
        penetration = np.mean(vals)
        _check("penetration", penetration)
        if with_grad:
            c = weights.lambda_pen / F
            g_obj_pts += c * g_smp
            np.add.at(gP, (slice(None), bones[:, 0]), c * g_st)
            np.add.at(gP, (slice(None), bones[:, 1]), c * g_en)
            g_s += c * float(np.dot(g_rad, model.bone_radii[bones[:, 1]]))

    # --- regularization ---------------------------------------------------
    prior_vals, g_prior = pose_prior_kernel(params.joint_rots)
    if scene.mode == "static":
        selfpen_vals = np.zeros(F)
        smooth, g_track = 0.0, None
        reg_w = replace(weights, smooth_weight=0.0, self_pen_weight=0.0)
    else:
        bones = np.array(model.tree.bones)
        radii = s * model.bone_radii[bones[:, 1]]
        start, end = fk.positions[:, bones[:, 0]], fk.positions[:, bones[:, 1]]
        pairs = model.self_collision_pairs
        if with_grad:
            selfpen_vals, sg_st, sg_en, sg_rad = self_penetration_kernel(start, end, radii, pairs)
        else:
            selfpen_vals = self_penetration_kernel(start, end, radii, pairs, with_grad=False)
        if include_smooth:
            smooth, g_track = smoothness_kernel(params.track())
        else:
            smooth, g_track = 0.0, None
        reg_w = weights
    regularization = regularization_value(reg_w, smooth, selfpen_vals, prior_vals)
    _check("regularization", regularization)

    result = breakdown(weights, body, contact, penetration, regularization)
    if not with_grad:
        return result, None

    lr = weights.lambda_reg
    g_theta_direct += (lr * reg_w.pose_prior_weight / F) * g_prior
    if scene.mode != "static" and reg_w.self_pen_weight != 0.0:
        c = lr * reg_w.self_pen_weight / F
        np.add.at(gP, (slice(None), bones[:, 0]), c * sg_st)
        np.add.at(gP, (slice(None), bones[:, 1]), c * sg_en)
        g_s += c * float(np.dot(sg_rad, model.bone_radii[bones[:, 1]]))

    g_r, g_t, g_theta, g_s_fk = fk_backward(model, fk, gP, skin, gV)
    g_theta = g_theta + g_theta_direct
    g_s += g_s_fk

    g_or = g_ot = None
    if has_object:
        g_ot = g_obj_pts.sum(axis=1)
        _, dR_o = axis_angle_to_matrix_and_jacobian(params.obj_rot)
        G = np.einsum("fna,nb->fab", g_obj_pts, scene.object_points)
        g_or = np.einsum("fab,fabi->fi", G, dR_o)
    elif params.obj_rot is not None:
        g_or = np.zeros_like(params.obj_rot)
        g_ot = np.zeros_like(params.obj_trans)

    if g_track is not None:
        gt = (lr * reg_w.smooth_weight) * g_track
        g_r = g_r + gt[:, 0:3]
        g_t = g_t + gt[:, 3:6]
        g_theta = g_theta + gt[:, 6:6 + 3 * J].reshape(F, J, 3)
        if g_or is not None:
            g_or = g_or + gt[:, 6 + 3 * J:9 + 3 * J]
            g_ot = g_ot + gt[:, 9 + 3 * J:12 + 3 * J]

    grad = Params(g_s, np.zeros_like(params.shape), g_r, g_t, g_theta, g_or, g_ot)
    _check("gradient", g_r, g_t, g_theta, np.array([g_s]), g_or, g_ot)
    return result, grad


def params_from_states(humans, objects=None):
    h0 = humans[0]
    p = Params(
        h0.scale,
        np.array(h0.shape_coeffs),
        np.array([h.root_rotation for h in humans]),
        np.array([h.root_translation for h in humans]),
        np.array([h.joint_rotations for h in humans]),
    )
    if objects is not None:
        p.obj_rot = np.array([o.rotation for o in objects])
        p.obj_trans = np.array([o.translation for o in objects])
    return p


def total_loss(model, humans, cameras, keypoint_frames, weights=None, objects=None, samples=None,
               contacts=None):
    """LossBreakdown of the motion objective for explicit states.

    ``keypoint_frames[f]`` lists the KeypointFrames of frame ``f``;
    ``samples`` are object-frame sample points indexed by ``contacts``.
    """
    scene = Scene.motion(model, cameras, keypoint_frames, samples, contacts)
    return evaluate(scene, params_from_states(humans, objects), weights)[0]
