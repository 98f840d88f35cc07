"""Kinematics and model-file tests: FK, Jacobians, IK, COM, loading."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boundlab.errors import (ModelFileError, ModelValidationError,
                             UnreachableTargetError)
from boundlab.model import (LEG_INDEX, LEG_SIDE, LEGS, com_state,
                            foot_in_hip_frame, foot_jacobian,
                            forward_kinematics, leg_inverse_kinematics,
                            leg_slice, load_model, rpy_to_matrix,
                            standing_pose)

from conftest import random_configuration


# ---------------------------------------------------------------------------
# independent oracle: sequential homogeneous-transform product for one leg


def _rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def _homog(rot, trans):
    T = np.eye(4)
    T[:3, :3] = rot
    T[:3, 3] = trans
    return T


def fk_oracle(model, q, leg):
    """Foot center position via an explicit 4x4 transform chain."""
    li = LEG_INDEX[leg]
    mounts = model.hip_mounts()
    hip, thigh, calf = q[leg_slice(leg)]
    T = _homog(rpy_to_matrix(q[3:6]), q[0:3])
    T = T @ _homog(np.eye(3), mounts[li])
    T = T @ _homog(_rot_x(hip), np.zeros(3))
    T = T @ _homog(np.eye(3), (0.0, LEG_SIDE[leg] * model.hip_link, 0.0))
    T = T @ _homog(_rot_y(thigh), np.zeros(3))
    T = T @ _homog(np.eye(3), (0.0, 0.0, -model.thigh))
    T = T @ _homog(_rot_y(calf), np.zeros(3))
    T = T @ _homog(np.eye(3), (0.0, 0.0, -model.calf))
    return T[:3, 3]


# ---------------------------------------------------------------------------
# forward kinematics


def test_zero_pose_feet_below_hips(model):
    q = np.zeros(18)
    q[2] = 0.5
    fk = forward_kinematics(model, q)
    expected_drop = np.array([0.0, 0.0, -(model.thigh + model.calf)])
    for li in range(4):
        np.testing.assert_allclose(fk.center[li] - fk.hip[li],
                                   expected_drop, atol=1e-12)
    # contact point is the center shifted down one foot radius
    np.testing.assert_allclose(fk.center[:, 2] - fk.foot[:, 2],
                               model.foot_radius, atol=1e-15)


def test_base_translation_equivariance(model, rng):
    q = random_configuration(rng, model)
    fk0 = forward_kinematics(model, q)
    q2 = q.copy()
    q2[0:3] += (1.0, 0.0, 0.0)
    fk1 = forward_kinematics(model, q2)
    np.testing.assert_allclose(fk1.foot - fk0.foot,
                               [[1.0, 0.0, 0.0]] * 4, atol=1e-12)


def test_base_rotation_equivariance(model, rng):
    # rotating the torso orientation rotates all feet about the torso origin
    q = random_configuration(rng, model)
    q[3:6] = 0.0
    fk0 = forward_kinematics(model, q)
    rpy = np.array([0.3, -0.2, 0.9])
    q2 = q.copy()
    q2[3:6] = rpy
    fk1 = forward_kinematics(model, q2)
    R = rpy_to_matrix(rpy)
    base = q[0:3]
    for li in range(4):
        np.testing.assert_allclose(
            fk1.center[li], base + R @ (fk0.center[li] - base), atol=1e-12)


def test_fk_matches_transform_oracle(model, rng):
    for _ in range(50):
        q = random_configuration(rng, model)
        fk = forward_kinematics(model, q)
        for leg in LEGS:
            np.testing.assert_allclose(fk.center[LEG_INDEX[leg]],
                                       fk_oracle(model, q, leg), atol=1e-12)


def test_fk_warns_outside_joint_limits(model):
    q = np.zeros(18)
    q[2] = 0.5
    q[8] = 1.0  # calf limit is (-2.7, 0.0)
    with pytest.warns(UserWarning):
        forward_kinematics(model, q)


# ---------------------------------------------------------------------------
# contact Jacobian


def test_jacobian_other_leg_columns_zero(model, rng):
    q = random_configuration(rng, model)
    for leg in LEGS:
        J = foot_jacobian(model, q, leg).matrix
        for other in LEGS:
            if other != leg:
                assert np.all(J[:, leg_slice(other)] == 0.0)


def test_jacobian_base_translation_block_is_identity(model, rng):
    q = random_configuration(rng, model)
    J = foot_jacobian(model, q, "FL").matrix
    np.testing.assert_allclose(J[:, 0:3], np.eye(3), atol=1e-14)


def test_jacobian_matches_finite_differences(model, rng):
    h = 1e-6
    worst = 0.0
    for _ in range(1000):
        q = random_configuration(rng, model)
        leg = LEGS[int(rng.integers(4))]
        J = foot_jacobian(model, q, leg).matrix
        Jfd = np.empty_like(J)
        for k in range(18):
            qp = q.copy()
            qp[k] += h
            qm = q.copy()
            qm[k] -= h
            fp = forward_kinematics(model, qp).foot[LEG_INDEX[leg]]
            fm = forward_kinematics(model, qm).foot[LEG_INDEX[leg]]
            Jfd[:, k] = (fp - fm) / (2 * h)
        err = np.abs(J - Jfd).max() / max(1.0, np.abs(J).max())
        worst = max(worst, err)
    assert worst <= 1e-5


def test_jacobian_first_order_consistency(model, rng):
    # ||J dq - (FK(q+dq) - FK(q))|| shrinks quadratically with the step
    q = random_configuration(rng, model)
    dq = rng.normal(0, 1.0, 18)
    dq /= np.linalg.norm(dq)
    J = foot_jacobian(model, q, "RR").matrix
    errs = []
    for eps in (1e-3, 5e-4, 2.5e-4):
        moved = forward_kinematics(model, q + eps * dq).foot[2]
        base = forward_kinematics(model, q).foot[2]
        errs.append(np.linalg.norm(J @ (eps * dq) - (moved - base)))
    assert errs[1] <= errs[0] * 0.3
    assert errs[2] <= errs[1] * 0.3


# ---------------------------------------------------------------------------
# leg inverse kinematics


def test_ik_straight_down_full_extension(model):
    target = np.array([0.0, LEG_SIDE["FR"] * model.hip_link,
                       -(model.thigh + model.calf)])
    angles = leg_inverse_kinematics(model, target, "FR")
    np.testing.assert_allclose(angles, 0.0, atol=1e-9)


def test_ik_unreachable_raises(model):
    target = np.array([0.0, LEG_SIDE["FR"] * model.hip_link,
                       -(model.thigh + model.calf + 0.01)])
    with pytest.raises(UnreachableTargetError):
        leg_inverse_kinematics(model, target, "FR")


def test_ik_fk_roundtrip(model, rng):
    worst = 0.0
    n = 0
    while n < 1000:
        hip = rng.uniform(-0.7, 0.7)
        thigh = rng.uniform(-1.2, 1.2)
        calf = rng.uniform(-2.5, -0.02)
        leg = LEGS[int(rng.integers(4))]
        q = np.zeros(18)
        q[2] = 0.6
        q[leg_slice(leg)] = (hip, thigh, calf)
        target = foot_in_hip_frame(model, q, leg)
        angles = leg_inverse_kinematics(model, target, leg)
        q2 = q.copy()
        q2[leg_slice(leg)] = angles
        back = foot_in_hip_frame(model, q2, leg)
        worst = max(worst, np.abs(back - target).max())
        assert angles[2] <= 1e-12  # knee-backward branch
        n += 1
    assert worst <= 1e-9


@settings(max_examples=60, deadline=None)
@given(hip=st.floats(-0.7, 0.7), thigh=st.floats(-1.0, 1.0),
       calf=st.floats(-2.4, -0.05))
def test_ik_fk_identity_property(hip, thigh, calf):
    model = load_model()
    q = np.zeros(18)
    q[2] = 0.6
    q[leg_slice("RL")] = (hip, thigh, calf)
    target = foot_in_hip_frame(model, q, "RL")
    angles = leg_inverse_kinematics(model, target, "RL")
    q2 = q.copy()
    q2[leg_slice("RL")] = angles
    np.testing.assert_allclose(foot_in_hip_frame(model, q2, "RL"), target,
                               atol=1e-9)


# ---------------------------------------------------------------------------
# COM state


def test_com_matches_weighted_sum_oracle(model, rng):
    # independent oracle: differentiate link COM positions numerically
    q = random_configuration(rng, model)
    qd = rng.normal(0, 1.0, 18)
    pos, vel = com_state(model, q, qd)

    def com_of(qq):
        t = model.tree
        total = np.zeros(3)
        # reuse the validated FK chain through foot positions is not enough;
        # walk the tree with rotation matrices built in pure numpy
        from boundlab import _kernels as k
        R, o, _ = k.tree_fk(t.parent, t.jtype, t.qidx, t.axis, t.tr, qq)
        msum = 0.0
        for i in range(18):
            if t.mass[i] > 0:
                total += t.mass[i] * (o[i] + R[i] @ t.com[i])
                msum += t.mass[i]
        return total / msum

    np.testing.assert_allclose(pos, com_of(q), atol=1e-12)
    h = 1e-7
    vel_fd = (com_of(q + h * qd) - com_of(q - h * qd)) / (2 * h)
    np.testing.assert_allclose(vel, vel_fd, atol=1e-6)


def test_com_static_zero_velocity(model, rng):
    q = random_configuration(rng, model)
    _, vel = com_state(model, q, np.zeros(18))
    np.testing.assert_allclose(vel, 0.0, atol=1e-15)


def test_com_mass_sums_to_total(model):
    t = model.tree
    assert abs(t.mass.sum() - model.total_mass) < 1e-12


# ---------------------------------------------------------------------------
# model file loading


def test_bundled_model_loads(model):
    assert model.foot_radius == 0.02
    assert model.total_mass > 0
    assert set(LEGS) == {"FR", "FL", "RR", "RL"}


def test_negative_total_mass_rejected(tmp_path, model):
    src = open(str(__import__("boundlab.model", fromlist=["x"]).
                   default_model_path())).read()
    bad = src.replace("total_mass = 12.45", "total_mass = -1")
    path = tmp_path / "bad.model"
    path.write_text(bad)
    with pytest.raises(ModelValidationError, match="total_mass must be "
                                                   "positive"):
        load_model(path)


def test_missing_field_named_in_error(tmp_path):
    src = open(str(__import__("boundlab.model", fromlist=["x"]).
                   default_model_path())).read()
    bad = src.replace("calf = 0.2\n", "")
    path = tmp_path / "missing.model"
    path.write_text(bad)
    with pytest.raises(ModelFileError, match=r"\[geometry\] calf"):
        load_model(path)


def test_bad_schema_version_rejected(tmp_path):
    src = open(str(__import__("boundlab.model", fromlist=["x"]).
                   default_model_path())).read()
    bad = src.replace("schema_version = 1", "schema_version = 99")
    path = tmp_path / "v99.model"
    path.write_text(bad)
    with pytest.raises(ModelFileError, match="schema_version"):
        load_model(path)


def test_standing_pose_feet_touch_ground(model):
    q = standing_pose(model, 0.25)
    fk = forward_kinematics(model, q)
    np.testing.assert_allclose(fk.foot[:, 2], 0.0, atol=1e-12)
