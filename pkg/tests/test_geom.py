import math

import numpy as np
import pytest

from artfield.errors import DegenerateJointError, InvalidInputError
from artfield.geom import (PRISMATIC, REVOLUTE, Camera, JointParams, Primitive, RigidMotion,
                           apply_motion, backproject, compose_joint, decompose_joint, project,
                           quat_from_axis_angle, quat_mul, quat_to_rotmat, quats_to_rotmats,
                           rotmat_quat_jacobian, rotmat_to_quat)


def sandwich(q, v):
    """Rotate ``v`` by the quaternion product q v q*, independent of the matrix code."""
    qv = np.r_[0.0, v]
    qc = q * np.array([1, -1, -1, -1])
    return quat_mul(quat_mul(q, qv), qc)[1:]


def random_unit_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def test_identity_quaternion():
    assert np.array_equal(quat_to_rotmat([1, 0, 0, 0]), np.eye(3))


def test_quarter_turn_about_z():
    c = math.cos(math.pi / 4)
    R = quat_to_rotmat([c, 0, 0, c])
    assert np.allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-12)
    assert np.allclose(sandwich(np.array([c, 0, 0, c]), np.array([1.0, 0, 0])), [0, 1, 0], atol=1e-12)


def test_matrix_agrees_with_sandwich_product():
    rng = np.random.default_rng(0)
    for q in random_unit_quats(rng, 50):
        R = quat_to_rotmat(q)
        for e in np.eye(3):
            assert np.allclose(R @ e, sandwich(q, e), atol=1e-12)


def test_double_cover():
    q = random_unit_quats(np.random.default_rng(1), 1)[0]
    assert np.allclose(quat_to_rotmat(q), quat_to_rotmat(-q), atol=1e-15)


def test_rotation_is_proper_and_renormalizes():
    rng = np.random.default_rng(2)
    for q in rng.normal(size=(100, 4)) * 3:
        R = quat_to_rotmat(q)
        assert np.abs(R @ R.T - np.eye(3)).max() < 1e-9
        assert abs(np.linalg.det(R) - 1) < 1e-9


def test_zero_quaternion_rejected():
    with pytest.raises(InvalidInputError):
        quat_to_rotmat([0, 0, 0, 0])


def test_batched_matches_single():
    q = random_unit_quats(np.random.default_rng(3), 7)
    assert np.allclose(quats_to_rotmats(q), [quat_to_rotmat(x) for x in q], atol=1e-15)


def test_matrix_quaternion_round_trip():
    for q in random_unit_quats(np.random.default_rng(4), 200):
        back = rotmat_to_quat(quat_to_rotmat(q))
        assert min(np.abs(back - q).max(), np.abs(back + q).max()) < 1e-9


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(5)
    for q in rng.normal(size=(20, 4)):
        J = rotmat_quat_jacobian(q)
        eps = 1e-6
        for k in range(4):
            d = np.zeros(4)
            d[k] = eps
            fd = (quat_to_rotmat(q + d) - quat_to_rotmat(q - d)) / (2 * eps)
            assert np.abs(J[k] - fd).max() < 1e-6


def make_primitive(rng):
    return Primitive(rng.normal(size=3), random_unit_quats(rng, 1)[0], rng.uniform(0.01, 0.1, 3),
                     0.7, rng.uniform(0, 1, 3), rng.normal(size=4))


def test_apply_identity_is_bitwise_noop():
    p = make_primitive(np.random.default_rng(6))
    out = apply_motion(p, RigidMotion.identity())
    assert np.array_equal(out.center, p.center)
    assert np.array_equal(out.rot, p.rot)
    assert np.array_equal(out.scale, p.scale)


def test_apply_quarter_turn_center():
    p = Primitive([1, 0, 0], [1, 0, 0, 0], [0.1, 0.1, 0.1], 1.0, [0, 0, 0], [0.0, 0.0])
    m = RigidMotion(quat_from_axis_angle([0, 0, 1], math.pi / 2), [0, 0, 0])
    assert np.allclose(apply_motion(p, m).center, [0, 1, 0], atol=1e-12)


def test_apply_rotates_covariance():
    rng = np.random.default_rng(7)
    for _ in range(20):
        p = make_primitive(rng)
        m = RigidMotion(random_unit_quats(rng, 1)[0], rng.normal(size=3))
        q = apply_motion(p, m)
        R = m.R
        assert np.abs(q.covariance() - R @ p.covariance() @ R.T).max() < 1e-9
        assert np.array_equal(q.logits, p.logits) and q.opacity == p.opacity


def test_apply_then_inverse_recovers_primitive():
    rng = np.random.default_rng(8)
    for _ in range(50):
        p = make_primitive(rng)
        m = RigidMotion(random_unit_quats(rng, 1)[0], rng.normal(size=3))
        back = apply_motion(apply_motion(p, m), m.inverse())
        assert np.abs(back.center - p.center).max() < 1e-9
        assert min(np.abs(back.rot - p.rot).max(), np.abs(back.rot + p.rot).max()) < 1e-9


def test_primitive_invariants():
    with pytest.raises(InvalidInputError):
        Primitive([0, 0, 0], [1, 0, 0, 0], [0.1, -0.1, 0.1], 0.5, [0, 0, 0], [0.0])
    with pytest.raises(InvalidInputError):
        Primitive([0, 0, 0], [1, 0, 0, 0], [0.1, 0.1, 0.1], 1.5, [0, 0, 0], [0.0])


def optical_axis_camera():
    K = np.array([[500.0, 0, 400], [0, 500, 400], [0, 0, 1]])
    return Camera(K, np.eye(4), 800, 800)


def test_project_optical_axis():
    pix, depth = project(optical_axis_camera(), [0, 0, 1])
    assert np.allclose(pix, [400, 400]) and depth == 1.0


def test_project_behind_camera_is_not_visible():
    assert project(optical_axis_camera(), [0, 0, -1]) is None


def test_backproject_rejects_nonpositive_depth():
    with pytest.raises(InvalidInputError):
        backproject(optical_axis_camera(), [400, 400], 0.0)


def test_project_backproject_round_trip():
    rng = np.random.default_rng(9)
    cam = Camera.look_at([1.0, 0.5, -2.0], [0, 0, 0], [0, -1, 0], 45.0, 640, 480)
    X = rng.uniform(-0.5, 0.5, size=(1000, 3))
    for x in X:
        pix, z = project(cam, x)
        assert np.linalg.norm(backproject(cam, pix, z) - x) < 1e-9
    uv, z = cam.project_points(X)
    assert np.abs(cam.backproject_points(uv, z) - X).max() < 1e-9


def test_camera_validation():
    K = np.array([[500.0, 0, 400], [0, 500, 400], [0, 0, 1]])
    with pytest.raises(InvalidInputError):
        Camera(K * np.array([[-1, 1, 1], [1, 1, 1], [1, 1, 1]]), np.eye(4), 800, 800)
    E = np.eye(4)
    E[0, 0] = 2.0
    with pytest.raises(InvalidInputError):
        Camera(K, E, 800, 800)


def test_decompose_quarter_turn_through_point():
    c = math.cos(math.pi / 4)
    m = RigidMotion([c, 0, 0, c], [1, -1, 0])
    # points on the line x=1, y=0 are fixed
    line = np.array([[1, 0, z] for z in (-1.0, 0.0, 2.0)])
    assert np.allclose(m.apply(line), line, atol=1e-12)
    j = decompose_joint(m)
    assert j.kind == REVOLUTE
    assert np.allclose(j.axis_dir, [0, 0, 1])
    assert np.allclose(j.axis_origin, [1, 0, 0], atol=1e-12)
    assert math.isclose(j.magnitude, math.pi / 2, abs_tol=1e-12)


def test_decompose_pure_translation():
    j = decompose_joint(RigidMotion([1, 0, 0, 0], [0, 0, 0.3]))
    assert j.kind == PRISMATIC and j.axis_origin is None
    assert np.allclose(j.axis_dir, [0, 0, 1]) and math.isclose(j.magnitude, 0.3)


def test_decompose_magnitude_is_nonnegative():
    m = RigidMotion(quat_from_axis_angle([0, 0, 1], -0.7), [0, 0, 0])
    j = decompose_joint(m)
    assert j.magnitude > 0 and np.allclose(j.axis_dir, [0, 0, -1])


def test_decompose_near_identity_is_degenerate():
    with pytest.raises(DegenerateJointError):
        decompose_joint(RigidMotion.identity())


def test_decompose_small_rotation_defaults_to_prismatic():
    m = RigidMotion(quat_from_axis_angle([0, 1, 0], math.radians(0.2)), [0.1, 0, 0])
    assert decompose_joint(m).kind == PRISMATIC
    assert decompose_joint(m, REVOLUTE).kind == REVOLUTE


def test_compose_decompose_round_trip():
    rng = np.random.default_rng(10)
    for _ in range(1000):
        a = rng.normal(size=3)
        a /= np.linalg.norm(a)
        if rng.random() < 0.5:
            o = rng.normal(size=3)
            j = JointParams(REVOLUTE, a, o, rng.uniform(0.05, 3.0))
            k = decompose_joint(compose_joint(j))
            assert k.kind == REVOLUTE
            s = np.sign(k.axis_dir @ j.axis_dir)
            assert np.abs(s * k.axis_dir - j.axis_dir).max() < 1e-7
            assert abs(k.magnitude - j.magnitude) < 1e-7
            o_perp = o - (o @ a) * a
            assert np.abs(k.axis_origin - o_perp).max() < 1e-7
        else:
            j = JointParams(PRISMATIC, a, None, rng.uniform(0.01, 0.5))
            k = decompose_joint(compose_joint(j))
            assert k.kind == PRISMATIC
            assert np.abs(k.axis_dir - a).max() < 1e-7 and abs(k.magnitude - j.magnitude) < 1e-7


def test_joint_params_invariants():
    j = JointParams(PRISMATIC, [0, 0, 2], [1, 1, 1], 0.1)
    assert j.axis_origin is None and np.allclose(j.axis_dir, [0, 0, 1])
    with pytest.raises(InvalidInputError):
        JointParams("ball", [0, 0, 1], None, 0.1)
    back = JointParams.from_dict(j.to_dict())
    assert back.kind == j.kind and back.axis_origin is None
    assert np.array_equal(back.axis_dir, j.axis_dir) and back.magnitude == j.magnitude
