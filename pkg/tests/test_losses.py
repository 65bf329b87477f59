import math
import time

import numpy as np
import pytest
from scipy.spatial import cKDTree

from artfield import gradcheck, losses, synth
from artfield.errors import ConfigError, InvalidInputError
from artfield.frames import Frame, sample_depth
from artfield.geom import RigidMotion, quat_from_axis_angle
from artfield.model import build_knn


def test_all_gradients_match_finite_differences():
    t0 = time.perf_counter()
    errors = gradcheck.run_all(n_instances=50, seed=0)
    assert time.perf_counter() - t0 < 30
    assert set(errors) == {"sparsity", "semantic", "trajectory", "rgbd", "blend", "align"}
    for name, err in errors.items():
        assert err < 1e-4, name


def test_sparsity_gradient_with_spec_step():
    rng = np.random.default_rng(1)
    for _ in range(50):
        logits = rng.normal(scale=2.0, size=(10, 3))
        knn = build_knn(rng.normal(size=(10, 3)), 3)
        _, g = losses.loss_sparsity(logits, knn)
        fd = gradcheck.fd_grad(lambda L: losses.loss_sparsity(L, knn)[0], logits, eps=1e-5)
        assert gradcheck.rel_error(g, fd) < 1e-4


def test_sparsity_identical_logits():
    logits = np.tile([0.3, -1.0, 2.0], (6, 1))
    v, g = losses.loss_sparsity(logits, build_knn(np.random.default_rng(0).normal(size=(6, 3)), 2))
    assert v == 0.0 and not g.any()


def test_sparsity_two_opposite_primitives():
    logits = np.array([[50.0, 0.0], [0.0, 50.0]])
    v, _ = losses.loss_sparsity(logits, np.array([[1], [0]]))
    assert v == pytest.approx(2 * math.sqrt(2), abs=1e-9)


def door_motion(deg: float) -> RigidMotion:
    """Rotation by ``deg`` about a vertical hinge at x=0.5."""
    q = quat_from_axis_angle([0, 1, 0], math.radians(deg))
    R = RigidMotion(q, [0, 0, 0]).R
    o = np.array([0.5, 0.0, 0.0])
    return RigidMotion(q, o - R @ o)


def test_traj_at_gt_motion_is_zero():
    rng = np.random.default_rng(2)
    P = rng.uniform(0, 0.5, size=(40, 3))
    m = door_motion(30)
    quats = np.array([[1.0, 0, 0, 0], m.q])
    trans = np.array([[0.0, 0, 0], m.t])
    v, _, _ = losses.loss_traj(P, m.apply(P), np.ones(40, dtype=int), quats, trans)
    assert v < 1e-9


def test_traj_identity_bases_on_rotated_door():
    # points at radius 0.5 from the hinge
    ang = np.linspace(0, 2 * math.pi, 16, endpoint=False)
    P = np.stack([0.5 + 0.5 * np.cos(ang), np.linspace(-0.2, 0.2, 16), 0.5 * np.sin(ang)], 1)
    Q = door_motion(30).apply(P)
    quats = np.tile([1.0, 0, 0, 0], (2, 1))
    v, _, _ = losses.loss_traj(P, Q, np.ones(16, dtype=int), quats, np.zeros((2, 3)))
    assert v == pytest.approx(2 * 0.5 * math.sin(math.radians(15)), abs=1e-12)
    assert round(v, 4) == 0.2588


def test_traj_empty_and_locked():
    v, gq, gt = losses.loss_traj(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, int),
                                 np.tile([1.0, 0, 0, 0], (2, 1)), np.zeros((2, 3)))
    assert v == 0.0 and not gq.any() and not gt.any()
    rng = np.random.default_rng(3)
    P, Q = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    quats = np.array([[1.0, 0, 0, 0], [0.9, 0.1, 0.2, 0.0]])
    _, gq, gt = losses.loss_traj(P, Q, np.ones(5, dtype=int), quats, np.zeros((2, 3)), [False, True])
    assert not gq.any() and gt[1].any()


@pytest.mark.parametrize("gap,bound", [(1.0, 0.32), (10.0, 1e-3)])
def test_sem_softmax_floor(gap, bound):
    target = np.array([0, 1, 1, 0])
    logits = np.zeros((4, 2))
    logits[np.arange(4), target] = gap
    v, _ = losses.loss_sem(logits, target)
    assert v < bound
    assert v == pytest.approx(math.log1p(math.exp(-gap)), rel=1e-12)


def test_sem_skips_background_primitives():
    logits = np.array([[2.0, 0.0], [-5.0, 5.0]])
    v, g = losses.loss_sem(logits, np.array([0, -1]))
    assert v == pytest.approx(math.log1p(math.exp(-2.0))) and not g[1].any()


def test_sem_batch_matches_weighted_single_frames():
    rng = np.random.default_rng(4)
    logits = rng.normal(size=(12, 3))
    targets = [rng.integers(-1, 3, size=12) for _ in range(3)]
    w = [0.5, 1.0, 2.0]
    v, g = losses.loss_sem_batch(logits, targets, w, 0.7)
    parts = [losses.loss_sem(logits, t, 0.7) for t in targets]
    assert v == pytest.approx(sum(wi * p[0] for wi, p in zip(w, parts)), rel=1e-12)
    assert np.allclose(g, sum(wi * p[1] for wi, p in zip(w, parts)), atol=1e-12)


def door_points(scene, n_views: int = 3):
    """State-0 door surface points back-projected from exact depth."""
    pts = []
    for f in scene.frames[0][:n_views]:
        rc = np.argwhere(f.labels == 2)[::3]
        pts.append(f.camera.backproject_points(rc[:, ::-1].astype(float), f.depth[rc[:, 0], rc[:, 1]]))
    return np.concatenate(pts)


def depth_term(X, frames) -> float:
    C = np.zeros_like(X)
    # lambda_ssim = 1 zeroes the color part and leaves lambda_d |z - D|
    vals = [losses.rgbd_frame(X, C, f, lambda_ssim=1.0, lambda_d=1.0, delta_vis=0.05)[0] for f in frames]
    return float(np.mean(vals))


def face_interior(f, label: int) -> np.ndarray:
    """Pixels of ``label`` whose 3x3 neighborhood lies on one face."""
    fid = f.face_id
    c = fid[1:-1, 1:-1]
    same = np.ones_like(c, dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            same &= fid[1 + dr:fid.shape[0] - 1 + dr, 1 + dc:fid.shape[1] - 1 + dc] == c
    return np.argwhere(same & (f.labels[1:-1, 1:-1] == label)) + 1


def test_depth_term_vanishes_at_gt_motion(door_scene):
    # canonical primitives on the surface each target view observes, moved by the GT motion
    m = synth.gt_motions(door_scene.spec, door_scene.values0, door_scene.values1)[1]
    rng = np.random.default_rng(6)
    for f in door_scene.frames[1][:6]:
        rc = face_interior(f, 2)
        uv = rc[:, ::-1] + rng.uniform(-0.4, 0.4, size=rc.shape)
        X1 = f.camera.backproject_points(uv, sample_depth(f.invdepth, uv))
        X0 = m.inverse().apply(X1)
        assert depth_term(m.apply(X0), [f]) < 1e-6


def test_depth_term_decreases_toward_gt_angle(door_scene):
    spec = door_scene.spec
    X0 = door_points(door_scene)
    v0, v1 = door_scene.values0[0], door_scene.values1[0]
    pose0 = synth.part_poses(spec, [v0])[1]
    frames = door_scene.frames[1][:6]
    sweep = []
    for d in np.linspace(-5, 5, 11):
        pose = synth.part_poses(spec, [v1 + math.radians(d)])[1]
        sweep.append(depth_term(pose.compose(pose0.inverse()).apply(X0), frames))
    assert all(a > b for a, b in zip(sweep[:5], sweep[1:6]))
    assert all(a < b for a, b in zip(sweep[5:10], sweep[6:]))


def test_frame_without_labels_rejected(door_scene):
    f = door_scene.frames[0][0]
    bare = Frame(f.rgb, f.depth, None, f.camera, 0, 0)
    with pytest.raises(InvalidInputError):
        losses.rgbd_frame(np.zeros((1, 3)), np.zeros((1, 3)), bare)


def test_lr_schedule():
    assert losses.lr_position(6000) == pytest.approx(1.6e-4)
    assert losses.lr_position(0) == 1.6e-4
    # geometric midpoint of the decay
    assert losses.lr_position(8000) == pytest.approx(math.sqrt(1.6e-4 * 1e-8), rel=1e-12)
    assert losses.lr_position(8000, min_lr=1e-7) == pytest.approx(4e-6, rel=1e-12)
    assert losses.lr_position(10000) == 1e-8 and losses.lr_position(20000) == 1e-8
    with pytest.raises(ConfigError):
        losses.lr_position(0, init=10, end=10)


def test_align_is_zero_on_own_cloud():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(20, 3))
    part = np.repeat([0, 1], 10)
    clouds = {0: X[:10].copy(), 1: X[10:].copy()}
    v, g = losses.loss_align(X, part, {j: cKDTree(c) for j, c in clouds.items()}, clouds)
    assert v == 0.0 and not g.any()
