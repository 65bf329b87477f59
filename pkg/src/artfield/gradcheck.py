"""Finite-difference checks of the analytic loss gradients on small random instances."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from . import losses
from .frames import Frame, sample_depth
from .geom import Camera, quats_to_rotmats
from .model import build_knn
from .motionfield import blend_arrays, softmax

DEFAULT_TOL = 1e-4


def fd_grad(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central differences of scalar ``f`` over every entry of ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        hi = f(x)
        flat[i] = old - eps
        lo = f(x)
        flat[i] = old
        gf[i] = (hi - lo) / (2 * eps)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """``|a - b| / max(|a|, |b|)`` over whole arrays; 0 when both vanish."""
    den = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if den < 1e-12 else float(np.linalg.norm(a - b) / den)


def _random_quats(rng, n: int) -> np.ndarray:
    q = rng.normal(size=(n, 4))
    q[:, 0] = np.abs(q[:, 0]) + 1.0
    return q * rng.uniform(0.5, 2.0, size=(n, 1))  # off the unit sphere on purpose


def check_sparsity(rng) -> float:
    P, N = int(rng.integers(6, 15)), int(rng.integers(2, 6))
    logits = rng.normal(scale=2.0, size=(P, N))
    knn = build_knn(rng.normal(size=(P, 3)), int(rng.integers(1, 5)))
    T = float(rng.uniform(0.3, 2.0))
    _, g = losses.loss_sparsity(logits, knn, T)
    return rel_error(g, fd_grad(lambda L: losses.loss_sparsity(L, knn, T)[0], logits))


def check_sem(rng) -> float:
    P, N = int(rng.integers(4, 12)), int(rng.integers(2, 6))
    logits = rng.normal(scale=2.0, size=(P, N))
    target = rng.integers(-1, N, size=P)
    target[0] = 0
    T = float(rng.uniform(0.3, 2.0))
    _, g = losses.loss_sem(logits, target, T)
    return rel_error(g, fd_grad(lambda L: losses.loss_sem(L, target, T)[0], logits))


def check_traj(rng) -> float:
    M, N = int(rng.integers(3, 12)), int(rng.integers(2, 5))
    P, Q = rng.normal(size=(M, 3)), rng.normal(size=(M, 3))
    assign = rng.integers(0, N, size=M)
    quats, trans = _random_quats(rng, N), rng.normal(scale=0.3, size=(N, 3))
    _, gq, gt = losses.loss_traj(P, Q, assign, quats, trans)

    def fq(q):
        return losses.loss_traj(P, Q, assign, q, trans)[0]

    def ft(t):
        return losses.loss_traj(P, Q, assign, quats, t)[0]

    # basis 0 is the frozen static part and reports no gradient
    eq = rel_error(gq[1:], fd_grad(fq, quats)[1:])
    et = rel_error(gt[1:], fd_grad(ft, trans)[1:])
    return max(eq, et)


def planar_frame(rng, size: int = 24) -> Frame:
    """A camera facing a tilted textured plane; the depth map is exact for the plane."""
    cam = Camera.look_at([0, 0, -1.5], [0, 0, 0], [0, -1, 0], 50.0, size, size)
    n = np.array([rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 1.0])
    n /= np.linalg.norm(n)
    d0 = float(rng.uniform(1.3, 1.7))
    jj, ii = np.meshgrid(np.arange(size), np.arange(size))
    Kinv = np.linalg.inv(cam.K)
    rays = np.stack([jj, ii, np.ones_like(jj)], -1).reshape(-1, 3) @ Kinv.T
    # plane n.x_cam = d0 * n_z (passes through the optical axis at depth d0)
    z = d0 * n[2] / (rays @ n)
    depth = z.reshape(size, size)
    rgb = rng.uniform(0.0, 1.0, size=(size, size, 3))
    labels = rng.integers(1, 4, size=(size, size)).astype(np.int32)
    return Frame(rgb, depth, labels, cam, 0, 0)


def _plane_points(rng, frame: Frame, n: int, delta: float) -> np.ndarray:
    """Points near the plane, projecting well inside pixel cells (away from kinks)."""
    cam = frame.camera
    W = cam.width
    uv = rng.integers(2, W - 3, size=(n, 2)) + rng.uniform(0.1, 0.9, size=(n, 2))
    z = sample_depth(frame.invdepth, uv) + rng.uniform(-0.5, 0.5, size=n) * delta
    return cam.backproject_points(uv, z)


def check_rgbd(rng, delta_vis: float = 0.05) -> float:
    frame = planar_frame(rng)
    n = int(rng.integers(3, 10))
    X = _plane_points(rng, frame, n, delta_vis)
    C = rng.uniform(0, 1, size=(n, 3))
    kw = dict(lambda_ssim=0.2, lambda_d=0.5, delta_vis=delta_vis)
    _, gX, gC, n_vis, _ = losses.rgbd_frame(X, C, frame, **kw)
    if n_vis != n:
        raise AssertionError(f"rgbd instance: {n_vis} of {n} points visible")
    eX = rel_error(gX, fd_grad(lambda Y: losses.rgbd_frame(Y, C, frame, **kw)[0], X, eps=1e-7))
    eC = rel_error(gC, fd_grad(lambda D: losses.rgbd_frame(X, D, frame, **kw)[0], C, eps=1e-7))
    return max(eX, eC)


def check_blend(rng) -> float:
    """Soft-blended positions chained to bases and logits through a random linear read-out."""
    P, N = int(rng.integers(3, 8)), int(rng.integers(2, 5))
    centers = rng.normal(size=(P, 3))
    logits = rng.normal(size=(P, N))
    quats, trans = _random_quats(rng, N), rng.normal(size=(N, 3))
    G = rng.normal(size=(P, 3))
    T = float(rng.uniform(0.3, 2.0))

    def f(q, t, L):
        Rb, Tb = blend_arrays(softmax(L, T), quats_to_rotmats(q), t)
        return float(np.sum(G * (np.einsum("pab,pb->pa", Rb, centers) + Tb)))

    gq, gt, gL = losses.motion_backward(G, centers, quats, trans, weights=softmax(logits, T),
                                        temperature=T)
    return max(rel_error(gq, fd_grad(lambda q: f(q, trans, logits), quats)),
               rel_error(gt, fd_grad(lambda t: f(quats, t, logits), trans)),
               rel_error(gL, fd_grad(lambda L: f(quats, trans, L), logits)))


def check_align(rng) -> float:
    P, N = int(rng.integers(4, 12)), int(rng.integers(2, 4))
    X = rng.normal(size=(P, 3))
    part = rng.integers(0, N, size=P)
    clouds = {j: rng.normal(size=(int(rng.integers(3, 9)), 3)) for j in range(N)}
    trees = {j: cKDTree(c) for j, c in clouds.items()}
    _, g = losses.loss_align(X, part, trees, clouds)
    return rel_error(g, fd_grad(lambda Y: losses.loss_align(Y, part, trees, clouds)[0], X))


CHECKS = {
    "sparsity": check_sparsity,
    "semantic": check_sem,
    "trajectory": check_traj,
    "rgbd": check_rgbd,
    "blend": check_blend,
    "align": check_align,
}


def run_all(n_instances: int = 50, seed: int = 0) -> dict:
    """Worst relative error per check over ``n_instances`` random instances."""
    out = {}
    for k, (name, fn) in enumerate(CHECKS.items()):
        rng = np.random.default_rng([seed, k])
        out[name] = max(fn(rng) for _ in range(n_instances))
    return out
