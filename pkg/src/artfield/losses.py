"""Loss terms with analytic gradients.

Each function returns the scalar value followed by gradients of that value
with respect to its trainable inputs. Motion gradients are expressed on the
raw quaternion, through its normalization.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .errors import ConfigError, InvalidInputError
from .frames import Frame
from .geom import quats_to_rotmats, rotmat_quat_jacobian
from .motionfield import softmax

logger = logging.getLogger(__name__)


def softmax_backward(s: np.ndarray, g: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Map a gradient w.r.t. softmax outputs ``s`` back to the logits."""
    return s * (g - np.sum(s * g, axis=-1, keepdims=True)) / temperature


def quat_grads(gR: np.ndarray, quats: np.ndarray) -> np.ndarray:
    """Chain ``(N, 3, 3)`` rotation-matrix gradients to ``(N, 4)`` quaternion gradients."""
    out = np.zeros((len(quats), 4))
    for j in range(len(quats)):
        if np.any(gR[j]):
            out[j] = np.einsum("kab,ab->k", rotmat_quat_jacobian(quats[j]), gR[j])
    return out


def loss_sparsity(logits: np.ndarray, knn: np.ndarray, temperature: float = 1.0):
    """Sum over points and their neighbors of the L2 distance between weight vectors."""
    s = softmax(logits, temperature)
    P, k = knn.shape
    if k == 0:
        return 0.0, np.zeros_like(logits)
    i = np.repeat(np.arange(P), k)
    j = knn.ravel()
    d = s[i] - s[j]
    n = np.linalg.norm(d, axis=1)
    value = float(n.sum())
    u = np.zeros_like(d)
    nz = n > 0
    u[nz] = d[nz] / n[nz, None]
    N = s.shape[1]
    gs = np.stack([np.bincount(i, u[:, c], P) - np.bincount(j, u[:, c], P) for c in range(N)], 1)
    return value, softmax_backward(s, gs, temperature)


def loss_sem(logits: np.ndarray, target: np.ndarray, temperature: float = 1.0):
    """Cross-entropy averaged over points with ``target >= 0`` (part indices)."""
    sel = np.flatnonzero(target >= 0)
    g = np.zeros_like(logits)
    if len(sel) == 0:
        return 0.0, g
    z = logits[sel] / temperature
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    y = target[sel]
    value = float(-logp[np.arange(len(sel)), y].mean())
    p = np.exp(logp)
    p[np.arange(len(sel)), y] -= 1.0
    g[sel] = p / (temperature * len(sel))
    return value, g


def loss_sem_batch(logits: np.ndarray, targets: list, frame_weights, temperature: float = 1.0):
    """Weighted sum over frames of :func:`loss_sem`, sharing one log-softmax."""
    z = logits / temperature
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    P, N = logits.shape
    coef = np.zeros((P, N))
    for target, w in zip(targets, frame_weights):
        sel = np.flatnonzero(target >= 0)
        if len(sel):
            np.add.at(coef, (sel, target[sel]), w / len(sel))
    value = float(-(coef * logp).sum())
    g = (np.exp(logp) * coef.sum(axis=1, keepdims=True) - coef) / temperature
    return value, g


def _labels(frame: Frame) -> np.ndarray:
    if frame.labels is None:
        raise InvalidInputError(f"frame {frame.view} of state {frame.state} has no part labels")
    return np.ascontiguousarray(frame.labels, dtype=np.int32)


class StaticFrame:
    """rgbd terms of a frame for primitives that never move; only colors vary.

    Visibility, sampled image colors, the depth residual and the semantic
    target are computed once.
    """

    def __init__(self, X: np.ndarray, colors: np.ndarray, frame: Frame, lambda_ssim: float = 0.2,
                 lambda_d: float = 0.5, delta_vis: float = 0.01, front_only: bool = False):
        w_color = 1.0 - lambda_ssim
        v, _, _, vis, lab, semv = kernels.frame_terms(
            np.ascontiguousarray(X, dtype=np.float64), np.ascontiguousarray(colors, dtype=np.float64),
            frame.camera.K, frame.camera.E, frame.invdepth, np.ascontiguousarray(frame.rgb),
            _labels(frame), w_color, lambda_d,
            delta_vis, front_only)
        self.idx = np.flatnonzero(vis)
        self.target = np.where(np.asarray(semv, dtype=bool), np.asarray(lab) - 1, -1)
        self.w_color = w_color
        uv, _ = frame.camera.project_points(X[self.idx])
        j0 = np.floor(uv[:, 0]).astype(np.intp)
        i0 = np.floor(uv[:, 1]).astype(np.intp)
        a = (uv[:, 0] - j0)[:, None]
        b = (uv[:, 1] - i0)[:, None]
        img = frame.rgb
        self.image = ((1 - a) * (1 - b) * img[i0, j0] + a * (1 - b) * img[i0, j0 + 1]
                      + (1 - a) * b * img[i0 + 1, j0] + a * b * img[i0 + 1, j0 + 1])
        color_part = w_color * np.abs(colors[self.idx] - self.image).sum(axis=1)
        self.depth_value = float(np.sum(v[self.idx] - color_part))

    def __call__(self, colors: np.ndarray):
        """Returns ``(value, gC)`` with the same normalization as :func:`rgbd_frame`."""
        gC = np.zeros_like(colors)
        n = len(self.idx)
        if n == 0:
            return 0.0, gC
        e = colors[self.idx] - self.image
        value = (self.depth_value + self.w_color * np.abs(e).sum()) / n
        gC[self.idx] = self.w_color * np.sign(e) / n
        return float(value), gC


def loss_traj(P: np.ndarray, Q: np.ndarray, assign: np.ndarray, quats: np.ndarray,
              trans: np.ndarray, locked: np.ndarray | None = None):
    """Mean distance between ``R_j p + T_j`` and ``q`` with ``j`` the match's part.

    Returns ``(value, g_quats, g_trans)``. Locked bases and basis 0 get no gradient.
    """
    N = len(quats)
    gq, gt = np.zeros((N, 4)), np.zeros((N, 3))
    M = len(P)
    if M == 0:
        logger.warning("no valid correspondences; trajectory loss is 0")
        return 0.0, gq, gt
    Rs = quats_to_rotmats(quats)
    r = np.einsum("mab,mb->ma", Rs[assign], P) + trans[assign] - Q
    n = np.linalg.norm(r, axis=1)
    value = float(n.mean())
    u = np.zeros_like(r)
    nz = n > 0
    u[nz] = r[nz] / (n[nz, None] * M)
    gR = np.zeros((N, 3, 3))
    np.add.at(gt, assign, u)
    np.add.at(gR, assign, np.einsum("ma,mb->mab", u, P))
    gq = quat_grads(gR, quats)
    gq[0], gt[0] = 0.0, 0.0
    if locked is not None:
        gq[np.asarray(locked, dtype=bool)] = 0.0
    return value, gq, gt


def rgbd_frame(X: np.ndarray, colors: np.ndarray, frame: Frame, lambda_ssim: float = 0.2,
               lambda_d: float = 0.5, delta_vis: float = 0.01, front_only: bool = False):
    """Point-projective color and depth residual of primitives against one frame.

    Returns ``(value, gX, gC, n_visible, target)`` where ``value`` is the mean
    over visible primitives of ``(1 - lambda_ssim) * |c - I|_1 + lambda_d * |z - D|``
    and ``target`` is the part index under each depth-consistent primitive
    (-1 where none), for the semantic term.
    """
    v, gX, gC, vis, lab, semv = kernels.frame_terms(
        np.ascontiguousarray(X, dtype=np.float64), np.ascontiguousarray(colors, dtype=np.float64),
        frame.camera.K, frame.camera.E, frame.invdepth, np.ascontiguousarray(frame.rgb),
        _labels(frame), 1.0 - lambda_ssim, lambda_d,
        delta_vis, front_only)
    target = np.where(np.asarray(semv, dtype=bool), np.asarray(lab) - 1, -1)
    n_vis = int(np.sum(vis))
    if n_vis == 0:
        return 0.0, np.zeros_like(X), np.zeros_like(colors), 0, target
    return float(np.sum(v) / n_vis), gX / n_vis, gC / n_vis, n_vis, target


def motion_backward(gX: np.ndarray, centers: np.ndarray, quats: np.ndarray, trans: np.ndarray,
                    weights: np.ndarray | None = None, assign: np.ndarray | None = None,
                    temperature: float = 1.0):
    """Chain gradients on transformed positions to the motion bases (and logits when soft).

    Soft mode (``weights`` given) differentiates ``x' = sum_j w_j (R_j x + T_j)``;
    hard mode (``assign`` given) differentiates ``x' = R_j* x + T_j*``.
    Returns ``(g_quats, g_trans, g_logits or None)``.
    """
    N = len(quats)
    if weights is not None:
        gT = weights.T @ gX
        gR = np.einsum("pj,pa,pb->jab", weights, gX, centers)
        Rs = quats_to_rotmats(quats)
        moved = np.einsum("jab,pb->pja", Rs, centers) + trans[None]
        gW = np.einsum("pja,pa->pj", moved, gX)
        g_logits = softmax_backward(weights, gW, temperature)
    else:
        gT = np.zeros((N, 3))
        gR = np.zeros((N, 3, 3))
        np.add.at(gT, assign, gX)
        np.add.at(gR, assign, np.einsum("pa,pb->pab", gX, centers))
        g_logits = None
    return quat_grads(gR, quats), gT, g_logits


def loss_align(X: np.ndarray, part: np.ndarray, trees: dict, clouds: dict, symmetric: bool = True):
    """Mean distance from each primitive to the nearest observed point of its own part.

    ``trees[j]``/``clouds[j]`` index the target-state points labeled with part
    ``j``; primitives whose part has no points are skipped. With ``symmetric``
    the mean distance from each observed point to the nearest primitive of its
    part is added, which keeps thin parts from sliding or over-rotating.
    """
    g = np.zeros_like(X)
    fwd_i, fwd_d, bwd_i, bwd_d = [], [], [], []
    for j, tree in trees.items():
        sel = np.flatnonzero(part == j)
        if len(sel) == 0:
            continue
        _, nn = tree.query(X[sel])
        fwd_i.append(sel)
        fwd_d.append(X[sel] - clouds[j][nn])
        if symmetric:
            _, nb = cKDTree(X[sel]).query(clouds[j])
            bwd_i.append(sel[nb])
            bwd_d.append(X[sel[nb]] - clouds[j])
    if not fwd_i:
        return 0.0, g
    value = 0.0
    for idx, diff in ((fwd_i, fwd_d), (bwd_i, bwd_d)):
        if not idx:
            continue
        sel = np.concatenate(idx)
        d = np.concatenate(diff)
        n = np.linalg.norm(d, axis=1)
        value += float(n.mean())
        nz = n > 0
        np.add.at(g, sel[nz], d[nz] / (n[nz, None] * len(sel)))
    return value, g


def lr_position(step: int, max_lr: float = 1.6e-4, min_lr: float = 1e-8,
                init: int = 6000, end: int = 10000) -> float:
    """Exponential position learning-rate decay from ``max_lr`` at ``init`` to ``min_lr`` at ``end``."""
    if end <= init:
        raise ConfigError(f"schedule end ({end}) must exceed init ({init})")
    if step < init:
        return max_lr
    if step >= end:
        return min_lr
    return max_lr * (min_lr / max_lr) ** ((step - init) / (end - init))
