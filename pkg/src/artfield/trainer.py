"""Model initialization and the warm-up, soft and hard training stages."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import losses, segcons
from .config import TrainConfig
from .correspondence import MatchSet, lift_match_set, locality_filter
from .errors import CheckpointError, DivergenceError, InvalidInputError
from .frames import Frame
from .model import SceneModel, build_knn
from .motionfield import IDENTITY_Q, detect_prismatic, init_weights

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
LOG_COLUMNS = ["step", "stage", "rgbd", "sem", "sparsity", "traj", "align", "total"]


# ---------------------------------------------------------------- inputs

@dataclass
class TrainInputs:
    """Globally labeled training frames of both states and lifted, filtered matches."""

    frames: dict
    matches: MatchSet
    n_parts: int
    info: dict = field(default_factory=dict)


def prepare_inputs(frames: dict, masks: dict, matches: MatchSet, cfg: TrainConfig) -> TrainInputs:
    """Consistent labels across views and states, then lifted and filtered matches."""
    graphs, train_frames = {}, {}
    for st in (0, 1):
        fr = [f for f in frames[st] if f.split == "train"]
        views = {f.view for f in fr}
        ms = [m for m in masks[st] if m.view in views]
        if len(ms) != len(fr):
            raise InvalidInputError(f"state {st}: masks and training frames do not align")
        graphs[st] = segcons.build_part_graph(ms, fr, cfg.k_views, cfg.min_iou)
        train_frames[st] = fr
    lifted, n_drop = lift_match_set(matches, train_frames[0], train_frames[1])
    mapping, votes, warns = segcons.align_states(graphs[0], graphs[1], lifted)
    out = {0: [f.with_labels(graphs[0].global_labels(f.view)) for f in train_frames[0]],
           1: [f.with_labels(segcons.relabel(graphs[1].global_labels(f.view), mapping))
               for f in train_frames[1]]}
    filtered = locality_filter(lifted, cfg.match_r, cfg.match_r_prime) if len(lifted) else lifted
    n_parts = graphs[0].n_labels
    info = {
        "n_parts": n_parts,
        "state_mapping": {str(k): v for k, v in sorted(mapping.items())},
        "matches_dropped": n_drop,
        "matches_valid": int(filtered.valid.sum()) if len(filtered) else 0,
        "matches_total": len(filtered),
        "warnings": graphs[0].warnings + graphs[1].warnings + warns,
        "graphs": {st: graphs[st].to_json() for st in (0, 1)},
    }
    if n_parts < 2:
        raise InvalidInputError("fewer than two parts recovered from the masks")
    return TrainInputs(out, filtered, n_parts, info)


def select_canonical(frames: dict) -> int:
    """State whose movable parts (labels >= 2) cover more pixels; ties go to state 0."""
    area = [sum(int(np.sum(f.labels >= 2)) for f in frames[st]) for st in (0, 1)]
    return 0 if area[0] >= area[1] else 1


def init_model(frames: list, n_parts: int, cfg: TrainConfig, canonical_state: int = 0) -> SceneModel:
    """Primitives back-projected from randomly sampled labeled pixels of the canonical frames."""
    rng = np.random.default_rng([cfg.seed, 11])
    pix = []
    for fi, f in enumerate(frames):
        r, c = np.nonzero((f.labels > 0) & (f.depth > 0))
        pix.append(np.stack([np.full(len(r), fi), r, c], 1))
    pix = np.concatenate(pix) if pix else np.zeros((0, 3), dtype=np.int64)
    if len(pix) == 0:
        raise InvalidInputError("no labeled pixels with depth in the canonical frames")
    replace = len(pix) < cfg.n_points
    if replace:
        logger.warning("only %d labeled pixels for %d primitives; sampling with replacement",
                       len(pix), cfg.n_points)
    pick = pix[np.sort(rng.choice(len(pix), size=cfg.n_points, replace=replace))]
    centers = np.zeros((cfg.n_points, 3))
    colors = np.zeros((cfg.n_points, 3))
    labels = np.zeros(cfg.n_points, dtype=np.int64)
    for fi in np.unique(pick[:, 0]):
        sel = pick[:, 0] == fi
        f = frames[fi]
        r, c = pick[sel, 1], pick[sel, 2]
        centers[sel] = f.camera.backproject_points(np.stack([c, r], 1).astype(np.float64), f.depth[r, c])
        colors[sel] = f.rgb[r, c]
        labels[sel] = f.labels[r, c]
    if labels.max() > n_parts:
        raise InvalidInputError(f"label {labels.max()} exceeds part count {n_parts}")
    logits = np.stack([init_weights(int(lab) - 1, n_parts) for lab in labels])
    k = min(3, cfg.n_points - 1)
    if k > 0:
        d, _ = cKDTree(centers).query(centers, k=k + 1)
        scales = np.maximum(d[:, 1:].mean(axis=1), 1e-4)
    else:
        scales = np.full(cfg.n_points, 0.01)
    return SceneModel.create(centers, colors, logits, scales, cfg.opacity, cfg.knn_k,
                             canonical_state, cfg.temperature)


# ---------------------------------------------------------------- optimizer

class Adam:
    def __init__(self, shape, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0
        self.b1, self.b2, self.eps = beta1, beta2, eps

    def step(self, param: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mh = self.m / (1 - self.b1 ** self.t)
        vh = self.v / (1 - self.b2 ** self.t)
        return param - lr * mh / (np.sqrt(vh) + self.eps)

    def reset_rows(self, rows) -> None:
        self.m[rows] = 0.0
        self.v[rows] = 0.0


# ---------------------------------------------------------------- training

@dataclass
class TrainResult:
    model: SceneModel
    log: list
    check_angles_deg: list = field(default_factory=list)


def _part_clouds(frames: list, n_parts: int, n_points: int, rng) -> tuple:
    trees, clouds = {}, {}
    pts = [[] for _ in range(n_parts)]
    for f in frames:
        for j in range(n_parts):
            r, c = np.nonzero((f.labels == j + 1) & (f.depth > 0))
            if len(r):
                pts[j].append(f.camera.backproject_points(np.stack([c, r], 1).astype(np.float64),
                                                          f.depth[r, c]))
    for j in range(n_parts):
        if not pts[j]:
            continue
        P = np.concatenate(pts[j])
        if len(P) > n_points:
            P = P[np.sort(rng.choice(len(P), n_points, replace=False))]
        clouds[j] = P
        trees[j] = cKDTree(P)
    return trees, clouds


def _match_endpoints(matches: MatchSet, canonical_state: int):
    """Valid matches oriented canonical -> other state."""
    if matches is None or len(matches) == 0:
        return np.zeros((0, 3)), np.zeros((0, 3))
    v = matches.valid
    P, Q = matches.p3d0[v], matches.p3d1[v]
    return (P, Q) if canonical_state == 0 else (Q, P)


def _finite_or_raise(stage: str, step: int, terms: dict) -> None:
    if not all(math.isfinite(x) for x in terms.values()):
        raise DivergenceError(stage, step, terms)


def train(inputs: TrainInputs, cfg: TrainConfig, model: SceneModel | None = None,
          callback=None) -> TrainResult:
    """Warm-up (colors), soft (blended motion) and hard (assigned motion) stages.

    ``callback(stage, step, model)`` runs after every optimizer step.
    """
    cs = select_canonical(inputs.frames) if model is None else model.canonical_state
    other = 1 - cs
    if model is None:
        model = init_model(inputs.frames[cs], inputs.n_parts, cfg, cs)
    frames_c, frames_o = inputs.frames[cs], inputs.frames[other]
    n_frames = len(frames_c) + len(frames_o)
    rng = np.random.default_rng([cfg.seed, 12])
    trees, clouds = _part_clouds(frames_o, model.n_parts, cfg.align_points, rng)
    P_match, Q_match = _match_endpoints(inputs.matches, cs)
    match_prim = (cKDTree(model.centers).query(P_match)[1] if len(P_match)
                  else np.zeros(0, dtype=np.int64))

    adam_c = Adam(model.colors.shape, cfg.beta1, cfg.beta2, cfg.adam_eps)
    adam_l = Adam(model.logits.shape, cfg.beta1, cfg.beta2, cfg.adam_eps)
    adam_q = Adam(model.quats.shape, cfg.beta1, cfg.beta2, cfg.adam_eps)
    adam_t = Adam(model.trans.shape, cfg.beta1, cfg.beta2, cfg.adam_eps)
    log, check_angles = [], []
    kw = dict(lambda_ssim=cfg.lambda_ssim, lambda_d=cfg.lambda_d, delta_vis=cfg.delta_vis,
              front_only=cfg.front_only)
    step = 0

    def record(stage, **terms):
        row = {"step": step, "stage": stage}
        row.update({k: float(terms.get(k, 0.0)) for k in LOG_COLUMNS[2:]})
        _finite_or_raise(stage, step, {k: row[k] for k in LOG_COLUMNS[2:]})
        log.append(row)
        if callback is not None:
            callback(stage, step, model)

    static = [losses.StaticFrame(model.centers, model.colors, f, **kw) for f in frames_c]
    static_targets = [sf.target for sf in static]

    # warm-up: appearance only, canonical frames
    for _ in range(cfg.iters_warmup):
        gC = np.zeros_like(model.colors)
        total = 0.0
        for sf in static:
            v, gc = sf(model.colors)
            total += v / len(static)
            gC += gc / len(static)
        model.colors = adam_c.step(model.colors, gC, cfg.lr_color)
        record("warmup", rgbd=total, total=total)
        step += 1

    def appearance_and_semantics(X_o):
        """rgbd and semantic terms averaged over the frames of both states."""
        rg = 0.0
        gC = np.zeros_like(model.colors)
        gX_o = np.zeros_like(model.centers)
        targets = list(static_targets)
        for sf in static:
            v, gc = sf(model.colors)
            rg += v / n_frames
            gC += gc / n_frames
        for f in frames_o:
            v, gx, gc, _, target = losses.rgbd_frame(X_o, model.colors, f, **kw)
            rg += v / n_frames
            gC += gc / n_frames
            gX_o += gx / n_frames
            targets.append(target)
        sm, gL = losses.loss_sem_batch(model.logits, targets, [1.0 / n_frames] * n_frames,
                                       model.temperature)
        return rg, sm, gC, cfg.lambda_sem * gL, gX_o

    def update_motion(gq, gt, lr):
        gq = gq.copy()
        gq[0] = 0.0
        gt = gt.copy()
        gt[0] = 0.0
        gq[model.locked] = 0.0
        q = adam_q.step(model.quats, gq, lr)
        q[0] = IDENTITY_Q
        q[model.locked] = IDENTITY_Q
        model.quats = q / np.linalg.norm(q, axis=1, keepdims=True)
        t = adam_t.step(model.trans, gt, lr)
        t[0] = 0.0
        model.trans = t

    # soft stage
    for k in range(cfg.iters_soft):
        if k == cfg.prismatic_check_step:
            check_angles = _lock_prismatic(model, cfg, adam_q)
        W = model.weights()
        X_o = model.positions(other, "soft")
        rg, sm, gC, gL, gX_o = appearance_and_semantics(X_o)
        sp, gsp = losses.loss_sparsity(model.logits, model.knn, model.temperature)
        if cfg.sparsity_mean and model.knn.size:
            sp, gsp = sp / model.knn.size, gsp / model.knn.size
        al, gal = (losses.loss_align(X_o, model.assignment(), trees, clouds)
                   if cfg.lambda_align > 0 else (0.0, np.zeros_like(X_o)))
        gq, gt, gLw = losses.motion_backward(gX_o, model.centers, model.quats, model.trans,
                                             weights=W, temperature=model.temperature)
        gq2, gt2, _ = losses.motion_backward(cfg.lambda_align * gal, model.centers, model.quats,
                                             model.trans, weights=W, temperature=model.temperature)
        total = rg + cfg.lambda_sem * sm + cfg.lambda_sparsity * sp + cfg.lambda_align * al
        record("soft", rgbd=rg, sem=sm, sparsity=sp, align=al, total=total)
        model.colors = adam_c.step(model.colors, gC, cfg.lr_color)
        model.logits = adam_l.step(model.logits, gL + gLw + cfg.lambda_sparsity * gsp, cfg.lr_logits)
        update_motion(gq + gq2, gt + gt2, cfg.lr_motion)
        step += 1
    if cfg.prismatic_check_step == cfg.iters_soft:
        check_angles = _lock_prismatic(model, cfg, adam_q)

    # hard stage
    for k in range(cfg.iters_hard):
        lr = cfg.lr_motion * cfg.lr_decay_hard ** (k / max(cfg.iters_hard, 1))
        assign = model.assignment()
        X_o = model.positions(other, "hard")
        rg, sm, gC, gL, gX_o = appearance_and_semantics(X_o)
        tr, gq_t, gt_t = losses.loss_traj(P_match, Q_match, assign[match_prim], model.quats,
                                          model.trans, model.locked)
        al, gal = (losses.loss_align(X_o, assign, trees, clouds)
                   if cfg.lambda_align_hard > 0 else (0.0, np.zeros_like(X_o)))
        gq, gt, _ = losses.motion_backward(gX_o + cfg.lambda_align_hard * gal, model.centers,
                                           model.quats, model.trans, assign=assign)
        total = rg + cfg.lambda_sem * sm + cfg.lambda_traj * tr + cfg.lambda_align_hard * al
        record("hard", rgbd=rg, sem=sm, traj=tr, align=al, total=total)
        model.colors = adam_c.step(model.colors, gC, cfg.lr_color)
        model.logits = adam_l.step(model.logits, gL, cfg.lr_logits)
        update_motion(gq + cfg.lambda_traj * gq_t, gt + cfg.lambda_traj * gt_t, lr)
        step += 1
    return TrainResult(model, log, check_angles)


def _lock_prismatic(model: SceneModel, cfg: TrainConfig, adam_q: Adam) -> list:
    angles = [math.degrees(b.motion.angle) for b in model.field.bases]
    fieldn = detect_prismatic(model.field, 0, cfg.eps_deg)
    model.quats = fieldn.quats()
    newly = fieldn.locked() & ~model.locked
    model.locked = fieldn.locked()
    adam_q.reset_rows(newly)
    return angles


# ---------------------------------------------------------------- persistence

def save_checkpoint(path, model: SceneModel, cfg: TrainConfig, step: int, extra: dict | None = None) -> None:
    data = {
        "version": CHECKPOINT_VERSION,
        "step": step,
        "config": cfg.to_dict(),
        "canonical_state": model.canonical_state,
        "temperature": model.temperature,
        "centers": model.centers.tolist(),
        "colors": model.colors.tolist(),
        "logits": model.logits.tolist(),
        "scales": model.scales.tolist(),
        "opacity": model.opacity.tolist(),
        "field": model.field.to_dict(),
        "knn": model.knn.tolist(),
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(data, sort_keys=True))


def load_checkpoint(path):
    """Returns ``(model, config dict, step, extra)``."""
    p = Path(path)
    if not p.exists():
        raise CheckpointError(f"checkpoint not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise CheckpointError(f"unreadable checkpoint {p}: {e}") from None
    if data.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {data.get('version')} != {CHECKPOINT_VERSION}")
    fd = data["field"]
    knn = np.array(data["knn"], dtype=np.int64)
    centers = np.array(data["centers"])
    if knn.size == 0:
        knn = build_knn(centers, 0)
    model = SceneModel(centers, np.array(data["colors"]), np.array(data["logits"]),
                       np.array(data["scales"]), np.array(data["opacity"]),
                       np.array(fd["quats"]), np.array(fd["trans"]),
                       np.array(fd["locked"], dtype=bool), knn.reshape(len(centers), -1),
                       data["canonical_state"], data["temperature"])
    return model, data["config"], data["step"], data.get("extra", {})


def write_log(path, log: list) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(LOG_COLUMNS) + "\n")
        for row in log:
            fh.write(",".join([str(row["step"]), row["stage"]]
                              + [repr(row[k]) for k in LOG_COLUMNS[2:]]) + "\n")
