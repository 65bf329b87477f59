"""Per-object evaluation, JointReport persistence, PLY export and bucketed tables."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics, synth
from .errors import InvalidInputError
from .geom import REVOLUTE, JointParams, RigidMotion
from .model import SceneModel

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
N_CD_SAMPLES = 10_000
BUCKETS = ("2 Parts", "3 Parts", "4-5 Parts", "6-20 Parts")
SUMMARY_KEYS = ("axis_angle", "axis_pos", "part_motion_rev", "part_motion_pri", "type_errors",
                "cd_s", "cd_m", "cd_w", "mislabel")


def bucket_of(n_parts: int) -> str:
    """Part-count group of an object (static base included)."""
    if n_parts == 2:
        return BUCKETS[0]
    if n_parts == 3:
        return BUCKETS[1]
    if 4 <= n_parts <= 5:
        return BUCKETS[2]
    if 6 <= n_parts <= 20:
        return BUCKETS[3]
    raise InvalidInputError(f"part count {n_parts} outside 2..20")


def _num(x):
    """JSON-safe float: rounded to 9 significant digits; inf and nan become strings."""
    if x is None:
        return None
    x = float(x)
    if not math.isfinite(x):
        return str(x)
    return float(f"{x:.9g}")


def _unnum(x):
    return float(x) if isinstance(x, str) else x


@dataclass
class JointEval:
    part: int
    est_part: int | None
    gt: JointParams
    est: JointParams | None
    axis_angle_err: float | None
    axis_pos_err: float | None
    part_motion_err: float | None

    @property
    def type_error(self) -> bool:
        return self.est is None or self.est.kind != self.gt.kind

    @property
    def axis_pos_err_01(self) -> float | None:
        return None if self.axis_pos_err is None else self.axis_pos_err / 0.1

    def to_dict(self) -> dict:
        return {
            "part": self.part,
            "est_part": self.est_part,
            "gt": _joint_dict(self.gt),
            "est": None if self.est is None else _joint_dict(self.est),
            "axis_angle_err_deg": _num(self.axis_angle_err),
            "axis_pos_err_m": _num(self.axis_pos_err),
            "axis_pos_err_01m": _num(self.axis_pos_err_01),
            "part_motion_err": "F" if self.type_error else _num(self.part_motion_err),
        }

    @classmethod
    def from_dict(cls, d: dict) -> JointEval:
        pm = d["part_motion_err"]
        return cls(d["part"], d["est_part"], JointParams.from_dict(d["gt"]),
                   None if d["est"] is None else JointParams.from_dict(d["est"]),
                   _unnum(d["axis_angle_err_deg"]), _unnum(d["axis_pos_err_m"]),
                   None if pm == "F" else _unnum(pm))


def _joint_dict(j: JointParams) -> dict:
    return {k: ([_num(x) for x in v] if isinstance(v, list) else _num(v) if isinstance(v, float) else v)
            for k, v in j.to_dict().items()}


@dataclass
class JointReport:
    """Evaluation of one trained model against ground truth.

    ``runtime`` is kept out of :meth:`to_dict` so that reports of repeated
    runs compare byte for byte; the CLI stores it in a sidecar file.
    """

    scene: str
    n_parts: int
    seed: int
    config_hash: str
    eval_state: int
    joints: list
    cd_s: float
    cd_m: list
    cd_w: float
    cd_convention: str
    mislabel: float
    runtime: float | None = field(default=None, compare=False)

    def summary(self) -> dict:
        rev = [j for j in self.joints if j.gt.kind == REVOLUTE]
        pri = [j for j in self.joints if j.gt.kind != REVOLUTE]

        def mean(xs):
            xs = [x for x in xs if x is not None]
            return float(np.mean(xs)) if xs else None

        return {
            "axis_angle": mean([j.axis_angle_err for j in self.joints]),
            "axis_pos": mean([j.axis_pos_err for j in rev]),
            "part_motion_rev": mean([j.part_motion_err for j in rev if not j.type_error]),
            "part_motion_pri": mean([j.part_motion_err for j in pri if not j.type_error]),
            "type_errors": sum(j.type_error for j in self.joints),
            "cd_s": self.cd_s,
            "cd_m": mean(self.cd_m),
            "cd_w": self.cd_w,
            "mislabel": self.mislabel,
        }

    def to_dict(self) -> dict:
        return {
            "scene": self.scene,
            "n_parts": self.n_parts,
            "bucket": bucket_of(self.n_parts),
            "seed": self.seed,
            "config_hash": self.config_hash,
            "eval_state": self.eval_state,
            "cd_convention": self.cd_convention,
            "joints": [j.to_dict() for j in self.joints],
            "cd_s": _num(self.cd_s),
            "cd_m": [_num(x) for x in self.cd_m],
            "cd_w": _num(self.cd_w),
            "mislabel": _num(self.mislabel),
            "summary": {k: _num(v) for k, v in self.summary().items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> JointReport:
        return cls(d["scene"], d["n_parts"], d["seed"], d["config_hash"], d["eval_state"],
                   [JointEval.from_dict(j) for j in d["joints"]], _unnum(d["cd_s"]),
                   [_unnum(x) for x in d["cd_m"]], _unnum(d["cd_w"]), d["cd_convention"],
                   _unnum(d["mislabel"]))


def eval_state_of(frames: dict) -> int:
    """High-visibility state: more pixels on movable parts (GT labels >= 2); ties go to state 0."""
    area = [sum(int(np.sum(f.labels >= 2)) for f in frames[st]) for st in (0, 1)]
    return 0 if area[0] >= area[1] else 1


def sample_primitives(model: SceneModel, X: np.ndarray, n: int, rng) -> tuple:
    """``n`` points drawn from the isotropic Gaussians at ``X``; returns ``(points, primitive index)``."""
    idx = np.sort(rng.integers(0, len(X), n))
    pts = X[idx] + rng.standard_normal((n, 3)) * model.scales[idx, None]
    return pts, idx


def gt_points(spec, values, frames: list, n: int, rng) -> tuple:
    """GT surface samples restricted to what the frames observe; returns ``(points, part)``."""
    pts, lab = synth.sample_surface(spec, values, n, rng)
    seen = synth.visible_in_frames(pts, lab, frames)
    if not np.any(seen):
        logger.warning("no GT surface sample is visible; using all samples")
        return pts, lab
    return pts[seen], lab[seen]


def evaluate(model: SceneModel, spec, gt_joints: list, values: dict, frames: dict, seed: int = 0,
             config_hash: str = "", cd_root: bool = False, n_samples: int = N_CD_SAMPLES,
             runtime: float | None = None) -> JointReport:
    """Joint errors and Chamfer distances of ``model`` at the high-visibility state.

    ``values[state]`` are GT joint values and ``frames[state]`` GT-labeled frames.
    Estimated parts are matched to GT parts by Hungarian assignment on the
    overlap between each primitive's estimated part and its nearest GT box.
    """
    st = eval_state_of(frames)
    X = model.positions(st, "hard")
    gt_lab = synth.box_distances(spec, values[st], X).argmin(axis=1)
    est_lab = model.assignment()
    mp = metrics.match_parts(est_lab, gt_lab, model.n_parts, spec.n_parts)
    mislabel = float(np.mean(np.array([mp.get(int(g), -1) for g in gt_lab]) != est_lab))

    joints = []
    for k in range(1, spec.n_parts):
        gt = gt_joints[k - 1]
        j = mp.get(k)
        est = None
        if j is not None and j != 0:
            motion = RigidMotion(model.quats[j], model.trans[j])
            if model.canonical_state == 1:
                motion = motion.inverse()
            est = metrics.estimated_joint(motion, bool(model.locked[j]))
        if est is None:
            joints.append(JointEval(k, j, gt, None, None, None, None))
            continue
        joints.append(JointEval(k, j, gt, est, metrics.metric_axis_angle(est, gt),
                                metrics.metric_axis_pos(est, gt), metrics.metric_part_motion(est, gt)))

    rng = np.random.default_rng([seed, 21])
    est_pts, est_idx = sample_primitives(model, X, n_samples, rng)
    est_part = est_lab[est_idx]
    ref_pts, ref_part = gt_points(spec, values[st], frames[st], n_samples, rng)

    def cd_of(k):
        j = mp.get(k)
        a = est_pts[est_part == j] if j is not None else np.zeros((0, 3))
        return metrics.chamfer(a, ref_pts[ref_part == k], root=cd_root)

    return JointReport(
        scene=spec.name, n_parts=spec.n_parts, seed=seed, config_hash=config_hash, eval_state=st,
        joints=joints, cd_s=cd_of(0), cd_m=[cd_of(k) for k in range(1, spec.n_parts)],
        cd_w=metrics.chamfer(est_pts, ref_pts, root=cd_root),
        cd_convention="root" if cd_root else "squared", mislabel=mislabel, runtime=runtime)


# ---------------------------------------------------------------- files

def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def trial_mean(reports: list) -> dict:
    """Mean of each summary metric over trials (``None`` where every trial lacks it)."""
    out = {}
    for k in SUMMARY_KEYS:
        xs = [r.summary()[k] for r in reports]
        xs = [x for x in xs if x is not None]
        out[k] = _num(np.mean(xs)) if xs else None
    return out


def write_report(path, reports: list) -> None:
    """One object's report file: every trial plus their mean."""
    if not reports:
        raise InvalidInputError("no trial reports to write")
    r0 = reports[0]
    doc = {
        "version": REPORT_VERSION,
        "scene": r0.scene,
        "n_parts": r0.n_parts,
        "bucket": bucket_of(r0.n_parts),
        "trials": [r.to_dict() for r in reports],
        "mean": trial_mean(reports),
    }
    Path(path).write_text(dumps(doc))


def read_report(path) -> dict:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidInputError(f"unreadable report {p}: {e}") from None
    if doc.get("version") != REPORT_VERSION:
        raise InvalidInputError(f"report {p} has version {doc.get('version')}, expected {REPORT_VERSION}")
    return doc


def write_metrics_csv(path, reports: list) -> None:
    """One row per (trial, joint)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "seed", "part", "gt_kind", "est_kind", "axis_angle_err_deg",
                    "axis_pos_err_m", "part_motion_err", "cd_m"])
        for t, r in enumerate(reports):
            for j, cd in zip(r.joints, r.cd_m):
                d = j.to_dict()
                w.writerow([t, r.seed, j.part, j.gt.kind, "" if j.est is None else j.est.kind,
                            _cell(d["axis_angle_err_deg"]), _cell(d["axis_pos_err_m"]),
                            _cell(d["part_motion_err"]), _cell(_num(cd))])


def _cell(v) -> str:
    return "" if v is None else str(v)


def aggregate(docs: list) -> list:
    """Mean of the per-object trial means within each part-count bucket."""
    rows = []
    for b in BUCKETS:
        group = [d for d in docs if d["bucket"] == b]
        row = {"bucket": b, "n_objects": len(group)}
        for k in SUMMARY_KEYS:
            xs = [_unnum(d["mean"][k]) for d in group if d["mean"].get(k) is not None]
            row[k] = _num(np.mean(xs)) if xs else None
        rows.append(row)
    return rows


def write_table(path, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ["bucket", "n_objects", *SUMMARY_KEYS]
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r[c]) for c in cols])


def write_ply(path, points: np.ndarray, colors: np.ndarray | None = None) -> None:
    """ASCII PLY; ``colors`` in [0, 1] are stored as 8-bit."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    lines = ["ply", "format ascii 1.0", f"element vertex {len(pts)}",
             "property float x", "property float y", "property float z"]
    if colors is not None:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
        rgb = np.clip(np.round(np.asarray(colors) * 255), 0, 255).astype(int)
    lines.append("end_header")
    for i, p in enumerate(pts):
        s = f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f}"
        if colors is not None:
            s += " %d %d %d" % tuple(rgb[i])
        lines.append(s)
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path) -> np.ndarray:
    """Vertex positions of an ASCII PLY written by :func:`write_ply`."""
    text = Path(path).read_text().splitlines()
    n = next(int(t.split()[-1]) for t in text if t.startswith("element vertex"))
    start = text.index("end_header") + 1
    return np.array([[float(v) for v in t.split()[:3]] for t in text[start:start + n]]).reshape(n, 3)


def export_parts(out_dir, model: SceneModel) -> list:
    """Per estimated part: canonical and transformed (other state, hard) primitive centers."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    a = model.assignment()
    moved = model.positions(1 - model.canonical_state, "hard")
    written = []
    for j in range(model.n_parts):
        sel = a == j
        for tag, X in (("canonical", model.centers), ("transformed", moved)):
            p = out / f"part_{j:02d}_{tag}.ply"
            write_ply(p, X[sel], model.colors[sel])
            written.append(p)
    return written
