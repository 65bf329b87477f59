"""Scene directory read/write. Byte layouts are documented in FORMATS.md."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .correspondence import MatchSet
from .errors import InvalidInputError
from .frames import Frame
from .geom import Camera, JointParams
from .synth import MaskSet, SceneSpec, SynthScene

MATCH_COLUMNS = ["pix0_u", "pix0_v", "view0", "pix1_u", "pix1_v", "view1", "is_outlier_gt", "part_gt"]


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def write_png16(path: Path, arr: np.ndarray) -> None:
    if arr.min() < 0 or arr.max() > 65535:
        raise InvalidInputError(f"label values out of 16-bit range in {path}")
    Image.fromarray(arr.astype(np.uint16)).save(path)


def read_png16(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im).astype(np.int32)


def save_frame(frame: Frame, stem: Path, local_labels: np.ndarray | None = None,
               local_to_global: dict | None = None) -> None:
    Image.fromarray(np.round(frame.rgb * 255).astype(np.uint8)).save(f"{stem}.rgb.png")
    frame.depth.astype("<f4").tofile(f"{stem}.depth.f32")
    write_png16(Path(f"{stem}.gtmask.png"), frame.labels)
    write_png16(Path(f"{stem}.mask.png"), frame.labels if local_labels is None else local_labels)
    cam = {
        "K": frame.camera.K.tolist(),
        "E": frame.camera.E.tolist(),
        "width": frame.camera.width,
        "height": frame.camera.height,
        "state": frame.state,
        "view": frame.view,
        "split": frame.split,
    }
    if local_to_global is not None:
        cam["mask_to_gt"] = {str(k): int(v) for k, v in sorted(local_to_global.items())}
    _dump_json(Path(f"{stem}.cam.json"), cam)


def load_frame(stem: Path):
    """Returns ``(Frame with ground-truth labels, MaskSet of view-local masks)``."""
    cam = json.loads(Path(f"{stem}.cam.json").read_text())
    H, W = cam["height"], cam["width"]
    with Image.open(f"{stem}.rgb.png") as im:
        rgb = np.array(im.convert("RGB")).astype(np.float64) / 255.0
    depth = np.fromfile(f"{stem}.depth.f32", dtype="<f4")
    if depth.size != H * W:
        raise InvalidInputError(f"{stem}.depth.f32 holds {depth.size} values, expected {H * W}")
    depth = depth.reshape(H, W).astype(np.float64)
    gt = Path(f"{stem}.gtmask.png")
    local = read_png16(Path(f"{stem}.mask.png"))
    labels = read_png16(gt) if gt.exists() else np.zeros_like(local)
    camera = Camera(np.array(cam["K"]), np.array(cam["E"]), W, H)
    frame = Frame(rgb, depth, labels, camera, cam["state"], cam["view"], cam.get("split", "train"))
    mapping = {int(k): int(v) for k, v in cam.get("mask_to_gt", {}).items()}
    return frame, MaskSet(cam["view"], local, cam["state"], mapping)


def save_matches(path: Path, matches: MatchSet) -> None:
    n = len(matches)
    out = matches.outlier_gt if matches.outlier_gt is not None else np.zeros(n, dtype=bool)
    part = matches.part_gt if matches.part_gt is not None else np.full(n, -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MATCH_COLUMNS)
        for i in range(n):
            w.writerow([repr(float(matches.pix0[i, 0])), repr(float(matches.pix0[i, 1])),
                        int(matches.view0[i]),
                        repr(float(matches.pix1[i, 0])), repr(float(matches.pix1[i, 1])),
                        int(matches.view1[i]), int(out[i]), int(part[i])])


def load_matches(path: Path) -> MatchSet:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return MatchSet.empty()
    col = {k: np.array([r[k] for r in rows], dtype=np.float64) for k in rows[0]}
    missing = [k for k in MATCH_COLUMNS[:6] if k not in col]
    if missing:
        raise InvalidInputError(f"{path}: missing columns {missing}")
    n = len(rows)
    return MatchSet(np.stack([col["pix0_u"], col["pix0_v"]], 1), col["view0"].astype(np.int64),
                    np.stack([col["pix1_u"], col["pix1_v"]], 1), col["view1"].astype(np.int64),
                    outlier_gt=col.get("is_outlier_gt", np.zeros(n)).astype(bool),
                    part_gt=col.get("part_gt", np.full(n, -1)).astype(np.int64))


@dataclass
class SceneData:
    """A scene directory loaded into memory."""

    spec: SceneSpec
    frames: dict
    masks: dict
    matches: MatchSet
    gt: dict = field(default_factory=dict)

    @property
    def values0(self) -> np.ndarray:
        return np.asarray(self.gt["values0"], dtype=np.float64)

    @property
    def values1(self) -> np.ndarray:
        return np.asarray(self.gt["values1"], dtype=np.float64)

    @property
    def joints(self) -> list:
        return [JointParams.from_dict(j) for j in self.gt["joints"]]

    def values(self, state: int) -> np.ndarray:
        return self.values0 if state == 0 else self.values1


def save_scene(scene: SynthScene, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(out / "spec.json", scene.spec.to_dict())
    for st in (0, 1):
        d = out / f"state{st}"
        d.mkdir(exist_ok=True)
        for f, m in zip(scene.frames[st], scene.masks[st]):
            save_frame(f, d / f"view_{f.view:03d}", m.labels, m.local_to_global)
    save_matches(out / "matches.csv", scene.matches)
    _dump_json(out / "gt_joints.json", {
        "seed": scene.seed,
        "s0": scene.s0.tolist(),
        "s1": scene.s1.tolist(),
        "values0": scene.values0.tolist(),
        "values1": scene.values1.tolist(),
        "joints": [j.to_dict() for j in scene.joints],
        "warnings": list(scene.warnings),
    })
    return out


def load_scene(scene_dir) -> SceneData:
    root = Path(scene_dir)
    if not (root / "spec.json").exists():
        raise InvalidInputError(f"{root} is not a scene directory (no spec.json)")
    spec = SceneSpec.from_dict(json.loads((root / "spec.json").read_text()))
    frames, masks = {}, {}
    for st in (0, 1):
        stems = sorted((root / f"state{st}").glob("view_*.cam.json"))
        if not stems:
            raise InvalidInputError(f"{root}/state{st} holds no views")
        pairs = [load_frame(Path(str(s)[: -len(".cam.json")])) for s in stems]
        frames[st] = [p[0] for p in pairs]
        masks[st] = [p[1] for p in pairs]
    mpath = root / "matches.csv"
    matches = load_matches(mpath) if mpath.exists() else MatchSet.empty()
    gpath = root / "gt_joints.json"
    gt = json.loads(gpath.read_text()) if gpath.exists() else {}
    return SceneData(spec, frames, masks, matches, gt)
