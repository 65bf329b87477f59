"""Command line: generate, train, eval, report, selftest and run (all four pipeline steps)."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import report, sceneio, selftest, synth, trainer
from .config import TrainConfig, dump_config, load_config
from .errors import ArtFieldError, InvalidInputError

logger = logging.getLogger("artfield")

TIMING_FILE = "timing.json"


def _load_spec(arg: str, seed: int | None) -> synth.SceneSpec:
    """Built-in spec name or a spec JSON file."""
    if arg in synth.BUILTIN_SPECS:
        return synth.BUILTIN_SPECS[arg](0 if seed is None else seed)
    p = Path(arg)
    if not p.exists():
        raise InvalidInputError(f"unknown spec {arg!r} (built-ins: {', '.join(sorted(synth.BUILTIN_SPECS))})")
    try:
        spec = synth.SceneSpec.from_dict(json.loads(p.read_text()))
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise InvalidInputError(f"malformed spec file {p}: {e}") from None
    return spec


def _update_timing(out: Path, key: str, seconds: float) -> None:
    p = out / TIMING_FILE
    data = json.loads(p.read_text()) if p.exists() else {}
    data[key] = round(seconds, 3)
    p.write_text(report.dumps(data))


def cmd_generate(args) -> int:
    spec = _load_spec(args.spec, args.seed)
    seed = spec.seed if args.seed is None else args.seed
    scene = synth.generate_scene(spec, seed, n_per_part=args.n_per_part,
                                 outlier_rate=args.outlier_rate, dropout_rate=args.dropout)
    out = sceneio.save_scene(scene, args.out)
    print(f"wrote {spec.name} ({spec.n_parts} parts, seed {seed}) to {out}")
    for w in scene.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def _config(args) -> TrainConfig:
    cfg = load_config(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _trial_dir(out: Path, t: int) -> Path:
    return out / f"trial_{t:02d}"


def cmd_train(args) -> int:
    cfg = _config(args)
    scene = sceneio.load_scene(args.scene_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = trainer.prepare_inputs(scene.frames, scene.masks, scene.matches, cfg)
    (out / "inputs.json").write_text(report.dumps(inputs.info))
    for w in inputs.info["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    for t in range(args.trials):
        tcfg = cfg.replace(seed=cfg.seed + t)
        d = _trial_dir(out, t)
        d.mkdir(exist_ok=True)
        t0 = time.perf_counter()
        res = trainer.train(inputs, tcfg)
        elapsed = time.perf_counter() - t0
        n_steps = len(res.log)
        trainer.save_checkpoint(d / "checkpoint.json", res.model, tcfg, n_steps,
                                {"check_angles_deg": [round(a, 6) for a in res.check_angles_deg]})
        trainer.write_log(d / "train_log.csv", res.log)
        (d / "config.txt").write_text(dump_config(tcfg))
        _update_timing(d, "train_s", elapsed)
        print(f"trial {t}: seed {tcfg.seed}, {n_steps} steps in {elapsed:.1f}s -> {d}")
    return 0


def _checkpoints(args) -> list:
    if args.checkpoint:
        return [Path(p) for p in args.checkpoint]
    found = sorted(Path(args.out).glob("trial_*/checkpoint.json"))
    if not found:
        raise InvalidInputError(f"no checkpoints under {args.out} (expected trial_*/checkpoint.json)")
    return found


def cmd_eval(args) -> int:
    scene = sceneio.load_scene(args.scene_dir)
    if not scene.gt:
        raise InvalidInputError(f"{args.scene_dir} has no gt_joints.json")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    values = {0: scene.values0, 1: scene.values1}
    reports = []
    t0 = time.perf_counter()
    for t, ck in enumerate(_checkpoints(args)):
        model, cfg_d, _, _ = trainer.load_checkpoint(ck)
        cfg = TrainConfig().replace(**cfg_d)
        timing = ck.parent / TIMING_FILE
        runtime = json.loads(timing.read_text()).get("train_s") if timing.exists() else None
        rep = report.evaluate(model, scene.spec, scene.joints, values, scene.frames, seed=cfg.seed,
                              config_hash=cfg.digest(), cd_root=args.cd_root, runtime=runtime)
        reports.append(rep)
        report.export_parts(out / "ply" / f"trial_{t:02d}", model)
    report.write_report(out / "report.json", reports)
    report.write_metrics_csv(out / "metrics.csv", reports)
    _update_timing(out, "eval_s", time.perf_counter() - t0)
    mean = report.trial_mean(reports)
    print(f"{scene.spec.name}: " + ", ".join(f"{k}={v}" for k, v in mean.items()))
    return 0


def cmd_report(args) -> int:
    paths = []
    for d in args.inputs:
        p = Path(d)
        if p.is_file():
            paths.append(p)
        elif p.is_dir():
            paths.extend(sorted(p.rglob("report.json")))
    if not paths:
        print("error: no report.json files found", file=sys.stderr)
        return 1
    docs = [report.read_report(p) for p in paths]
    rows = report.aggregate(docs)
    if args.out:
        report.write_table(args.out, rows)
    for r in rows:
        print(", ".join(f"{k}={r[k]}" for k in r))
    return 0


def cmd_selftest(args) -> int:
    ok = True
    for name, passed, detail in selftest.run(args.instances, args.seed or 0):
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    return 0 if ok else 1


def cmd_run(args) -> int:
    out = Path(args.out)
    scene_dir = out / "scene"
    train_dir = out / "train"
    ns = argparse.Namespace(**vars(args))
    ns.out = str(scene_dir)
    cmd_generate(ns)
    ns.scene_dir, ns.out = str(scene_dir), str(train_dir)
    cmd_train(ns)
    ns.checkpoint = None
    return cmd_eval(ns)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="artfield", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = ap.add_subparsers(dest="command", required=True)

    def gen_flags(p):
        p.add_argument("--spec", required=True, help="built-in name or spec JSON file")
        p.add_argument("--n-per-part", type=int, default=100)
        p.add_argument("--outlier-rate", type=float, default=0.1)
        p.add_argument("--dropout", type=float, default=0.0, help="mask dropout rate")

    def train_flags(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--trials", type=int, default=1)

    p = sub.add_parser("generate", help="write a synthetic scene directory")
    gen_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train on a scene directory")
    p.add_argument("--scene-dir", required=True)
    train_flags(p)
    p.add_argument("--seed", type=int, help="training seed (overrides the config)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints against ground truth")
    p.add_argument("--scene-dir", required=True)
    p.add_argument("--out", required=True, help="training output directory; reports go here")
    p.add_argument("--checkpoint", action="append", help="checkpoint file (repeatable)")
    p.add_argument("--cd-root", action="store_true", help="Chamfer on distances, not squared")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="aggregate report.json files by part-count bucket")
    p.add_argument("inputs", nargs="+", help="report files or directories searched recursively")
    p.add_argument("--out", help="CSV table path")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("selftest", help="finite-difference and oracle checks")
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("run", help="generate, train and eval in one go")
    gen_flags(p)
    train_flags(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--cd-root", action="store_true")
    p.set_defaults(func=cmd_run)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "trials", 1) < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ArtFieldError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
