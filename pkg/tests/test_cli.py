import json

import pytest

from artfield import report, synth
from artfield.cli import main

TINY = """iters_warmup = 5
iters_soft = 12
prismatic_check_step = 6
iters_hard = 8
n_points = 600
align_points = 500
"""


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Generate, train two trials and evaluate the door with a tiny config."""
    root = tmp_path_factory.mktemp("cli")
    (root / "tiny.cfg").write_text(TINY)
    assert main(["generate", "--spec", "door", "--seed", "0", "--out", str(root / "scene")]) == 0
    assert main(["train", "--scene-dir", str(root / "scene"), "--config", str(root / "tiny.cfg"),
                 "--trials", "2", "--out", str(root / "train")]) == 0
    assert main(["eval", "--scene-dir", str(root / "scene"), "--out", str(root / "train")]) == 0
    return root


def test_pipeline_outputs(pipeline):
    train = pipeline / "train"
    for t in ("trial_00", "trial_01"):
        for name in ("checkpoint.json", "train_log.csv", "config.txt", "timing.json"):
            assert (train / t / name).exists()
    doc = report.read_report(train / "report.json")
    assert doc["bucket"] == "2 Parts" and [t["seed"] for t in doc["trials"]] == [0, 1]
    assert (train / "metrics.csv").read_text().startswith("trial,seed,part")
    plys = sorted(p.name for p in (train / "ply" / "trial_00").iterdir())
    assert plys == ["part_00_canonical.ply", "part_00_transformed.ply",
                    "part_01_canonical.ply", "part_01_transformed.ply"]
    assert "eval_s" in json.loads((train / "timing.json").read_text())


def test_repeated_run_gives_identical_report(pipeline, tmp_path):
    assert main(["train", "--scene-dir", str(pipeline / "scene"), "--config", str(pipeline / "tiny.cfg"),
                 "--trials", "2", "--out", str(tmp_path)]) == 0
    assert main(["eval", "--scene-dir", str(pipeline / "scene"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "report.json").read_bytes() == (pipeline / "train" / "report.json").read_bytes()
    assert (tmp_path / "metrics.csv").read_bytes() == (pipeline / "train" / "metrics.csv").read_bytes()


def test_report_table(pipeline, tmp_path, capsys):
    out = tmp_path / "table.csv"
    assert main(["report", str(pipeline), "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0].startswith("bucket,n_objects") and rows[1].startswith("2 Parts,1,")
    assert [r.split(",")[0] for r in rows[1:]] == list(report.BUCKETS)


def test_report_on_empty_directory(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == 1
    assert "no report.json" in capsys.readouterr().err


def test_malformed_config(pipeline, tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("iters_hard = lots\n")
    rc = main(["train", "--scene-dir", str(pipeline / "scene"), "--config", str(bad), "--out", str(tmp_path / "o")])
    assert rc != 0 and "iters_hard" in capsys.readouterr().err


def test_version_mismatched_checkpoint(pipeline, tmp_path, capsys):
    ck = json.loads((pipeline / "train" / "trial_00" / "checkpoint.json").read_text())
    ck["version"] = 999
    p = tmp_path / "old.json"
    p.write_text(json.dumps(ck))
    rc = main(["eval", "--scene-dir", str(pipeline / "scene"), "--out", str(tmp_path), "--checkpoint", str(p)])
    assert rc != 0 and "version" in capsys.readouterr().err


def test_missing_inputs(tmp_path, capsys):
    assert main(["train", "--scene-dir", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) != 0
    assert main(["eval", "--scene-dir", str(tmp_path / "nope"), "--out", str(tmp_path)]) != 0
    assert main(["generate", "--spec", "no-such-spec", "--out", str(tmp_path / "s")]) != 0


def test_trials_must_be_positive(tmp_path):
    assert main(["train", "--scene-dir", str(tmp_path), "--trials", "0", "--out", str(tmp_path)]) == 2


def test_spec_file_generation(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(synth.door_spec(0).to_dict()))
    assert main(["generate", "--spec", str(spec), "--out", str(tmp_path / "s"), "--n-per-part", "20"]) == 0
    spec.write_text("{not json")
    assert main(["generate", "--spec", str(spec), "--out", str(tmp_path / "t")]) == 1


def test_selftest_passes(capsys):
    assert main(["selftest", "--instances", "10"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "oracle/hungarian" in out
