import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from fracstab import cli
from fracstab.heatmap import load_stack
from fracstab.trajectory import load_trajectory

SMALL = ["--n-train", "4", "--n-test", "4", "--frames", "40"]


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(f))


@pytest.fixture(scope="module")
def suite(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim") / "suite"
    assert run("simulate", "--out", out, *SMALL) == 0
    return out


def test_simulate_default_layout(tmp_path):
    out = tmp_path / "deep" / "missing" / "dir"
    assert run("simulate", "--out", out) == 0
    files = sorted(p.relative_to(out).as_posix() for p in out.rglob("*.json"))
    gt = [f for f in files if f != "manifest.json" and not f.endswith(".z.json")]
    assert len(gt) == 30 and len([f for f in files if f.endswith(".z.json")]) == 30
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["version"] and len(manifest["config_hash"]) == 64
    assert manifest["videos"] == {"train": 20, "test": 10}
    assert load_trajectory(out / "test" / "test_000_ramp.json").num_frames == 300


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"n_train": 2, "n_test": 1, "frames": 12, "seed": 5}))
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o", "--n-test", 2) == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config"]["n_train"] == 2 and manifest["config"]["n_test"] == 2
    assert manifest["seed"] == 5


def test_codec_round_trip(tmp_path, suite):
    src = tmp_path / "src"
    src.mkdir()
    seq = load_trajectory(suite / "test" / "test_001_sinusoid.json")
    seq = seq.with_frames(seq.frames[:6])
    from fracstab.trajectory import save_trajectory

    save_trajectory(src / "clip.json", seq)
    assert run("encode", "--input", src, "--out", tmp_path / "enc") == 0
    stack = load_stack(tmp_path / "enc" / "clip.fhrs")
    assert len(stack) == 6 * 7 and stack.grid.width == 128
    assert run("decode", "--input", tmp_path / "enc", "--out", tmp_path / "fhr") == 0
    back = load_trajectory(tmp_path / "fhr" / "clip.json")
    assert np.abs(back.frames - seq.frames).max() < 1e-6
    assert back.video_id == seq.video_id
    assert run("decode", "--input", tmp_path / "enc", "--out", tmp_path / "chr", "--mode", "chr") == 0
    q = load_trajectory(tmp_path / "chr" / "clip.json").frames / 8.0
    assert np.array_equal(q, np.round(q))
    assert np.abs(q * 8.0 - seq.frames).max() <= 4.0


def test_decode_rejects_bad_magic(tmp_path, suite, capsys):
    src = tmp_path / "src"
    src.mkdir()
    (src / "a.json").write_text((suite / "test" / "test_000_ramp.json").read_text())
    assert run("encode", "--input", src / "a.json", "--out", tmp_path / "enc", "--grid-size", 128) == 0
    path = tmp_path / "enc" / "a.fhrs"
    data = bytearray(path.read_bytes())
    data[:4] = b"JUNK"
    path.write_bytes(bytes(data))
    assert run("decode", "--input", tmp_path / "enc", "--out", tmp_path / "dec") == 3
    assert "offset 0" in capsys.readouterr().err


def test_train_outputs(tmp_path, suite):
    out = tmp_path / "train"
    assert run("train", "--data", suite, "--out", out, "--max-iters", 30) == 0
    rows = read_csv(out / "history.csv")
    assert list(rows[0]) == ["iter", "euclidean", "time_delay", "tm", "total"]
    totals = [float(r["total"]) for r in rows]
    assert all(b <= a for a, b in zip(totals, totals[1:]))
    assert json.loads((out / "config.json").read_text())["max_iters"] == 30
    assert json.loads((out / "params.json").read_text())["M"] == 7


def test_train_lambda2_zero_and_single_step(tmp_path, suite, capsys):
    assert run("train", "--data", suite, "--out", tmp_path / "a", "--lambda2", 0, "--max-iters", 1) == 0
    assert "(x0)" in capsys.readouterr().out
    rows = read_csv(tmp_path / "a" / "history.csv")
    assert len(rows) == 2
    for r in rows:
        assert float(r["total"]) == pytest.approx(float(r["euclidean"]) + float(r["tm"]), rel=1e-12)


def test_stabilize_and_evaluate(tmp_path, suite):
    assert run("train", "--data", suite, "--out", tmp_path / "t", "--max-iters", 5) == 0
    params = tmp_path / "t" / "params.json"
    assert run("stabilize", "--input", suite / "test", "--out", tmp_path / "s", "--params", params) == 0
    outs = sorted(p.name for p in (tmp_path / "s").glob("*.z.json"))
    assert len(outs) == 4
    assert run("stabilize", "--input", suite / "test", "--out", tmp_path / "b", "--baseline", "first_order:0.3") == 0
    assert run("stabilize", "--input", suite / "test", "--out", tmp_path / "x") == 2

    ev = tmp_path / "ev"
    assert run("evaluate", "--data", suite, "--out", ev, "--params", params, "--ground-truth", "true") == 0
    summary = {r["method"]: r for r in read_csv(ev / "summary.csv")}
    assert len(summary) == 7 and len({r["num_frames"] for r in summary.values()}) == 1
    gt = json.loads((ev / "report_ground_truth.json").read_text())
    assert gt["nrmse_percent"] == gt["stability_nrmse_percent"] == gt["failure_rate_percent"] == 0
    assert float(summary["raw"]["stability"]) > 0
    assert (ev / "frames_moving_average_5.csv").exists()


def test_evaluate_five_methods(tmp_path, suite):
    assert run("evaluate", "--data", suite, "--out", tmp_path / "e") == 0
    reports = sorted(p.name for p in (tmp_path / "e").glob("report_*.json"))
    assert len(reports) == 5
    counts = {json.loads((tmp_path / "e" / r).read_text())["num_frames"] for r in reports}
    assert counts == {160}


def test_config_errors(tmp_path, capsys):
    assert run("train", "--data", tmp_path / "nope", "--out", tmp_path / "o") == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"lambda9": 1}')
    assert run("train", "--config", bad) == 2
    bad.write_text("[1, 2")
    assert run("train", "--config", bad) == 2
    assert run("simulate", "--out", tmp_path / "o", "--motions", "wobble") == 2
    assert run("simulate") == 2
    with pytest.raises(SystemExit) as exc:
        run("simulate", "--frames", "many")
    assert exc.value.code == 2
    assert "configuration error" in capsys.readouterr().err


def test_data_errors(tmp_path, suite):
    data = tmp_path / "d"
    (data / "test").mkdir(parents=True)
    (data / "test" / "v.json").write_text((suite / "test" / "test_000_ramp.json").read_text())
    (data / "test" / "v.z.json").write_text('{"video_id": "v"}')
    assert run("evaluate", "--data", data, "--out", tmp_path / "e") == 3


def test_numerical_failure(tmp_path, suite, monkeypatch):
    assert run("train", "--data", suite, "--out", tmp_path / "t", "--max-iters", 1) == 0

    def broken(params, seqs):
        return [s.with_frames(np.full(s.frames.shape, np.nan)) for s in seqs]

    monkeypatch.setattr(cli, "stabilize_many", broken)
    code = run("stabilize", "--input", suite / "test", "--out", tmp_path / "s", "--params", tmp_path / "t" / "params.json")
    assert code == 4


def test_console_script_entry(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "fracstab.cli", "simulate", "--out", str(tmp_path / "o"), "--n-train", "1",
         "--n-test", "1", "--frames", "5"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "manifest.json").exists()
