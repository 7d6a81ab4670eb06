import csv
import json

import numpy as np
import pytest

from conftest import seq
from fracstab.errors import InsufficientDataError, ShapeError
from fracstab.metrics import (
    ced_auc_failure,
    evaluate,
    lag_estimate,
    nrmse,
    stability_decomposition,
    stability_nrmse,
    write_frame_csv,
    write_report,
)


def moving(T=30, M=2, step=(1.0, 0.0)):
    return seq(np.arange(T, dtype=float)[:, None, None] * np.array(step) + np.arange(M)[None, :, None] * 10.0)


def test_nrmse_examples():
    p = moving()
    assert nrmse(p, p) == 0.0
    assert nrmse(p.frames + np.array([100.0, 0.0]), p) == pytest.approx(100.0)
    x = p.frames.copy()
    x[:, 0, 0] += 1.0
    x[:, 1, 1] += 3.0
    assert nrmse(x, p) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        nrmse(p, p, norm_distance=0.0)
    with pytest.raises(ShapeError):
        nrmse(p.frames[:-1], p)


def test_ced_auc_failure():
    assert ced_auc_failure(np.zeros(10)) == (100.0, 0.0)
    assert ced_auc_failure(np.full(10, 9.0)) == (0.0, 100.0)
    e = np.random.default_rng(0).uniform(0, 8, 10_000)
    auc, fail = ced_auc_failure(e)
    assert auc == pytest.approx(50.0, abs=1.0)
    assert fail == 0.0
    assert ced_auc_failure([2.0]) == (75.0, 0.0)
    with pytest.raises(InsufficientDataError):
        ced_auc_failure([])


def test_stability_examples():
    p = moving(step=(0.5, 0.0))
    assert stability_nrmse(p.frames + 7.0, p) == pytest.approx(0.0, abs=1e-12)
    assert stability_nrmse(np.zeros_like(p.frames), p) == pytest.approx(0.5)
    with pytest.raises(InsufficientDataError):
        stability_nrmse(p.frames[:1], p.frames[:1], norm_distance=100)


def test_stability_decomposition():
    p = moving(M=1, step=(1.0, 0.0))
    mag, ori = stability_decomposition(p, p)
    assert mag[0] == 0.0 and ori[0] == 0.0
    rotated = np.arange(30.0)[:, None, None] * np.array([0.0, 1.0])
    mag, ori = stability_decomposition(rotated, p)
    assert ori[0] == pytest.approx(90.0)
    assert mag[0] == pytest.approx(2.0)
    double = p.frames * 2
    mag, ori = stability_decomposition(double, p)
    assert ori[0] == pytest.approx(0.0) and mag[0] == pytest.approx(1.0)


def test_lag_examples(rng):
    p = seq(np.cumsum(rng.standard_normal((80, 2, 2)), axis=0))
    x = p.frames.copy()
    x[2:] = p.frames[:-2]
    assert lag_estimate(x, p) == pytest.approx(2.0, abs=1e-9)
    assert lag_estimate(p, p) == 0.0
    r = moving(T=50)
    avg = r.frames.copy()
    avg[1:] = 0.5 * (r.frames[1:] + r.frames[:-1])
    assert lag_estimate(avg, r) == pytest.approx(0.5, abs=0.1)
    const = seq(np.ones((20, 2, 2)))
    assert lag_estimate(const, const) == 0.0
    with pytest.raises(InsufficientDataError):
        lag_estimate(p.frames[:5], p.frames[:5])


def test_evaluate_and_files(tmp_path, rng):
    ps = [moving(T=20), moving(T=15)]
    ps[1].video_id = "b"
    xs = [p.with_frames(p.frames + rng.normal(0, 1, p.frames.shape)) for p in ps]
    report, rows = evaluate(xs, ps, method="noisy")
    assert report.num_frames == len(rows) == 35 and report.num_videos == 2
    assert report.stability_nrmse_percent > 0 and len(report.per_landmark_magnitude) == 2
    assert rows[0][3] is None and rows[20][0] == "b"
    same, _ = evaluate(ps, ps)
    assert same.nrmse_percent == same.stability_nrmse_percent == same.failure_rate_percent == 0.0
    assert same.auc_percent == 100.0
    write_report(tmp_path / "r.json", report)
    assert json.loads((tmp_path / "r.json").read_text())["method"] == "noisy"
    write_frame_csv(tmp_path / "f.csv", rows)
    lines = list(csv.reader(open(tmp_path / "f.csv")))
    assert lines[0] == ["video_id", "frame", "nrmse", "stability"] and lines[1][3] == ""
    with pytest.raises(ShapeError):
        evaluate(xs[:1], ps)
