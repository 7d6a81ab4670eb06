"""Accuracy and stability metrics for landmark sequences.

Errors are normalised by each sequence's ``norm_distance`` (the stand-in for
the inter-ocular distance) and reported in percent.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InsufficientDataError, ShapeError
from .trajectory import TrajectorySequence

FAILURE_THRESHOLD = 8.0
MIN_MOTION = 1e-6
MAX_LAG = 5


def _frames(seq):
    if isinstance(seq, TrajectorySequence):
        return seq.frames
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr.reshape(arr.shape[0], -1, 2)
    return arr


def _pair(x_seq, p_seq):
    x, p = _frames(x_seq), _frames(p_seq)
    if x.shape != p.shape:
        raise ShapeError(f"prediction {x.shape} and ground truth {p.shape} are not aligned")
    return x, p


def _norm(p_seq, norm_distance):
    if norm_distance is None:
        norm_distance = getattr(p_seq, "norm_distance", None)
    if norm_distance is None or not norm_distance > 0:
        raise ValueError(f"normalisation distance must be positive, got {norm_distance}")
    return float(norm_distance)


def per_frame_nrmse(x_seq, p_seq, norm_distance=None) -> np.ndarray:
    """Mean landmark error of each frame as a percentage of the normalisation distance."""
    x, p = _pair(x_seq, p_seq)
    d = _norm(p_seq, norm_distance)
    return np.linalg.norm(x - p, axis=2).mean(axis=1) / d * 100.0


def nrmse(x_seq, p_seq, norm_distance=None) -> float:
    return float(per_frame_nrmse(x_seq, p_seq, norm_distance).mean())


def ced_auc_failure(per_image_nrmse, threshold=FAILURE_THRESHOLD):
    """Area under the cumulative error curve up to ``threshold`` and the failure rate.

    The empirical CED is a step function, so its integral over
    ``[0, threshold]`` is exactly ``mean(max(0, threshold - e))``.
    """
    e = np.asarray(per_image_nrmse, dtype=np.float64).ravel()
    if e.size == 0:
        raise InsufficientDataError("no errors to summarise")
    auc = np.mean(np.clip(threshold - e, 0.0, threshold)) / threshold * 100.0
    failure = np.mean(e > threshold) * 100.0
    return float(auc), float(failure)


def per_frame_stability(x_seq, p_seq, norm_distance=None) -> np.ndarray:
    x, p = _pair(x_seq, p_seq)
    if x.shape[0] < 2:
        raise InsufficientDataError("stability needs at least two frames")
    return per_frame_nrmse(np.diff(x, axis=0), np.diff(p, axis=0), _norm(p_seq, norm_distance))


def stability_nrmse(x_seq, p_seq, norm_distance=None) -> float:
    """NRMSE between frame-to-frame motions of prediction and ground truth."""
    return float(per_frame_stability(x_seq, p_seq, norm_distance).mean())


def _stability_parts(x, p):
    dx, dp = np.diff(x, axis=0), np.diff(p, axis=0)
    sq = np.sum((dx - dp) ** 2, axis=2)
    ang_x = np.arctan2(dx[..., 1], dx[..., 0])
    ang_p = np.arctan2(dp[..., 1], dp[..., 0])
    diff = np.abs((ang_x - ang_p + np.pi) % (2 * np.pi) - np.pi)
    valid = (np.linalg.norm(dx, axis=2) >= MIN_MOTION) & (np.linalg.norm(dp, axis=2) >= MIN_MOTION)
    return sq, np.degrees(diff), valid


def stability_decomposition(x_seq, p_seq):
    """Per-landmark mean squared motion error and mean absolute direction error (degrees).

    Frames where either motion is shorter than ``MIN_MOTION`` pixels are
    skipped for the direction error.
    """
    x, p = _pair(x_seq, p_seq)
    if x.shape[0] < 2:
        raise InsufficientDataError("stability needs at least two frames")
    sq, ang, valid = _stability_parts(x, p)
    counts = valid.sum(axis=0)
    orient = np.where(counts > 0, np.where(valid, ang, 0.0).sum(axis=0) / np.maximum(counts, 1), 0.0)
    return sq.mean(axis=0), orient


def lag_estimate(x_seq, p_seq, max_lag=MAX_LAG) -> float:
    """Delay in frames of ``x`` behind ``p``.

    The integer shift ``s`` in ``[0, max_lag]`` minimising the mean squared
    distance between ``x(t)`` and ``p(t - s)`` is found first, then refined by
    fitting ``x(t)`` as a linear interpolation between neighbouring shifted
    copies of ``p``, which is exact for fractional delays of linear motion.
    """
    x, p = _pair(x_seq, p_seq)
    T = x.shape[0]
    if T < max_lag + 3:
        raise InsufficientDataError(f"lag estimate needs at least {max_lag + 3} frames, got {T}")
    x = x.reshape(T, -1)
    p = p.reshape(T, -1)
    if np.ptp(p, axis=0).max() == 0:
        return 0.0
    window = slice(max_lag, T)
    target = x[window]

    def shifted(s):
        return p[max_lag - s:T - s]

    errs = np.array([np.mean(np.sum((target - shifted(s)) ** 2, axis=1)) for s in range(max_lag + 1)])
    s = int(np.argmin(errs))

    best_lag, best_err = float(s), errs[s]
    for lo in (s, s - 1):
        hi = lo + 1
        if lo < 0 or hi > max_lag:
            continue
        base, other = shifted(lo), shifted(hi)
        w = other - base
        ww = np.sum(w * w)
        if ww == 0:
            continue
        f = float(np.clip(np.sum(w * (target - base)) / ww, 0.0, 1.0))
        err = np.mean(np.sum((target - base - f * w) ** 2, axis=1))
        if err < best_err:
            best_lag, best_err = lo + f, err
    return best_lag


@dataclass
class MetricsReport:
    method: str
    nrmse_percent: float
    auc_percent: float
    failure_rate_percent: float
    stability_nrmse_percent: float
    per_landmark_magnitude: list
    per_landmark_orientation_deg: list
    lag_frames: float
    num_videos: int
    num_frames: int

    def to_dict(self):
        return asdict(self)


def evaluate(x_seqs, p_seqs, method="method", threshold=FAILURE_THRESHOLD):
    """Score a set of predicted sequences against ground truth.

    Returns ``(report, rows)`` where ``rows`` holds per-frame values
    ``(video_id, frame, nrmse, stability)``; stability is ``None`` on the
    first frame of each video.  Frame-level quantities are pooled across
    videos; the lag is averaged over videos long enough to measure it.
    """
    if len(x_seqs) != len(p_seqs) or not p_seqs:
        raise ShapeError("need equal, non-zero numbers of predicted and ground-truth sequences")
    frame_err, stab, rows = [], [], []
    sq_all, ang_all, valid_all, lags = [], [], [], []
    for x_seq, p_seq in zip(x_seqs, p_seqs):
        x, p = _pair(x_seq, p_seq)
        fe = per_frame_nrmse(x, p, _norm(p_seq, None))
        frame_err.append(fe)
        st = per_frame_stability(x, p, p_seq.norm_distance) if x.shape[0] >= 2 else np.zeros(0)
        stab.append(st)
        vid = getattr(p_seq, "video_id", str(len(rows)))
        for t in range(x.shape[0]):
            rows.append((vid, t, float(fe[t]), float(st[t - 1]) if t >= 1 else None))
        if x.shape[0] >= 2:
            sq, ang, valid = _stability_parts(x, p)
            sq_all.append(sq)
            ang_all.append(ang)
            valid_all.append(valid)
        if x.shape[0] >= MAX_LAG + 3:
            lags.append(lag_estimate(x, p))

    frame_err = np.concatenate(frame_err)
    stab = np.concatenate(stab)
    auc, failure = ced_auc_failure(frame_err, threshold)
    if sq_all:
        sq, ang, valid = (np.concatenate(a) for a in (sq_all, ang_all, valid_all))
        magnitude = sq.mean(axis=0)
        counts = valid.sum(axis=0)
        orient = np.where(valid, ang, 0.0).sum(axis=0) / np.maximum(counts, 1)
    else:
        M = _frames(p_seqs[0]).shape[1]
        magnitude = orient = np.zeros(M)
    report = MetricsReport(
        method=method,
        nrmse_percent=float(frame_err.mean()),
        auc_percent=auc,
        failure_rate_percent=failure,
        stability_nrmse_percent=float(stab.mean()) if stab.size else 0.0,
        per_landmark_magnitude=[float(v) for v in magnitude],
        per_landmark_orientation_deg=[float(v) for v in orient],
        lag_frames=float(np.mean(lags)) if lags else 0.0,
        num_videos=len(p_seqs),
        num_frames=int(frame_err.size),
    )
    return report, rows


def write_report(path, report: MetricsReport):
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, sort_keys=True, indent=1)
        f.write("\n")


def write_frame_csv(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["video_id", "frame", "nrmse", "stability"])
        for vid, t, e, s in rows:
            w.writerow([vid, t, repr(e), "" if s is None else repr(s)])
