"""
What the metrics measure
========================

Accuracy (NRMSE) compares positions; stability compares frame-to-frame
motion.  A constant offset costs accuracy but no stability, while jitter
around the truth costs both.  Lag is reported in frames.
"""

import numpy as np

from fracstab import TrajectorySequence, evaluate

t = np.arange(100.0)
truth = TrajectorySequence(np.stack([300 + 0.5 * t, 400 + 0 * t], axis=1)[:, None, :], norm_distance=100.0)
rng = np.random.default_rng(3)

cases = {
    "offset by 3 px": truth.frames + np.array([3.0, 0.0]),
    "jitter 1 px": truth.frames + rng.normal(0, 1.0, truth.frames.shape),
    "two frames late": np.concatenate([truth.frames[:2], truth.frames[:-2]]),
}
for name, frames in cases.items():
    report, _ = evaluate([truth.with_frames(frames)], [truth], method=name)
    print(f"{name:<16} nrmse {report.nrmse_percent:5.2f}%  stability {report.stability_nrmse_percent:5.2f}%"
          f"  lag {report.lag_frames:4.2f}  AUC@8% {report.auc_percent:5.1f}")
