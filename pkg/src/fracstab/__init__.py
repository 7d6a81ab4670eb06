"""Sub-pixel heatmap decoding and temporal stabilization of landmark trajectories."""

__version__ = "0.1.0"

from .baselines import BaselineKind, apply_baseline
from .heatmap import (
    GridSpec,
    HeatmapStack,
    argmax_peak,
    decode_stack,
    fractional_peak,
    load_stack,
    render_heatmaps,
    save_stack,
)
from .metrics import MetricsReport, evaluate, lag_estimate, nrmse, stability_nrmse
from .stabilizer import (
    StabilizerParams,
    StreamState,
    load_params,
    save_params,
    stabilize_frame,
    stabilize_many,
    stabilize_sequence,
)
from .synth import BenchmarkConfig, MotionSpec, NoiseSpec, make_benchmark
from .training import TrainConfig, fit, init_params, total_loss
from .trajectory import TrajectorySequence, load_trajectory, save_trajectory

__all__ = [
    "BaselineKind", "BenchmarkConfig", "GridSpec", "HeatmapStack", "MetricsReport", "MotionSpec",
    "NoiseSpec", "StabilizerParams", "StreamState", "TrainConfig", "TrajectorySequence",
    "apply_baseline", "argmax_peak", "decode_stack", "evaluate", "fit", "fractional_peak",
    "init_params", "lag_estimate", "load_params", "load_stack", "load_trajectory", "make_benchmark",
    "nrmse", "render_heatmaps", "save_params", "save_stack", "save_trajectory", "stabilize_frame",
    "stabilize_many", "stabilize_sequence", "stability_nrmse", "total_loss",
]
