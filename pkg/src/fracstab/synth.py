"""Synthetic ground-truth motion and simulated detector output.

A simulated detector replaces the heatmap network: ground-truth landmarks
are either perturbed directly with Gaussian noise, or pushed through the
heatmap codec (render, add pixel noise, decode) so the output carries the
quantisation behaviour of the chosen decoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .heatmap import GridSpec, decode_stack, render_heatmaps, HeatmapStack
from .trajectory import DEFAULT_FRAME_BOX, TrajectorySequence

MOTION_KINDS = ("static", "ramp", "sinusoid", "blink", "piecewise")

# 7-point face layout in units of the inter-ocular distance:
# eye corners (outer/inner, left then right), nose tip, mouth corners.
FACE7 = np.array([
    [-0.75, 0.0], [-0.25, 0.0], [0.25, 0.0], [0.75, 0.0],
    [0.0, 0.55], [-0.35, 0.95], [0.35, 0.95],
])
EYE_LANDMARKS = (0, 1, 2, 3)


@dataclass
class MotionSpec:
    """Rigid-ish motion applied to a landmark layout.

    Every landmark follows ``layout[m] + gains[m] * d(t)`` where the 2-D
    displacement ``d`` depends on ``kind``:

    * ``static``: zero;
    * ``ramp``: ``velocity * t``;
    * ``sinusoid``: ``amplitude * sin(2 pi t / period + phase)``;
    * ``blink``: vertical raised-cosine pulse from ``rest`` to ``peak`` lasting
      ``duty * period`` frames, repeating every ``period`` frames;
    * ``piecewise``: the ``segments`` one after another, each starting where
      the previous one stopped.
    """

    kind: str = "static"
    frames: int = 100
    M: int = 7
    layout: np.ndarray | None = None
    norm_distance: float = 100.0
    frame_box: tuple = DEFAULT_FRAME_BOX
    velocity: tuple = (0.0, 0.0)
    amplitude: tuple = (0.0, 0.0)
    period: float = 30.0
    phase: float = 0.0
    rest: float = 0.0
    peak: float = 10.0
    duty: float = 0.25
    segments: list = field(default_factory=list)
    gains: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in MOTION_KINDS:
            raise ValueError(f"unknown motion kind {self.kind!r}")
        if self.kind == "piecewise":
            if not self.segments:
                raise ValueError("piecewise motion needs at least one segment")
            self.frames = sum(s.frames for s in self.segments)
        if self.frames < 1:
            raise ValueError("frames must be at least 1")
        if not self.period > 0:
            raise ValueError("period must be positive")
        if not 0 < self.duty <= 1:
            raise ValueError("duty must lie in (0, 1]")
        if not np.all(np.isfinite(self.amplitude)):
            raise ValueError("amplitude must be finite")
        if self.layout is not None:
            self.layout = np.asarray(self.layout, dtype=np.float64).reshape(-1, 2)
            self.M = self.layout.shape[0]


@dataclass
class NoiseSpec:
    coordinate_noise_std: float = 1.0
    heatmap_noise_std: float = 0.0
    outlier_rate: float = 0.0
    outlier_std: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if min(self.coordinate_noise_std, self.heatmap_noise_std, self.outlier_std) < 0:
            raise ValueError("noise standard deviations must be non-negative")
        if not 0.0 <= self.outlier_rate <= 1.0:
            raise ValueError("outlier_rate must lie in [0, 1]")


def displacement(spec: MotionSpec) -> np.ndarray:
    """The ``(frames, 2)`` displacement track of a motion spec."""
    t = np.arange(spec.frames, dtype=np.float64)[:, None]
    if spec.kind == "static":
        return np.zeros((spec.frames, 2))
    if spec.kind == "ramp":
        return t * np.asarray(spec.velocity, dtype=np.float64)
    if spec.kind == "sinusoid":
        return np.asarray(spec.amplitude, dtype=np.float64) * np.sin(2 * np.pi * t / spec.period + spec.phase)
    if spec.kind == "blink":
        cycle = np.mod(t[:, 0], spec.period) / (spec.duty * spec.period)
        pulse = np.where(cycle < 1.0, 0.5 * (1.0 - np.cos(2 * np.pi * cycle)), 0.0)
        d = np.zeros((spec.frames, 2))
        d[:, 1] = spec.rest + (spec.peak - spec.rest) * pulse
        return d
    parts = []
    end = np.zeros(2)
    for seg in spec.segments:
        d = displacement(seg)
        d = d - d[0] + end
        parts.append(d)
        end = d[-1]
    return np.concatenate(parts)


def default_layout(M, norm_distance, center, rng=None):
    if M == 7:
        return center + FACE7 * norm_distance
    rng = rng or np.random.default_rng(0)
    return center + rng.uniform(-0.8, 0.8, size=(M, 2)) * norm_distance


def _default_gains(spec):
    gains = np.ones(spec.M)
    if spec.kind == "blink" and spec.M == 7:
        gains[:] = 0.0
        gains[list(EYE_LANDMARKS)] = 1.0
    return gains


def gen_ground_truth(spec: MotionSpec, seed: int = 0, video_id: str = "video") -> TrajectorySequence:
    """Ground-truth landmarks for ``spec``.

    The seed only matters when ``spec.layout`` is not given: a face layout
    is then placed near the middle of the frame box with a random offset.
    Raises ``ValueError`` naming the first frame that leaves the box.
    """
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = spec.frame_box
    if spec.layout is None:
        center = np.array([(x0 + x1) / 2, (y0 + y1) / 2]) + rng.uniform(-20, 20, size=2)
        layout = default_layout(spec.M, spec.norm_distance, center, rng)
    else:
        layout = spec.layout
    gains = _default_gains(spec) if spec.gains is None else np.asarray(spec.gains, dtype=np.float64)
    d = displacement(spec)
    frames = layout[None, :, :] + gains[None, :, None] * d[:, None, :]
    outside = np.any((frames[..., 0] < x0) | (frames[..., 0] > x1) | (frames[..., 1] < y0) | (frames[..., 1] > y1), axis=1)
    if outside.any():
        raise ValueError(f"motion leaves the frame box at frame {int(np.argmax(outside))}")
    return TrajectorySequence(
        frames, norm_distance=spec.norm_distance, video_id=video_id,
        frame_box=spec.frame_box, meta={"motion": spec.kind},
    )


def corrupt(p_seq: TrajectorySequence, noise: NoiseSpec) -> TrajectorySequence:
    """Simulated detector output: i.i.d. Gaussian noise, wider on outlier frames."""
    rng = np.random.default_rng(noise.seed)
    T = p_seq.num_frames
    outlier = rng.random(T) < noise.outlier_rate
    std = np.where(outlier, noise.outlier_std, noise.coordinate_noise_std)
    eps = rng.standard_normal(p_seq.frames.shape)
    z = p_seq.frames + std[:, None, None] * eps
    return p_seq.with_frames(z)


def pipeline_through_heatmaps(
    p_seq: TrajectorySequence,
    grid: GridSpec,
    mode: str = "fhr",
    heatmap_noise_std: float = 0.0,
    seed: int = 0,
) -> TrajectorySequence:
    """Detector output obtained by rendering, corrupting and decoding heatmaps frame by frame."""
    rng = np.random.default_rng(seed)
    out = np.empty_like(p_seq.frames)
    for t, pts in enumerate(p_seq.frames):
        stack = render_heatmaps(pts, grid, "fractional")
        if heatmap_noise_std > 0:
            stack = HeatmapStack(stack.values + heatmap_noise_std * rng.standard_normal(stack.values.shape), grid)
        out[t] = decode_stack(stack, mode)
    return p_seq.with_frames(out)


# ---------------------------------------------------------------------------
# benchmark suite


class Video(NamedTuple):
    p: TrajectorySequence
    z: TrajectorySequence


@dataclass
class BenchmarkConfig:
    n_train: int = 20
    n_test: int = 10
    frames: int = 300
    M: int = 7
    norm_distance: float = 100.0
    frame_box: tuple = DEFAULT_FRAME_BOX
    motions: tuple = ("ramp", "sinusoid", "blink", "piecewise")
    noise_levels: tuple = (1.0, 2.0)
    outlier_rate: float = 0.0
    outlier_std: float = 8.0
    detector: str = "coords"
    grid_size: int = 128
    grid_scale: float = 8.0
    sigma: float = 3.0
    heatmap_noise_std: float = 0.01

    def grid(self):
        return GridSpec(self.grid_size, self.grid_size, self.grid_scale, self.sigma)


def _unit(rng):
    a = rng.uniform(0, 2 * np.pi)
    return np.array([np.cos(a), np.sin(a)])


def random_motion(kind, frames, cfg: BenchmarkConfig, rng) -> MotionSpec:
    """A randomly parameterised motion of the given kind.

    Ranges mimic talking-head footage: slow drift and sway, blinks, and
    piecewise tracks alternating holds with short fast head turns.
    """
    common = dict(frames=frames, M=cfg.M, norm_distance=cfg.norm_distance, frame_box=cfg.frame_box)
    if kind == "static":
        return MotionSpec("static", **common)
    if kind == "ramp":
        return MotionSpec("ramp", velocity=tuple(rng.uniform(0.2, 0.6) * _unit(rng)), **common)
    if kind == "sinusoid":
        return MotionSpec(
            "sinusoid", amplitude=tuple(rng.uniform(5, 20) * _unit(rng)),
            period=rng.uniform(60, 150), phase=rng.uniform(0, 2 * np.pi), **common,
        )
    if kind == "blink":
        return MotionSpec(
            "blink", peak=rng.uniform(6, 15), period=rng.uniform(40, 90),
            duty=rng.uniform(0.15, 0.3), **common,
        )
    if kind == "piecewise":
        segs, left, i = [], frames, 0
        while left > 0:
            if i % 2 == 0:
                n = min(left, int(rng.integers(30, 70)))
                seg = random_motion("static", n, cfg, rng)
            else:
                n = min(left, int(rng.integers(8, 20)))
                seg = random_motion("ramp", n, cfg, rng)
                seg.velocity = tuple(rng.uniform(1.5, 3.0) * _unit(rng))
            segs.append(seg)
            left -= n
            i += 1
        return MotionSpec("piecewise", segments=segs, **{k: v for k, v in common.items() if k != "frames"})
    raise ValueError(f"unknown motion kind {kind!r}")


def _place(spec: MotionSpec, cfg: BenchmarkConfig, rng):
    """Pick a layout so the whole track stays inside the frame box (with a margin)."""
    d = displacement(spec)
    gains = _default_gains(spec)
    x0, y0, x1, y1 = cfg.frame_box
    margin = 0.1 * (x1 - x0)
    template = default_layout(cfg.M, cfg.norm_distance, np.zeros(2), rng)
    lo = (template[:, None, :] + gains[:, None, None] * d[None]).reshape(-1, 2)
    span_lo, span_hi = lo.min(axis=0), lo.max(axis=0)
    lo_c = np.array([x0, y0]) + margin - span_lo
    hi_c = np.array([x1, y1]) - margin - span_hi
    center = np.where(hi_c > lo_c, lo_c + rng.random(2) * (hi_c - lo_c), (lo_c + hi_c) / 2)
    spec.layout = template + center
    return spec


def make_video(kind, index, cfg: BenchmarkConfig, seed, split) -> Video:
    rng = np.random.default_rng([seed, index, 0 if split == "train" else 1])
    spec = _place(random_motion(kind, cfg.frames, cfg, rng), cfg, rng)
    vid = f"{split}_{index:03d}_{kind}"
    p = gen_ground_truth(spec, seed, video_id=vid)
    level = cfg.noise_levels[index % len(cfg.noise_levels)]
    noise_seed = int(rng.integers(2**31))
    if cfg.detector == "coords":
        z = corrupt(p, NoiseSpec(level, 0.0, cfg.outlier_rate, cfg.outlier_std, noise_seed))
    elif cfg.detector in ("fhr", "chr"):
        z = pipeline_through_heatmaps(p, cfg.grid(), cfg.detector, cfg.heatmap_noise_std, noise_seed)
    else:
        raise ValueError(f"unknown detector {cfg.detector!r}")
    z.meta = {"motion": kind, "noise_std": level}
    p.meta = dict(z.meta)
    return Video(p, z)


def make_benchmark(config: BenchmarkConfig | None = None, seed: int = 0):
    """Fixed-seed train/test suites; motion kinds cycle through ``config.motions``."""
    cfg = config or BenchmarkConfig()
    kinds = cfg.motions
    train = [make_video(kinds[i % len(kinds)], i, cfg, seed, "train") for i in range(cfg.n_train)]
    test = [make_video(kinds[i % len(kinds)], i, cfg, seed, "test") for i in range(cfg.n_test)]
    return train, test
