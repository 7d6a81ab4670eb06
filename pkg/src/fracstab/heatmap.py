"""Gaussian heatmap encoding and sub-pixel peak decoding.

Coordinates follow the image convention: ``x`` is the column index and ``y``
the row index, so a heatmap array has shape ``(height, width)`` and the
value at coordinate ``(x, y)`` is ``values[y, x]``.  Landmark coordinates
live in image pixels; ``GridSpec.scale`` converts them to heatmap pixels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import FormatError, InvalidHeatmapError, OutOfDomainError, ShapeError

LOG_FLOOR = 1e-12

MAGIC = b"FHRS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIIIdd")


@dataclass(frozen=True)
class GridSpec:
    """Heatmap geometry: size in heatmap pixels, image/heatmap ratio, Gaussian width."""

    width: int
    height: int
    scale: float = 1.0
    sigma: float = 3.0

    def __post_init__(self):
        if self.width < 4 or self.height < 4:
            raise ValueError(f"grid must be at least 4x4, got {self.width}x{self.height}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")


@dataclass
class HeatmapStack:
    """``M`` heatmaps of one frame, shape ``(M, height, width)``."""

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or self.values.shape[1:] != (self.grid.height, self.grid.width):
            raise ShapeError(
                f"stack shape {self.values.shape} does not match grid "
                f"{self.grid.height}x{self.grid.width}"
            )

    def __len__(self):
        return self.values.shape[0]


class Peak(NamedTuple):
    x: float
    y: float
    clamped: bool


def round_half_away(a):
    a = np.asarray(a, dtype=np.float64)
    return np.sign(a) * np.floor(np.abs(a) + 0.5)


def _as_landmarks(landmarks):
    pts = np.asarray(landmarks, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 2)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
        raise ShapeError(f"expected M x 2 landmark array, got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("landmark coordinates must be finite")
    return pts


def heatmap_centers(landmarks, grid: GridSpec, mode: str = "fractional") -> np.ndarray:
    """Gaussian centers in heatmap pixels for the given landmarks.

    Raises ``OutOfDomainError`` for the first landmark that falls outside
    ``[0, width - 1] x [0, height - 1]`` after division by ``grid.scale``.
    """
    pts = _as_landmarks(landmarks) / grid.scale
    hi = np.array([grid.width - 1, grid.height - 1], dtype=np.float64)
    bad = np.flatnonzero(np.any((pts < 0) | (pts > hi), axis=1))
    if bad.size:
        raise OutOfDomainError(int(bad[0]), pts[bad[0]], hi)
    if mode == "fractional":
        return pts
    if mode == "rounded":
        return round_half_away(pts)
    raise ValueError(f"unknown render mode {mode!r}")


def render_heatmaps(landmarks, grid: GridSpec, mode: str = "fractional") -> HeatmapStack:
    """Render one Gaussian heatmap per landmark.

    In ``"fractional"`` mode the Gaussian is centered on the exact scaled
    coordinate; ``"rounded"`` snaps the center to the nearest grid node
    first (half away from zero), which is the conventional encoding.
    """
    centers = heatmap_centers(landmarks, grid, mode)
    cx = np.arange(grid.width, dtype=np.float64)
    cy = np.arange(grid.height, dtype=np.float64)
    dx2 = (cx[None, None, :] - centers[:, 0, None, None]) ** 2
    dy2 = (cy[None, :, None] - centers[:, 1, None, None]) ** 2
    values = np.exp(-(dx2 + dy2) / (2.0 * grid.sigma**2))
    return HeatmapStack(values, grid)


def _check_maps(values):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 2:
        values = values[None]
    if values.ndim != 3 or values.shape[1] == 0 or values.shape[2] == 0:
        raise InvalidHeatmapError(f"heatmap must be a non-empty 2-D grid, got shape {values.shape}")
    if np.isnan(values).any():
        raise InvalidHeatmapError("heatmap contains NaN")
    return values


def _argmax_rc(values):
    n, h, w = values.shape
    flat = np.argmax(values.reshape(n, h * w), axis=1)
    return flat // w, flat % w


def locate_peaks(values, sigma=None, offsets=None):
    """Vectorised peak search over a stack of maps.

    With ``sigma=None`` this is the integer argmax.  Otherwise each argmax is
    refined with the three-sample closed form: the log-ratio of the peak
    value to its neighbour along each axis pins down the Gaussian center
    exactly when the map is a noiseless Gaussian of width ``sigma``.

    ``offsets`` forces the neighbour direction, e.g. ``(-1, 1)``; by default
    the neighbour is at ``+1`` unless the peak sits on the right/bottom edge.

    Returns ``(coords, clamped)`` with ``coords`` of shape ``(N, 2)`` in
    ``(x, y)`` order and ``clamped`` a boolean array flagging maps where a
    sampled value was non-positive and had to be floored before the log.
    """
    values = _check_maps(values)
    n, h, w = values.shape
    rows, cols = _argmax_rc(values)
    if sigma is None:
        coords = np.stack([cols, rows], axis=1).astype(np.float64)
        return coords, np.zeros(n, dtype=bool)
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")

    if offsets is None:
        dx = np.where(cols < w - 1, 1, -1)
        dy = np.where(rows < h - 1, 1, -1)
    else:
        if not (abs(offsets[0]) == 1 and abs(offsets[1]) == 1):
            raise ValueError(f"offsets must be +-1 per axis, got {offsets}")
        dx = np.full(n, int(offsets[0]))
        dy = np.full(n, int(offsets[1]))
        if np.any((cols + dx < 0) | (cols + dx >= w) | (rows + dy < 0) | (rows + dy >= h)):
            raise InvalidHeatmapError(f"sampling offset {tuple(offsets)} leaves the grid")

    idx = np.arange(n)
    h0 = values[idx, rows, cols]
    h1 = values[idx, rows, cols + dx]
    h2 = values[idx, rows + dy, cols]
    samples = np.stack([h0, h1, h2], axis=1)
    clamped = np.any(samples <= 0, axis=1)
    logs = np.log(np.maximum(samples, LOG_FLOOR))

    zx, zy = cols.astype(np.float64), rows.astype(np.float64)
    x1, y1 = zx + dx, zy
    x2, y2 = zx, zy + dy
    s2 = sigma**2
    # The half-square terms are exact in double precision for integer nodes;
    # dividing by the offset folds the sign back for edge (mirrored) samples.
    x = (s2 * (logs[:, 1] - logs[:, 0]) - 0.5 * (zx**2 - x1**2 + zy**2 - y1**2)) / dx
    y = (s2 * (logs[:, 2] - logs[:, 0]) - 0.5 * (zx**2 - x2**2 + zy**2 - y2**2)) / dy
    return np.stack([x, y], axis=1), clamped


def argmax_peak(h) -> tuple[int, int]:
    """Integer ``(x, y)`` of the maximum; ties go to the first in row-major order."""
    values = _check_maps(h)
    if values.shape[0] != 1:
        raise ShapeError("argmax_peak takes a single heatmap")
    rows, cols = _argmax_rc(values)
    return int(cols[0]), int(rows[0])


def fractional_peak(h, sigma: float, offsets=None) -> Peak:
    values = _check_maps(h)
    if values.shape[0] != 1:
        raise ShapeError("fractional_peak takes a single heatmap")
    coords, clamped = locate_peaks(values, sigma, offsets)
    return Peak(float(coords[0, 0]), float(coords[0, 1]), bool(clamped[0]))


def decode_stack(stack: HeatmapStack, mode: str = "fhr") -> np.ndarray:
    """Decode every map of ``stack`` to image-pixel landmarks, shape ``(M, 2)``.

    ``"fhr"`` uses the fractional three-sample peak, ``"chr"`` the integer argmax.
    """
    if mode == "fhr":
        coords, _ = locate_peaks(stack.values, stack.grid.sigma)
    elif mode == "chr":
        coords, _ = locate_peaks(stack.values, None)
    else:
        raise ValueError(f"unknown decode mode {mode!r}")
    return coords * stack.grid.scale


def stack_to_bytes(stack: HeatmapStack) -> bytes:
    g = stack.grid
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, g.width, g.height, len(stack), g.sigma, g.scale)
    return header + np.ascontiguousarray(stack.values, dtype="<f8").tobytes()


def stack_from_bytes(data: bytes) -> HeatmapStack:
    if len(data) < _HEADER.size:
        raise FormatError(f"truncated header: {len(data)} bytes, need {_HEADER.size}")
    magic, version, width, height, num_maps, sigma, scale = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    expected = _HEADER.size + 8 * num_maps * height * width
    if len(data) != expected:
        raise FormatError(
            f"payload size mismatch: file has {len(data)} bytes, header at offset "
            f"{_HEADER.size} implies {expected}"
        )
    try:
        grid = GridSpec(width, height, scale, sigma)
    except ValueError as exc:
        raise FormatError(f"invalid header fields: {exc}") from None
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(num_maps, height, width)
    return HeatmapStack(values.astype(np.float64), grid)


def save_stack(path, stack: HeatmapStack):
    with open(path, "wb") as f:
        f.write(stack_to_bytes(stack))


def load_stack(path) -> HeatmapStack:
    with open(path, "rb") as f:
        return stack_from_bytes(f.read())
