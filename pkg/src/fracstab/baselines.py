"""Causal reference smoothers for comparison with the stabilizer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trajectory import TrajectorySequence

KINDS = ("moving_average", "first_order", "second_order", "constant_speed")


@dataclass(frozen=True)
class BaselineKind:
    """A smoother and its single parameter.

    ``param`` is the window length for ``moving_average`` and the blend
    coefficient in ``(0, 1]`` for the others.
    """

    name: str
    param: float | None = None

    def __post_init__(self):
        if self.name not in KINDS:
            raise ValueError(f"unknown baseline {self.name!r}; choose from {KINDS}")
        if self.param is None:
            object.__setattr__(self, "param", 5 if self.name == "moving_average" else 0.5)
        if self.name == "moving_average":
            if int(self.param) != self.param or self.param < 1:
                raise ValueError(f"moving_average window must be a positive integer, got {self.param}")
            object.__setattr__(self, "param", int(self.param))
        elif not 0.0 < self.param <= 1.0:
            raise ValueError(f"{self.name} coefficient must lie in (0, 1], got {self.param}")

    @classmethod
    def parse(cls, text: str) -> "BaselineKind":
        """Parse ``"kind"`` or ``"kind:param"``, e.g. ``"moving_average:5"``."""
        name, _, arg = text.partition(":")
        return cls(name.strip(), float(arg) if arg else None)

    def label(self):
        return f"{self.name}:{self.param:g}"


def moving_average(z, window=5):
    """Mean of the last ``window`` observations (fewer during warm-up)."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    for t in range(z.shape[0]):
        out[t] = z[max(0, t - window + 1):t + 1].mean(axis=0)
    return out


def first_order(z, a=0.5):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    out[0] = z[0]
    for t in range(1, z.shape[0]):
        out[t] = a * z[t] + (1 - a) * out[t - 1]
    return out


def second_order(z, a=0.5):
    """Double exponential smoothing (level + trend, both with coefficient ``a``)."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    level = z[0]
    trend = np.zeros_like(z[0])
    out[0] = level
    for t in range(1, z.shape[0]):
        prev = level
        level = a * z[t] + (1 - a) * (level + trend)
        trend = a * (level - prev) + (1 - a) * trend
        out[t] = level
    return out


def constant_speed(z, a=0.5):
    """Blend each observation with the constant-velocity extrapolation of the last two outputs."""
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    out[0] = z[0]
    for t in range(1, z.shape[0]):
        pred = out[t - 1] if t == 1 else 2 * out[t - 1] - out[t - 2]
        out[t] = a * z[t] + (1 - a) * pred
    return out


_FILTERS = {
    "moving_average": lambda z, p: moving_average(z, int(p)),
    "first_order": first_order,
    "second_order": second_order,
    "constant_speed": constant_speed,
}


def apply_baseline(kind: BaselineKind | str, z_seq: TrajectorySequence) -> TrajectorySequence:
    if isinstance(kind, str):
        kind = BaselineKind.parse(kind)
    if z_seq.num_frames < 1:
        raise ValueError("baseline needs at least one frame")
    out = _FILTERS[kind.name](z_seq.flat(), kind.param)
    return z_seq.with_frames(out)
