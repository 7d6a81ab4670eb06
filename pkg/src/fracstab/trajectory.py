"""Landmark sequences and their JSON file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FormatError, ShapeError

DEFAULT_FRAME_BOX = (0.0, 0.0, 1024.0, 1024.0)


@dataclass
class TrajectorySequence:
    """Frames of one video as an array of shape ``(T, M, 2)`` in image pixels.

    ``norm_distance`` stands in for the inter-ocular distance used to
    normalise errors; ``frame_box`` is ``(x_min, y_min, x_max, y_max)``.
    """

    frames: np.ndarray
    norm_distance: float = 100.0
    video_id: str = "video"
    frame_box: tuple = DEFAULT_FRAME_BOX
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim == 2 and frames.shape[1] % 2 == 0:
            frames = frames.reshape(frames.shape[0], -1, 2)
        if frames.ndim != 3 or frames.shape[2] != 2 or frames.shape[1] < 1:
            raise ShapeError(f"expected T x M x 2 frames, got shape {frames.shape}")
        self.frames = frames
        self.norm_distance = float(self.norm_distance)
        if not (np.isfinite(self.norm_distance) and self.norm_distance > 0):
            raise ValueError(f"norm_distance must be positive, got {self.norm_distance}")
        self.frame_box = tuple(float(v) for v in self.frame_box)

    @property
    def num_frames(self):
        return self.frames.shape[0]

    @property
    def num_landmarks(self):
        return self.frames.shape[1]

    def flat(self):
        """Frames as ``(T, 2M)`` vectors ordered ``x1, y1, x2, y2, ...``."""
        return self.frames.reshape(self.num_frames, -1)

    def with_frames(self, frames):
        """Copy with new coordinates (any frame count, same landmark count) and the same metadata."""
        frames = np.asarray(frames, dtype=np.float64).reshape(-1, self.num_landmarks, 2)
        return replace(self, frames=frames, meta=dict(self.meta))

    def to_dict(self):
        return {
            "video_id": self.video_id,
            "num_landmarks": self.num_landmarks,
            "norm_distance": self.norm_distance,
            "frame_box": list(self.frame_box),
            "frames": self.frames.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        try:
            frames = np.asarray(doc["frames"], dtype=np.float64)
            seq = cls(
                frames=frames,
                norm_distance=float(doc["norm_distance"]),
                video_id=str(doc["video_id"]),
                frame_box=tuple(doc.get("frame_box", DEFAULT_FRAME_BOX)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"invalid trajectory document: {exc}") from None
        if seq.num_landmarks != int(doc["num_landmarks"]):
            raise FormatError(
                f"num_landmarks={doc['num_landmarks']} but frames carry {seq.num_landmarks}"
            )
        return seq


def check_aligned(a: TrajectorySequence, b: TrajectorySequence):
    if a.frames.shape != b.frames.shape:
        raise ShapeError(
            f"sequences {a.video_id!r} and {b.video_id!r} differ in shape: "
            f"{a.frames.shape} vs {b.frames.shape}"
        )


def dumps(seq: TrajectorySequence) -> str:
    return json.dumps(seq.to_dict(), sort_keys=True)


def save_trajectory(path, seq: TrajectorySequence):
    with open(path, "w") as f:
        f.write(dumps(seq))
        f.write("\n")


def load_trajectory(path) -> TrajectorySequence:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from None
    return TrajectorySequence.from_dict(doc)
