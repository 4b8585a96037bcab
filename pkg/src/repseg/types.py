"""Domain types shared by both parsers and the evaluation harness."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Literal, Optional, Sequence

import numpy as np

from .errors import ValidationError

Source = Literal["manual", "landmark", "tsm"]
SOURCES = ("manual", "landmark", "tsm")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FrameSample:
    index: int
    landmarks: np.ndarray  # (L, 2) pixel coordinates


@dataclass(frozen=True)
class FrameSeries:
    """Per-frame landmark coordinates, stored as an (N, L, 2) array.

    Frames are implicitly indexed 0..N-1, so the no-gaps invariant holds by
    construction.
    """

    fps: float
    coords: np.ndarray

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim != 3 or coords.shape[2] != 2:
            raise ValidationError(f"coords must have shape (N, L, 2), got {coords.shape}")
        if coords.shape[1] < 2:
            raise ValidationError("at least 2 landmarks per frame are required")
        if not np.all(np.isfinite(coords)):
            bad = int(np.argwhere(~np.isfinite(coords))[0][0])
            raise ValidationError(f"non-finite landmark coordinate in frame {bad}")
        if not (np.isfinite(self.fps) and self.fps > 0):
            raise ValidationError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "coords", _frozen(coords))
        object.__setattr__(self, "fps", float(self.fps))

    def __len__(self) -> int:
        return self.coords.shape[0]

    @property
    def n_landmarks(self) -> int:
        return self.coords.shape[1]

    @property
    def frames(self) -> Iterator[FrameSample]:
        for i, lm in enumerate(self.coords):
            yield FrameSample(i, lm)

    @classmethod
    def from_frames(cls, fps: float, frames: Sequence[FrameSample]) -> "FrameSeries":
        for expect, fr in enumerate(frames):
            if fr.index != expect:
                raise ValidationError(f"frame indices must be consecutive from 0; got {fr.index} at position {expect}")
        sizes = {np.shape(fr.landmarks) for fr in frames}
        if len(sizes) > 1:
            raise ValidationError(f"inconsistent landmark counts: {sorted(s[0] for s in sizes)}")
        return cls(fps, np.stack([np.asarray(fr.landmarks, dtype=float) for fr in frames]))


@dataclass(frozen=True)
class FeatureSignal:
    fps: float
    values: np.ndarray
    label: str = "signal"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size == 0:
            raise ValidationError("signal is empty")
        if not np.all(np.isfinite(values)):
            raise ValidationError(f"non-finite signal value at frame {int(np.argwhere(~np.isfinite(values))[0][0])}")
        if not (np.isfinite(self.fps) and self.fps > 0):
            raise ValidationError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "fps", float(self.fps))

    def __len__(self) -> int:
        return self.values.size

    def with_values(self, values, label: Optional[str] = None) -> "FeatureSignal":
        return FeatureSignal(self.fps, values, self.label if label is None else label)


@dataclass(frozen=True, order=True)
class Segment:
    """Half-open frame interval ``[start, end)``."""

    start: int
    end: int

    def __post_init__(self):
        if int(self.start) != self.start or int(self.end) != self.end:
            raise ValidationError(f"segment bounds must be integers: {self.start}, {self.end}")
        object.__setattr__(self, "start", int(self.start))
        object.__setattr__(self, "end", int(self.end))
        if not 0 <= self.start < self.end:
            raise ValidationError(f"invalid segment [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    def shifted(self, k: int) -> "Segment":
        return Segment(self.start + k, self.end + k)


@dataclass(frozen=True)
class Parsing:
    segments: tuple
    n_frames: int
    source: Source = "manual"

    def __post_init__(self):
        segs = tuple(s if isinstance(s, Segment) else Segment(*s) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        if self.source not in SOURCES:
            raise ValidationError(f"unknown parsing source {self.source!r}")
        if self.n_frames < 0:
            raise ValidationError("n_frames must be non-negative")
        problems = []
        for k, seg in enumerate(segs):
            if seg.end > self.n_frames:
                problems.append(f"segment {k} [{seg.start}, {seg.end}) exceeds n_frames={self.n_frames}")
            if k and seg.start < segs[k - 1].end:
                if seg.start < segs[k - 1].start:
                    problems.append(f"segment {k} starts before segment {k - 1}")
                else:
                    problems.append(f"segment {k} [{seg.start}, {seg.end}) overlaps segment {k - 1} "
                                    f"[{segs[k - 1].start}, {segs[k - 1].end})")
        if problems:
            raise ValidationError("; ".join(problems))

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    @classmethod
    def from_pairs(cls, pairs, n_frames: int, source: Source = "manual") -> "Parsing":
        """Sort ``(start, end)`` pairs, then validate them."""
        segs = sorted(Segment(int(a), int(b)) for a, b in pairs)
        return cls(tuple(segs), int(n_frames), source)

    def durations(self, fps: float) -> np.ndarray:
        return np.array([len(s) for s in self.segments], dtype=float) / fps


@dataclass(frozen=True)
class RoiBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    margin: float = 0.0

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValidationError(f"degenerate ROI box {self}")

    def contains(self, points: np.ndarray) -> bool:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return bool(np.all((pts[:, 0] >= self.x_min) & (pts[:, 0] <= self.x_max)
                           & (pts[:, 1] >= self.y_min) & (pts[:, 1] <= self.y_max)))


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of a synthetic quasi-periodic aperture signal.

    ``noise_snr_db=None`` means noise-free. ``alt_amplitude`` scales every
    second pulse; values below 1 build the alternating-amplitude trap.
    """

    n_reps: int = 5
    base_period: float = 50.0
    period_jitter: float = 0.0
    noise_snr_db: Optional[float] = None
    lead_in: int = 0
    lead_out: int = 0
    seed: int = 0
    fps: float = 50.0
    alt_amplitude: float = 1.0

    def __post_init__(self):
        if self.n_reps < 1:
            raise ValidationError("n_reps must be >= 1")
        if self.base_period < 4:
            raise ValidationError("base_period must be >= 4 frames")
        if not 0 <= self.period_jitter < 1:
            raise ValidationError("period_jitter must lie in [0, 1)")
        if self.lead_in < 0 or self.lead_out < 0:
            raise ValidationError("lead_in/lead_out must be non-negative")
        if self.alt_amplitude <= 0:
            raise ValidationError("alt_amplitude must be positive")


@dataclass(frozen=True)
class RunManifest:
    command: str
    inputs: tuple
    engine: Optional[str]
    config: dict = field(default_factory=dict)
    tool_version: str = ""
    seed: Optional[int] = None
    outputs: dict = field(default_factory=dict)
