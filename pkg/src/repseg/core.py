"""Series-level helpers: ROI geometry and input-frame striding."""

from __future__ import annotations

from typing import Iterable, TypeVar, Union

import numpy as np

from .types import FeatureSignal, FrameSeries, RoiBox

Series = TypeVar("Series", FrameSeries, FeatureSignal)

# 0-based iBUG-68 indices of the lower face: jaw line 3..13 plus the mouth.
LOWER_FACE_LANDMARKS = tuple(range(3, 14)) + tuple(range(48, 68))


def compute_roi(series: FrameSeries, landmark_subset: Iterable[int], margin: float = 0.0) -> RoiBox:
    """Fixed bounding box over the landmark subset in every frame.

    The box is the union of per-frame boxes, grown by ``margin`` pixels on each
    side, so it never moves across the recording.
    """
    idx = sorted(set(int(i) for i in landmark_subset))
    if not idx:
        raise ValueError("landmark_subset must not be empty")
    if idx[0] < 0 or idx[-1] >= series.n_landmarks:
        raise ValueError(f"landmark indices must lie in [0, {series.n_landmarks})")
    if margin < 0:
        raise ValueError("margin must be non-negative")
    pts = series.coords[:, idx, :]
    lo = pts.min(axis=(0, 1)) - margin
    hi = pts.max(axis=(0, 1)) + margin
    return RoiBox(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]), float(margin))


def stride_series(series: Series, stride: int) -> Series:
    """Keep every ``stride``-th frame starting at frame 0; fps drops accordingly.

    Strided frame j corresponds to original frame ``j * stride``.
    """
    if int(stride) != stride or stride < 1:
        raise ValueError(f"stride must be a positive integer, got {stride}")
    stride = int(stride)
    if stride == 1:
        return series
    if isinstance(series, FrameSeries):
        return FrameSeries(series.fps / stride, series.coords[::stride])
    return FeatureSignal(series.fps / stride, series.values[::stride], series.label)


def series_length(series: Union[FrameSeries, FeatureSignal]) -> int:
    return len(series)
