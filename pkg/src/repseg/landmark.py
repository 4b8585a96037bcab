"""Landmark baseline parser: lip aperture, Butterworth smoothing, minima.

The aperture signal is the vertical distance between the mid upper and mid
lower vermilion border landmarks. It is smoothed with a zero-phase low-pass
Butterworth filter and every surviving local minimum becomes a repetition
boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InputTooShortError
from .types import FeatureSignal, FrameSeries, Parsing

# iBUG-68 landmarks 52 and 58 counted from 1, i.e. mid upper / mid lower lip.
UPPER_LIP_IDX = 51
LOWER_LIP_IDX = 57

TASK_CUTOFFS = {"open": 0.03, "bbp": 0.02}


@dataclass(frozen=True)
class IirFilter:
    b: np.ndarray
    a: np.ndarray
    order: int
    cutoff_norm: float

    def __post_init__(self):
        for name in ("b", "a"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def poles(self) -> np.ndarray:
        return np.roots(self.a)

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0))

    def freq_response(self, w_norm) -> np.ndarray:
        """Complex response at frequencies given as fractions of Nyquist."""
        z = np.exp(-1j * np.pi * np.asarray(w_norm, dtype=float))
        return np.polyval(self.b[::-1], z) / np.polyval(self.a[::-1], z)


@dataclass(frozen=True)
class MinimaConfig:
    min_separation_s: float = 0.5
    min_prominence_frac: float = 0.05

    def __post_init__(self):
        if not self.min_separation_s > 0:
            raise ValueError("min_separation_s must be positive")
        if not 0 <= self.min_prominence_frac < 1:
            raise ValueError("min_prominence_frac must lie in [0, 1)")


def lip_distance(series: FrameSeries, upper_idx: int = UPPER_LIP_IDX,
                 lower_idx: int = LOWER_LIP_IDX) -> FeatureSignal:
    """Per-frame |y_lower - y_upper| in pixels; x is ignored."""
    n = series.n_landmarks
    for idx in (upper_idx, lower_idx):
        if not 0 <= idx < n:
            raise ValueError(f"landmark index {idx} out of range for {n} landmarks")
    y = series.coords[:, :, 1]
    return FeatureSignal(series.fps, np.abs(y[:, lower_idx] - y[:, upper_idx]), "lip_aperture")


def butterworth_lowpass(order: int, cutoff_norm: float) -> IirFilter:
    """Digital Butterworth low-pass designed through the bilinear transform.

    Analog prototype poles sit on the left half of the unit circle, are scaled
    to the prewarped cutoff and mapped with z = (2fs + s) / (2fs - s); all n
    zeros land at z = -1. ``cutoff_norm`` is a fraction of Nyquist (fs = 2).
    """
    if int(order) != order or not 1 <= order <= 8:
        raise ValueError(f"order must be an integer in [1, 8], got {order}")
    if not 0 < cutoff_norm < 1:
        raise ValueError(f"cutoff_norm must lie in (0, 1), got {cutoff_norm}")
    order = int(order)
    fs = 2.0
    warped = 2.0 * fs * np.tan(np.pi * cutoff_norm / fs)
    k = np.arange(1, order + 1)
    analog = warped * np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))
    digital = (2 * fs + analog) / (2 * fs - analog)
    a = np.real(np.poly(digital))
    # bilinear gain of the all-pole prototype; gives unit gain at DC without
    # the cancellation in sum(a) at low cutoffs
    gain = np.real(warped ** order / np.prod(2 * fs - analog))
    b = gain * np.real(np.poly(-np.ones(order)))
    return IirFilter(b, a, order, float(cutoff_norm))


def lfilter(b: np.ndarray, a: np.ndarray, x: np.ndarray, zi: Optional[np.ndarray] = None):
    """Direct-form II transposed IIR filter; returns (y, final_state)."""
    b = np.asarray(b, dtype=float) / a[0]
    a = np.asarray(a, dtype=float) / a[0]
    n = max(a.size, b.size) - 1
    b = np.pad(b, (0, n + 1 - b.size))
    a = np.pad(a, (0, n + 1 - a.size))
    z = np.zeros(n) if zi is None else np.array(zi, dtype=float)
    y = np.empty(len(x))
    b0, bs, as_ = b[0], b[1:].tolist(), a[1:].tolist()
    zs = z.tolist()
    for i, xi in enumerate(np.asarray(x, dtype=float).tolist()):
        yi = b0 * xi + zs[0]
        for j in range(n - 1):
            zs[j] = bs[j] * xi + zs[j + 1] - as_[j] * yi
        zs[n - 1] = bs[n - 1] * xi - as_[n - 1] * yi
        y[i] = yi
    return y, np.array(zs)


def lfilter_zi(b: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Steady-state initial conditions for a unit step input."""
    b = np.asarray(b, dtype=float) / a[0]
    a = np.asarray(a, dtype=float) / a[0]
    n = a.size - 1
    companion = np.zeros((n, n))
    companion[0, :] = -a[1:]
    companion[1:, :-1] = np.eye(n - 1)
    return np.linalg.solve(np.eye(n) - companion.T, b[1:] - a[1:] * b[0])


def _fwd_bwd(b, a, zi, x):
    y, _ = lfilter(b, a, x, zi * x[0])
    y = y[::-1]
    y, _ = lfilter(b, a, y, zi * y[0])
    return y[::-1]


def filtfilt(filt: IirFilter, signal: FeatureSignal) -> FeatureSignal:
    """Zero-phase forward-backward filtering with odd-reflection padding.

    Pads 3 * (order + 1) frames at each end, runs the filter forward then
    backward and, separately, backward then forward, and averages the two so
    the result is exactly time-reversal equivariant. The effective magnitude
    response is |H|^2.
    """
    x = signal.values
    padlen = 3 * (filt.order + 1)
    if x.size <= padlen:
        raise InputTooShortError(f"signal has {x.size} samples; filtfilt needs more than {padlen}")
    left = 2 * x[0] - x[padlen:0:-1]
    right = 2 * x[-1] - x[-2:-padlen - 2:-1]
    xp = np.concatenate([left, x, right])
    zi = lfilter_zi(filt.b, filt.a)
    y = 0.5 * (_fwd_bwd(filt.b, filt.a, zi, xp) + _fwd_bwd(filt.b, filt.a, zi, xp[::-1])[::-1])
    return signal.with_values(y[padlen:-padlen])


def local_minima(values: np.ndarray) -> np.ndarray:
    """Strict interior minima; a flat-bottomed minimum reports its leftmost frame."""
    v = np.asarray(values, dtype=float)
    out = []
    i, n = 1, v.size
    while i < n - 1:
        if v[i] < v[i - 1]:
            j = i
            while j + 1 < n and v[j + 1] == v[i]:
                j += 1
            if j + 1 < n and v[j + 1] > v[i]:
                out.append(i)
            i = j + 1
        else:
            i += 1
    return np.array(out, dtype=int)


def minimum_prominence(values: np.ndarray, i: int) -> float:
    """Topographic prominence of the minimum at ``i``.

    On each side, walk outwards until a strictly lower sample appears and
    record the highest value passed. Only sides that reach lower ground bound
    the prominence (the smaller such climb wins); if neither side does, the
    minimum is the global one and the larger climb is used.
    """
    v = np.asarray(values, dtype=float)
    vi = v[i]
    climbs = []
    fallback = 0.0
    for side in (v[i::-1], v[i:]):
        lower = np.flatnonzero(side < vi)
        stop = lower[0] if lower.size else side.size
        climb = side[:stop].max() - vi
        if lower.size:
            climbs.append(climb)
        fallback = max(fallback, climb)
    return float(min(climbs)) if climbs else float(fallback)


def find_minima(signal: FeatureSignal, config: MinimaConfig = MinimaConfig()) -> list[int]:
    """Boundary candidates: prominent local minima, at least min_separation_s apart.

    On separation conflicts the deepest minimum is kept (ties keep the earlier
    frame).
    """
    v = signal.values
    if v.size < 3:
        raise InputTooShortError("find_minima needs at least 3 samples")
    cand = local_minima(v)
    span = float(v.max() - v.min())
    floor = config.min_prominence_frac * span
    cand = [int(i) for i in cand if minimum_prominence(v, i) >= floor]
    min_gap = config.min_separation_s * signal.fps
    kept: list[int] = []
    for i in sorted(cand, key=lambda k: (v[k], k)):
        if all(abs(i - j) >= min_gap for j in kept):
            kept.append(i)
    return sorted(kept)


def segments_between(minima, n_frames: int, source="landmark") -> Parsing:
    minima = list(minima)
    if len(minima) < 2:
        return Parsing((), n_frames, source)
    return Parsing.from_pairs(zip(minima[:-1], minima[1:]), n_frames, source)


def parse_landmark_signal(signal: FeatureSignal, cutoff_norm: float = 0.03,
                          config: MinimaConfig = MinimaConfig(), order: int = 3) -> Parsing:
    smoothed = filtfilt(butterworth_lowpass(order, cutoff_norm), signal)
    return segments_between(find_minima(smoothed, config), len(signal))


def parse_landmark(series: FrameSeries, cutoff_norm: float = 0.03,
                   config: MinimaConfig = MinimaConfig(), order: int = 3,
                   upper_idx: int = UPPER_LIP_IDX, lower_idx: int = LOWER_LIP_IDX) -> Parsing:
    """Full baseline: lip distance -> zero-phase low-pass -> minima -> segments.

    k minima give k - 1 segments; fewer than two minima give an empty parsing.
    """
    signal = lip_distance(series, upper_idx, lower_idx)
    return parse_landmark_signal(signal, cutoff_norm, config, order)
