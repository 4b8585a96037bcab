"""Self-similarity parser: embeddings -> TSM -> per-frame period -> counting.

This is a classical stand-in for a learned repetition counter. Frame
embeddings come from normalized landmark geometry or a delay embedding. Period
and periodicity come from the spectrum of each TSM row. Frames are then
counted by accumulating 1 / period, and the boundaries take their phase from
the pose at the start of the periodic run.

Per-frame estimation works in two passes:

1. Each row i of the raw TSM (a function of the other frame j) is
   mean-removed and Fourier transformed. The strongest bin k* with period
   N / k* in [2, N / 2] gives a coarse period. When the band one octave up
   holds at least half as much power, k* moves there: alternating strong and
   weak repetitions put their largest line at half the repetition rate. The
   periodicity score is the fraction of non-DC power in bins k* - 1 .. k* + 1
   plus the bands around k* / 2 and 2 k*.
2. The coarse period is refined with the recurrence lag: the lag in
   [0.5, 1.5] x coarse where row i peaks again, looking forwards and
   backwards, with parabolic sub-frame interpolation.

Scores, coarse periods and refined periods are each median filtered over one
period's worth of frames. Rows whose embedding sits near the trajectory
centroid otherwise leak power into the second harmonic.

The full N x N matrix is never needed by the pipeline. Rows are produced in
blocks straight from the embeddings, so long recordings stay within memory.
``build_tsm`` and ``estimate_period`` still expose the explicit matrix.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.ndimage import median_filter

from .core import LOWER_FACE_LANDMARKS, compute_roi, stride_series
from .errors import InputTooShortError
from .types import FeatureSignal, FrameSeries, Parsing

Input = Union[FrameSeries, FeatureSignal]

_BLOCK_ELEMS = 1 << 22
_REFINE_LO, _REFINE_HI = 0.5, 1.5
_EPS = 1e-9
_OCTAVE_RATIO = 0.5
_REST_FRAC = 0.4  # segments moving less than this share of the typical excursion are rest


@dataclass(frozen=True)
class EmbeddingSequence:
    vectors: np.ndarray
    stride: int = 1
    fps_effective: float = 1.0

    def __post_init__(self):
        v = np.array(self.vectors, dtype=float)
        if v.ndim != 2 or v.shape[0] < 4:
            raise InputTooShortError(f"need an (N >= 4, D) embedding array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("embeddings must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)

    def __len__(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class SelfSimilarityMatrix:
    raw: np.ndarray
    softmaxed: np.ndarray
    tau_sm: float

    def __len__(self) -> int:
        return self.raw.shape[0]


@dataclass(frozen=True)
class PeriodEstimate:
    """Per-frame period (strided frames) and periodicity score in [0, 1]."""

    period: np.ndarray
    periodicity: np.ndarray
    fps_effective: float = 1.0

    def __len__(self) -> int:
        return self.period.size

    @property
    def period_s(self) -> np.ndarray:
        return self.period / self.fps_effective


@dataclass(frozen=True)
class TsmConfig:
    strides: tuple = (1, 2, 3, 4, 5, 8)
    window: int = 5
    tau_sm: Optional[float] = None  # None: median |raw| of each matrix
    periodicity_threshold: float = 0.5
    partial_rep_min: float = 0.5
    context: Optional[int] = 256  # frames per spectral row window; None: whole row
    min_period: float = 6.0  # strided frames; shorter periods do not vote in stride search
    roi_margin: float = 10.0
    max_workers: Optional[int] = None

    def __post_init__(self):
        strides = tuple(int(s) for s in self.strides)
        if not strides or min(strides) < 1:
            raise ValueError("strides must be a non-empty set of positive integers")
        object.__setattr__(self, "strides", strides)
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.tau_sm is not None and not self.tau_sm > 0:
            raise ValueError("tau_sm must be positive")
        if self.context is not None and self.context < 8:
            raise ValueError("context must be >= 8 frames")
        if not 0 <= self.periodicity_threshold <= 1:
            raise ValueError("periodicity_threshold must lie in [0, 1]")
        if not 0 <= self.partial_rep_min < 1:
            raise ValueError("partial_rep_min must lie in [0, 1)")
        if self.min_period < 0:
            raise ValueError("min_period must be non-negative")


# -- embeddings ---------------------------------------------------------------

def roi_landmarks(series: FrameSeries, margin: float = 10.0) -> list[int]:
    """Landmarks that stay inside the fixed lower-face box for the whole series.

    For 68-point input the box is built from the jaw and mouth landmarks;
    for any other scheme every landmark is used.
    """
    if series.n_landmarks != 68:
        return list(range(series.n_landmarks))
    box = compute_roi(series, LOWER_FACE_LANDMARKS, margin)
    return [k for k in range(68) if box.contains(series.coords[:, k, :])]


def _window_stack(rows: np.ndarray, window: int) -> np.ndarray:
    n = rows.shape[0]
    offsets = np.arange(window) - window // 2
    idx = np.clip(np.arange(n)[:, None] + offsets[None, :], 0, n - 1)
    return rows[idx].reshape(n, -1)


def embed_frames(series: Input, window: int = 5, stride: int = 1,
                 landmark_subset: Optional[Sequence[int]] = None) -> EmbeddingSequence:
    """Per-frame embedding vectors at the given input-frame stride.

    Landmark input: each strided frame is centred on its landmark centroid and
    divided by the RMS distance to it, flattened, and concatenated over a
    centred window of ``window`` strided frames (ends replicate the boundary
    frame). Scalar input: a centred delay embedding of the z-scored signal.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    strided = stride_series(series, stride)
    n = len(strided)
    if n < window + 4:
        raise InputTooShortError(
            f"{n} frames after stride {stride}; need at least window + 4 = {window + 4}")
    if isinstance(strided, FrameSeries):
        pts = strided.coords
        if landmark_subset is not None:
            pts = pts[:, list(landmark_subset), :]
        pts = pts - pts.mean(axis=1, keepdims=True)
        rms = np.sqrt(np.mean(np.sum(pts ** 2, axis=2), axis=1))
        pts = pts / np.where(rms > 0, rms, 1.0)[:, None, None]
        rows = pts.reshape(n, -1)
    else:
        x = strided.values
        sd = x.std()
        rows = ((x - x.mean()) / (sd if sd > 0 else 1.0))[:, None]
    return EmbeddingSequence(_window_stack(rows, window), stride, strided.fps)


# -- similarity matrix ----------------------------------------------------------

def _raw_rows(vectors: np.ndarray, sq: np.ndarray, lo: int, hi: int, c_lo: int, c_hi: int) -> np.ndarray:
    block = vectors[lo:hi] @ vectors[c_lo:c_hi].T
    block *= 2.0
    block -= sq[lo:hi, None]
    block -= sq[None, c_lo:c_hi]
    np.minimum(block, 0.0, out=block)
    rows = np.arange(lo, hi)
    on_diag = (rows >= c_lo) & (rows < c_hi)
    block[np.flatnonzero(on_diag), rows[on_diag] - c_lo] = 0.0
    return block


def raw_similarity(emb: EmbeddingSequence) -> np.ndarray:
    """raw[i, j] = -||e_i - e_j||^2, exactly symmetric with a zero diagonal."""
    diff = emb.vectors[:, None, :] - emb.vectors[None, :, :]
    return -np.einsum("ijk,ijk->ij", diff, diff)


def row_softmax(raw: np.ndarray, tau: float) -> np.ndarray:
    z = raw / tau
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def adaptive_tau(raw: np.ndarray) -> float:
    tau = float(np.median(np.abs(raw)))
    return tau if tau > 0 else 1.0


def build_tsm(emb: EmbeddingSequence, tau_sm: Optional[float] = None) -> SelfSimilarityMatrix:
    if tau_sm is not None and not tau_sm > 0:
        raise ValueError("tau_sm must be positive")
    raw = raw_similarity(emb)
    tau = adaptive_tau(raw) if tau_sm is None else float(tau_sm)
    soft = row_softmax(raw, tau)
    raw.setflags(write=False)
    soft.setflags(write=False)
    return SelfSimilarityMatrix(raw, soft, tau)


# -- period estimation -----------------------------------------------------------

def _band(power: np.ndarray, centre: np.ndarray, kmax: int):
    """Power and power-weighted bin sum over centre-1..centre+1 (clipped, deduplicated)."""
    ks = np.clip(np.rint(centre)[:, None].astype(int) + np.array([-1, 0, 1]), 1, kmax)
    dup = np.zeros_like(ks, dtype=bool)
    dup[:, 1:] = ks[:, 1:] == ks[:, :-1]
    p = np.where(dup, 0.0, np.take_along_axis(power, ks, axis=1))
    return p.sum(axis=1), (p * ks).sum(axis=1), ks, dup


def _row_spectra(rows: np.ndarray):
    """Coarse period and periodicity for a block of TSM rows (one per line)."""
    m = rows.shape[1]
    centered = rows - rows.mean(axis=1, keepdims=True)
    power = np.abs(np.fft.rfft(centered, axis=1)) ** 2
    weights = np.full(power.shape[1], 2.0)
    weights[0] = 1.0
    if m % 2 == 0:
        weights[-1] = 1.0
    power *= weights
    total = power[:, 1:].sum(axis=1)
    kmax = m // 2
    kstar = np.argmax(power[:, 2:kmax + 1], axis=1) + 2
    main, main_k, _, _ = _band(power, kstar, kmax)
    # an alternating pattern puts its strongest line at half the repetition
    # rate; move to the octave above when that band is comparably strong
    up = 2 * kstar
    up_ok = up + 1 <= kmax
    octave, octave_k, _, _ = _band(power, np.minimum(up, kmax), kmax)
    switch = up_ok & (octave >= _OCTAVE_RATIO * main)
    kstar = np.where(switch, up, kstar)
    main = np.where(switch, octave, main)
    main_k = np.where(switch, octave_k, main_k)
    # harmonic-aware score: the band plus its sub-octave and octave bands
    banks = [main]
    sub = kstar / 2.0
    sub_ok = sub >= 1.5
    sub_p, _, sub_ks, _ = _band(power, np.maximum(sub, 1), kmax)
    oct_p, _, oct_ks, _ = _band(power, np.minimum(2 * kstar, kmax), kmax)
    main_lo, main_hi = kstar - 1, kstar + 1
    # keep neighbouring bands disjoint from the main band
    sub_p = np.where(sub_ok & (sub_ks.max(axis=1) < main_lo), sub_p, 0.0)
    oct_p = np.where((2 * kstar - 1 <= kmax) & (oct_ks.min(axis=1) > main_hi), oct_p, 0.0)
    banks += [sub_p, oct_p]
    band = np.sum(banks, axis=0)
    degenerate = ~(total > 0) | ~(np.ptp(rows, axis=1) > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        score = np.clip(band / total, 0.0, 1.0)
        coarse = m * main / main_k
    score[degenerate] = 0.0
    coarse[degenerate] = np.nan
    return coarse, score, degenerate


def _peak_lag(values: np.ndarray, lags: np.ndarray) -> Optional[float]:
    if values.size < 3:
        return None
    a = int(np.argmax(values))
    if a == 0 or a == values.size - 1:
        return None  # no interior peak inside the search window
    y0, y1, y2 = values[a - 1], values[a], values[a + 1]
    curv = y0 - 2.0 * y1 + y2
    shift = 0.5 * (y0 - y2) / curv if curv < 0 else 0.0
    return float(lags[a] + shift)


def _refine_row(row: np.ndarray, i: int, coarse: float) -> Optional[float]:
    """Recurrence lag near ``coarse``; ``row`` is indexed by absolute frame."""
    n = row.size
    lo = max(2, math.ceil(_REFINE_LO * coarse))
    hi = max(lo, math.floor(_REFINE_HI * coarse))
    lags = np.arange(lo, hi + 1)
    found = []
    for js, ok in ((i + lags, i + lags < n), (i - lags, i - lags >= 0)):
        if ok.any():
            lag = _peak_lag(row[js[ok]], lags[ok])
            if lag is not None:
                found.append(lag)
    return float(np.mean(found)) if found else None


def _smoothing_width(coarse: np.ndarray, n: int) -> int:
    valid = coarse[np.isfinite(coarse)]
    if valid.size == 0:
        return 1
    w = int(round(float(np.median(valid))))
    w = max(1, min(w, n))
    return w if w % 2 else max(1, w - 1)


RowSource = Callable[[int, int, int, int], np.ndarray]


def _estimate(n: int, rows_of: RowSource, fps_effective: float,
              context: Optional[int] = None) -> PeriodEstimate:
    """Shared two-pass estimator. ``rows_of(lo, hi, c_lo, c_hi)`` returns
    raw[lo:hi, c_lo:c_hi]."""
    if n < 8:
        raise InputTooShortError(f"period estimation needs N >= 8 frames, got {n}")
    m = n if context is None else max(8, min(n, int(context)))
    reach = math.floor(_REFINE_HI * m / 2.0) + 1
    block = max(1, _BLOCK_ELEMS // (m + 2 * reach))
    starts = np.clip(np.arange(n) - m // 2, 0, n - m)

    def block_rows(lo, hi):
        c_lo = max(0, min(int(starts[lo]), lo - reach))
        c_hi = min(n, max(int(starts[hi - 1]) + m, hi + reach))
        return rows_of(lo, hi, c_lo, c_hi), c_lo, c_hi

    coarse = np.empty(n)
    score = np.empty(n)
    degenerate = np.empty(n, dtype=bool)
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        rows, c_lo, _ = block_rows(lo, hi)
        idx = starts[lo:hi, None] - c_lo + np.arange(m)[None, :]
        windows = np.take_along_axis(rows, idx, axis=1)
        coarse[lo:hi], score[lo:hi], degenerate[lo:hi] = _row_spectra(windows)

    if degenerate.all():
        return PeriodEstimate(np.full(n, 2.0), np.zeros(n), fps_effective)
    width = _smoothing_width(coarse, n)
    fill = float(np.nanmedian(coarse))
    coarse = median_filter(np.where(degenerate, fill, coarse), size=width, mode="nearest")
    score = median_filter(score, size=width, mode="nearest")

    period = coarse.copy()
    for lo in range(0, n, block):
        hi = min(n, lo + block)
        rows, c_lo, c_hi = block_rows(lo, hi)
        for r, i in enumerate(range(lo, hi)):
            if degenerate[i]:
                continue
            refined = _refine_row(rows[r], i - c_lo, coarse[i])
            if refined is not None:
                period[i] = refined
    period = median_filter(period, size=width, mode="nearest")
    period = np.clip(period, 2.0, m / 2.0)
    period[degenerate] = 2.0
    score[degenerate] = 0.0
    return PeriodEstimate(period, score, fps_effective)


def estimate_period(tsm: SelfSimilarityMatrix, fps_effective: float = 1.0,
                    context: Optional[int] = None) -> PeriodEstimate:
    """Per-frame period and periodicity from the rows of an explicit TSM.

    With ``context`` set, each row is analysed over a window of that many
    frames centred on the diagonal (shifted inwards at the ends) instead of
    the whole row. Rows with zero variance are non-periodic: periodicity 0,
    period 2.
    """
    raw = np.asarray(tsm.raw)
    return _estimate(raw.shape[0], lambda lo, hi, c0, c1: raw[lo:hi, c0:c1], fps_effective, context)


def estimate_period_from_embeddings(emb: EmbeddingSequence,
                                    context: Optional[int] = None) -> PeriodEstimate:
    """Same as ``estimate_period(build_tsm(emb))`` without materialising N x N."""
    v = emb.vectors
    sq = np.einsum("ij,ij->i", v, v)
    return _estimate(len(emb), lambda lo, hi, c0, c1: _raw_rows(v, sq, lo, hi, c0, c1),
                     emb.fps_effective, context)


# -- counting ----------------------------------------------------------------

def _count_runs(est: PeriodEstimate, threshold: float):
    """Integer crossings of the running count, grouped into periodic runs.

    Each run is (start, [cut positions], end, tail_fraction) in strided
    frames; a run breaks wherever a non-periodic frame interrupts it.
    """
    periodic = est.periodicity >= threshold
    runs = []
    count = 0.0
    prev = None
    for i in np.flatnonzero(periodic):
        if prev is None or i > prev + 1:
            if prev is not None:
                runs[-1][2] = prev + 1.0
            runs.append([float(i), [], None, 0.0])
            count = 0.0
        inc = 1.0 / est.period[i]
        target = math.floor(count + _EPS) + 1.0
        new = count + inc
        while new >= target - _EPS:
            runs[-1][1].append(i + min(1.0, max(0.0, (target - count) / inc)))
            target += 1.0
        count = new
        runs[-1][3] = count - math.floor(count + _EPS)
        prev = i
    if runs:
        runs[-1][2] = prev + 1.0
    return runs


def _phase_shift(runs, est: PeriodEstimate, dist: np.ndarray, offset: int) -> int:
    """Integer shift of all cuts that best matches the anchor pose.

    Searches shifts within half the median period and minimises the mean
    distance to the anchor of the frames ``offset`` after each shifted cut
    (the anchor itself sits ``offset`` frames into its run, clear of the
    edge-replicated windows); ties prefer the smallest shift.
    """
    cuts = np.array([c for run in runs for c in run[1]])
    if cuts.size == 0:
        return 0
    half = int(np.median(est.period) // 2)
    n = dist.size
    best, best_cost = 0, np.inf
    for d in sorted(range(-half, half + 1), key=lambda d: (abs(d), d)):
        idx = np.clip(np.rint(cuts).astype(int) + d + offset, 0, n - 1)
        cost = dist[idx].mean()
        if cost < best_cost - 1e-12:
            best, best_cost = d, cost
    return best


def segments_from_periodicity(est: PeriodEstimate, cfg: TsmConfig, stride: int,
                              n_frames_original: int,
                              emb: Optional[EmbeddingSequence] = None) -> Parsing:
    """Cut repetitions where the running count of 1 / period crosses an integer.

    Only frames with periodicity >= threshold advance the count, and a
    non-periodic gap restarts it. The crossing point is interpolated inside
    the frame, so boundaries keep sub-stride precision when mapped back
    (position x stride, rounded, clamped). A trailing partial repetition is
    kept when its fraction reaches ``partial_rep_min``.

    The count fixes how many repetitions there are but not where they start.
    With embeddings given, the cut phase is anchored to the pose of the first
    periodic frame: every cut moves by the shift that best matches that pose,
    a leading stretch longer than 1.25 periods is trimmed to one period, and
    any segment that never moves a quarter of the typical distance away from
    the anchor pose (rest frames) is dropped.
    """
    runs = _count_runs(est, cfg.periodicity_threshold)
    n = len(est)

    def period_at(x):
        return float(est.period[int(min(n - 1, max(0, round(x))))])

    cuts: list[tuple[float, float]] = []
    if emb is None or not runs or not any(run[1] for run in runs):
        for start, ends, end, frac in runs:
            bounds = [start] + ends
            cuts += list(zip(bounds[:-1], bounds[1:]))
            if frac >= cfg.partial_rep_min and end > bounds[-1]:
                cuts.append((bounds[-1], end))
    else:
        offset = cfg.window // 2
        anchor = emb.vectors[min(n - 1, int(runs[0][0]) + offset)]
        dist = np.sqrt(np.sum((emb.vectors - anchor) ** 2, axis=1))
        shift = _phase_shift(runs, est, dist, offset)
        spans = []
        for start, ends, end, frac in runs:
            ends = [min(end, max(start, c + shift)) for c in ends]
            ends = [c for c in ends if c > start]
            if not ends:
                continue
            p1 = period_at(ends[0])
            first = start if ends[0] - start <= 1.25 * p1 else ends[0] - p1
            if (ends[0] - first) < cfg.partial_rep_min * p1:
                first = ends.pop(0)
            bounds = [first] + ends
            spans += list(zip(bounds[:-1], bounds[1:]))
            if end > bounds[-1] and (end - bounds[-1]) >= cfg.partial_rep_min * period_at(bounds[-1]):
                spans.append((bounds[-1], end, "tail"))
        full = [sp for sp in spans if len(sp) == 2]
        excursions = [dist[int(a):max(int(a) + 1, int(math.ceil(b)))].mean() for a, b in full]
        typical = float(np.median(excursions)) if excursions else 0.0
        for sp in spans:
            a, b = sp[0], sp[1]
            if dist[int(a):max(int(a) + 1, int(math.ceil(b)))].mean() >= _REST_FRAC * typical:
                cuts.append((a, b))

    pairs = []
    prev_end = 0
    for a, b in cuts:
        a = max(prev_end, min(n_frames_original, int(round(a * stride))))
        b = min(n_frames_original, int(round(b * stride)))
        if b > a:
            pairs.append((a, b))
            prev_end = b
    return Parsing.from_pairs(pairs, n_frames_original, "tsm")


# -- stride search and full pipeline -------------------------------------------

@dataclass(frozen=True)
class StrideResult:
    stride: int
    score: float
    estimate: PeriodEstimate
    parsing: Parsing


def stride_score(est: PeriodEstimate, threshold: float, min_period: float = 0.0) -> float:
    """Mean periodicity over frames at or above threshold; 0 when none qualify.

    Frames whose period is shorter than ``min_period`` strided frames are left
    out, since boundaries that coarse cannot be placed accurately.
    """
    ok = (est.periodicity >= threshold) & (est.period >= min_period)
    return float(np.where(ok, est.periodicity, 0.0).mean())


def _min_frames(window: int) -> int:
    return max(window + 4, 8)


def run_stride(series: Input, cfg: TsmConfig, stride: int,
               landmark_subset: Optional[Sequence[int]] = None) -> StrideResult:
    emb = embed_frames(series, cfg.window, stride, landmark_subset)
    est = estimate_period_from_embeddings(emb, cfg.context)
    parsing = segments_from_periodicity(est, cfg, stride, len(series), emb)
    return StrideResult(stride, stride_score(est, cfg.periodicity_threshold, cfg.min_period), est, parsing)


def stride_search(series: Input, cfg: TsmConfig = TsmConfig()):
    """Run the pipeline once per candidate stride and keep the most periodic.

    Returns ``(best_stride, parsing, estimate)``. Ties go to the smaller
    stride, so the answer does not depend on candidate order or on whether
    strides are evaluated concurrently (``cfg.max_workers``).
    """
    n = len(series)
    usable = [s for s in sorted(set(cfg.strides)) if math.ceil(n / s) >= _min_frames(cfg.window)]
    if not usable:
        raise InputTooShortError(
            f"{n} frames is too short for every candidate stride {sorted(set(cfg.strides))}")
    subset = roi_landmarks(series, cfg.roi_margin) if isinstance(series, FrameSeries) else None
    if cfg.max_workers and cfg.max_workers > 1 and len(usable) > 1:
        with ThreadPoolExecutor(cfg.max_workers) as pool:
            results = list(pool.map(lambda s: run_stride(series, cfg, s, subset), usable))
    else:
        results = [run_stride(series, cfg, s, subset) for s in usable]
    best = results[0]
    for res in results[1:]:
        if res.score > best.score:
            best = res
    return best.stride, best.parsing, best.estimate


def parse_tsm(series: Input, cfg: TsmConfig = TsmConfig()) -> Parsing:
    return stride_search(series, cfg)[1]
