"""Evaluation harness: segment IoU with monotone matching, durations, U test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import NoRepetitionsError, ValidationError
from .types import Parsing, Segment

Z95 = 1.96


@dataclass(frozen=True)
class IouReport:
    """Matched pairs and their IoU statistics.

    ``pairs`` holds every matched (gt, pred) pair plus unmatched segments on
    either side (the missing partner is None, IoU 0). ``n`` is the slot count
    max(|pred|, |gt|); the mean and CI run over those n slots.
    """

    pairs: tuple
    mean_iou: float
    ci95_halfwidth: float
    n: int

    @property
    def slot_ious(self) -> np.ndarray:
        vals = [iou for _, _, iou in self.pairs if iou > 0]
        return np.array(vals + [0.0] * (self.n - len(vals)))


@dataclass(frozen=True)
class DurationStats:
    mean_s: float
    sd_s: float
    n: int


@dataclass(frozen=True)
class UTestResult:
    u: float
    p_two_sided: float
    method: str  # "exact" | "normal_approx"
    u1: float = 0.0
    u2: float = 0.0
    n1: int = 0
    n2: int = 0


def segment_iou(a: Segment, b: Segment) -> float:
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0:
        return 0.0
    return inter / (max(a.end, b.end) - min(a.start, b.start))


def optimal_monotone_matching(pred: Sequence[Segment], gt: Sequence[Segment]):
    """Order-preserving one-to-one matching maximizing total IoU.

    Returns (total, [(i_pred, j_gt), ...]). Classic alignment DP; on equal
    totals the traceback prefers pairing, then skipping a prediction.
    """
    n, m = len(pred), len(gt)
    iou = np.zeros((n, m))
    for i, p in enumerate(pred):
        for j, g in enumerate(gt):
            iou[i, j] = segment_iou(p, g)
    best = np.zeros((n + 1, m + 1))
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            best[i, j] = max(best[i - 1, j - 1] + iou[i - 1, j - 1], best[i - 1, j], best[i, j - 1])
    pairs = []
    i, j = n, m
    while i > 0 and j > 0:
        if iou[i - 1, j - 1] > 0 and best[i, j] == best[i - 1, j - 1] + iou[i - 1, j - 1]:
            pairs.append((i - 1, j - 1))
            i, j = i - 1, j - 1
        elif best[i, j] == best[i - 1, j]:
            i -= 1
        else:
            j -= 1
    pairs.reverse()
    return float(best[n, m]), pairs


def match_and_score(pred: Parsing, gt: Parsing) -> IouReport:
    if pred.n_frames != gt.n_frames:
        raise ValidationError(f"frame counts differ: prediction {pred.n_frames}, ground truth {gt.n_frames}")
    total, matched = optimal_monotone_matching(pred.segments, gt.segments)
    n = max(len(pred), len(gt))
    by_gt = {j: i for i, j in matched}
    pairs = []
    for j, g in enumerate(gt.segments):
        i = by_gt.get(j)
        pairs.append((g, None if i is None else pred.segments[i],
                      0.0 if i is None else segment_iou(pred.segments[i], g)))
    used = {i for i, _ in matched}
    for i, p in enumerate(pred.segments):
        if i not in used:
            pairs.append((None, p, 0.0))
    if n == 0:
        return IouReport(tuple(pairs), 0.0, 0.0, 0)
    slots = np.array([iou for _, _, iou in pairs if iou > 0]
                     + [0.0] * (n - sum(1 for *_, iou in pairs if iou > 0)))
    mean = float(slots.sum() / n)
    sd = float(slots.std(ddof=1)) if n > 1 else 0.0
    return IouReport(tuple(pairs), mean, Z95 * sd / math.sqrt(n), n)


def mean_ci(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return 0.0, 0.0
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return float(v.mean()), Z95 * sd / math.sqrt(v.size)


def per_repetition_iou(reports: Sequence[IouReport]):
    """IoU by ground-truth repetition index pooled across recordings.

    Returns a list of (index, mean, ci95_halfwidth, count) with index 1-based.
    """
    pooled: dict[int, list[float]] = {}
    for rep in reports:
        k = 0
        for g, _, iou in rep.pairs:
            if g is None:
                continue
            k += 1
            pooled.setdefault(k, []).append(iou)
    out = []
    for k in sorted(pooled):
        mean, ci = mean_ci(pooled[k])
        out.append((k, mean, ci, len(pooled[k])))
    return out


def duration_stats(parsing: Parsing, fps: float) -> DurationStats:
    if not fps > 0:
        raise ValueError("fps must be positive")
    if len(parsing) == 0:
        raise NoRepetitionsError("parsing contains no repetitions")
    d = parsing.durations(fps)
    return DurationStats(float(d.mean()), float(d.std()), int(d.size))


# -- Mann-Whitney U ----------------------------------------------------------

def midranks(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(v.size)
    sv = v[order]
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def u_null_counts(n1: int, n2: int) -> list[int]:
    """Number of orderings giving each U in 0..n1*n2 (exact integers).

    Recurrence: an ordering ends with a sample-1 value (adding n2 to U) or a
    sample-2 value (adding nothing).
    """
    table = {}

    def counts(a, b):
        if (a, b) in table:
            return table[(a, b)]
        if a == 0 or b == 0:
            res = [1]
        else:
            left = counts(a - 1, b)
            right = counts(a, b - 1)
            res = [0] * (a * b + 1)
            for u, c in enumerate(left):
                res[u + b] += c
            for u, c in enumerate(right):
                res[u] += c
        table[(a, b)] = res
        return res

    return counts(n1, n2)


def _norm_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def mann_whitney_u(sample_a, sample_b, method: str = "auto") -> UTestResult:
    """Two-sided Mann-Whitney U test reporting U = min(U1, U2).

    ``method="auto"`` enumerates the exact null distribution when
    n1 + n2 <= 25 and there are no ties, and otherwise uses the normal
    approximation with tie and continuity corrections. ``"exact"`` and
    ``"normal"`` force a path (exact refuses tied data). The two-sided p is
    twice the lower tail, capped at 1.
    """
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    if a.size < 1 or b.size < 1:
        raise ValueError("both samples need at least one value")
    if method not in ("auto", "exact", "normal"):
        raise ValueError(f"unknown method {method!r}")
    n1, n2 = a.size, b.size
    ranks = midranks(np.concatenate([a, b]))
    u1 = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    u2 = n1 * n2 - u1
    u = min(u1, u2)
    _, tie_sizes = np.unique(np.concatenate([a, b]), return_counts=True)
    ties = bool(np.any(tie_sizes > 1))

    use_exact = method == "exact" or (method == "auto" and n1 + n2 <= 25 and not ties)
    if use_exact:
        if ties:
            raise ValueError("exact p-values require untied data")
        counts = u_null_counts(n1, n2)
        tail = sum(counts[: int(round(u)) + 1])
        p = min(1.0, 2.0 * tail / math.comb(n1 + n2, n1))
        return UTestResult(u, p, "exact", u1, u2, n1, n2)

    n = n1 + n2
    tie_term = float(np.sum(tie_sizes ** 3 - tie_sizes)) / (n * (n - 1)) if n > 1 else 0.0
    var = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return UTestResult(u, 1.0, "normal_approx", u1, u2, n1, n2)
    z = (u - n1 * n2 / 2.0 + 0.5) / math.sqrt(var)
    p = min(1.0, 2.0 * _norm_cdf(min(z, 0.0)))
    return UTestResult(u, p, "normal_approx", u1, u2, n1, n2)


def compare_groups(parsings_a, parsings_b, method: str = "normal") -> UTestResult:
    """U test on per-participant mean repetition duration.

    Each argument is a list of (Parsing, fps). The default normal
    approximation with continuity correction is the usual reporting
    convention for cohort tables; pass ``method="auto"`` for exact p-values
    on small untied samples.
    """
    groups = []
    for name, group in (("a", parsings_a), ("b", parsings_b)):
        if not group:
            raise ValidationError(f"group {name} is empty")
        means = []
        for k, (parsing, fps) in enumerate(group):
            try:
                means.append(duration_stats(parsing, fps).mean_s)
            except NoRepetitionsError:
                raise NoRepetitionsError(f"group {name} participant {k} has no repetitions") from None
        groups.append(means)
    return mann_whitney_u(groups[0], groups[1], method)


def group_means(group) -> list[float]:
    return [duration_stats(p, fps).mean_s for p, fps in group]
