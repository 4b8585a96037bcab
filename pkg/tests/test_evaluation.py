import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from repseg.errors import NoRepetitionsError, ValidationError
from repseg.evaluation import (compare_groups, duration_stats, mann_whitney_u, match_and_score,
                               mean_ci, midranks, optimal_monotone_matching, per_repetition_iou,
                               segment_iou, u_null_counts)
from repseg.types import Parsing, Segment


def seg(a, b):
    return Segment(a, b)


def test_segment_iou_examples():
    assert segment_iou(seg(0, 10), seg(0, 10)) == 1.0
    assert segment_iou(seg(0, 10), seg(10, 20)) == 0.0
    assert segment_iou(seg(0, 10), seg(5, 15)) == pytest.approx(1 / 3)


intervals = st.tuples(st.integers(0, 50), st.integers(1, 30)).map(lambda t: seg(t[0], t[0] + t[1]))


@given(intervals, intervals, st.integers(-20, 20))
def test_segment_iou_properties(a, b, k):
    v = segment_iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == segment_iou(b, a)
    assert (v == 1.0) == (a == b)
    if a.start + k >= 0 and b.start + k >= 0:
        assert segment_iou(a.shifted(k), b.shifted(k)) == pytest.approx(v)


def random_parsing(r, n_frames=60, max_segs=6):
    k = int(r.integers(0, max_segs + 1))
    cuts = np.sort(r.choice(np.arange(n_frames + 1), size=2 * k, replace=False))
    return Parsing.from_pairs(cuts.reshape(-1, 2).tolist(), n_frames)


def brute_best(pred, gt):
    best = 0.0
    n, m = len(pred), len(gt)
    for size in range(min(n, m) + 1):
        for ps in itertools.combinations(range(n), size):
            for gs in itertools.combinations(range(m), size):
                best = max(best, sum(segment_iou(pred[i], gt[j]) for i, j in zip(ps, gs)))
    return best


def test_dp_matching_equals_brute_force():
    r = np.random.default_rng(7)
    for _ in range(500):
        pred, gt = random_parsing(r), random_parsing(r)
        total, pairs = optimal_monotone_matching(pred.segments, gt.segments)
        assert total == pytest.approx(brute_best(pred.segments, gt.segments), abs=1e-12)
        assert all(a < b for a, b in zip(pairs, pairs[1:]))
        assert sum(segment_iou(pred.segments[i], gt.segments[j]) for i, j in pairs) == pytest.approx(total)


def test_dp_at_least_index_pairing():
    r = np.random.default_rng(8)
    for _ in range(200):
        pred, gt = random_parsing(r, 100, 8), random_parsing(r, 100, 8)
        total, _ = optimal_monotone_matching(pred.segments, gt.segments)
        index = sum(segment_iou(a, b) for a, b in zip(pred.segments, gt.segments))
        assert total >= index - 1e-12


def test_match_and_score_basics():
    gt = Parsing.from_pairs([(0, 10), (10, 20), (20, 30)], 40)
    rep = match_and_score(gt, gt)
    assert rep.mean_iou == 1.0 and rep.ci95_halfwidth == 0.0 and rep.n == 3
    empty = Parsing((), 40)
    assert match_and_score(empty, gt).mean_iou == 0.0
    assert match_and_score(empty, empty).n == 0
    with pytest.raises(ValidationError):
        match_and_score(Parsing((), 41), gt)


def test_match_and_score_counts_unmatched_slots():
    gt = Parsing.from_pairs([(0, 10), (10, 20)], 40)
    pred = Parsing.from_pairs([(0, 10), (10, 20), (30, 40)], 40)
    rep = match_and_score(pred, gt)
    assert rep.n == 3 and rep.mean_iou == pytest.approx(2 / 3)
    assert rep.pairs[-1] == (None, Segment(30, 40), 0.0)
    ious = np.array([1.0, 1.0, 0.0])
    assert rep.ci95_halfwidth == pytest.approx(1.96 * ious.std(ddof=1) / math.sqrt(3))


def test_mean_is_mean_of_pair_ious_and_translation_invariant():
    r = np.random.default_rng(3)
    for _ in range(100):
        pred, gt = random_parsing(r), random_parsing(r)
        rep = match_and_score(pred, gt)
        if rep.n:
            assert rep.mean_iou == pytest.approx(sum(i for *_, i in rep.pairs) / rep.n, abs=1e-12)
            shift = lambda p: Parsing(tuple(s.shifted(5) for s in p.segments), p.n_frames + 5)
            assert match_and_score(shift(pred), shift(gt)).mean_iou == pytest.approx(rep.mean_iou)


def test_per_repetition_pooling():
    gt = Parsing.from_pairs([(0, 10), (10, 20)], 20)
    good = match_and_score(gt, gt)
    half = match_and_score(Parsing.from_pairs([(0, 5), (10, 20)], 20), gt)
    rows = per_repetition_iou([good, half])
    assert rows[0][0] == 1 and rows[0][1] == pytest.approx(0.75) and rows[0][3] == 2
    assert rows[1][1] == 1.0
    assert mean_ci([]) == (0.0, 0.0)


def test_duration_stats_examples():
    d = duration_stats(Parsing.from_pairs([(0, 50), (50, 150)], 150), 50.0)
    assert d.mean_s == pytest.approx(1.5) and d.sd_s == pytest.approx(0.5) and d.n == 2
    assert duration_stats(Parsing.from_pairs([(0, 7)], 10), 10.0).sd_s == 0.0
    with pytest.raises(NoRepetitionsError):
        duration_stats(Parsing((), 10), 10.0)
    with pytest.raises(ValueError):
        duration_stats(Parsing.from_pairs([(0, 7)], 10), 0.0)


def test_midranks():
    assert midranks([3.0, 1.0, 3.0, 2.0]).tolist() == [3.5, 1.0, 3.5, 2.0]


def brute_p(a, b):
    """Exact two-sided p by enumerating every assignment of ranks to sample a."""
    n1, n2 = len(a), len(b)
    ranks = midranks(np.concatenate([a, b]))
    u_obs = ranks[:n1].sum() - n1 * (n1 + 1) / 2
    u_obs = min(u_obs, n1 * n2 - u_obs)
    hits = total = 0
    for combo in itertools.combinations(range(n1 + n2), n1):
        u1 = ranks[list(combo)].sum() - n1 * (n1 + 1) / 2
        hits += u1 <= u_obs + 1e-9
        total += 1
    return min(1.0, float(2 * Fraction(hits, total)))


def test_exact_p_matches_enumeration():
    r = np.random.default_rng(11)
    for n1 in range(1, 8):
        for n2 in range(1, 8):
            vals = r.permutation(100)[: n1 + n2].astype(float)
            a, b = vals[:n1], vals[n1:]
            res = mann_whitney_u(a, b, "exact")
            assert res.method == "exact"
            assert abs(res.p_two_sided - brute_p(a, b)) < 1e-12
            assert res.u1 + res.u2 == n1 * n2


def test_null_counts_sum_to_binomial():
    for n1, n2 in [(1, 1), (3, 4), (7, 7), (10, 10)]:
        counts = u_null_counts(n1, n2)
        assert sum(counts) == math.comb(n1 + n2, n1)
        assert counts == counts[::-1]


@settings(max_examples=100)
@given(st.lists(st.integers(0, 8), min_size=1, max_size=12),
       st.lists(st.integers(0, 8), min_size=1, max_size=12))
def test_u_invariants(a, b):
    res = mann_whitney_u(a, b)
    swap = mann_whitney_u(b, a)
    assert res.u1 + res.u2 == len(a) * len(b)
    assert 0 <= res.u <= len(a) * len(b)
    assert res.u == swap.u and res.p_two_sided == pytest.approx(swap.p_two_sided, abs=1e-15)
    assert 0 < res.p_two_sided <= 1


def test_small_separation_examples():
    res = mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert res.u == 0 and res.p_two_sided == pytest.approx(0.1) and res.method == "exact"
    assert mann_whitney_u([5, 5, 5], [5, 5, 5]).p_two_sided == 1.0


def test_normal_approximation_complete_separation_ten_each():
    res = mann_whitney_u(np.arange(10.0), np.arange(10.0) + 100, "normal")
    assert res.u == 0 and res.method == "normal_approx"
    z = (0 - 50 + 0.5) / math.sqrt(100 * 21 / 12)
    assert res.p_two_sided == pytest.approx(math.erfc(-z / math.sqrt(2)), rel=1e-12)
    assert abs(res.p_two_sided - 1.83e-4) < 1e-5
    exact = mann_whitney_u(np.arange(10.0), np.arange(10.0) + 100, "exact")
    assert exact.p_two_sided == pytest.approx(2 / math.comb(20, 10))


def test_exact_and_normal_agree_at_twelve():
    r = np.random.default_rng(5)
    for _ in range(20):
        vals = r.permutation(1000)[:24].astype(float)
        a, b = vals[:12] + r.uniform(0, 300), vals[12:]
        e = mann_whitney_u(a, b, "exact").p_two_sided
        n = mann_whitney_u(a, b, "normal").p_two_sided
        assert abs(e - n) < 0.01


def test_method_and_argument_errors():
    with pytest.raises(ValueError):
        mann_whitney_u([], [1.0])
    with pytest.raises(ValueError):
        mann_whitney_u([1.0], [2.0], "bogus")
    with pytest.raises(ValueError):
        mann_whitney_u([1.0, 2.0], [2.0, 3.0], "exact")


def cohort(durations_frames, fps=10.0):
    return [(Parsing.from_pairs([(0, d), (d, 2 * d)], 2 * d), fps) for d in durations_frames]


def test_compare_groups():
    a = cohort(range(10, 20))
    b = cohort(range(30, 40))
    res = compare_groups(a, b)
    assert res.u == 0 and abs(res.p_two_sided - 1.83e-4) < 1e-5
    assert compare_groups(a, a).p_two_sided == 1.0
    one = compare_groups(cohort([30]), cohort([10]), "auto")
    assert one.u == 0 and one.p_two_sided == 1.0
    with pytest.raises(ValidationError):
        compare_groups([], b)
    with pytest.raises(NoRepetitionsError) as exc:
        compare_groups(a, b[:3] + [(Parsing((), 10), 10.0)])
    assert "group b participant 3" in str(exc.value)
