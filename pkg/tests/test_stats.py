from itertools import chain, combinations

import numpy as np
import pytest
from scipy.stats import friedmanchisquare

from domain.errors import StatsError
from evaluation.stats import Direction, RankMatrix, bergmann_hommel, bonferroni, cd_diagram_data, \
    exhaustive_sets, friedman, pairwise_pvalues, unadjusted


def test_all_ties_give_no_evidence():
    m = RankMatrix(("a", "b", "c"), np.ones((5, 3)), Direction.LOWER_BETTER)
    res = friedman(m)
    assert (res.statistic, res.p_value) == (0.0, 1.0)
    post = bergmann_hommel(res.mean_ranks, m.n_blocks)
    assert post.rejected == frozenset()
    assert all(v == 1.0 for v in post.adjusted_p.values())
    assert cd_diagram_data(res.mean_ranks, post.rejected) == [["a", "b", "c"]]


def test_strict_ordering_ranks():
    m = RankMatrix(("a", "b", "c"), np.tile([1.0, 2.0, 3.0], (4, 1)), Direction.LOWER_BETTER)
    assert m.mean_ranks() == {"a": 1.0, "b": 2.0, "c": 3.0}


def test_direction_flip_is_negation():
    values = np.random.default_rng(0).normal(size=(6, 4))
    higher = RankMatrix(("a", "b", "c", "d"), values, Direction.HIGHER_BETTER)
    lower = RankMatrix(("a", "b", "c", "d"), -values, Direction.LOWER_BETTER)
    np.testing.assert_array_equal(higher.ranks, lower.ranks)


def test_friedman_matches_scipy_with_ties():
    values = np.array([
        [1.0, 2.0, 2.0, 4.0],
        [3.0, 1.0, 2.0, 4.0],
        [1.0, 1.0, 3.0, 2.0],
        [2.0, 3.0, 1.0, 4.0],
        [1.0, 2.0, 4.0, 3.0],
        [1.0, 3.0, 2.0, 2.0],
    ])
    res = friedman(RankMatrix(("a", "b", "c", "d"), values, Direction.LOWER_BETTER))
    expected = friedmanchisquare(*values.T)
    assert res.statistic == pytest.approx(expected.statistic, abs=1e-10)
    assert res.p_value == pytest.approx(expected.pvalue, abs=1e-10)


def test_friedman_needs_two_blocks():
    with pytest.raises(StatsError, match="at least 2 blocks"):
        friedman(RankMatrix(("a", "b"), np.array([[1.0, 2.0]]), Direction.LOWER_BETTER))


@pytest.mark.parametrize("values,message", [
    (np.array([[1.0, np.nan], [1.0, 2.0]]), "finite"),
    (np.ones((3, 3)), "B×2"),
])
def test_rank_matrix_validation(values, message):
    with pytest.raises(StatsError, match=message):
        RankMatrix(("a", "b"), values, Direction.LOWER_BETTER)


def test_two_algorithms_keep_the_raw_pvalue():
    ranks = {"a": 1.2, "b": 1.8}
    post = bergmann_hommel(ranks, 10)
    assert post.adjusted_p == post.raw_p


@pytest.mark.parametrize("k,count", [(3, 4), (4, 14)])
def test_exhaustive_set_counts(k, count):
    # Bell number minus the all-singletons partition
    assert len(exhaustive_sets([str(i) for i in range(k)])) == count


def _is_closed(hyps):
    # a set of equalities is jointly possible iff it is closed under transitivity
    members = set(hyps)
    for (a, b), (c, d) in combinations(members, 2):
        shared = {a, b} & {c, d}
        if len(shared) == 1:
            x, = {a, b} - shared
            y, = {c, d} - shared
            if tuple(sorted((x, y))) not in members:
                return False
    return True


def test_rejections_match_brute_force_closure_check():
    ranks = {"a": 1.2, "b": 2.0, "c": 2.9, "d": 3.9}
    raw = pairwise_pvalues(ranks, 12)
    hyps = sorted(raw)
    subsets = chain.from_iterable(combinations(hyps, r) for r in range(1, len(hyps) + 1))
    closed = [set(s) for s in subsets if _is_closed(s)]
    alpha = 0.05
    expected = {h for h in hyps
                if all(min(raw[g] for g in s) <= alpha / len(s) for s in closed if h in s)}
    assert set(bergmann_hommel(ranks, 12, alpha).rejected) == expected


def test_procedures_are_nested():
    ranks = {"a": 1.3, "b": 2.1, "c": 2.6, "d": 4.0}
    bh = bergmann_hommel(ranks, 20).rejected
    assert bonferroni(ranks, 20).rejected <= bh <= unadjusted(ranks, 20).rejected


def test_too_many_algorithms():
    with pytest.raises(StatsError, match="at most 9"):
        bergmann_hommel({str(i): float(i) for i in range(10)}, 5)


def test_groups_from_rejections():
    ranks = {"a": 1.0, "b": 2.0, "c": 3.0, "d": 4.0}
    rejected = {("a", "c"), ("a", "d"), ("b", "d")}
    assert cd_diagram_data(ranks, rejected) == [["a", "b"], ["b", "c"], ["c", "d"]]
    every_pair = set(combinations(sorted(ranks), 2))
    assert cd_diagram_data(ranks, every_pair) == [["a"], ["b"], ["c"], ["d"]]
