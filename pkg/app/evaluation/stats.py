from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from itertools import combinations
from typing import Dict, FrozenSet, Iterator, List, Mapping, Sequence, Set, Tuple

import networkx as nx
import numpy as np
from scipy.stats import chi2, norm, rankdata

from domain.errors import StatsError

Pair = Tuple[str, str]
MAX_ALGORITHMS = 9


class Direction(str, Enum):
    HIGHER_BETTER = "higher_better"
    LOWER_BETTER = "lower_better"


@dataclass(frozen=True, eq=False)
class RankMatrix:
    """
    B×A metric values (blocks × algorithms) and their within-block ranks, 1 = best, ties midranked.
    """
    algorithms: Tuple[str, ...]
    blocks: np.ndarray
    direction: Direction

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=np.float64)
        if blocks.ndim != 2 or blocks.shape[1] != len(self.algorithms):
            raise StatsError(f"expected a B×{len(self.algorithms)} matrix, got shape {blocks.shape}")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise StatsError("duplicate algorithm names")
        if not np.all(np.isfinite(blocks)):
            raise StatsError("metric values must be finite")
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "direction", Direction(self.direction))

    @property
    def n_blocks(self) -> int:
        return self.blocks.shape[0]

    @cached_property
    def ranks(self) -> np.ndarray:
        signed = -self.blocks if self.direction is Direction.HIGHER_BETTER else self.blocks
        return rankdata(signed, method="average", axis=1)

    def mean_ranks(self) -> Dict[str, float]:
        return {a: float(r) for a, r in zip(self.algorithms, self.ranks.mean(axis=0))}


@dataclass(frozen=True)
class FriedmanResult:
    statistic: float
    p_value: float
    mean_ranks: Dict[str, float]


def friedman(m: RankMatrix) -> FriedmanResult:
    """
    Friedman rank test with the midrank tie correction.
    Args:
        m (RankMatrix): Blocks × algorithms.
    Returns:
        FriedmanResult: χ²_F, its p-value on A−1 degrees of freedom, and mean ranks.
    """
    b, a = m.blocks.shape
    if b < 2 or a < 2:
        raise StatsError(f"Friedman test needs at least 2 blocks and 2 algorithms, got {b}×{a}")
    mean = m.ranks.mean(axis=0)
    raw = 12.0 * b / (a * (a + 1)) * float(np.sum((mean - (a + 1) / 2.0) ** 2))
    ties = 0.0
    for row in m.ranks:
        _, counts = np.unique(row, return_counts=True)
        ties += float(np.sum(counts ** 3 - counts))
    correction = 1.0 - ties / (b * a * (a * a - 1))
    if correction <= 1e-12:
        return FriedmanResult(0.0, 1.0, m.mean_ranks())
    statistic = raw / correction
    return FriedmanResult(statistic, float(chi2.sf(statistic, a - 1)), m.mean_ranks())


def _pair(a: str, b: str) -> Pair:
    return (a, b) if a < b else (b, a)


def pairwise_pvalues(mean_ranks: Mapping[str, float], n_blocks: int) -> Dict[Pair, float]:
    """
    Two-sided normal p-values of z = (R̄_i − R̄_j) / √(A(A+1)/(6B)) for every pair.
    """
    names = sorted(mean_ranks)
    k = len(names)
    se = np.sqrt(k * (k + 1) / (6.0 * n_blocks))
    return {
        _pair(a, b): float(2.0 * norm.sf(abs(mean_ranks[a] - mean_ranks[b]) / se))
        for a, b in combinations(names, 2)
    }


def _set_partitions(items: Sequence[str]) -> Iterator[List[List[str]]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partition in _set_partitions(rest):
        for i in range(len(partition)):
            yield partition[:i] + [[first] + partition[i]] + partition[i + 1:]
        yield [[first]] + partition


def exhaustive_sets(algorithms: Sequence[str]) -> List[FrozenSet[Pair]]:
    """
    All nonempty sets of pairwise-equality hypotheses that can hold simultaneously: one per
    partition of the algorithms, holding every pair inside the same block.
    """
    out = set()
    for partition in _set_partitions(sorted(algorithms)):
        hyps = frozenset(_pair(a, b) for block in partition for a, b in combinations(block, 2))
        if hyps:
            out.add(hyps)
    return sorted(out, key=lambda s: (len(s), sorted(s)))


@dataclass(frozen=True)
class PosthocResult:
    """
    Pairwise comparisons: raw and adjusted p-values and the rejected pairs at level alpha.
    """
    raw_p: Dict[Pair, float]
    adjusted_p: Dict[Pair, float]
    rejected: FrozenSet[Pair]
    alpha: float


def bergmann_hommel(mean_ranks: Mapping[str, float], n_blocks: int, alpha: float = 0.05) -> PosthocResult:
    """
    Bergmann-Hommel post-hoc procedure over all pairs of algorithms.
    A pair is retained when it belongs to some exhaustive set I with min_{I} p > α/|I|;
    its adjusted p-value is min(1, max over exhaustive sets I containing it of |I|·min_{I} p).
    Args:
        mean_ranks (Mapping[str, float]): Mean rank per algorithm.
        n_blocks (int): Number of blocks B behind the mean ranks.
        alpha (float): Significance level.
    Returns:
        PosthocResult: Adjusted p-values and rejection set.
    """
    if len(mean_ranks) > MAX_ALGORITHMS:
        raise StatsError(f"exhaustive-set enumeration supports at most {MAX_ALGORITHMS} algorithms")
    if len(mean_ranks) < 2 or n_blocks < 1:
        raise StatsError("post-hoc comparison needs at least 2 algorithms and 1 block")
    raw = pairwise_pvalues(mean_ranks, n_blocks)
    adjusted = {h: 0.0 for h in raw}
    for hyps in exhaustive_sets(list(mean_ranks)):
        value = len(hyps) * min(raw[h] for h in hyps)
        for h in hyps:
            adjusted[h] = max(adjusted[h], value)
    adjusted = {h: min(1.0, v) for h, v in adjusted.items()}
    rejected = frozenset(h for h, v in adjusted.items() if v <= alpha)
    return PosthocResult(raw, adjusted, rejected, alpha)


def bonferroni(mean_ranks: Mapping[str, float], n_blocks: int, alpha: float = 0.05) -> PosthocResult:
    raw = pairwise_pvalues(mean_ranks, n_blocks)
    adjusted = {h: min(1.0, p * len(raw)) for h, p in raw.items()}
    return PosthocResult(raw, adjusted, frozenset(h for h, v in adjusted.items() if v <= alpha), alpha)


def unadjusted(mean_ranks: Mapping[str, float], n_blocks: int, alpha: float = 0.05) -> PosthocResult:
    raw = pairwise_pvalues(mean_ranks, n_blocks)
    return PosthocResult(raw, dict(raw), frozenset(h for h, p in raw.items() if p <= alpha), alpha)


def cd_diagram_data(mean_ranks: Mapping[str, float], rejections: Set[Pair]) -> List[List[str]]:
    """
    Groups of algorithms with no significant difference between any two members
    (maximal cliques of the non-rejected graph), each sorted by mean rank.
    """
    rejected = {_pair(*p) for p in rejections}
    g = nx.Graph()
    g.add_nodes_from(mean_ranks)
    g.add_edges_from(p for p in combinations(sorted(mean_ranks), 2) if _pair(*p) not in rejected)
    groups = [sorted(c, key=lambda a: (mean_ranks[a], a)) for c in nx.find_cliques(g)]
    return sorted(groups, key=lambda grp: (mean_ranks[grp[0]], -len(grp), grp))
