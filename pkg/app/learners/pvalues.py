import logging
from abc import ABC, abstractmethod
from typing import Dict, List, Sequence, Tuple

from ci.ci_test import CiTest
from domain.config import PcConfig
from domain.dataset import Dataset
from transfer.context import TransferContext
from utils.traces import PooledPValueTrace

Query = Tuple[str, str, Tuple[str, ...]]

LOCAL_AGREE = 1.0
LOCAL_DISAGREE = 0.5


def _key(x: str, y: str, z: Sequence[str]) -> Query:
    a, b = sorted((x, y))
    return a, b, tuple(sorted(z))


class PValueSource(ABC):
    """
    Where the PC family gets the p-value of a CI query. Answers are cached per query.
    """

    def __init__(self):
        self._cache: Dict[Query, float] = {}

    @property
    @abstractmethod
    def names(self) -> Tuple[str, ...]:
        ...

    @abstractmethod
    def compute(self, x: str, y: str, z: Tuple[str, ...]) -> float:
        ...

    def pvalue(self, x: str, y: str, z: Sequence[str]) -> float:
        """
        p-value of X ⟂ Y | Z, symmetric in X and Y and independent of the order of Z.
        """
        key = _key(x, y, z)
        if key not in self._cache:
            self._cache[key] = self.compute(*key)
        return self._cache[key]

    @property
    def queries(self) -> int:
        return len(self._cache)


class TargetPValues(PValueSource):
    """
    Plain CI test on a single dataset.
    """

    def __init__(self, data: Dataset, ci: CiTest):
        super().__init__()
        self.data = data
        self.ci = ci

    @property
    def names(self) -> Tuple[str, ...]:
        return self.data.names

    def compute(self, x: str, y: str, z: Tuple[str, ...]) -> float:
        return self.ci.test(self.data, x, y, z).p_value


def pooled_pvalue(q: Query, ctx: TransferContext, cfg: PcConfig, ci: CiTest) -> PooledPValueTrace:
    """
    Linear pool of the target p-value with the kept sources' p-values.
    Source weights are ψ(SJS over X, Y, Z) times local similarity (1 when the source
    makes the same decision as the target at level α, 0.5 otherwise), normalized.
    Args:
        q (Query): (X, Y, Z).
        ctx (TransferContext): Transfer context.
        cfg (PcConfig): Supplies α.
        ci (CiTest): Test run on the target and on every kept source.
    Returns:
        PooledPValueTrace: η·P^T + (1−η)·Σ w^s·P^s, or P^T when no source weight is positive.
    """
    x, y, z = q
    z = tuple(z)
    p_target = ci.test(ctx.target, x, y, z).p_value
    n_src = len(ctx.sources)
    source_p: List = [None] * n_src
    local = [0.0] * n_src
    for s in ctx.kept_sources:
        p = ci.test(ctx.sources[s], x, y, z).p_value
        source_p[s] = p
        local[s] = LOCAL_AGREE if (p_target < cfg.alpha) == (p < cfg.alpha) else LOCAL_DISAGREE
    w = ctx.weights((x, y) + z, local=local)
    if ctx.eta >= 1.0 or not w.any_positive:
        pooled = p_target
    else:
        pooled = ctx.eta * p_target + (1.0 - ctx.eta) * sum(
            float(w.weights[s]) * source_p[s] for s in w.positive())
        pooled = min(1.0, max(0.0, pooled))
    return PooledPValueTrace(
        x=x, y=y, z=list(z), target_p=p_target, source_p=source_p, local_similarity=local,
        weights=[float(v) for v in w.weights], eta=ctx.eta, pooled_p=pooled,
    )


class PooledPValues(PValueSource):
    """
    PCS-TL p-values: every query is answered by pooled_pvalue and its trace kept for audit.
    """

    def __init__(self, ctx: TransferContext, cfg: PcConfig, ci: CiTest):
        super().__init__()
        self.ctx = ctx
        self.cfg = cfg
        self.ci = ci
        self.traces: List[PooledPValueTrace] = []

    @property
    def names(self) -> Tuple[str, ...]:
        return self.ctx.names

    def compute(self, x: str, y: str, z: Tuple[str, ...]) -> float:
        trace = pooled_pvalue((x, y, z), self.ctx, self.cfg, self.ci)
        self.traces.append(trace)
        logging.debug("[PCS-TL] %s ⟂ %s | %s: target=%.4f pooled=%.4f",
                      x, y, ",".join(z) or "-", trace.target_p, trace.pooled_p)
        return trace.pooled_p
