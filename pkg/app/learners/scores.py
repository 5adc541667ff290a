import logging
from abc import ABC, abstractmethod
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from density.kde import CkdeCpd, ckde_logpdf
from domain.dataset import Dataset, FoldPlan
from domain.errors import GraphError, KdeError
from domain.graph import Dag
from transfer.context import TransferContext

Key = Tuple[str, Tuple[str, ...]]


def _key(node: str, parents: Sequence[str]) -> Key:
    return node, tuple(sorted(parents))


class LocalScore(ABC):
    """
    Decomposable score: the graph score is the sum of per-node terms, each a function of
    the node and its parent set only. Terms are cached by (node, sorted parents).
    """

    def __init__(self):
        self._cache: Dict[Key, float] = {}

    @property
    @abstractmethod
    def names(self) -> Tuple[str, ...]:
        ...

    @abstractmethod
    def compute(self, node: str, parents: Tuple[str, ...]) -> float:
        ...

    def local(self, node: str, parents: Sequence[str]) -> float:
        key = _key(node, parents)
        if key not in self._cache:
            self._cache[key] = self.compute(*key)
        return self._cache[key]

    def total(self, g: Dag) -> float:
        return float(sum(self.local(n, g.parents(n)) for n in sorted(g.nodes)))

    def transfer_active(self, node: str, parents: Sequence[str]) -> bool:
        return False

    def clear(self) -> None:
        self._cache.clear()


class CvScore(LocalScore):
    """
    k-fold cross-validated log-likelihood: each fold's rows are scored by a CKDE fitted on
    the other folds. A parent set too large for the training folds scores −∞.
    """

    def __init__(self, data: Dataset, folds: FoldPlan):
        super().__init__()
        if folds.n_rows != data.n_rows:
            raise KdeError(f"fold plan covers {folds.n_rows} rows, dataset has {data.n_rows}")
        self.data = data
        self.folds = folds
        self.test_sets = [data.take(folds.test_indices(m)) for m in range(folds.k)]
        self._fold_cache: Dict[Key, np.ndarray] = {}

    @property
    def names(self) -> Tuple[str, ...]:
        return self.data.names

    def fold_terms(self, node: str, parents: Sequence[str]) -> np.ndarray:
        """
        Held-out log-likelihood of each fold, shape (k,).
        """
        key = _key(node, parents)
        if key not in self._fold_cache:
            terms = np.full(self.folds.k, -np.inf)
            for m in range(self.folds.k):
                train = self.folds.train_indices(m)
                if len(train) < len(key[1]) + 2:
                    break
                try:
                    cpd = CkdeCpd.fit(node, key[1], self.data, rows=train)
                except KdeError as e:
                    logging.debug("[HC] %s | %s unscorable: %s", node, ",".join(key[1]), e)
                    break
                terms[m] = float(np.sum(ckde_logpdf(cpd, self.test_sets[m])))
            terms.setflags(write=False)
            self._fold_cache[key] = terms
        return self._fold_cache[key]

    def compute(self, node: str, parents: Tuple[str, ...]) -> float:
        return float(np.sum(self.fold_terms(node, parents)))

    def clear(self) -> None:
        super().clear()
        self._fold_cache.clear()


class CvTlScore(LocalScore):
    """
    Cross-validated transfer score. Per fold, the target term is the CvScore fold term and
    the source term is the ψ-weighted sum of each kept source's CKDE (fitted once on the
    whole source) evaluated on the same held-out target rows. The risk compares the target
    data's log-likelihood under a CKDE fitted on all target rows with its log-likelihood
    under the weighted sources, |L_target| − |L_sources|. When it is positive the folds
    are blended η·target + (1−η)·source; otherwise the node keeps the target-only term.
    """

    def __init__(self, ctx: TransferContext, folds: FoldPlan):
        super().__init__()
        self.ctx = ctx
        self.target = CvScore(ctx.target, folds)
        self._source_cpds: Dict[Tuple[int, Key], Optional[CkdeCpd]] = {}
        self._source_terms: Dict[Tuple[int, Key], np.ndarray] = {}
        self._target_fit: Dict[Key, float] = {}
        self._risk: Dict[Key, float] = {}

    @property
    def names(self) -> Tuple[str, ...]:
        return self.ctx.names

    def source_cpd(self, s: int, node: str, parents: Sequence[str]) -> Optional[CkdeCpd]:
        key = (s, _key(node, parents))
        if key not in self._source_cpds:
            try:
                self._source_cpds[key] = CkdeCpd.fit(node, key[1][1], self.ctx.sources[s])
            except KdeError as e:
                logging.debug("[HC-TL] source %d cannot fit %s: %s", s, node, e)
                self._source_cpds[key] = None
        return self._source_cpds[key]

    def source_fold_terms(self, s: int, node: str, parents: Sequence[str]) -> np.ndarray:
        """
        Log-likelihood of each held-out target fold under source s's CKDE, shape (k,).
        """
        key = (s, _key(node, parents))
        if key not in self._source_terms:
            cpd = self.source_cpd(s, node, parents)
            k = self.target.folds.k
            if cpd is None:
                terms = np.full(k, -np.inf)
            else:
                terms = np.array([float(np.sum(ckde_logpdf(cpd, self.target.test_sets[m]))) for m in range(k)])
            terms.setflags(write=False)
            self._source_terms[key] = terms
        return self._source_terms[key]

    def target_fit_loglik(self, node: str, parents: Sequence[str]) -> float:
        """
        Log-likelihood of the target rows under a CKDE fitted on all of them; −∞ when unfittable.
        """
        key = _key(node, parents)
        if key not in self._target_fit:
            try:
                cpd = CkdeCpd.fit(node, key[1], self.ctx.target)
                self._target_fit[key] = float(np.sum(ckde_logpdf(cpd, self.ctx.target)))
            except KdeError as e:
                logging.debug("[HC-TL] target cannot fit %s: %s", node, e)
                self._target_fit[key] = -np.inf
        return self._target_fit[key]

    def blended_terms(self, node: str, parents: Sequence[str]) -> Tuple[np.ndarray, Optional[np.ndarray], float]:
        """
        Target fold terms, weighted source fold terms (None without a usable source) and risk R.
        """
        target = self.target.fold_terms(node, parents)
        if not self.ctx.transfer_enabled or self.ctx.eta >= 1.0 or not np.all(np.isfinite(target)):
            return target, None, -np.inf
        w = self.ctx.weights((node,) + tuple(parents))
        if not w.any_positive:
            return target, None, -np.inf
        source = np.zeros_like(target)
        for s in w.positive():
            source = source + float(w.weights[s]) * self.source_fold_terms(s, node, parents)
        fitted = self.target_fit_loglik(node, parents)
        if not np.all(np.isfinite(source)) or not np.isfinite(fitted):
            return target, None, -np.inf
        risk = abs(fitted) - abs(float(np.sum(source)))
        return target, source, risk

    def risk(self, node: str, parents: Sequence[str]) -> float:
        key = _key(node, parents)
        if key not in self._risk:
            self._risk[key] = self.blended_terms(*key)[2]
        return self._risk[key]

    def transfer_active(self, node: str, parents: Sequence[str]) -> bool:
        return self.risk(node, parents) > 0

    def compute(self, node: str, parents: Tuple[str, ...]) -> float:
        target, source, risk = self.blended_terms(node, parents)
        self._risk[_key(node, parents)] = risk
        if source is None or risk <= 0:
            return float(np.sum(target))
        eta = self.ctx.eta
        return float(np.sum(eta * target + (1.0 - eta) * source))

    def clear(self) -> None:
        super().clear()
        self.target.clear()
        self._source_cpds.clear()
        self._source_terms.clear()
        self._target_fit.clear()
        self._risk.clear()


def _require_node(g: Dag, node: str) -> None:
    if node not in g.nodes:
        raise GraphError(f"unknown node '{node}'")


def cv_score(d: Dataset, g: Dag, node: str, folds: FoldPlan) -> float:
    _require_node(g, node)
    return CvScore(d, folds).local(node, g.parents(node))


def cvtl_score(ctx: TransferContext, g: Dag, node: str, folds: FoldPlan) -> float:
    _require_node(g, node)
    return CvTlScore(ctx, folds).local(node, g.parents(node))
