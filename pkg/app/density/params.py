import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from density.kde import CkdeCpd, KdeBayesianNetwork, ckde_logpdf
from domain.dataset import Dataset
from domain.errors import DataError, KdeError
from domain.graph import Dag
from transfer.context import TransferContext
from utils.seeding import rng_for

MC_SAMPLES = 256


def fit_kdebn(g: Dag, d: Dataset) -> KdeBayesianNetwork:
    """
    Fit one CKDE per node of g on the rows of d, with normal-reference bandwidths.
    Args:
        g (Dag): Network structure.
        d (Dataset): Training data covering every node.
    Returns:
        KdeBayesianNetwork: Fitted network.
    """
    missing = [n for n in g.nodes if n not in d.names]
    if missing:
        raise DataError(f"dataset lacks columns: {', '.join(missing)}")
    return KdeBayesianNetwork(g, {n: CkdeCpd.fit(n, g.parents(n), d) for n in g.nodes})


@dataclass(frozen=True, eq=False)
class TlKdeBayesianNetwork:
    """
    CKDE-TL network: a target CKDE per node pooled log-linearly with the kept sources' CKDEs.

    Attributes:
        dag (Dag): Shared structure.
        target (KdeBayesianNetwork): Network fitted on the target data.
        sources (Tuple[KdeBayesianNetwork, ...]): Networks fitted on each kept source.
        weights (Dict[str, np.ndarray]): Per node, one weight per entry of sources.
        eta (float): Target trust factor.
    """
    dag: Dag
    target: KdeBayesianNetwork
    sources: Tuple[KdeBayesianNetwork, ...]
    weights: Dict[str, np.ndarray]
    eta: float

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise KdeError(f"eta must lie in (0, 1], got {self.eta}")
        for node in self.dag.nodes:
            w = self.weights.get(node)
            if w is None or len(w) != len(self.sources):
                raise KdeError(f"node '{node}' needs one weight per source")
            total = float(np.sum(w))
            if total > 0 and abs(total - 1.0) > 1e-9:
                raise KdeError(f"weights of node '{node}' sum to {total}, not 1")

    def node_logpdf(self, node: str, rows: Dataset) -> np.ndarray:
        """
        η·log f^T + (1−η)·Σ_s w^s·log f^s for one node. Nodes without a positive
        source weight evaluate the target CKDE alone.
        """
        target = ckde_logpdf(self.target.cpds[node], rows)
        w = self.weights[node]
        if self.eta >= 1.0 or not np.any(w > 0):
            return target
        pooled = np.zeros_like(target)
        for s, ws in enumerate(w):
            if ws > 0:
                pooled += ws * ckde_logpdf(self.sources[s].cpds[node], rows)
        return self.eta * target + (1.0 - self.eta) * pooled


def fit_tl_kdebn(g: Dag, ctx: TransferContext) -> TlKdeBayesianNetwork:
    """
    Fit target and kept-source CKDEs to g and attach per-node source weights
    ψ(SJS(X_i, Pa(i))), normalized over the kept sources.
    Args:
        g (Dag): Learned structure.
        ctx (TransferContext): Transfer context.
    Returns:
        TlKdeBayesianNetwork: Pooled network; without kept sources it holds no sources and η = 1.
    """
    target = fit_kdebn(g, ctx.target)
    if not ctx.transfer_enabled:
        logging.info("[Transfer] no kept source; CKDE-TL degenerates to the target network")
        return TlKdeBayesianNetwork(g, target, (), {n: np.zeros(0) for n in g.nodes}, 1.0)
    kept = ctx.kept_sources
    sources = tuple(fit_kdebn(g, ctx.sources[s]) for s in kept)
    weights = {}
    for node in g.nodes:
        w = ctx.weights((node,) + g.parents(node)).weights
        weights[node] = np.array([w[s] for s in kept])
    return TlKdeBayesianNetwork(g, target, sources, weights, ctx.eta)


def tl_logpdf(net: TlKdeBayesianNetwork, rows: Dataset, normalize: bool = False,
              samples: int = MC_SAMPLES, seed: int = 0) -> np.ndarray:
    """
    Per-instance log-density of a CKDE-TL network, summed over nodes.
    The pooled conditionals are unnormalized; normalize=True divides each node term by a
    Monte-Carlo estimate of its normalizing constant at the row's parent values.
    Args:
        net (TlKdeBayesianNetwork): Pooled network.
        rows (Dataset): Instances covering every node.
        normalize (bool): Estimate and remove per-node normalizing constants.
        samples (int): Importance samples per row and node when normalizing.
        seed (int): Seed of the importance sampler.
    Returns:
        np.ndarray: One log-density per row.
    """
    missing = [n for n in net.dag.nodes if n not in rows.names]
    if missing:
        raise DataError(f"dataset lacks columns: {', '.join(missing)}")
    total = np.zeros(rows.n_rows)
    for node in net.dag.nodes:
        term = net.node_logpdf(node, rows)
        if normalize and net.eta < 1.0 and np.any(net.weights[node] > 0):
            term = term - _log_normalizer(net, node, rows, samples, seed)
        total += term
    return total


def tl_loglik(net: TlKdeBayesianNetwork, d: Dataset, normalize: bool = False) -> float:
    return float(np.sum(tl_logpdf(net, d, normalize=normalize)))


def _log_normalizer(net: TlKdeBayesianNetwork, node: str, rows: Dataset, samples: int, seed: int) -> np.ndarray:
    # Importance sampling of the child from a Gaussian fitted to the target training column.
    train = net.target.cpds[node].joint.training_points[:, 0]
    loc = float(np.mean(train))
    scale = 2.0 * float(np.std(train)) + float(np.sqrt(net.target.cpds[node].joint.bandwidth[0, 0]))
    draws = rng_for(seed, "tl-normalizer", node).normal(loc, scale, size=samples)
    log_q = norm.logpdf(draws, loc=loc, scale=scale)
    parents = net.dag.parents(node)
    names = (node,) + parents
    out = np.empty(rows.n_rows)
    for r in range(rows.n_rows):
        block = np.empty((samples, len(names)))
        block[:, 0] = draws
        for j, p in enumerate(parents, start=1):
            block[:, j] = rows.values[r, rows.index_of(p)]
        log_f = net.node_logpdf(node, Dataset(names, block))
        out[r] = logsumexp(log_f - log_q) - np.log(samples)
    return out
