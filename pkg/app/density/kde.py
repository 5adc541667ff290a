from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from domain.dataset import Dataset
from domain.errors import DataError, KdeError
from domain.graph import Dag

JITTER = 1e-8
# Upper bound on query×training distance entries evaluated at once.
_BLOCK_ENTRIES = 4_000_000


def normal_reference_bandwidth(data: np.ndarray) -> np.ndarray:
    """
    Normal reference rule for a full bandwidth matrix:
    H = (4/(d+2))^(2/(d+4)) · Σ · M^(-2/(d+4)).
    A near-singular Σ gets jitter 1e-8·trace(Σ)/d·I before giving up.
    Args:
        data (np.ndarray): M×d sample.
    Returns:
        np.ndarray: d×d symmetric positive-definite bandwidth.
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data.reshape(-1, 1)
    m, d = data.shape
    if d < 1:
        raise KdeError("bandwidth needs at least one variable")
    if m < d + 1:
        raise KdeError(f"bandwidth needs at least {d + 1} rows for {d} variables, got {m}")
    cov = np.atleast_2d(np.cov(data, rowvar=False, ddof=1))
    cov = _regularize(cov)
    return (4.0 / (d + 2)) ** (2.0 / (d + 4)) * cov * m ** (-2.0 / (d + 4))


def _regularize(cov: np.ndarray) -> np.ndarray:
    try:
        np.linalg.cholesky(cov)
        return cov
    except np.linalg.LinAlgError:
        pass
    d = cov.shape[0]
    trace = float(np.trace(cov))
    scale = trace / d if trace > 0 else 1.0
    jittered = cov + JITTER * scale * np.eye(d)
    try:
        np.linalg.cholesky(jittered)
    except np.linalg.LinAlgError:
        raise KdeError("sample covariance is singular after regularization") from None
    return jittered


@dataclass(frozen=True, eq=False)
class KdeModel:
    """
    Multivariate Gaussian-kernel density estimate.

    Attributes:
        training_points (np.ndarray): M×d kernel centres.
        bandwidth (np.ndarray): d×d bandwidth matrix H.
        cholesky_factor (np.ndarray): Lower-triangular L with L·Lᵀ = H.
        log_norm_const (float): log((2π)^{d/2}·|H|^{1/2}).
        whitened_points (np.ndarray): L⁻¹-transformed training points.
    """
    training_points: np.ndarray
    bandwidth: np.ndarray
    cholesky_factor: np.ndarray
    log_norm_const: float
    whitened_points: np.ndarray

    @classmethod
    def fit(cls, data: np.ndarray, bandwidth: Optional[np.ndarray] = None) -> "KdeModel":
        """
        Build a KDE on data, with the normal reference rule unless a bandwidth is given.
        Args:
            data (np.ndarray): M×d training sample.
            bandwidth (Optional[np.ndarray]): Explicit d×d bandwidth.
        Returns:
            KdeModel: Immutable fitted model.
        """
        points = np.array(data, dtype=np.float64, ndmin=2, copy=True)
        if points.ndim == 2 and points.shape[0] == 1 and np.asarray(data).ndim == 1:
            points = points.reshape(-1, 1)
        if bandwidth is None:
            bandwidth = normal_reference_bandwidth(points)
        h = np.atleast_2d(np.array(bandwidth, dtype=np.float64, copy=True))
        if h.shape != (points.shape[1], points.shape[1]):
            raise KdeError(f"bandwidth shape {h.shape} does not match {points.shape[1]} variables")
        try:
            chol = np.linalg.cholesky(h)
        except np.linalg.LinAlgError:
            raise KdeError("bandwidth matrix is not positive definite") from None
        d = points.shape[1]
        log_norm = 0.5 * d * np.log(2.0 * np.pi) + float(np.sum(np.log(np.diag(chol))))
        whitened = solve_triangular(chol, points.T, lower=True).T
        for arr in (points, h, chol, whitened):
            arr.setflags(write=False)
        return cls(points, h, chol, log_norm, whitened)

    @property
    def dim(self) -> int:
        return self.training_points.shape[1]

    @property
    def n_points(self) -> int:
        return self.training_points.shape[0]

    def logpdf(self, query: np.ndarray) -> np.ndarray:
        """
        Log-density at each query row, via log-sum-exp over kernels.
        Args:
            query (np.ndarray): Q×d query points.
        Returns:
            np.ndarray: Q log-density values.
        """
        return kde_logpdf(self, query)


def kde_logpdf(m: KdeModel, query: np.ndarray) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    if q.ndim == 1:
        q = q.reshape(-1, 1) if m.dim == 1 else q.reshape(1, -1)
    if q.ndim != 2 or q.shape[1] != m.dim:
        raise KdeError(f"query has {q.shape[-1]} columns, model has {m.dim}")
    wq = solve_triangular(m.cholesky_factor, q.T, lower=True).T
    out = np.empty(q.shape[0])
    block = max(1, _BLOCK_ENTRIES // max(1, m.n_points))
    offset = np.log(m.n_points) + m.log_norm_const
    for start in range(0, q.shape[0], block):
        sq = cdist(wq[start:start + block], m.whitened_points, metric="sqeuclidean")
        out[start:start + block] = logsumexp(-0.5 * sq, axis=1) - offset
    return out


@dataclass(frozen=True, eq=False)
class CkdeCpd:
    """
    Conditional KDE: joint KDE over (child, parents) divided by marginal KDE over parents.
    Both models use their own normal-reference bandwidth on the same training rows.
    """
    child: str
    parents: Tuple[str, ...]
    joint: KdeModel
    marginal: Optional[KdeModel]

    @classmethod
    def fit(cls, child: str, parents: Sequence[str], data: Dataset,
            rows: Optional[np.ndarray] = None) -> "CkdeCpd":
        """
        Fit the conditional density of child given parents.
        Args:
            child (str): Child variable.
            parents (Sequence[str]): Parent variables (order is kept).
            data (Dataset): Training data.
            rows (Optional[np.ndarray]): Subset of row indices to train on.
        Returns:
            CkdeCpd: Fitted conditional density.
        """
        parents = tuple(parents)
        try:
            block = data.columns((child,) + parents)
        except DataError as e:
            raise KdeError(str(e)) from e
        if rows is not None:
            block = block[rows]
        if block.shape[0] < len(parents) + 2:
            raise KdeError(f"'{child}' needs at least {len(parents) + 2} rows with "
                           f"{len(parents)} parents, got {block.shape[0]}")
        joint = KdeModel.fit(block)
        marginal = KdeModel.fit(block[:, 1:]) if parents else None
        return cls(child, parents, joint, marginal)

    @property
    def variables(self) -> Tuple[str, ...]:
        return (self.child,) + self.parents

    def logpdf(self, rows: Dataset) -> np.ndarray:
        return ckde_logpdf(self, rows)


def ckde_logpdf(c: CkdeCpd, rows: Dataset) -> np.ndarray:
    """
    log f(child | parents) = joint logpdf − marginal logpdf for each row.
    """
    try:
        block = rows.columns(c.variables)
    except DataError as e:
        raise KdeError(str(e)) from e
    joint = kde_logpdf(c.joint, block)
    if c.marginal is None:
        return joint
    return joint - kde_logpdf(c.marginal, block[:, 1:])


@dataclass(frozen=True, eq=False)
class KdeBayesianNetwork:
    """
    DAG with one CKDE conditional density per node.
    """
    dag: Dag
    cpds: Dict[str, CkdeCpd]

    def __post_init__(self):
        if set(self.cpds) != set(self.dag.nodes):
            raise KdeError("every node needs exactly one CPD")
        for node, cpd in self.cpds.items():
            if cpd.child != node or set(cpd.parents) != set(self.dag.parents(node)):
                raise KdeError(f"CPD of '{node}' does not match its parents in the DAG")

    def node_logpdf(self, node: str, d: Dataset) -> np.ndarray:
        return ckde_logpdf(self.cpds[node], d)

    def logpdf(self, d: Dataset) -> np.ndarray:
        """
        Per-instance log-density, summed over nodes.
        """
        return np.sum([self.node_logpdf(n, d) for n in self.dag.nodes], axis=0)


def network_loglik(bn: KdeBayesianNetwork, d: Dataset) -> float:
    """
    Total log-likelihood of a dataset: Σ over nodes and rows of log f(x_i | x_Pa(i)).
    Args:
        bn (KdeBayesianNetwork): Fitted network.
        d (Dataset): Evaluation data covering every network variable.
    Returns:
        float: Σ_i Σ_j log f(x_i^j | x_Pa(i)^j).
    """
    missing = [n for n in bn.dag.nodes if n not in d.names]
    if missing:
        raise DataError(f"dataset lacks columns: {', '.join(missing)}")
    return float(sum(np.sum(bn.node_logpdf(n, d)) for n in bn.dag.nodes))
