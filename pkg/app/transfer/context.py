import logging
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import jensenshannon
from scipy.special import logsumexp

from density.kde import KdeModel
from domain.dataset import Dataset
from domain.errors import TransferError

LN2 = float(np.log(2.0))
PSI_CAP = 1e12
GRID_POINTS = 512


def js_divergence(p_samples: np.ndarray, q_samples: np.ndarray, grid_points: int = GRID_POINTS) -> float:
    """
    Jensen-Shannon divergence (nats) between the 1-D KDEs of two samples.
    Both densities are evaluated on a shared grid spanning the pooled range ± 3 bandwidths
    and turned into trapezoid masses, renormalized in log space so that far-apart
    supports still produce proper distributions.
    Args:
        p_samples (np.ndarray): Sample of the first distribution (≥ 2 values).
        q_samples (np.ndarray): Sample of the second distribution (≥ 2 values).
        grid_points (int): Quadrature grid size.
    Returns:
        float: Divergence in [0, ln 2].
    """
    p = np.asarray(p_samples, dtype=np.float64).ravel()
    q = np.asarray(q_samples, dtype=np.float64).ravel()
    if p.size < 2 or q.size < 2:
        raise TransferError("JS divergence needs at least two samples per side")
    kp = KdeModel.fit(p.reshape(-1, 1))
    kq = KdeModel.fit(q.reshape(-1, 1))
    h = float(np.sqrt(max(kp.bandwidth[0, 0], kq.bandwidth[0, 0])))
    lo = min(p.min(), q.min()) - 3.0 * h
    hi = max(p.max(), q.max()) + 3.0 * h
    grid = np.linspace(lo, hi, grid_points)
    log_w = np.log(np.full(grid_points, (hi - lo) / (grid_points - 1)))
    log_w[[0, -1]] -= np.log(2.0)
    lp = kp.logpdf(grid) + log_w
    lq = kq.logpdf(grid) + log_w
    mass_p = np.exp(lp - logsumexp(lp))
    mass_q = np.exp(lq - logsumexp(lq))
    js = float(jensenshannon(mass_p, mass_q)) ** 2
    return float(np.clip(js, 0.0, LN2)) if np.isfinite(js) else 0.0


def psi(values: Sequence[float]) -> np.ndarray:
    """
    Inverse-divergence gate: 1/u for values inside the Q3 + 1.5·IQR fence, 0 for outliers.
    u = 0 maps to 1e12. Quartiles use linear interpolation.
    """
    u = np.asarray(values, dtype=np.float64).ravel()
    if u.size == 0:
        raise TransferError("psi needs at least one value")
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise TransferError("psi values must be finite and nonnegative")
    q1, q3 = np.percentile(u, [25, 75])
    fence = q3 + 1.5 * (q3 - q1)
    inv = np.full_like(u, PSI_CAP)
    np.divide(1.0, u, out=inv, where=u > 0)
    return np.where(u <= fence, np.minimum(inv, PSI_CAP), 0.0)


@dataclass(frozen=True, eq=False)
class SourceWeights:
    """
    Per-source weights, indexed like TransferContext.sources.
    They sum to 1 when any is positive and are all zero when no source is usable.
    """
    weights: np.ndarray

    @classmethod
    def normalized(cls, raw: Sequence[float]) -> "SourceWeights":
        w = np.asarray(raw, dtype=np.float64)
        total = float(np.sum(w))
        if total > 0:
            w = w / total
        else:
            w = np.zeros_like(w)
        w.setflags(write=False)
        return cls(w)

    @property
    def any_positive(self) -> bool:
        return bool(np.any(self.weights > 0))

    def positive(self) -> Tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.weights > 0))


@dataclass(frozen=True, eq=False)
class TransferContext:
    """
    Target data, source data and the cached divergences every transfer learner consults.

    Attributes:
        target (Dataset): Target dataset, N^T rows.
        sources (Tuple[Dataset, ...]): Source datasets over the same variables.
        per_variable_js (np.ndarray): S×n JS divergences, columns in target.names order.
        global_sjs (np.ndarray): SJS over all variables per source.
        kept_sources (Tuple[int, ...]): Sources with global ψ > 0.
        eta (float): Target trust factor in (0, 1].
    """
    target: Dataset
    sources: Tuple[Dataset, ...]
    per_variable_js: np.ndarray
    global_sjs: np.ndarray
    kept_sources: Tuple[int, ...]
    eta: float

    @property
    def names(self) -> Tuple[str, ...]:
        return self.target.names

    @property
    def transfer_enabled(self) -> bool:
        return bool(self.kept_sources)

    def sjs(self, source: int, variables: Iterable[str]) -> float:
        return sjs(self, source, variables)

    def weights(self, variables: Iterable[str], local: Optional[Sequence[float]] = None) -> SourceWeights:
        """
        Source weights for a variable subset: ψ of each kept source's SJS on the subset,
        optionally scaled by per-source local-similarity factors, then normalized.
        Sources outside kept_sources get weight 0.
        Args:
            variables (Iterable[str]): Variables of the query (X, Y, Z or X_i with its parents).
            local (Optional[Sequence[float]]): One factor per source in self.sources.
        Returns:
            SourceWeights: One weight per source.
        """
        variables = tuple(variables)
        raw = np.zeros(len(self.sources))
        if self.kept_sources:
            gate = psi([self.sjs(s, variables) for s in self.kept_sources])
            raw[list(self.kept_sources)] = gate
        if local is not None:
            raw = raw * np.asarray(local, dtype=np.float64)
        return SourceWeights.normalized(raw)

    def with_eta(self, eta: float) -> "TransferContext":
        """
        Copy of the context with η overridden (used to check the η = 1 degeneration).
        """
        if not 0.0 < eta <= 1.0:
            raise TransferError(f"eta must lie in (0, 1], got {eta}")
        return replace(self, eta=float(eta))


def sjs(ctx: TransferContext, source: int, variables: Iterable[str]) -> float:
    """
    Sum of cached per-variable JS divergences of one source over a variable subset.
    """
    if not 0 <= source < len(ctx.sources):
        raise TransferError(f"unknown source index {source}")
    total = 0.0
    for v in variables:
        try:
            j = ctx.names.index(v)
        except ValueError:
            raise TransferError(f"unknown variable '{v}'") from None
        total += float(ctx.per_variable_js[source, j])
    return total


def build_context(target: Dataset, sources: Sequence[Dataset]) -> TransferContext:
    """
    Build the transfer context: per-variable JS cache, global ψ gate and η.
    Args:
        target (Dataset): Target data.
        sources (Sequence[Dataset]): Source datasets; each must carry the target's variables.
    Returns:
        TransferContext: Context with transfer disabled (η = 1) when no source is kept.
    """
    names = target.names
    aligned = []
    for i, s in enumerate(sources):
        if set(s.names) != set(names):
            raise TransferError(f"source {i} variables {sorted(s.names)} differ from target {sorted(names)}")
        aligned.append(s if s.names == names else s.select(names))
    js = np.zeros((len(aligned), len(names)))
    for i, s in enumerate(aligned):
        for j, v in enumerate(names):
            js[i, j] = js_divergence(target.column(v), s.column(v))
    global_sjs = js.sum(axis=1)
    if aligned:
        gate = psi(global_sjs)
        kept = tuple(int(i) for i in np.flatnonzero(gate > 0))
    else:
        kept = ()
    if kept:
        eta = min(1.0, target.n_rows / float(np.mean([aligned[i].n_rows for i in kept])))
    else:
        eta = 1.0
    js.setflags(write=False)
    global_sjs.setflags(write=False)
    logging.info("[Transfer] %d/%d sources kept, eta=%.6f, SJS=%s",
                 len(kept), len(aligned), eta, np.array2string(global_sjs, precision=4))
    return TransferContext(target, tuple(aligned), js, global_sjs, kept, eta)
