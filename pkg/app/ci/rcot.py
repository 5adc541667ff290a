import logging
from typing import Optional, Sequence

import numpy as np
from scipy import linalg
from scipy.spatial.distance import pdist
from scipy.stats import chi2, gamma

from ci.ci_test import CiResult
from domain.config import NullApprox, RcotConfig
from domain.dataset import Dataset
from domain.errors import DataError
from utils.seeding import derive_seed, rng_for

RIDGE = 1e-10
MEDIAN_SUBSAMPLE = 500
MIN_RECOMMENDED_ROWS = 25


def median_heuristic(column_block: np.ndarray) -> float:
    """
    Kernel width as the median pairwise Euclidean distance over the first 500 rows.
    Falls back to 1.0 when every point coincides.
    """
    block = np.asarray(column_block, dtype=np.float64)
    if block.ndim == 1:
        block = block.reshape(-1, 1)
    block = block[:MEDIAN_SUBSAMPLE]
    if block.shape[0] < 2:
        return 1.0
    med = float(np.median(pdist(block, metric="euclidean")))
    return med if np.isfinite(med) and med > 0 else 1.0


def random_fourier_map(data: np.ndarray, weights: np.ndarray, offsets: np.ndarray, sigma: float) -> np.ndarray:
    """
    √(2/num)·cos(data·W/σ + b) for an explicit weight matrix W (d×num) and offsets b (num).
    """
    if sigma <= 0:
        raise ValueError(f"kernel width must be positive, got {sigma}")
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data.reshape(-1, 1)
    num = weights.shape[1]
    return np.sqrt(2.0 / num) * np.cos(data @ weights / sigma + offsets)


def fourier_features(data: np.ndarray, num: int, sigma: float, seed: int) -> np.ndarray:
    """
    Random Fourier features of a Gaussian kernel.
    Args:
        data (np.ndarray): M×d block.
        num (int): Number of features.
        sigma (float): Kernel width, > 0.
        seed (int): Stream seed; identical seeds give identical features.
    Returns:
        np.ndarray: M×num feature matrix with entries in [−√(2/num), √(2/num)].
    """
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data.reshape(-1, 1)
    rng = rng_for(seed, "fourier", data.shape[1], num)
    weights = rng.standard_normal((data.shape[1], num))
    offsets = rng.uniform(0.0, 2.0 * np.pi, size=num)
    return random_fourier_map(data, weights, offsets, sigma)


def _standardize(block: np.ndarray) -> np.ndarray:
    sd = block.std(axis=0, ddof=1) if block.shape[0] > 1 else np.zeros(block.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    return (block - block.mean(axis=0)) / sd


def _residualize(features: np.ndarray, on: np.ndarray) -> np.ndarray:
    m = features.shape[0]
    gram = on.T @ on / m + RIDGE * np.eye(on.shape[1])
    rhs = on.T @ features / m
    try:
        beta = linalg.solve(gram, rhs, assume_a="pos")
    except (linalg.LinAlgError, ValueError):
        beta = np.linalg.lstsq(gram, rhs, rcond=None)[0]
    return features - on @ beta


def hbe_pvalue(statistic: float, eigenvalues: np.ndarray) -> float:
    """
    Upper tail of Σ λ_i χ²_1 by Hall-Buckley-Eagleson three-moment matching.
    """
    k1 = float(np.sum(eigenvalues))
    k2 = 2.0 * float(np.sum(eigenvalues ** 2))
    k3 = 8.0 * float(np.sum(eigenvalues ** 3))
    if k2 <= 0 or k3 <= 0:
        return 1.0
    nu = 8.0 * k2 ** 3 / k3 ** 2
    shifted = np.sqrt(2.0 * nu / k2) * (statistic - k1) + nu
    return float(chi2.sf(shifted, nu))


def gamma2_pvalue(statistic: float, eigenvalues: np.ndarray) -> float:
    """
    Upper tail of Σ λ_i χ²_1 by a two-moment gamma match.
    """
    mean = float(np.sum(eigenvalues))
    var = 2.0 * float(np.sum(eigenvalues ** 2))
    if mean <= 0 or var <= 0:
        return 1.0
    return float(gamma.sf(statistic, a=mean ** 2 / var, scale=var / mean))


def rcot_pvalue(x: np.ndarray, y: np.ndarray, z: Optional[np.ndarray], cfg: RcotConfig,
                seed: Optional[int] = None) -> CiResult:
    """
    Randomized conditional correlation test of X ⟂ Y | Z.
    Args:
        x (np.ndarray): M values of X.
        y (np.ndarray): M values of Y.
        z (Optional[np.ndarray]): M×|Z| conditioning block, None or zero columns for the unconditional test.
        cfg (RcotConfig): Feature counts and null approximation.
        seed (Optional[int]): Feature seed; cfg.seed when omitted.
    Returns:
        CiResult: p-value clipped to [0, 1] and the nonnegative statistic.
    """
    seed = cfg.seed if seed is None else seed
    x = np.asarray(x, dtype=np.float64).reshape(-1, 1)
    y = np.asarray(y, dtype=np.float64).reshape(-1, 1)
    z = np.empty((x.shape[0], 0)) if z is None else np.asarray(z, dtype=np.float64)
    if z.ndim == 1:
        z = z.reshape(-1, 1)
    m = x.shape[0]
    if y.shape[0] != m or z.shape[0] != m:
        raise DataError(f"row counts differ: x={m}, y={y.shape[0]}, z={z.shape[0]}")
    if m < MIN_RECOMMENDED_ROWS:
        logging.warning("[RCoT] only %d rows; p-values are unreliable below %d", m, MIN_RECOMMENDED_ROWS)
    if m < 2 or np.ptp(x) == 0 or np.ptp(y) == 0:
        return CiResult(1.0, 0.0)
    z = z[:, np.ptp(z, axis=0) > 0] if z.shape[1] else z

    x, y = _standardize(x), _standardize(y)
    fx = fourier_features(x, cfg.num_features_xy, median_heuristic(x), derive_seed(seed, "x"))
    fy = fourier_features(y, cfg.num_features_xy, median_heuristic(y), derive_seed(seed, "y"))
    fx = fx - fx.mean(axis=0)
    fy = fy - fy.mean(axis=0)
    if z.shape[1]:
        z = _standardize(z)
        fz = fourier_features(z, cfg.num_features_z, median_heuristic(z), derive_seed(seed, "z"))
        fz = fz - fz.mean(axis=0)
        fx, fy = _residualize(fx, fz), _residualize(fy, fz)

    cross = fx.T @ fy / m
    statistic = float(m * np.sum(cross ** 2))
    products = (fx[:, :, None] * fy[:, None, :]).reshape(m, -1)
    eigenvalues = linalg.eigvalsh(products.T @ products / m)
    eigenvalues = eigenvalues[eigenvalues > 0]
    if eigenvalues.size == 0:
        return CiResult(1.0, statistic)
    if cfg.null_approx is NullApprox.GAMMA2:
        p = gamma2_pvalue(statistic, eigenvalues)
    else:
        p = hbe_pvalue(statistic, eigenvalues)
    if not np.isfinite(p):
        p = 1.0
    return CiResult(float(np.clip(p, 0.0, 1.0)), statistic)


class RcotTest:
    """
    CiTest backed by RCoT. Each query draws its features from a seed derived from the
    run seed and the query variables, so the same (X, Y, Z) sees the same features on the
    target and on every source.
    """

    def __init__(self, cfg: RcotConfig = RcotConfig()):
        self.cfg = cfg

    def query_seed(self, x: str, y: str, z: Sequence[str]) -> int:
        a, b = sorted((x, y))
        return derive_seed(self.cfg.seed, "rcot", a, b, *sorted(z))

    def test(self, data: Dataset, x: str, y: str, z: Sequence[str]) -> CiResult:
        a, b = sorted((x, y))
        zs = sorted(z)
        return rcot_pvalue(
            data.column(a), data.column(b), data.columns(zs) if zs else None,
            self.cfg, seed=self.query_seed(x, y, zs),
        )
