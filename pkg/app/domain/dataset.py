from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from domain.errors import DataError
from utils.seeding import rng_for


@dataclass(frozen=True, eq=False)
class Dataset:
    """
    Column-labelled matrix of continuous observations, immutable after construction.

    Attributes:
        names (Tuple[str, ...]): Unique variable identifiers, in column order.
        values (np.ndarray): N×n matrix of finite reals, stored column-major and read-only.
    """
    names: Tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        names = tuple(str(n) for n in self.names)
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2:
            raise DataError(f"dataset values must be a matrix, got {values.ndim} dimensions")
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise DataError(f"duplicate variable names: {', '.join(dup)}")
        if values.shape[1] != len(names):
            raise DataError(f"{len(names)} names for {values.shape[1]} columns")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError("dataset needs at least one row and one column")
        if not np.all(np.isfinite(values)):
            raise DataError("dataset contains non-finite values")
        values = np.array(values, order="F", copy=True)
        values.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown variable '{name}'") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index_of(name)]

    def columns(self, names: Sequence[str]) -> np.ndarray:
        """
        Extract a block of columns as an M×d matrix in the requested order.
        Args:
            names (Sequence[str]): Variables to extract.
        Returns:
            np.ndarray: Row-major copy of the block (M×0 when names is empty).
        """
        idx = [self.index_of(n) for n in names]
        return np.ascontiguousarray(self.values[:, idx])

    def take(self, rows: Iterable[int]) -> "Dataset":
        rows = np.asarray(list(rows) if not isinstance(rows, np.ndarray) else rows, dtype=np.int64)
        return Dataset(self.names, self.values[rows, :])

    def head(self, n: int) -> "Dataset":
        return Dataset(self.names, self.values[:n, :])

    def select(self, names: Sequence[str]) -> "Dataset":
        return Dataset(tuple(names), self.columns(names))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(np.asarray(self.values), columns=list(self.names))

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "Dataset":
        return cls(tuple(str(c) for c in frame.columns), frame.to_numpy(dtype=np.float64))


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """
    k disjoint index sets covering 0..N-1 whose sizes differ by at most one.
    """
    k: int
    index_sets: Tuple[np.ndarray, ...]

    @property
    def n_rows(self) -> int:
        return sum(len(s) for s in self.index_sets)

    def test_indices(self, m: int) -> np.ndarray:
        return self.index_sets[m]

    def train_indices(self, m: int) -> np.ndarray:
        """
        Indices of every fold except m, sorted ascending.
        """
        return np.sort(np.concatenate([s for i, s in enumerate(self.index_sets) if i != m]))


def load_csv(path: Union[str, Path]) -> Dataset:
    """
    Read a comma-separated file with a mandatory header into a Dataset.
    Rows with any empty or non-numeric cell are dropped.
    Args:
        path (str | Path): CSV file path.
    Returns:
        Dataset: Parsed dataset, column order preserved.
    """
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            header = fh.readline().rstrip("\r\n")
    except (OSError, UnicodeDecodeError) as e:
        raise DataError(f"cannot read '{path}': {e}") from e
    if not header:
        raise DataError(f"'{path}' has no header row")
    names = [h.strip() for h in header.split(",")]
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, header=None, skiprows=1)
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame(columns=range(len(names)))
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise DataError(f"cannot parse '{path}': {e}") from e
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise DataError(f"duplicate header names: {', '.join(dup)}")
    if frame.shape[1] != len(names):
        raise DataError(f"header has {len(names)} fields but rows have {frame.shape[1]}")
    frame.columns = names
    numeric = frame.apply(lambda col: pd.to_numeric(col.astype(str).str.strip(), errors="coerce"))
    numeric = numeric.replace([np.inf, -np.inf], np.nan).dropna(axis=0, how="any")
    if numeric.empty:
        raise DataError(f"'{path}' has zero usable rows")
    return Dataset(tuple(names), numeric.to_numpy(dtype=np.float64))


def write_csv(d: Dataset, path: Union[str, Path]) -> None:
    """
    Write a Dataset so that load_csv reproduces it (17 significant digits).
    """
    try:
        d.to_frame().to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    except OSError as e:
        raise DataError(f"cannot write '{path}': {e}") from e


def kfold_indices(n_rows: int, k: int, seed: int) -> FoldPlan:
    """
    Shuffled k-fold assignment, deterministic for a fixed seed.
    Args:
        n_rows (int): Number of instances N.
        k (int): Number of folds, 2 <= k <= N.
        seed (int): Root seed.
    Returns:
        FoldPlan: Disjoint folds covering 0..N-1, each sorted ascending.
    """
    if k < 2:
        raise DataError(f"k-fold needs k >= 2, got {k}")
    if k > n_rows:
        raise DataError(f"cannot split {n_rows} rows into {k} folds")
    perm = rng_for(seed, "kfold", n_rows, k).permutation(n_rows)
    return FoldPlan(k, tuple(np.sort(part) for part in np.array_split(perm, k)))


def holdout_split(d: Dataset, test_n: int, seed: int) -> Tuple[Dataset, Dataset]:
    """
    Partition the rows of a dataset into train and test sets.
    Args:
        d (Dataset): Dataset to split.
        test_n (int): Exact number of test rows, 0 < test_n < N.
        seed (int): Root seed.
    Returns:
        Tuple[Dataset, Dataset]: (train, test), both keeping the original row order.
    """
    if not 0 < test_n < d.n_rows:
        raise DataError(f"test_n must be in (0, {d.n_rows}), got {test_n}")
    perm = rng_for(seed, "holdout", d.n_rows, test_n).permutation(d.n_rows)
    return d.take(np.sort(perm[test_n:])), d.take(np.sort(perm[:test_n]))
