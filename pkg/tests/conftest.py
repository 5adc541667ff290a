from typing import Iterable, List, Sequence, Tuple

import networkx as nx
import numpy as np
import pytest

from ci.ci_test import CiResult
from domain.dataset import Dataset
from domain.graph import Dag


class DSeparationOracle:
    """
    CI test answering from d-separation in a known DAG: p = 1 when X and Y are
    d-separated by Z, p = 0 otherwise. The data argument is ignored.
    """

    def __init__(self, dag: Dag):
        self.dag = dag
        self.calls: List[Tuple[str, str, Tuple[str, ...]]] = []

    def test(self, data: Dataset, x: str, y: str, z: Sequence[str]) -> CiResult:
        self.calls.append((x, y, tuple(z)))
        if nx.is_d_separator(self.dag.digraph, {x}, {y}, set(z)):
            return CiResult(1.0, 0.0)
        return CiResult(0.0, 1.0)


def placeholder_data(names: Iterable[str], rows: int = 30, seed: int = 0) -> Dataset:
    names = tuple(names)
    return Dataset(names, np.random.default_rng(seed).normal(size=(rows, len(names))))


@pytest.fixture
def oracle():
    return DSeparationOracle


@pytest.fixture
def gaussian_data():
    def make(names: Iterable[str] = ("a", "b", "c"), rows: int = 100, seed: int = 0) -> Dataset:
        return placeholder_data(names, rows, seed)
    return make


@pytest.fixture
def chain_data():
    """
    a -> b -> c with strong linear links.
    """
    rng = np.random.default_rng(7)
    a = rng.normal(size=400)
    b = 2.0 * a + 0.3 * rng.normal(size=400)
    c = -1.5 * b + 0.3 * rng.normal(size=400)
    return Dataset(("a", "b", "c"), np.column_stack([a, b, c]))
