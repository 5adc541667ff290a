from dataclasses import dataclass
from typing import Dict, FrozenSet, Mapping, Tuple

import numpy as np

from domain.dataset import Dataset
from domain.errors import NetworkSpecError
from domain.graph import Dag
from utils.seeding import rng_for


@dataclass(frozen=True)
class LinearTerm:
    """
    coefficient · Π factors; no factors is an intercept, two factors a product term.
    """
    coefficient: float
    factors: Tuple[str, ...] = ()

    def evaluate(self, values: Mapping[str, np.ndarray], n: int) -> np.ndarray:
        out = np.full(n, float(self.coefficient))
        for f in self.factors:
            out = out * values[f]
        return out


@dataclass(frozen=True)
class MixtureComponent:
    """
    One Gaussian component: weight, mean Σ terms, standard deviation.
    """
    weight: float
    terms: Tuple[LinearTerm, ...]
    std: float

    def mean(self, values: Mapping[str, np.ndarray], n: int) -> np.ndarray:
        out = np.zeros(n)
        for t in self.terms:
            out = out + t.evaluate(values, n)
        return out

    def factors(self) -> FrozenSet[str]:
        return frozenset(f for t in self.terms for f in t.factors)


@dataclass(frozen=True)
class NodeCpd:
    """
    Gaussian-mixture conditional density of one node.
    """
    node: str
    components: Tuple[MixtureComponent, ...]

    def __post_init__(self):
        if not self.components:
            raise NetworkSpecError(f"'{self.node}' has no mixture component")
        weights = [c.weight for c in self.components]
        if any(w <= 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
            raise NetworkSpecError(f"mixture weights of '{self.node}' must be positive and sum to 1")
        if any(not c.std > 0 for c in self.components):
            raise NetworkSpecError(f"standard deviations of '{self.node}' must be positive")

    def factors(self) -> FrozenSet[str]:
        return frozenset().union(*(c.factors() for c in self.components))

    def without_parent(self, parent: str) -> "NodeCpd":
        """
        Drop a parent: its linear terms vanish and it is removed from product terms.
        """
        components = []
        for c in self.components:
            terms = []
            for t in c.terms:
                if t.factors == (parent,):
                    continue
                terms.append(LinearTerm(t.coefficient, tuple(f for f in t.factors if f != parent)))
            components.append(MixtureComponent(c.weight, tuple(terms), c.std))
        return NodeCpd(self.node, tuple(components))

    def with_linear_term(self, parent: str, coefficient: float) -> "NodeCpd":
        """
        Add coefficient·parent to the mean of the first component.
        """
        first = self.components[0]
        grown = MixtureComponent(first.weight, first.terms + (LinearTerm(coefficient, (parent,)),), first.std)
        return NodeCpd(self.node, (grown,) + self.components[1:])


@dataclass(frozen=True, eq=False)
class StructuralNetwork:
    """
    DAG with a Gaussian-mixture structural equation per node.
    """
    dag: Dag
    cpds: Mapping[str, NodeCpd]

    def __post_init__(self):
        if set(self.cpds) != set(self.dag.nodes):
            raise NetworkSpecError("every node needs exactly one CPD")
        for node, cpd in self.cpds.items():
            extra = cpd.factors() - set(self.dag.parents(node))
            if extra:
                raise NetworkSpecError(f"CPD of '{node}' references non-parents: {', '.join(sorted(extra))}")
        object.__setattr__(self, "cpds", dict(self.cpds))

    @classmethod
    def from_cpds(cls, cpds: Mapping[str, NodeCpd], nodes: Tuple[str, ...] = ()) -> "StructuralNetwork":
        """
        Build the network whose arcs are exactly the parents each CPD references.
        """
        nodes = tuple(nodes) or tuple(sorted(cpds))
        arcs = frozenset((p, n) for n, c in cpds.items() for p in c.factors())
        return cls(Dag(nodes, arcs), cpds)


def sample(net: StructuralNetwork, n: int, seed: int) -> Dataset:
    """
    Ancestral sampling: each node draws a mixture component, then a Gaussian around the
    component mean evaluated at the already-sampled parents.
    Args:
        net (StructuralNetwork): Network to sample.
        n (int): Number of instances, ≥ 1.
        seed (int): Root seed; each node uses its own stream.
    Returns:
        Dataset: n rows, columns in net.dag.nodes order.
    """
    if n < 1:
        raise NetworkSpecError(f"sample size must be at least 1, got {n}")
    values: Dict[str, np.ndarray] = {}
    rows = np.arange(n)
    for node in net.dag.topological_order():
        cpd = net.cpds[node]
        rng = rng_for(seed, "sample", node)
        weights = np.array([c.weight for c in cpd.components])
        chosen = rng.choice(len(weights), size=n, p=weights / weights.sum())
        noise = rng.standard_normal(n)
        means = np.vstack([c.mean(values, n) for c in cpd.components])
        stds = np.array([c.std for c in cpd.components])
        values[node] = means[chosen, rows] + stds[chosen] * noise
    return Dataset(net.dag.nodes, np.column_stack([values[v] for v in net.dag.nodes]))
