import logging
import math
from typing import Set, Tuple

import networkx as nx
import numpy as np

from domain.config import CorruptionSpec
from domain.dataset import Dataset
from domain.graph import Dag
from synthetic.networks import StructuralNetwork, sample
from utils.seeding import rng_for

RELOCATION_TRIES = 100
COEFFICIENT_RANGE = (0.3, 1.5)


def _ceil_count(fraction: float, total: int) -> int:
    # round first so that 0.3·10 counts 3, not 4
    return int(math.ceil(round(fraction * total, 9)))


def modify_arcs(net: StructuralNetwork, spec: CorruptionSpec) -> StructuralNetwork:
    """
    Relocate ⌈fraction·|arcs|⌉ arcs chosen uniformly without replacement.
    A relocated arc u→v loses its term in v's equation; a new arc a→b between a random
    non-adjacent pair that keeps the graph acyclic adds coefficient·a, coefficient ~ U[0.3, 1.5],
    to the first mixture component of b. After 100 failed draws the arc is only deleted.
    Args:
        net (StructuralNetwork): Generating network.
        spec (CorruptionSpec): Fraction and seed.
    Returns:
        StructuralNetwork: Modified network; net itself when nothing is chosen.
    """
    arcs = sorted(net.dag.arcs)
    count = _ceil_count(spec.modified_fraction, len(arcs))
    if count == 0:
        return net
    rng = rng_for(spec.seed, "modify-arcs")
    chosen = [arcs[i] for i in sorted(rng.choice(len(arcs), size=count, replace=False))]
    nodes = sorted(net.dag.nodes)
    current: Set[Tuple[str, str]] = set(net.dag.arcs)
    cpds = dict(net.cpds)
    g = nx.DiGraph()
    g.add_nodes_from(nodes)
    g.add_edges_from(sorted(current))
    for u, v in chosen:
        current.discard((u, v))
        g.remove_edge(u, v)
        cpds[v] = cpds[v].without_parent(u)
        for _ in range(RELOCATION_TRIES):
            i, j = rng.choice(len(nodes), size=2, replace=False)
            a, b = nodes[i], nodes[j]
            if {a, b} == {u, v} or g.has_edge(a, b) or g.has_edge(b, a) or nx.has_path(g, b, a):
                continue
            current.add((a, b))
            g.add_edge(a, b)
            cpds[b] = cpds[b].with_linear_term(a, float(rng.uniform(*COEFFICIENT_RANGE)))
            logging.debug("[Synthetic] relocated %s->%s to %s->%s", u, v, a, b)
            break
        else:
            logging.warning("[Synthetic] no legal relocation for %s->%s after %d tries; arc deleted",
                            u, v, RELOCATION_TRIES)
    return StructuralNetwork(Dag(net.dag.nodes, frozenset(current)), cpds)


def add_noise(d: Dataset, spec: CorruptionSpec) -> Dataset:
    """
    Add iid Gaussian(noise_mean, noise_std) noise to every cell.
    """
    if spec.noise_std == 0 and spec.noise_mean == 0:
        return d
    noise = rng_for(spec.seed, "noise").normal(spec.noise_mean, spec.noise_std, size=d.values.shape)
    return Dataset(d.names, d.values + noise)


def shuffle_columns(d: Dataset, fraction: float, seed: int) -> Dataset:
    """
    Independently permute ⌈fraction·n⌉ randomly chosen columns, breaking their dependencies
    with the rest of the data while keeping each marginal.
    """
    count = _ceil_count(fraction, d.n_vars)
    if count == 0:
        return d
    rng = rng_for(seed, "shuffle-columns")
    values = np.array(d.values)
    for j in sorted(rng.choice(d.n_vars, size=count, replace=False)):
        values[:, j] = values[rng.permutation(d.n_rows), j]
    return Dataset(d.names, values)


def corrupt_source(net: StructuralNetwork, n: int, spec: CorruptionSpec) -> Dataset:
    """
    Source pipeline for generative networks: modify arcs, sample, add noise.
    """
    modified = modify_arcs(net, spec)
    return add_noise(sample(modified, n, spec.seed), spec)
