import logging
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from itertools import combinations
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple, Union

import networkx as nx

from domain.errors import GraphError, RejectedMove

Arc = Tuple[str, str]
Edge = FrozenSet[str]


def _edge(a: str, b: str) -> Edge:
    return frozenset((a, b))


def _sorted_edge(e: Edge) -> Tuple[str, str]:
    a, b = sorted(e)
    return a, b


@dataclass(frozen=True)
class Dag:
    """
    Directed acyclic graph over named variables.

    Attributes:
        nodes (Tuple[str, ...]): Variable identifiers, in declaration order.
        arcs (FrozenSet[Arc]): Ordered (parent, child) pairs.
    """
    nodes: Tuple[str, ...]
    arcs: FrozenSet[Arc] = frozenset()

    def __post_init__(self):
        nodes = tuple(self.nodes)
        arcs = frozenset((str(a), str(b)) for a, b in self.arcs)
        if len(set(nodes)) != len(nodes):
            raise GraphError("duplicate node names")
        known = set(nodes)
        for a, b in arcs:
            if a == b:
                raise GraphError(f"self-loop on '{a}'")
            if a not in known or b not in known:
                raise GraphError(f"arc {a}->{b} references an unknown node")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "arcs", arcs)
        if not nx.is_directed_acyclic_graph(self.digraph):
            raise GraphError("arcs contain a directed cycle")

    @classmethod
    def empty(cls, nodes: Iterable[str]) -> "Dag":
        return cls(tuple(nodes), frozenset())

    @cached_property
    def digraph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(sorted(self.arcs))
        return g

    def parents(self, node: str) -> Tuple[str, ...]:
        return tuple(sorted(self.digraph.predecessors(node)))

    def children(self, node: str) -> Tuple[str, ...]:
        return tuple(sorted(self.digraph.successors(node)))

    def has_arc(self, a: str, b: str) -> bool:
        return (a, b) in self.arcs

    def adjacent(self, a: str, b: str) -> bool:
        return (a, b) in self.arcs or (b, a) in self.arcs

    def skeleton(self) -> FrozenSet[Edge]:
        return frozenset(_edge(a, b) for a, b in self.arcs)

    def topological_order(self) -> List[str]:
        return list(nx.lexicographical_topological_sort(self.digraph))

    def max_indegree(self) -> int:
        return max((self.digraph.in_degree(n) for n in self.nodes), default=0)

    def v_structures(self) -> Set[Tuple[str, str, str]]:
        """
        Unshielded colliders as (a, collider, b) with a < b.
        """
        found = set()
        for y in self.nodes:
            for a, b in combinations(self.parents(y), 2):
                if not self.adjacent(a, b):
                    found.add((a, y, b))
        return found

    def can_apply(self, move: "Move") -> bool:
        try:
            self._check(move)
        except GraphError:
            return False
        return True

    def _check(self, move: "Move") -> None:
        a, b = move.source, move.target
        if a not in self.digraph or b not in self.digraph or a == b:
            raise GraphError(f"{move} references unknown or identical nodes")
        if move.kind is MoveKind.ADD:
            if self.adjacent(a, b):
                raise GraphError(f"cannot add {a}->{b}: nodes already adjacent")
            if nx.has_path(self.digraph, b, a):
                raise RejectedMove(f"adding {a}->{b} creates a cycle")
        elif move.kind is MoveKind.REMOVE:
            if not self.has_arc(a, b):
                raise GraphError(f"cannot remove missing arc {a}->{b}")
        else:
            if not self.has_arc(a, b):
                raise GraphError(f"cannot flip missing arc {a}->{b}")
            g = self.digraph.copy()
            g.remove_edge(a, b)
            if nx.has_path(g, a, b):
                raise RejectedMove(f"flipping {a}->{b} creates a cycle")


class MoveKind(Enum):
    """
    Single-arc search operations. Declaration order is the tie-breaking order.
    """
    ADD = "add"
    REMOVE = "remove"
    FLIP = "flip"


_KIND_RANK = {MoveKind.ADD: 0, MoveKind.REMOVE: 1, MoveKind.FLIP: 2}


@dataclass(frozen=True)
class Move:
    kind: MoveKind
    source: str
    target: str

    def inverse(self) -> "Move":
        if self.kind is MoveKind.ADD:
            return Move(MoveKind.REMOVE, self.source, self.target)
        if self.kind is MoveKind.REMOVE:
            return Move(MoveKind.ADD, self.source, self.target)
        return Move(MoveKind.FLIP, self.target, self.source)

    def sort_key(self) -> Tuple[int, str, str]:
        return _KIND_RANK[self.kind], self.source, self.target

    def __str__(self) -> str:
        return f"{self.kind.value}({self.source},{self.target})"


def mutate(g: Dag, move: Move) -> Dag:
    """
    Apply an arc addition, removal or flip.
    Args:
        g (Dag): Current graph.
        move (Move): Operation to apply.
    Returns:
        Dag: New graph; g is left untouched.
    Raises:
        RejectedMove: The add/flip would create a cycle.
        GraphError: The arc to remove/flip is missing or the arc to add exists.
    """
    g._check(move)
    a, b = move.source, move.target
    if move.kind is MoveKind.ADD:
        arcs = g.arcs | {(a, b)}
    elif move.kind is MoveKind.REMOVE:
        arcs = g.arcs - {(a, b)}
    else:
        arcs = (g.arcs - {(a, b)}) | {(b, a)}
    return Dag(g.nodes, arcs)


def _require_same_nodes(g1: Dag, g2: Dag) -> None:
    if set(g1.nodes) != set(g2.nodes):
        raise GraphError("graphs are defined over different node sets")


def shd(true_g: Dag, est_g: Dag) -> int:
    """
    Structural Hamming distance between two DAGs.
    Each missing edge, extra edge and reversed arc costs 1.
    Args:
        true_g (Dag): Reference structure.
        est_g (Dag): Estimated structure.
    Returns:
        int: Number of arc additions, deletions and flips separating the graphs.
    """
    _require_same_nodes(true_g, est_g)
    distance = 0
    for e in true_g.skeleton() | est_g.skeleton():
        a, b = _sorted_edge(e)
        t = (true_g.has_arc(a, b), true_g.has_arc(b, a))
        s = (est_g.has_arc(a, b), est_g.has_arc(b, a))
        if t != s:
            distance += 1
    return distance


def dhd(true_g: Dag, est_g: Dag) -> float:
    """
    Density-Hamming distance: SHD · (1 + |arcs(true) − arcs(est)|).
    """
    return float(shd(true_g, est_g) * (1 + abs(len(true_g.arcs) - len(est_g.arcs))))


@dataclass(frozen=True)
class Pdag:
    """
    Partially directed graph: directed arcs plus undirected edges over the same nodes.
    """
    nodes: Tuple[str, ...]
    directed: FrozenSet[Arc] = frozenset()
    undirected: FrozenSet[Edge] = frozenset()

    def __post_init__(self):
        directed = frozenset((str(a), str(b)) for a, b in self.directed)
        undirected = frozenset(frozenset(e) for e in self.undirected)
        known = set(self.nodes)
        for a, b in directed:
            if a == b or a not in known or b not in known:
                raise GraphError(f"invalid arc {a}->{b}")
        for e in undirected:
            if len(e) != 2 or not e <= known:
                raise GraphError(f"invalid edge {sorted(e)}")
        if {_edge(a, b) for a, b in directed} & undirected:
            raise GraphError("an edge is both directed and undirected")
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "directed", directed)
        object.__setattr__(self, "undirected", undirected)

    @classmethod
    def from_skeleton(cls, nodes: Iterable[str], edges: Iterable[Edge]) -> "Pdag":
        return cls(tuple(nodes), frozenset(), frozenset(edges))

    def adjacent(self, a: str, b: str) -> bool:
        return (a, b) in self.directed or (b, a) in self.directed or _edge(a, b) in self.undirected

    def skeleton(self) -> FrozenSet[Edge]:
        return frozenset(_edge(a, b) for a, b in self.directed) | self.undirected


class SepsetTable:
    """
    Separating sets found during the adjacency search, keyed by unordered variable pair.
    """

    def __init__(self):
        self._sets: Dict[Edge, List[FrozenSet[str]]] = defaultdict(list)

    def add(self, x: str, y: str, sepset: Iterable[str]) -> None:
        s = frozenset(sepset)
        if x in s or y in s:
            raise GraphError(f"sepset of ({x}, {y}) contains an endpoint")
        if s not in self._sets[_edge(x, y)]:
            self._sets[_edge(x, y)].append(s)

    def get(self, x: str, y: str) -> List[FrozenSet[str]]:
        return list(self._sets.get(_edge(x, y), []))

    def __contains__(self, pair: Tuple[str, str]) -> bool:
        return _edge(*pair) in self._sets

    def merge(self, other: "SepsetTable") -> None:
        for e, sets in other._sets.items():
            a, b = _sorted_edge(e)
            for s in sets:
                self.add(a, b, s)


class _MixedGraph:
    """
    Mutable working copy of a PDAG used by orientation rules.
    """

    def __init__(self, pdag: Pdag):
        self.nodes = list(pdag.nodes)
        self.directed: Set[Arc] = set(pdag.directed)
        self.undirected: Set[Edge] = set(pdag.undirected)

    def adjacent(self, a: str, b: str) -> bool:
        return (a, b) in self.directed or (b, a) in self.directed or _edge(a, b) in self.undirected

    def undirected_neighbors(self, x: str) -> Set[str]:
        return {next(iter(e - {x})) for e in self.undirected if x in e}

    def parents(self, x: str) -> Set[str]:
        return {a for a, b in self.directed if b == x}

    def children(self, x: str) -> Set[str]:
        return {b for a, b in self.directed if a == x}

    def orient(self, a: str, b: str) -> None:
        self.undirected.discard(_edge(a, b))
        self.directed.add((a, b))

    def freeze(self) -> Pdag:
        return Pdag(tuple(self.nodes), frozenset(self.directed), frozenset(self.undirected))


def apply_meek_rules(pdag: Pdag) -> Pdag:
    """
    Propagate orientations with Meek rules R1–R3 until no rule fires.
    Args:
        pdag (Pdag): Graph with colliders already oriented.
    Returns:
        Pdag: Maximally oriented graph under R1–R3.
    """
    g = _MixedGraph(pdag)
    changed = True
    while changed:
        changed = False
        for e in sorted(g.undirected, key=_sorted_edge):
            if e not in g.undirected:
                continue
            x, y = _sorted_edge(e)
            for a, b in ((x, y), (y, x)):
                if _meek_orients(g, a, b):
                    g.orient(a, b)
                    changed = True
                    break
    return g.freeze()


def _meek_orients(g: _MixedGraph, a: str, b: str) -> bool:
    # R1: c -> a - b, c and b non-adjacent
    for c in g.parents(a):
        if c != b and not g.adjacent(c, b):
            return True
    # R2: a -> c -> b with a - b
    for c in g.children(a):
        if (c, b) in g.directed:
            return True
    # R3: a - c -> b, a - d -> b, c and d non-adjacent
    cands = [c for c in g.undirected_neighbors(a) if (c, b) in g.directed]
    for c, d in combinations(sorted(cands), 2):
        if not g.adjacent(c, d):
            return True
    return False


def extend_to_dag(p: Pdag) -> Dag:
    """
    Consistent DAG extension of a PDAG by sink elimination (Dor–Tarsi).
    When no consistent extension exists, the leftover edges are oriented in ascending
    name order, skipping orientations that close a cycle and dropping edges where both do.
    Args:
        p (Pdag): Partially directed graph.
    Returns:
        Dag: Acyclic graph over p.nodes.
    """
    remaining = set(p.nodes)
    directed: Set[Arc] = set(p.directed)
    undirected: Set[Edge] = set(p.undirected)
    result: Set[Arc] = set()

    def neighbors(x: str) -> Set[str]:
        out = {b for a, b in directed if a == x} | {a for a, b in directed if b == x}
        return out | {next(iter(e - {x})) for e in undirected if x in e}

    def is_adjacent(a: str, b: str) -> bool:
        return (a, b) in directed or (b, a) in directed or _edge(a, b) in undirected

    while remaining:
        sink = None
        for x in sorted(remaining):
            if any(a == x for a, _ in directed):
                continue
            und = {next(iter(e - {x})) for e in undirected if x in e}
            adj = neighbors(x)
            if all(is_adjacent(y, z) for y in und for z in adj if z != y):
                sink = x
                break
        if sink is None:
            break
        for e in [e for e in undirected if sink in e]:
            y = next(iter(e - {sink}))
            result.add((y, sink))
            undirected.discard(e)
        for a, b in [arc for arc in directed if sink in arc]:
            result.add((a, b))
            directed.discard((a, b))
        remaining.discard(sink)

    if not remaining:
        return Dag(p.nodes, frozenset(result))

    logging.warning("[Graph] PDAG admits no consistent extension; orienting %d leftover edges by name order",
                    len(undirected) + len(directed))
    g = nx.DiGraph()
    g.add_nodes_from(p.nodes)
    g.add_edges_from(sorted(result))
    for a, b in sorted(directed):
        for u, v in ((a, b), (b, a)):
            if not g.has_edge(v, u) and not nx.has_path(g, v, u):
                g.add_edge(u, v)
                break
    for e in sorted(undirected, key=_sorted_edge):
        a, b = _sorted_edge(e)
        for u, v in ((a, b), (b, a)):
            if not g.has_edge(v, u) and not nx.has_path(g, v, u):
                g.add_edge(u, v)
                break
    return Dag(p.nodes, frozenset(g.edges()))


GraphLike = Union[Dag, Pdag]


def format_graph(g: GraphLike) -> str:
    """
    Serialize a graph as `node`, `arc` and `edge` lines.
    """
    lines = [f"node {n}" for n in g.nodes]
    arcs = g.arcs if isinstance(g, Dag) else g.directed
    lines += [f"arc {a} {b}" for a, b in sorted(arcs)]
    if isinstance(g, Pdag):
        lines += ["edge {} {}".format(*_sorted_edge(e)) for e in sorted(g.undirected, key=_sorted_edge)]
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> GraphLike:
    """
    Parse the text format produced by format_graph.
    Returns a Dag when no `edge` line is present, a Pdag otherwise.
    """
    nodes: List[str] = []
    arcs: List[Arc] = []
    edges: List[Edge] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "node" and len(parts) == 2:
            nodes.append(parts[1])
        elif parts[0] == "arc" and len(parts) == 3:
            arcs.append((parts[1], parts[2]))
        elif parts[0] == "edge" and len(parts) == 3:
            edges.append(_edge(parts[1], parts[2]))
        else:
            raise GraphError(f"line {lineno}: cannot parse '{raw.strip()}'")
    if edges:
        return Pdag(tuple(nodes), frozenset(arcs), frozenset(edges))
    return Dag(tuple(nodes), frozenset(arcs))


def write_graph(g: GraphLike, path: Union[str, Path]) -> None:
    Path(path).write_text(format_graph(g), encoding="utf-8")


def read_graph(path: Union[str, Path]) -> GraphLike:
    try:
        return parse_graph(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise GraphError(f"cannot read graph '{path}': {e}") from e
