import itertools
import random
from collections import deque

import networkx as nx
import pytest

from domain.errors import GraphError, RejectedMove
from domain.graph import (
    Dag, Move, MoveKind, Pdag, SepsetTable, apply_meek_rules, dhd, extend_to_dag, format_graph, mutate,
    parse_graph, shd,
)

NODES3 = ("a", "b", "c")


def all_dags(nodes):
    pairs = list(itertools.combinations(nodes, 2))
    for states in itertools.product((0, 1, 2), repeat=len(pairs)):
        arcs = set()
        for (a, b), s in zip(pairs, states):
            if s == 1:
                arcs.add((a, b))
            elif s == 2:
                arcs.add((b, a))
        g = nx.DiGraph(list(arcs))
        g.add_nodes_from(nodes)
        if nx.is_directed_acyclic_graph(g):
            yield Dag(tuple(nodes), frozenset(arcs))


def pair_states(g, pairs):
    return tuple(1 if g.has_arc(a, b) else 2 if g.has_arc(b, a) else 0 for a, b in pairs)


def edit_distances(g, nodes):
    # breadth-first search over pair states, one add/remove/flip per step
    pairs = list(itertools.combinations(nodes, 2))
    start = pair_states(g, pairs)
    seen = {start: 0}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for i in range(len(cur)):
            for s in (0, 1, 2):
                if s != cur[i]:
                    nxt = cur[:i] + (s,) + cur[i + 1:]
                    if nxt not in seen:
                        seen[nxt] = seen[cur] + 1
                        queue.append(nxt)
    return seen


def test_three_node_dag_count():
    assert len(list(all_dags(NODES3))) == 25


def test_cycle_is_rejected():
    with pytest.raises(GraphError, match="cycle"):
        Dag(NODES3, frozenset({("a", "b"), ("b", "c"), ("c", "a")}))


def test_mutate_add_remove_flip():
    g = Dag.empty(NODES3)
    g = mutate(g, Move(MoveKind.ADD, "a", "b"))
    assert g.arcs == {("a", "b")}
    g = mutate(g, Move(MoveKind.FLIP, "a", "b"))
    assert g.arcs == {("b", "a")}
    g = mutate(g, Move(MoveKind.REMOVE, "b", "a"))
    assert g.arcs == frozenset()


def test_mutate_rejects_cycle():
    g = Dag(NODES3, frozenset({("a", "b"), ("b", "c")}))
    with pytest.raises(RejectedMove, match="cycle"):
        mutate(g, Move(MoveKind.ADD, "c", "a"))
    assert not g.can_apply(Move(MoveKind.ADD, "c", "a"))


def test_flip_that_closes_a_cycle_is_rejected():
    g = Dag(NODES3, frozenset({("a", "b"), ("b", "c"), ("a", "c")}))
    with pytest.raises(RejectedMove):
        mutate(g, Move(MoveKind.FLIP, "a", "c"))


def test_remove_missing_arc():
    with pytest.raises(GraphError, match="missing arc"):
        mutate(Dag.empty(NODES3), Move(MoveKind.REMOVE, "a", "b"))


def test_move_inverse_and_text():
    m = Move(MoveKind.FLIP, "a", "b")
    assert m.inverse() == Move(MoveKind.FLIP, "b", "a")
    assert Move(MoveKind.ADD, "x", "y").inverse().kind is MoveKind.REMOVE
    assert str(Move(MoveKind.ADD, "x", "y")) == "add(x,y)"


def test_random_moves_keep_graph_acyclic():
    rng = random.Random(3)
    nodes = ("a", "b", "c", "d", "e")
    g = Dag.empty(nodes)
    for _ in range(300):
        a, b = rng.sample(nodes, 2)
        kind = rng.choice(list(MoveKind))
        try:
            g = mutate(g, Move(kind, a, b))
        except GraphError:
            continue
        assert nx.is_directed_acyclic_graph(g.digraph)


def test_shd_examples():
    true_g = Dag(NODES3, frozenset({("a", "b"), ("b", "c")}))
    est = Dag(NODES3, frozenset({("a", "b"), ("c", "b"), ("a", "c")}))
    assert shd(true_g, true_g) == 0
    assert shd(true_g, est) == 2
    assert shd(true_g, Dag(NODES3, frozenset({("b", "a"), ("b", "c")}))) == 1


@pytest.mark.parametrize("nodes,count", [(NODES3, 25), (("a", "b", "c", "d"), 543)])
def test_shd_matches_minimal_edit_count(nodes, count):
    pairs = list(itertools.combinations(nodes, 2))
    dags = list(all_dags(nodes))
    assert len(dags) == count
    for g1 in dags:
        distances = edit_distances(g1, nodes)
        for g2 in dags:
            expected = distances[pair_states(g2, pairs)]
            assert shd(g1, g2) == expected
            assert dhd(g1, g2) == expected * (1 + abs(len(g1.arcs) - len(g2.arcs)))


def test_dhd_penalizes_density_mismatch():
    nodes = ("a", "b", "c", "d", "e")
    full = frozenset(itertools.combinations(nodes, 2))
    assert len(full) == 10
    sparse = frozenset(sorted(full)[3:])
    assert dhd(Dag(nodes, full), Dag(nodes, sparse)) == 12.0


def test_dhd_equals_shd_for_equal_densities():
    g1 = Dag(("a", "b"), frozenset({("a", "b")}))
    g2 = Dag(("a", "b"), frozenset({("b", "a")}))
    assert dhd(g1, g2) == 1.0


def test_distances_need_same_nodes():
    with pytest.raises(GraphError, match="different node sets"):
        shd(Dag.empty(("a", "b")), Dag.empty(("a", "c")))


def test_v_structures():
    g = Dag(NODES3, frozenset({("a", "b"), ("c", "b")}))
    assert g.v_structures() == {("a", "b", "c")}
    shielded = Dag(NODES3, frozenset({("a", "b"), ("c", "b"), ("a", "c")}))
    assert shielded.v_structures() == set()


def test_meek_rule_one_orients_away_from_collider_free_arc():
    p = Pdag(NODES3, frozenset({("a", "b")}), frozenset({frozenset(("b", "c"))}))
    out = apply_meek_rules(p)
    assert ("b", "c") in out.directed
    assert not out.undirected


def test_extend_single_undirected_edge():
    g = extend_to_dag(Pdag.from_skeleton(("a", "b"), [frozenset(("a", "b"))]))
    assert g.arcs == {("b", "a")}


def test_extend_keeps_directed_graph():
    arcs = frozenset({("a", "b"), ("c", "b")})
    assert extend_to_dag(Pdag(NODES3, arcs)).arcs == arcs


def _pattern(g: Dag) -> Pdag:
    collider_arcs = {(a, y) for a, y, b in g.v_structures()} | {(b, y) for a, y, b in g.v_structures()}
    undirected = {frozenset(arc) for arc in g.arcs - collider_arcs}
    return Pdag(g.nodes, frozenset(collider_arcs), frozenset(undirected))


def test_extension_of_every_pattern_stays_in_the_equivalence_class():
    for nodes in (NODES3, ("a", "b", "c", "d")):
        for g in all_dags(nodes):
            out = extend_to_dag(apply_meek_rules(_pattern(g)))
            assert out.skeleton() == g.skeleton()
            assert out.v_structures() == g.v_structures()


def test_inconsistent_pdag_still_yields_a_dag():
    p = Pdag(NODES3, frozenset({("a", "b"), ("b", "c"), ("c", "a")}))
    out = extend_to_dag(p)
    assert nx.is_directed_acyclic_graph(out.digraph)
    assert len(out.arcs) == 3


def test_sepset_table():
    t = SepsetTable()
    t.add("x", "y", ["z"])
    t.add("y", "x", ["z"])
    assert t.get("y", "x") == [frozenset({"z"})]
    assert ("x", "y") in t
    with pytest.raises(GraphError, match="endpoint"):
        t.add("x", "y", ["x"])


def test_graph_text_round_trip():
    p = Pdag(("a", "b", "c", "d"), frozenset({("a", "b")}), frozenset({frozenset(("c", "d"))}))
    back = parse_graph(format_graph(p))
    assert isinstance(back, Pdag)
    assert back == p
    dag = Dag(NODES3, frozenset({("a", "c")}))
    assert parse_graph(format_graph(dag)) == dag


def test_parse_graph_error():
    with pytest.raises(GraphError, match="line 2"):
        parse_graph("node a\nbogus line here\n")
