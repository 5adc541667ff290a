import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

from ci.ci_test import CiTest
from ci.rcot import RcotTest
from domain.config import PcConfig
from domain.dataset import Dataset
from domain.graph import Dag, Pdag, SepsetTable, apply_meek_rules, extend_to_dag
from learners.pvalues import PooledPValues, PValueSource, TargetPValues
from transfer.context import TransferContext
from utils.traces import PooledPValueTrace


@dataclass
class PcResult:
    """
    Everything a PC run produces: the DAG, the intermediate PDAG and the separating sets.
    """
    dag: Dag
    pdag: Pdag
    sepsets: SepsetTable
    queries: int
    traces: List[PooledPValueTrace] = field(default_factory=list)


class PcStable:
    """
    Order-independent PC: adjacencies are frozen at the start of every conditioning-set
    size and removals are applied only once that size is finished. Colliders are oriented
    by majority vote over separating sets, then Meek rules and a DAG extension finish the job.
    """

    def __init__(self, source: PValueSource, cfg: PcConfig):
        self.source = source
        self.cfg = cfg
        self.nodes: Tuple[str, ...] = tuple(source.names)

    def _independent(self, x: str, y: str, z) -> bool:
        return self.source.pvalue(x, y, z) >= self.cfg.alpha

    def adjacency_search(self) -> Tuple[Dict[str, Set[str]], SepsetTable]:
        """
        Remove edges level by level (conditioning-set size 0, 1, ...).
        Returns:
            Tuple[Dict[str, Set[str]], SepsetTable]: Final adjacency sets and the recorded separating sets.
        """
        adj = {v: set(self.nodes) - {v} for v in self.nodes}
        sepsets = SepsetTable()
        level = 0
        cap = self.cfg.max_sepset_size
        while any(len(adj[v]) - 1 >= level for v in self.nodes) and (cap is None or level <= cap):
            frozen = {v: frozenset(adj[v]) for v in self.nodes}
            removals = []
            for x, y in sorted((a, b) for a in self.nodes for b in adj[a] if a < b):
                found = self._find_sepset(x, y, frozen, level)
                if found is not None:
                    removals.append((x, y, found))
            for x, y, s in removals:
                adj[x].discard(y)
                adj[y].discard(x)
                sepsets.add(x, y, s)
            logging.info("[PC-stable] level %d: %d edges removed, %d remaining",
                         level, len(removals), sum(len(a) for a in adj.values()) // 2)
            level += 1
        return adj, sepsets

    def _find_sepset(self, x: str, y: str, frozen: Dict[str, FrozenSet[str]], level: int) -> Optional[Tuple[str, ...]]:
        for candidates in (sorted(frozen[x] - {y}), sorted(frozen[y] - {x})):
            if len(candidates) < level:
                continue
            for s in combinations(candidates, level):
                if self._independent(x, y, s):
                    return s
        return None

    def _separating_sets(self, x: str, z: str, adj: Dict[str, Set[str]], sepsets: SepsetTable) -> List[FrozenSet[str]]:
        found = list(sepsets.get(x, z))
        # re-test only up to the level at which the edge was removed
        cap = min(len(s) for s in found) if found else self.cfg.max_sepset_size
        for pool in (sorted(adj[x] - {z}), sorted(adj[z] - {x})):
            top = len(pool) if cap is None else min(cap, len(pool))
            for size in range(top + 1):
                for s in combinations(pool, size):
                    fs = frozenset(s)
                    if fs not in found and self._independent(x, z, s):
                        found.append(fs)
        return found

    def orient_colliders(self, adj: Dict[str, Set[str]], sepsets: SepsetTable) -> Pdag:
        """
        Orient X → Y ← Z for every unshielded triple where strictly fewer than half of the
        separating sets of (X, Z) contain Y. Ties are left unoriented; when two colliders
        disagree on an edge, the first in name order wins.
        """
        directed: Set[Tuple[str, str]] = set()
        for y in sorted(self.nodes):
            for x, z in combinations(sorted(adj[y]), 2):
                if z in adj[x]:
                    continue
                sets = self._separating_sets(x, z, adj, sepsets)
                with_y = sum(1 for s in sets if y in s)
                if not sets or 2 * with_y >= len(sets):
                    continue
                if (y, x) in directed or (y, z) in directed:
                    logging.debug("[PC-stable] collider %s -> %s <- %s conflicts with an earlier one", x, y, z)
                    continue
                directed.update({(x, y), (z, y)})
        undirected = {frozenset((a, b)) for a in self.nodes for b in adj[a] if a < b}
        undirected -= {frozenset(arc) for arc in directed}
        return Pdag(self.nodes, frozenset(directed), frozenset(undirected))

    def learn(self) -> PcResult:
        adj, sepsets = self.adjacency_search()
        pdag = apply_meek_rules(self.orient_colliders(adj, sepsets))
        dag = extend_to_dag(pdag)
        traces = list(self.source.traces) if isinstance(self.source, PooledPValues) else []
        return PcResult(dag, pdag, sepsets, self.source.queries, traces)


def pc_stable(d: Dataset, cfg: PcConfig, ci: Optional[CiTest] = None) -> Dag:
    """
    PC-stable on a single dataset.
    Args:
        d (Dataset): Training data.
        cfg (PcConfig): α, conditioning-set cap and RCoT settings.
        ci (Optional[CiTest]): CI test; RCoT with cfg.rcot when omitted.
    Returns:
        Dag: Learned structure.
    """
    return learn_pc(d, cfg, ci).dag


def learn_pc(d: Dataset, cfg: PcConfig, ci: Optional[CiTest] = None) -> PcResult:
    return PcStable(TargetPValues(d, ci or RcotTest(cfg.rcot)), cfg).learn()


def pcs_tl(ctx: TransferContext, cfg: PcConfig, ci: Optional[CiTest] = None) -> Dag:
    """
    PC-stable driven by pooled p-values in every CI decision.
    Falls back to PC-stable on the target when the context has no kept source.
    """
    return learn_pcs_tl(ctx, cfg, ci).dag


def learn_pcs_tl(ctx: TransferContext, cfg: PcConfig, ci: Optional[CiTest] = None) -> PcResult:
    if not ctx.transfer_enabled:
        logging.info("[PCS-TL] transfer disabled; running PC-stable on the target")
        return learn_pc(ctx.target, cfg, ci)
    return PcStable(PooledPValues(ctx, cfg, ci or RcotTest(cfg.rcot)), cfg).learn()
