import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from domain.config import HcConfig
from domain.dataset import Dataset, kfold_indices
from domain.graph import Dag, Move, MoveKind, mutate
from learners.scores import CvScore, CvTlScore, LocalScore
from transfer.context import TransferContext
from utils.traces import MoveTrace


@dataclass
class HcResult:
    """
    Outcome of a hill-climbing run.

    Attributes:
        dag (Dag): Best graph visited.
        score (float): Its score.
        trace (List[MoveTrace]): Applied moves in order.
        iterations (int): Number of applied moves.
    """
    dag: Dag
    score: float
    trace: List[MoveTrace] = field(default_factory=list)
    iterations: int = 0


def legal_moves(g: Dag, max_indegree: Optional[int] = None) -> Iterator[Move]:
    """
    Every acyclicity-preserving single-arc move of g, in (kind, source, target) order.
    """
    indegree = {n: len(g.parents(n)) for n in g.nodes}
    nodes = sorted(g.nodes)
    moves = []
    for a in nodes:
        for b in nodes:
            if a == b:
                continue
            if g.has_arc(a, b):
                moves.append(Move(MoveKind.REMOVE, a, b))
                if max_indegree is None or indegree[a] < max_indegree:
                    moves.append(Move(MoveKind.FLIP, a, b))
            elif not g.has_arc(b, a) and (max_indegree is None or indegree[b] < max_indegree):
                moves.append(Move(MoveKind.ADD, a, b))
    for m in sorted(moves, key=Move.sort_key):
        if g.can_apply(m):
            yield m


class HillClimber:
    """
    Greedy search over arc additions, removals and flips with a tabu list of recent
    inverse moves. The best non-tabu move is always applied; a tabu move is allowed only
    when it beats the best score seen so far. The search stops once `patience`
    consecutive moves (at least one) have failed to beat that best score and returns the best
    graph visited.
    """

    def __init__(self, score: LocalScore, cfg: HcConfig, label: str = "HC"):
        self.score = score
        self.cfg = cfg
        self.label = label

    def _delta(self, g: Dag, move: Move, node_scores: Dict[str, float]) -> Tuple[float, Dict[str, float]]:
        a, b = move.source, move.target
        pa_b = set(g.parents(b))
        if move.kind is MoveKind.ADD:
            new = {b: self.score.local(b, pa_b | {a})}
        elif move.kind is MoveKind.REMOVE:
            new = {b: self.score.local(b, pa_b - {a})}
        else:
            new = {b: self.score.local(b, pa_b - {a}), a: self.score.local(a, set(g.parents(a)) | {b})}
        delta = sum(v - node_scores[n] for n, v in new.items())
        return delta, new

    def run(self, start: Dag) -> HcResult:
        """
        Climb from start.
        Args:
            start (Dag): Initial structure, usually empty.
        Returns:
            HcResult: Best graph visited with its score and the move trace.
        """
        g = start
        node_scores = {n: self.score.local(n, g.parents(n)) for n in g.nodes}
        current = float(sum(node_scores[n] for n in sorted(g.nodes)))
        best, best_score = g, current
        tabu: deque = deque(maxlen=self.cfg.tabu_size)
        trace: List[MoveTrace] = []
        non_improving = 0
        iteration = 0
        while iteration < self.cfg.max_iterations:
            chosen = None
            for move in legal_moves(g, self.cfg.max_indegree):
                delta, new = self._delta(g, move, node_scores)
                if not np.isfinite(delta):
                    continue
                if move in tabu and current + delta <= best_score:
                    continue
                if chosen is None or delta > chosen[0]:
                    chosen = (delta, move, new)
            if chosen is None:
                logging.info("[%s] no legal move left after %d iterations", self.label, iteration)
                break
            delta, move, new = chosen
            g = mutate(g, move)
            node_scores.update(new)
            current = float(sum(node_scores[n] for n in sorted(g.nodes)))
            tabu.append(move.inverse())
            iteration += 1
            improved = current > best_score
            if improved:
                best, best_score = g, current
                non_improving = 0
            else:
                non_improving += 1
            trace.append(MoveTrace(
                iteration=iteration, move=str(move), delta=delta, score=current, best_score=best_score,
                improved=improved,
                transfer_nodes=[n for n in sorted(new) if self.score.transfer_active(n, g.parents(n))],
            ))
            logging.debug("[%s] %d: %s delta=%.4f score=%.4f", self.label, iteration, move, delta, current)
            if not improved and non_improving >= self.cfg.patience:
                break
        logging.info("[%s] stopped after %d moves, best score %.4f with %d arcs",
                     self.label, iteration, best_score, len(best.arcs))
        return HcResult(best, best_score, trace, iteration)


def hill_climb(score: LocalScore, start: Dag, cfg: HcConfig) -> Dag:
    return HillClimber(score, cfg).run(start).dag


def search_hc(d: Dataset, cfg: HcConfig) -> HcResult:
    folds = kfold_indices(d.n_rows, cfg.k_folds, cfg.seed)
    return HillClimber(CvScore(d, folds), cfg, "HC").run(Dag.empty(d.names))


def search_hc_tl(ctx: TransferContext, cfg: HcConfig) -> HcResult:
    """
    HC-TL: hill climbing under the transfer score; plain HC when no source is kept.
    Folds are drawn exactly as for HC so both searches see the same splits.
    """
    if not ctx.transfer_enabled:
        logging.info("[HC-TL] transfer disabled; running HC on the target")
        return search_hc(ctx.target, cfg)
    folds = kfold_indices(ctx.target.n_rows, cfg.k_folds, cfg.seed)
    return HillClimber(CvTlScore(ctx, folds), cfg, "HC-TL").run(Dag.empty(ctx.names))


def hc(d: Dataset, cfg: HcConfig) -> Dag:
    """
    Hill climbing under the k-fold cross-validated score from the empty graph.
    """
    return search_hc(d, cfg).dag


def hc_tl(ctx: TransferContext, cfg: HcConfig) -> Dag:
    return search_hc_tl(ctx, cfg).dag
