import asyncio
import logging
import os
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd
from tqdm import tqdm

from density.kde import KdeBayesianNetwork, network_loglik
from density.params import TlKdeBayesianNetwork, fit_kdebn, fit_tl_kdebn, tl_loglik
from domain.config import Algorithm, CorruptionSpec, ExperimentConfig, HcConfig, NetworkKind, PcConfig
from domain.dataset import Dataset, holdout_split, load_csv
from domain.errors import ConfigError, DataError, KdebnError, StatsError
from domain.graph import Dag, dhd, read_graph, shd, write_graph
from evaluation.plots import read_results
from evaluation.stats import Direction, RankMatrix, bergmann_hommel, cd_diagram_data, friedman
from learners.hill_climbing import search_hc, search_hc_tl
from learners.pc_stable import learn_pc, learn_pcs_tl
from synthetic.corruption import add_noise, corrupt_source, shuffle_columns
from synthetic.lgbn import load_lgbn
from synthetic.networks import StructuralNetwork, sample
from synthetic.spbn import build_spbn
from transfer.context import TransferContext, build_context
from utils.seeding import derive_seed, rng_for
from utils.traces import GroupingReport, ResultRow, results_frame, write_traces

RESULTS_FILE = "results.csv"
STATS_MAX_TARGET_N = 525

Network = Union[KdeBayesianNetwork, TlKdeBayesianNetwork]


def worker_count() -> int:
    """
    Worker threads for the experiment runner: KDEBN_WORKERS, or the available parallelism.
    """
    raw = os.getenv("KDEBN_WORKERS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(f"KDEBN_WORKERS must be an integer, got '{raw}'") from None
    if workers < 1:
        raise ConfigError(f"KDEBN_WORKERS must be at least 1, got {workers}")
    return workers


def load_network(source: str) -> StructuralNetwork:
    """
    Resolve a generative network reference, `spbn:<id>` or `lgbn:<path>`.
    """
    kind, _, value = source.partition(":")
    kind = kind.strip().lower()
    if kind == NetworkKind.SPBN.value:
        return build_spbn(value.strip())
    if kind == NetworkKind.LGBN.value:
        return load_lgbn(value.strip())
    raise ConfigError(f"'{source}' is not a generative network (expected spbn:<id> or lgbn:<path>)")


def dataset_id(cfg: ExperimentConfig) -> str:
    kind, value = cfg.network_source()
    if kind is NetworkKind.SPBN:
        return f"spbn{value}"
    return f"{kind.value}-{Path(value).stem}"


@dataclass(frozen=True, eq=False)
class Problem:
    """
    Everything one repeat shares across grid points.

    Attributes:
        dataset (str): Dataset id written to the results.
        seed (int): Repeat seed.
        target_pool (Dataset): grid_end target rows; the target at grid point n is its first n rows.
        test (Dataset): Test instances.
        sources (Tuple[Dataset, ...]): Corrupted source datasets.
        references (Dict[str, Dag]): Reference structure per learner family.
    """
    dataset: str
    seed: int
    target_pool: Dataset
    test: Dataset
    sources: Tuple[Dataset, ...]
    references: Dict[str, Dag]


@dataclass
class LearnOutcome:
    dag: Dag
    traces: list = field(default_factory=list)


def learn_structure(algorithm: Algorithm, target: Dataset, ctx: Optional[TransferContext],
                    pc_cfg: PcConfig, hc_cfg: HcConfig) -> LearnOutcome:
    """
    Run one structure learner.
    Args:
        algorithm (Algorithm): Learner to run.
        target (Dataset): Target data.
        ctx (Optional[TransferContext]): Transfer context; required by the transfer learners.
        pc_cfg (PcConfig): PC-stable / PCS-TL settings.
        hc_cfg (HcConfig): HC / HC-TL settings.
    Returns:
        LearnOutcome: Learned DAG and its pooled p-value or move trace.
    """
    if algorithm.is_transfer and ctx is None:
        ctx = build_context(target, ())
    if algorithm is Algorithm.PC:
        res = learn_pc(target, pc_cfg)
        return LearnOutcome(res.dag, res.traces)
    if algorithm is Algorithm.PCS_TL:
        res = learn_pcs_tl(ctx, pc_cfg)
        return LearnOutcome(res.dag, res.traces)
    if algorithm is Algorithm.HC:
        res = search_hc(target, hc_cfg)
    else:
        res = search_hc_tl(ctx, hc_cfg)
    return LearnOutcome(res.dag, res.trace)


def fit_network(algorithm: Algorithm, dag: Dag, target: Dataset, ctx: Optional[TransferContext]) -> Network:
    """
    Parameter learning matching the learner: CKDE-TL pooling for transfer learners, plain CKDEs otherwise.
    """
    if algorithm.is_transfer:
        return fit_tl_kdebn(dag, ctx if ctx is not None else build_context(target, ()))
    return fit_kdebn(dag, target)


def evaluate_loglik(net: Network, test: Dataset) -> float:
    if isinstance(net, TlKdeBayesianNetwork):
        return tl_loglik(net, test)
    return network_loglik(net, test)


def consensus(dags: Sequence[Dag]) -> Dag:
    """
    Majority-arc consensus: arcs present in more than half of the graphs, added by
    decreasing frequency (ties in arc order) and skipped when they would close a cycle.
    """
    if not dags:
        raise DataError("consensus needs at least one graph")
    counts = Counter(arc for g in dags for arc in g.arcs)
    g = nx.DiGraph()
    g.add_nodes_from(dags[0].nodes)
    for (a, b), c in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])):
        if 2 * c <= len(dags):
            break
        if nx.has_path(g, b, a):
            logging.debug("[Experiment] consensus arc %s->%s skipped (cycle)", a, b)
            continue
        g.add_edge(a, b)
    return Dag(dags[0].nodes, frozenset(g.edges()))


def _reference_path(cfg: ExperimentConfig, family: str) -> Path:
    return Path(cfg.output_dir) / "reference" / f"{dataset_id(cfg)}_{family}.txt"


def reference_structure(cfg: ExperimentConfig, family: str, data: Optional[Dataset] = None) -> Dag:
    """
    Structure the results of one learner family are compared with.
    Generative networks give their true DAG. A CSV gives a DAG learned by the family's
    non-transfer learner on up to reference_n rows, cached under <output>/reference/.
    Args:
        cfg (ExperimentConfig): Experiment configuration.
        family (str): 'pc' or 'hc'.
        data (Optional[Dataset]): Already-loaded CSV data.
    Returns:
        Dag: Reference structure.
    """
    if family not in ("pc", "hc"):
        raise ConfigError(f"unknown learner family '{family}'")
    kind, value = cfg.network_source()
    if kind is not NetworkKind.CSV:
        return load_network(cfg.network).dag
    path = _reference_path(cfg, family)
    if path.is_file():
        cached = read_graph(path)
        if isinstance(cached, Dag):
            logging.info("[Experiment] reusing %s reference from %s", family, path)
            return cached
        logging.warning("[Experiment] cached reference %s is not a DAG; relearning", path)
    data = data if data is not None else load_csv(value)
    if data.n_rows < 2 * cfg.test_n:
        logging.warning("[Experiment] only %d rows for the reference structure (< 2 x test_n = %d); using all",
                        data.n_rows, 2 * cfg.test_n)
    n = min(cfg.reference_n, data.n_rows)
    rows = np.sort(rng_for(cfg.seed, "reference", data.n_rows).permutation(data.n_rows)[:n])
    subset = data.take(rows)
    logging.info("[Experiment] learning %s reference on %d rows", family, n)
    if family == "pc":
        dag = learn_pc(subset, cfg.pc_config(derive_seed(cfg.seed, "reference", "rcot"))).dag
    else:
        dag = search_hc(subset, cfg.hc_config(derive_seed(cfg.seed, "reference", "folds"))).dag
    path.parent.mkdir(parents=True, exist_ok=True)
    write_graph(dag, path)
    return dag


def repeat_seeds(cfg: ExperimentConfig) -> List[int]:
    if cfg.seeds is not None:
        return list(cfg.seeds)
    return [derive_seed(cfg.seed, "repeat", r) for r in range(cfg.repeats)]


def _synthetic_problem(cfg: ExperimentConfig, net: StructuralNetwork, seed: int,
                       references: Dict[str, Dag]) -> Problem:
    target_pool = sample(net, cfg.grid_end, derive_seed(seed, "target"))
    test = sample(net, cfg.test_n, derive_seed(seed, "test"))
    sources = tuple(
        corrupt_source(net, cfg.source_n, CorruptionSpec(
            modified_fraction=f, noise_mean=cfg.noise_mean, noise_std=cfg.noise_std,
            seed=derive_seed(seed, "source", k),
        ))
        for k, f in enumerate(cfg.source_fractions)
    )
    return Problem(dataset_id(cfg), seed, target_pool, test, sources, references)


def _csv_problem(cfg: ExperimentConfig, data: Dataset, seed: int, references: Dict[str, Dag]) -> Problem:
    train, test = holdout_split(data, cfg.test_n, derive_seed(seed, "holdout"))
    if train.n_rows < cfg.grid_end:
        raise DataError(f"{train.n_rows} training rows left after the holdout; the grid needs {cfg.grid_end}")
    order = rng_for(seed, "target", train.n_rows).permutation(train.n_rows)
    target_pool = train.take(order[:cfg.grid_end])
    sources = []
    for k, f in enumerate(cfg.source_fractions):
        spec = CorruptionSpec(modified_fraction=f, noise_mean=cfg.noise_mean, noise_std=cfg.noise_std,
                              seed=derive_seed(seed, "source", k))
        rng = rng_for(spec.seed, "source-rows")
        rows = rng.choice(train.n_rows, size=cfg.source_n, replace=cfg.source_n > train.n_rows)
        drawn = train.take(np.sort(rows))
        sources.append(add_noise(shuffle_columns(drawn, f, spec.seed), spec))
    return Problem(dataset_id(cfg), seed, target_pool, test, tuple(sources), references)


@dataclass
class CellOutcome:
    row: ResultRow
    dag: Dag
    traces: list


class ExperimentRunner:
    """
    Runs the experiment protocol: per repeat, a target pool, test set and corrupted sources;
    per grid point, every configured learner followed by parameter learning and evaluation.
    """
    def __init__(self, cfg: ExperimentConfig, workers: Optional[int] = None):
        """
        Args:
            cfg (ExperimentConfig): Experiment configuration.
            workers (Optional[int]): Concurrent cells; KDEBN_WORKERS or the CPU count when omitted.
        """
        self.cfg = cfg
        self.workers = workers or worker_count()
        self.out_dir = Path(cfg.output_dir)

    def prepare(self) -> List[Problem]:
        cfg = self.cfg
        kind, value = cfg.network_source()
        families = sorted({a.family for a in cfg.algorithms})
        if kind is NetworkKind.CSV:
            data = load_csv(value)
            references = {f: reference_structure(cfg, f, data) for f in families}
            return [_csv_problem(cfg, data, s, references) for s in repeat_seeds(cfg)]
        net = load_network(cfg.network)
        references = {f: net.dag for f in families}
        return [_synthetic_problem(cfg, net, s, references) for s in repeat_seeds(cfg)]

    def run_cell(self, problem: Problem, n: int) -> List[CellOutcome]:
        """
        Learn, fit and evaluate every algorithm on the first n target rows of one repeat.
        A failing algorithm is logged and contributes no row.
        """
        cfg = self.cfg
        target = problem.target_pool.head(n)
        pc_cfg = cfg.pc_config(derive_seed(problem.seed, "rcot"))
        hc_cfg = cfg.hc_config(derive_seed(problem.seed, "folds"))
        ctx, ctx_time = None, 0.0
        if any(a.is_transfer for a in cfg.algorithms):
            start = time.perf_counter()
            ctx = build_context(target, problem.sources)
            ctx_time = time.perf_counter() - start
        out = []
        for algorithm in cfg.algorithms:
            start = time.perf_counter()
            try:
                learned = learn_structure(algorithm, target, ctx, pc_cfg, hc_cfg)
                net = fit_network(algorithm, learned.dag, target, ctx)
                loglik = evaluate_loglik(net, problem.test)
            except KdebnError as e:
                logging.warning("[Experiment] %s failed on %s n=%d seed=%d: %s",
                                algorithm.value, problem.dataset, n, problem.seed, e)
                continue
            elapsed = time.perf_counter() - start + (ctx_time if algorithm.is_transfer else 0.0)
            reference = problem.references.get(algorithm.family)
            row = ResultRow(
                dataset=problem.dataset, algorithm=algorithm.value, target_n=n, seed=problem.seed,
                test_loglik=loglik,
                shd=shd(reference, learned.dag) if reference is not None else None,
                dhd=dhd(reference, learned.dag) if reference is not None else None,
                wall_time_s=elapsed,
            )
            logging.debug("[Experiment] %s n=%d seed=%d loglik=%.4f shd=%s", algorithm.value, n,
                          problem.seed, loglik, row.shd)
            out.append(CellOutcome(row, learned.dag, learned.traces))
        return out

    async def run(self) -> List[CellOutcome]:
        """
        Execute every (repeat, grid point) cell concurrently and return the outcomes in
        (repeat, grid point, algorithm) order.
        """
        problems = await asyncio.to_thread(self.prepare)
        cells = [(r, n) for r in range(len(problems)) for n in self.cfg.grid()]
        logging.info("[Experiment] %s: %d repeats x %d grid points x %d algorithms on %d workers",
                     problems[0].dataset, len(problems), len(self.cfg.grid()), len(self.cfg.algorithms),
                     self.workers)
        sem = asyncio.Semaphore(self.workers)
        bar = tqdm(total=len(cells), desc="cells", unit="cell")

        async def one(r: int, n: int) -> List[CellOutcome]:
            async with sem:
                res = await asyncio.to_thread(self.run_cell, problems[r], n)
            bar.update(1)
            return res

        try:
            parts = await asyncio.gather(*[one(r, n) for r, n in cells])
        finally:
            bar.close()
        return [o for part in parts for o in part]

    def write(self, outcomes: Sequence[CellOutcome]) -> Path:
        """
        Write the results CSV, per-seed and consensus structures, and traces when enabled.
        """
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / RESULTS_FILE
        results_frame([o.row for o in outcomes]).to_csv(
            path, index=False, float_format="%.17g", lineterminator="\n")
        structures = self.out_dir / "structures"
        grouped: Dict[Tuple[str, str, int], List[Dag]] = {}
        for o in outcomes:
            r = o.row
            folder = structures / r.dataset / r.algorithm
            folder.mkdir(parents=True, exist_ok=True)
            write_graph(o.dag, folder / f"n{r.target_n}_seed{r.seed}.txt")
            grouped.setdefault((r.dataset, r.algorithm, r.target_n), []).append(o.dag)
            if self.cfg.trace and o.traces:
                traces = self.out_dir / "traces" / r.dataset
                traces.mkdir(parents=True, exist_ok=True)
                write_traces(o.traces, traces / f"{r.algorithm}_n{r.target_n}_seed{r.seed}.csv")
        for (dataset, algorithm, n), dags in grouped.items():
            write_graph(consensus(dags), structures / dataset / algorithm / f"n{n}_consensus.txt")
        logging.info("[Experiment] %d rows written to %s", len(outcomes), path)
        return path


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> Path:
    """
    Run the full protocol and write its outputs under cfg.output_dir.
    Args:
        cfg (ExperimentConfig): Experiment configuration.
        workers (Optional[int]): Concurrent cells.
    Returns:
        Path: The results CSV.
    """
    runner = ExperimentRunner(cfg, workers)
    outcomes = asyncio.run(runner.run())
    return runner.write(outcomes)


def _metric_report(df: pd.DataFrame, metric: str, direction: Direction, alpha: float,
                   out_dir: Path) -> GroupingReport:
    table = df.pivot_table(index=["dataset", "target_n", "seed"], columns="algorithm",
                           values=metric, aggfunc="mean").dropna(axis=0, how="any")
    if table.shape[0] < 2 or table.shape[1] < 2:
        raise StatsError(f"{metric}: need at least 2 complete blocks and 2 algorithms, "
                         f"got {table.shape[0]}x{table.shape[1]}")
    m = RankMatrix(tuple(str(c) for c in table.columns), table.to_numpy(dtype=float), direction)
    fr = friedman(m)
    post = bergmann_hommel(fr.mean_ranks, m.n_blocks, alpha)
    groups = cd_diagram_data(fr.mean_ranks, set(post.rejected))
    logging.info("[Stats] %s: %d blocks, chi2_F=%.4f p=%.4g, %d rejected pairs",
                 metric, m.n_blocks, fr.statistic, fr.p_value, len(post.rejected))

    ranks = pd.DataFrame(sorted(fr.mean_ranks.items(), key=lambda kv: (kv[1], kv[0])),
                         columns=["algorithm", "mean_rank"])
    ranks.to_csv(out_dir / f"{metric}_mean_ranks.csv", index=False, float_format="%.17g", lineterminator="\n")
    names = list(m.algorithms)
    heat = pd.DataFrame(1.0, index=names, columns=names)
    for (a, b), p in post.adjusted_p.items():
        heat.loc[a, b] = heat.loc[b, a] = p
    heat.to_csv(out_dir / f"{metric}_adjusted_p.csv", index_label="algorithm", float_format="%.17g",
                lineterminator="\n")
    report = GroupingReport(
        metric=metric, direction=direction.value, blocks=m.n_blocks,
        friedman_statistic=fr.statistic, friedman_p=fr.p_value, mean_ranks=fr.mean_ranks,
        rejected=[list(p) for p in sorted(post.rejected)], groups=groups,
    )
    (out_dir / f"{metric}_grouping.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")
    return report


def stats_report(results: Union[str, Path], out_dir: Union[str, Path],
                 max_target_n: int = STATS_MAX_TARGET_N, alpha: float = 0.05) -> Dict[str, GroupingReport]:
    """
    Friedman + Bergmann-Hommel comparison of the algorithms in a results CSV, on DHD
    (lower is better) and test log-likelihood (higher is better). Blocks are
    (dataset, target_n, seed) triples with target_n < max_target_n.
    Args:
        results (str | Path): Results CSV.
        out_dir (str | Path): Directory for mean ranks, adjusted-p heatmaps and grouping JSON.
        max_target_n (int): Exclusive bound on target_n.
        alpha (float): Significance level.
    Returns:
        Dict[str, GroupingReport]: Report per metric.
    """
    df = read_results(results)
    df = df[df["target_n"] < max_target_n]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    reports = {}
    for metric, direction in (("dhd", Direction.LOWER_BETTER), ("test_loglik", Direction.HIGHER_BETTER)):
        if df[metric].isna().all():
            logging.warning("[Stats] no %s values; skipped", metric)
            continue
        reports[metric] = _metric_report(df, metric, direction, alpha, out)
    if not reports:
        raise StatsError("results carry no metric to compare")
    return reports
