import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from dotenv import load_dotenv
from pydantic import ValidationError

from density.bundle import load_bundle, save_bundle
from density.params import TlKdeBayesianNetwork, fit_kdebn, fit_tl_kdebn
from domain.config import Algorithm, CorruptionSpec, HcConfig, NetworkKind, PcConfig, RcotConfig, load_experiment_config
from domain.dataset import load_csv, write_csv
from domain.errors import ConfigError, GraphError, KdebnError
from domain.graph import Dag, dhd, read_graph, shd, write_graph
from evaluation.plots import plot_results
from orchestrator import evaluate_loglik, fit_network, learn_structure, load_network, run_experiment, stats_report
from synthetic.corruption import add_noise, corrupt_source, shuffle_columns
from synthetic.networks import sample
from transfer.context import build_context
from utils.traces import EvaluationReport, write_traces


def _read_dag(path: str) -> Dag:
    g = read_graph(path)
    if not isinstance(g, Dag):
        raise GraphError(f"'{path}' holds undirected edges; a DAG is required")
    return g


def _overrides(pairs: Sequence[str]) -> Dict[str, str]:
    out = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--set expects KEY=VALUE, got '{pair}'")
        out[key.strip()] = value
    return out


def cmd_sample(args: argparse.Namespace) -> None:
    net = load_network(args.network)
    write_csv(sample(net, args.n, args.seed), args.out)
    if args.graph:
        write_graph(net.dag, args.graph)
    logging.info("Sampled %d instances of %s into %s", args.n, args.network, args.out)


def cmd_corrupt(args: argparse.Namespace) -> None:
    spec = CorruptionSpec(modified_fraction=args.fraction, noise_mean=args.noise_mean,
                          noise_std=args.noise_std, seed=args.seed)
    kind, _, value = args.network.partition(":")
    if kind.strip().lower() == NetworkKind.CSV.value:
        d = load_csv(value.strip())
        out = add_noise(shuffle_columns(d, spec.modified_fraction, spec.seed), spec)
    else:
        out = corrupt_source(load_network(args.network), args.n, spec)
    write_csv(out, args.out)
    logging.info("Wrote corrupted source (%d rows) to %s", out.n_rows, args.out)


def _configs(args: argparse.Namespace):
    pc_cfg = PcConfig(alpha=args.alpha, max_sepset_size=args.max_sepset_size,
                      rcot=RcotConfig(seed=args.seed))
    hc_cfg = HcConfig(k_folds=args.k_folds, patience=args.patience, tabu_size=args.tabu_size,
                      max_indegree=args.max_indegree, seed=args.seed)
    return pc_cfg, hc_cfg


def cmd_learn(args: argparse.Namespace) -> None:
    algorithm = Algorithm(args.algorithm)
    target = load_csv(args.data)
    sources = [load_csv(p) for p in args.source]
    ctx = build_context(target, sources) if algorithm.is_transfer else None
    pc_cfg, hc_cfg = _configs(args)
    learned = learn_structure(algorithm, target, ctx, pc_cfg, hc_cfg)
    write_graph(learned.dag, args.out)
    logging.info("Learned %d arcs with %s; structure written to %s", len(learned.dag.arcs), algorithm.value, args.out)
    if args.trace:
        if learned.traces:
            write_traces(learned.traces, args.trace)
        else:
            logging.warning("%s produced no trace records", algorithm.value)
    if args.bundle:
        save_bundle(fit_network(algorithm, learned.dag, target, ctx), args.bundle)
        logging.info("Fitted network saved to %s", args.bundle)


def cmd_evaluate(args: argparse.Namespace) -> None:
    test = load_csv(args.test)
    if args.bundle:
        net = load_bundle(args.bundle)
        structure = args.bundle
    else:
        if not (args.structure and args.train):
            raise ConfigError("evaluate needs --bundle, or both --structure and --train")
        dag = _read_dag(args.structure)
        train = load_csv(args.train)
        if args.source:
            net = fit_tl_kdebn(dag, build_context(train, [load_csv(p) for p in args.source]))
        else:
            net = fit_kdebn(dag, train)
        structure = args.structure
    report = EvaluationReport(
        structure=str(structure),
        test_loglik=evaluate_loglik(net, test),
        arcs=len(net.dag.arcs),
        transfer=isinstance(net, TlKdeBayesianNetwork),
    )
    if args.reference:
        reference = _read_dag(args.reference)
        report.shd = shd(reference, net.dag)
        report.dhd = dhd(reference, net.dag)
    print(report.model_dump_json())


def cmd_experiment(args: argparse.Namespace) -> None:
    cfg = load_experiment_config(args.config, _overrides(args.set))
    path = run_experiment(cfg, args.workers)
    logging.info("Results written to %s", path)


def cmd_plot(args: argparse.Namespace) -> None:
    for path in plot_results(args.results, args.out_dir):
        logging.info("Chart written to %s", path)


def cmd_stats(args: argparse.Namespace) -> None:
    reports = stats_report(args.results, args.out_dir, args.max_target_n, args.alpha)
    for metric, report in reports.items():
        logging.info("%s: Friedman p=%.4g, groups=%s", metric, report.friedman_p, json.dumps(report.groups))


def _optional_int(value: str) -> Optional[int]:
    return None if value.lower() in ("none", "unlimited") else int(value)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kdebn", description="Transfer learning for KDE Bayesian networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="Sample instances from a synthetic or linear-Gaussian network")
    p.add_argument("--network", required=True, help="spbn:<1-4> or lgbn:<path>")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--graph", help="Also write the generating DAG here")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("corrupt", help="Build a corrupted source dataset")
    p.add_argument("--network", required=True, help="spbn:<1-4>, lgbn:<path> or csv:<path>")
    p.add_argument("--n", type=int, default=3000, help="Rows sampled from a generative network")
    p.add_argument("--fraction", type=float, default=0.0,
                   help="Fraction of arcs relocated (networks) or columns shuffled (CSV)")
    p.add_argument("--noise-mean", type=float, default=0.0)
    p.add_argument("--noise-std", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("learn", help="Learn a structure from a CSV")
    p.add_argument("--data", required=True, help="Target CSV")
    p.add_argument("--algorithm", choices=[a.value for a in Algorithm], default=Algorithm.HC.value)
    p.add_argument("--source", action="append", default=[], help="Source CSV (repeatable)")
    p.add_argument("--out", required=True, help="Structure file")
    p.add_argument("--bundle", help="Also fit parameters and save the network bundle here")
    p.add_argument("--trace", help="Write the pooled p-value or move trace CSV here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--max-sepset-size", type=_optional_int, default=None)
    p.add_argument("--max-indegree", type=_optional_int, default=None)
    p.add_argument("--k-folds", type=int, default=5)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--tabu-size", type=int, default=5)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("evaluate", help="Test log-likelihood and structural error of a network")
    p.add_argument("--test", required=True, help="Test CSV")
    p.add_argument("--bundle", help="Saved network bundle")
    p.add_argument("--structure", help="Structure file to fit on --train")
    p.add_argument("--train", help="Training CSV")
    p.add_argument("--source", action="append", default=[], help="Source CSV for CKDE-TL pooling (repeatable)")
    p.add_argument("--reference", help="Reference structure for SHD/DHD")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="Run the experiment protocol")
    p.add_argument("--config", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="Override a config key")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("plot", help="SVG charts from a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("stats", help="Friedman and Bergmann-Hommel comparison of a results CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--max-target-n", type=int, default=525)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv(Path(__file__).resolve().parent / ".env")
    logging.basicConfig(level=os.getenv("LOG_LEVEL", "INFO").upper(), format='[%(levelname)s] %(message)s')
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (KdebnError, OSError, ValidationError) as e:
        reason = " ".join(str(e).split()).replace('"', "'")
        print(f'error={type(e).__name__} reason="{reason}"', file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
