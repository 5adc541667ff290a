from pathlib import Path
from typing import List, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from domain.errors import DataError
from utils.traces import RESULT_COLUMNS

METRICS = (("test_loglik", "Test log-likelihood"), ("dhd", "DHD"), ("wall_time_s", "Wall time (s)"))

plt.rcParams.update({"svg.fonttype": "none", "svg.hashsalt": "kdebn"})


def read_results(path: Union[str, Path]) -> pd.DataFrame:
    try:
        df = pd.read_csv(path)
    except (OSError, pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise DataError(f"cannot read results '{path}': {e}") from e
    missing = [c for c in RESULT_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"results '{path}' lack columns: {', '.join(missing)}")
    if df.empty:
        raise DataError(f"results '{path}' have no rows")
    return df


def summarize(df: pd.DataFrame) -> pd.DataFrame:
    """
    Mean and sample standard deviation (ddof=1, 0 for a single seed) per
    (dataset, algorithm, target_n) and metric.
    """
    metrics = [m for m, _ in METRICS]
    grouped = df.groupby(["dataset", "algorithm", "target_n"], sort=True)[metrics]
    mean = grouped.mean().add_suffix("_mean")
    std = grouped.std(ddof=1).fillna(0.0).add_suffix("_std")
    return mean.join(std).reset_index()


def build_figure(df: pd.DataFrame) -> plt.Figure:
    """
    One row of charts for a single dataset: each metric against target_n, one line per
    algorithm with a ±1 standard-deviation band. Only the first chart carries the legend.
    """
    summary = summarize(df)
    fig, axes = plt.subplots(1, len(METRICS), figsize=(5 * len(METRICS), 4))
    for ax, (metric, label) in zip(np.atleast_1d(axes), METRICS):
        for algorithm, part in summary.groupby("algorithm", sort=True):
            mean = part[f"{metric}_mean"].to_numpy(dtype=float)
            if np.all(np.isnan(mean)):
                continue
            std = part[f"{metric}_std"].to_numpy(dtype=float)
            x = part["target_n"].to_numpy()
            line, = ax.plot(x, mean, marker="o", markersize=3, label=str(algorithm))
            ax.fill_between(x, mean - std, mean + std, color=line.get_color(), alpha=0.2, linewidth=0)
        ax.set_xlabel("Target instances")
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
    first = np.atleast_1d(axes)[0]
    if first.get_legend_handles_labels()[0]:
        first.legend()
    fig.suptitle(str(df["dataset"].iloc[0]))
    fig.tight_layout()
    return fig


def plot_results(results: Union[str, Path, pd.DataFrame], out_dir: Union[str, Path]) -> List[Path]:
    """
    Write one self-contained SVG per dataset found in a results CSV.
    Args:
        results (str | Path | pd.DataFrame): Results CSV path or frame with the result columns.
        out_dir (str | Path): Output directory.
    Returns:
        List[Path]: Written SVG files, in dataset order.
    """
    df = results if isinstance(results, pd.DataFrame) else read_results(results)
    if df.empty:
        raise DataError("results have no rows")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for dataset, part in df.groupby("dataset", sort=True):
        fig = build_figure(part)
        path = out / f"{dataset}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
