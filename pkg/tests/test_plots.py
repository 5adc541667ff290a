import numpy as np
import pandas as pd
import pytest

from domain.errors import DataError
from evaluation.plots import METRICS, build_figure, plot_results, read_results, summarize
from utils.traces import RESULT_COLUMNS


def _results(seeds=(0, 1, 2), datasets=("spbn3",)):
    rng = np.random.default_rng(0)
    rows = []
    for dataset in datasets:
        for algorithm in ("pcs-tl", "pc"):
            for n in (25, 125):
                for seed in seeds:
                    rows.append({
                        "dataset": dataset, "algorithm": algorithm, "target_n": n, "seed": seed,
                        "test_loglik": -1000.0 + rng.normal(), "shd": int(rng.integers(0, 5)),
                        "dhd": float(rng.uniform(0, 10)), "wall_time_s": float(rng.uniform(0, 2)),
                    })
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def test_summary_uses_sample_std():
    df = _results()
    summary = summarize(df)
    assert len(summary) == 4
    part = df[(df.algorithm == "pc") & (df.target_n == 25)]
    row = summary[(summary.algorithm == "pc") & (summary.target_n == 25)].iloc[0]
    assert row["dhd_mean"] == pytest.approx(part["dhd"].mean())
    assert row["dhd_std"] == pytest.approx(np.std(part["dhd"].to_numpy(), ddof=1))


def test_single_seed_has_zero_std():
    summary = summarize(_results(seeds=(0,)))
    assert (summary["test_loglik_std"] == 0.0).all()


def test_legend_only_on_first_chart():
    fig = build_figure(_results())
    assert len(fig.axes) == len(METRICS)
    assert [t.get_text() for t in fig.axes[0].get_legend().get_texts()] == ["pc", "pcs-tl"]
    assert all(ax.get_legend() is None for ax in fig.axes[1:])


def test_one_svg_per_dataset(tmp_path):
    written = plot_results(_results(datasets=("spbn1", "spbn3")), tmp_path)
    assert [p.name for p in written] == ["spbn1.svg", "spbn3.svg"]
    assert written[0].read_text(encoding="utf-8").startswith("<?xml")


def test_svg_output_is_reproducible(tmp_path):
    df = _results()
    first, = plot_results(df, tmp_path / "a")
    second, = plot_results(df, tmp_path / "b")
    assert first.read_bytes() == second.read_bytes()


def test_read_results_round_trip(tmp_path):
    path = tmp_path / "results.csv"
    _results().to_csv(path, index=False)
    assert list(read_results(path).columns) == RESULT_COLUMNS


@pytest.mark.parametrize("content,message", [
    (",".join(RESULT_COLUMNS) + "\n", "have no rows"),
    ("dataset,algorithm\nx,pc\n", "lack columns"),
])
def test_bad_results(tmp_path, content, message):
    path = tmp_path / "results.csv"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(DataError, match=message):
        read_results(path)


def test_missing_results_file(tmp_path):
    with pytest.raises(DataError, match="cannot read results"):
        plot_results(tmp_path / "absent.csv", tmp_path)
