import numpy as np
import pytest

from density.kde import KdeModel
from domain.dataset import Dataset, kfold_indices
from domain.errors import GraphError
from domain.graph import Dag
from learners.scores import CvScore, CvTlScore, cv_score, cvtl_score
from transfer.context import TransferContext, build_context


def test_parentless_term_is_sum_of_held_out_logliks(chain_data):
    folds = kfold_indices(chain_data.n_rows, 2, seed=3)
    expected = 0.0
    for m in range(2):
        train = chain_data.column("a")[folds.train_indices(m)].reshape(-1, 1)
        test = chain_data.column("a")[folds.test_indices(m)]
        expected += float(np.sum(KdeModel.fit(train).logpdf(test)))
    assert CvScore(chain_data, folds).local("a", ()) == pytest.approx(expected, abs=1e-10)


def test_too_many_parents_scores_minus_infinity():
    d = Dataset(("a", "b", "c", "d"), np.random.default_rng(0).normal(size=(6, 4)))
    score = CvScore(d, kfold_indices(6, 3, seed=0))
    assert score.local("a", ("b", "c", "d")) == -np.inf
    assert np.isfinite(score.local("a", ("b",)))


def test_score_is_decomposable(chain_data):
    score = CvScore(chain_data, kfold_indices(chain_data.n_rows, 5, seed=0))
    g1 = Dag(("a", "b", "c"), frozenset({("a", "b")}))
    g2 = Dag(("a", "b", "c"), frozenset({("a", "b"), ("b", "c")}))
    assert score.total(g2) - score.total(g1) == pytest.approx(
        score.local("c", ("b",)) - score.local("c", ()), abs=1e-9)


def test_cache_clear_gives_identical_scores(chain_data):
    score = CvScore(chain_data, kfold_indices(chain_data.n_rows, 5, seed=0))
    g = Dag(("a", "b", "c"), frozenset({("a", "b"), ("b", "c")}))
    before = score.total(g)
    score.clear()
    assert score.total(g) == before


def test_parent_order_does_not_matter(chain_data):
    score = CvScore(chain_data, kfold_indices(chain_data.n_rows, 5, seed=0))
    assert score.local("b", ("a", "c")) == score.local("b", ("c", "a"))


def test_related_parent_raises_the_score(chain_data):
    folds = kfold_indices(chain_data.n_rows, 5, seed=0)
    g = Dag(("a", "b", "c"), frozenset({("a", "b")}))
    assert cv_score(chain_data, g, "b", folds) > cv_score(chain_data, Dag.empty(g.nodes), "b", folds)
    with pytest.raises(GraphError):
        cv_score(chain_data, g, "zz", folds)


def _one_source_context(target, eta):
    source = Dataset(target.names, np.random.default_rng(9).normal(size=(50, target.n_vars)))
    js = np.full((1, target.n_vars), 0.1)
    return TransferContext(target, (source,), js, js.sum(axis=1), (0,), eta)


def test_blend_when_sources_fit_better(chain_data, monkeypatch):
    ctx = _one_source_context(chain_data, eta=0.25)
    score = CvTlScore(ctx, kfold_indices(chain_data.n_rows, 2, seed=0))
    monkeypatch.setattr(score.target, "fold_terms", lambda node, parents: np.array([-100.0, -100.0]))
    monkeypatch.setattr(score, "source_fold_terms", lambda s, node, parents: np.array([-80.0, -80.0]))
    monkeypatch.setattr(score, "target_fit_loglik", lambda node, parents: -200.0)
    assert score.local("a", ()) == pytest.approx(2 * -85.0)
    assert score.risk("a", ()) == pytest.approx(40.0)
    assert score.transfer_active("a", ())


def test_no_blend_when_sources_fit_worse(chain_data, monkeypatch):
    ctx = _one_source_context(chain_data, eta=0.25)
    score = CvTlScore(ctx, kfold_indices(chain_data.n_rows, 2, seed=0))
    monkeypatch.setattr(score.target, "fold_terms", lambda node, parents: np.array([-100.0, -100.0]))
    monkeypatch.setattr(score, "source_fold_terms", lambda s, node, parents: np.array([-150.0, -150.0]))
    monkeypatch.setattr(score, "target_fit_loglik", lambda node, parents: -200.0)
    assert score.local("a", ()) == -200.0
    assert not score.transfer_active("a", ())


def test_gate_uses_the_full_target_fit(chain_data, monkeypatch):
    ctx = _one_source_context(chain_data, eta=0.25)
    score = CvTlScore(ctx, kfold_indices(chain_data.n_rows, 2, seed=0))
    monkeypatch.setattr(score.target, "fold_terms", lambda node, parents: np.array([-500.0, -500.0]))
    monkeypatch.setattr(score, "source_fold_terms", lambda s, node, parents: np.array([-80.0, -80.0]))
    monkeypatch.setattr(score, "target_fit_loglik", lambda node, parents: -120.0)
    assert score.risk("a", ()) == pytest.approx(-40.0)
    assert score.local("a", ()) == -1000.0


def test_target_fit_is_the_in_sample_loglik(chain_data):
    score = CvTlScore(_one_source_context(chain_data, eta=0.25), kfold_indices(chain_data.n_rows, 5, seed=0))
    column = chain_data.column("a").reshape(-1, 1)
    expected = float(np.sum(KdeModel.fit(column).logpdf(chain_data.column("a"))))
    assert score.target_fit_loglik("a", ()) == pytest.approx(expected, abs=1e-10)


def test_eta_one_equals_the_target_score(chain_data):
    folds = kfold_indices(chain_data.n_rows, 5, seed=1)
    ctx = _one_source_context(chain_data, eta=1.0)
    tl = CvTlScore(ctx, folds)
    plain = CvScore(chain_data, folds)
    for node, parents in (("a", ()), ("b", ("a",)), ("c", ("a", "b"))):
        assert tl.local(node, parents) == plain.local(node, parents)


def test_noise_sources_never_blend():
    rng = np.random.default_rng(12)
    target = Dataset(("a", "b"), rng.normal(size=(60, 2)))
    sources = [Dataset(("a", "b"), rng.normal(0.0, 10.0, size=(500, 2))) for _ in range(2)]
    ctx = build_context(target, sources)
    folds = kfold_indices(60, 5, seed=0)
    tl = CvTlScore(ctx, folds)
    plain = CvScore(target, folds)
    for node, parents in (("a", ()), ("b", ()), ("b", ("a",))):
        assert not tl.transfer_active(node, parents)
        assert tl.local(node, parents) == plain.local(node, parents)


def test_cvtl_score_helper(chain_data):
    ctx = _one_source_context(chain_data, eta=1.0)
    folds = kfold_indices(chain_data.n_rows, 5, seed=1)
    g = Dag(("a", "b", "c"), frozenset({("a", "b")}))
    assert cvtl_score(ctx, g, "b", folds) == cv_score(chain_data, g, "b", folds)
