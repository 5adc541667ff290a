import numpy as np
import pytest

from density.bundle import load_bundle, save_bundle
from density.kde import KdeBayesianNetwork, ckde_logpdf, network_loglik
from density.params import TlKdeBayesianNetwork, fit_kdebn, fit_tl_kdebn, tl_loglik, tl_logpdf
from domain.dataset import Dataset
from domain.errors import DataError, KdeError
from domain.graph import Dag
from transfer.context import TransferContext, build_context

CHAIN = Dag(("a", "b", "c"), frozenset({("a", "b"), ("b", "c")}))


def _context(target, sources, js, eta):
    js = np.asarray(js, dtype=float)
    return TransferContext(target, tuple(sources), js, js.sum(axis=1), tuple(range(len(sources))), eta)


def _source(chain_data, seed, shift=0.3):
    values = chain_data.values + shift * np.random.default_rng(seed).normal(size=chain_data.values.shape)
    return Dataset(chain_data.names, values)


def test_fit_kdebn_builds_one_cpd_per_node(chain_data):
    bn = fit_kdebn(CHAIN, chain_data)
    assert set(bn.cpds) == {"a", "b", "c"}
    assert bn.cpds["a"].marginal is None
    assert bn.cpds["c"].joint.dim == 2
    assert bn.cpds["c"].marginal.dim == 1


def test_refit_is_deterministic(chain_data):
    first, second = fit_kdebn(CHAIN, chain_data), fit_kdebn(CHAIN, chain_data)
    for node in CHAIN.nodes:
        np.testing.assert_array_equal(first.cpds[node].joint.bandwidth, second.cpds[node].joint.bandwidth)


def test_fit_needs_every_column(chain_data):
    with pytest.raises(DataError, match="lacks columns"):
        fit_kdebn(Dag.empty(("a", "zz")), chain_data)


def test_without_kept_sources_the_pool_is_the_target(chain_data):
    net = fit_tl_kdebn(CHAIN, build_context(chain_data, []))
    assert net.sources == ()
    assert net.eta == 1.0
    assert tl_loglik(net, chain_data) == pytest.approx(network_loglik(fit_kdebn(CHAIN, chain_data), chain_data),
                                                      abs=1e-9)


def test_node_weights_follow_the_gate(chain_data):
    target = chain_data.select(("a",))
    sources = [_source(chain_data, 1).select(("a",)), _source(chain_data, 2).select(("a",))]
    net = fit_tl_kdebn(Dag.empty(("a",)), _context(target, sources, [[0.5], [1.0]], 0.5))
    np.testing.assert_allclose(net.weights["a"], [2.0 / 3.0, 1.0 / 3.0])


def test_pooled_node_density(chain_data):
    source = _source(chain_data, 3)
    net = fit_tl_kdebn(CHAIN, _context(chain_data, [source], [[0.1, 0.1, 0.1]], 0.3))
    expected = 0.3 * ckde_logpdf(net.target.cpds["b"], chain_data) \
        + 0.7 * ckde_logpdf(net.sources[0].cpds["b"], chain_data)
    np.testing.assert_allclose(net.node_logpdf("b", chain_data), expected, atol=1e-12)


def test_pool_lies_between_target_and_source(chain_data):
    source = _source(chain_data, 4)
    net = fit_tl_kdebn(CHAIN, _context(chain_data, [source], [[0.1, 0.1, 0.1]], 0.4))
    target = ckde_logpdf(net.target.cpds["c"], chain_data)
    other = ckde_logpdf(net.sources[0].cpds["c"], chain_data)
    pooled = net.node_logpdf("c", chain_data)
    assert np.all(pooled >= np.minimum(target, other) - 1e-12)
    assert np.all(pooled <= np.maximum(target, other) + 1e-12)


def test_identical_source_leaves_the_density_unchanged(chain_data):
    net = fit_tl_kdebn(CHAIN, _context(chain_data, [chain_data], [[0.0, 0.0, 0.0]], 0.3))
    plain = fit_kdebn(CHAIN, chain_data)
    np.testing.assert_allclose(tl_logpdf(net, chain_data), plain.logpdf(chain_data), atol=1e-9)


def test_pool_is_linear_in_eta(chain_data):
    source = _source(chain_data, 5)
    ctx = _context(chain_data, [source], [[0.1, 0.1, 0.1]], 0.5)
    low = fit_tl_kdebn(CHAIN, ctx.with_eta(0.4)).node_logpdf("b", chain_data)
    high = fit_tl_kdebn(CHAIN, ctx.with_eta(0.6)).node_logpdf("b", chain_data)
    net = fit_tl_kdebn(CHAIN, ctx)
    slope = ckde_logpdf(net.target.cpds["b"], chain_data) - ckde_logpdf(net.sources[0].cpds["b"], chain_data)
    np.testing.assert_allclose((high - low) / 0.2, slope, atol=1e-6)


def test_normalizing_an_identical_source_is_nearly_free(chain_data):
    root = Dag.empty(("a",))
    target = chain_data.select(("a",))
    net = fit_tl_kdebn(root, _context(target, [target], [[0.0]], 0.5))
    raw = tl_logpdf(net, target.head(20))
    normalized = tl_logpdf(net, target.head(20), normalize=True, samples=2000)
    assert np.all(np.isfinite(normalized))
    assert np.max(np.abs(normalized - raw)) < 0.1


def test_normalize_is_a_no_op_at_eta_one(chain_data):
    net = fit_tl_kdebn(CHAIN, _context(chain_data, [_source(chain_data, 6)], [[0.1, 0.1, 0.1]], 1.0))
    np.testing.assert_array_equal(tl_logpdf(net, chain_data, normalize=True), tl_logpdf(net, chain_data))


def test_weights_must_sum_to_one(chain_data):
    target = fit_kdebn(Dag.empty(("a",)), chain_data)
    with pytest.raises(KdeError, match="sum to"):
        TlKdeBayesianNetwork(target.dag, target, (target,), {"a": np.array([0.5])}, 0.5)


def test_bundle_round_trip(tmp_path, chain_data):
    bn = fit_kdebn(CHAIN, chain_data)
    back = load_bundle(save_bundle(bn, tmp_path / "plain"))
    assert isinstance(back, KdeBayesianNetwork)
    assert back.dag == bn.dag
    np.testing.assert_array_equal(back.logpdf(chain_data), bn.logpdf(chain_data))


def test_tl_bundle_round_trip(tmp_path, chain_data):
    sources = [_source(chain_data, 7), _source(chain_data, 8, shift=1.0)]
    net = fit_tl_kdebn(CHAIN, _context(chain_data, sources, [[0.1, 0.1, 0.1], [0.3, 0.3, 0.3]], 0.25))
    back = load_bundle(save_bundle(net, tmp_path / "tl"))
    assert isinstance(back, TlKdeBayesianNetwork)
    assert back.eta == 0.25
    assert len(back.sources) == 2
    np.testing.assert_array_equal(tl_logpdf(back, chain_data), tl_logpdf(net, chain_data))


def test_missing_bundle(tmp_path):
    with pytest.raises(KdeError, match="cannot read bundle"):
        load_bundle(tmp_path / "nowhere")
