import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.stats import norm

from domain.dataset import Dataset
from domain.errors import TransferError
from transfer.context import LN2, PSI_CAP, SourceWeights, TransferContext, build_context, js_divergence, psi, sjs


def _context(per_variable_js, names=("a", "b"), kept=None, eta=0.5):
    js = np.asarray(per_variable_js, dtype=float)
    target = Dataset(names, np.random.default_rng(0).normal(size=(20, len(names))))
    sources = tuple(Dataset(names, np.random.default_rng(s + 1).normal(size=(40, len(names))))
                    for s in range(js.shape[0]))
    kept = tuple(range(js.shape[0])) if kept is None else kept
    return TransferContext(target, sources, js, js.sum(axis=1), kept, eta)


def test_js_of_identical_samples_is_zero():
    x = np.random.default_rng(0).normal(size=300)
    assert js_divergence(x, x) == pytest.approx(0.0, abs=1e-9)


def test_js_of_disjoint_supports_is_ln2():
    rng = np.random.default_rng(1)
    assert js_divergence(rng.normal(size=200), 1e6 + rng.normal(size=200)) == pytest.approx(LN2, abs=1e-3)


def test_js_is_symmetric():
    rng = np.random.default_rng(2)
    p, q = rng.normal(size=300), rng.normal(0.5, 2.0, size=250)
    assert js_divergence(p, q) == pytest.approx(js_divergence(q, p), abs=1e-12)


def test_js_matches_quadrature_for_shifted_gaussians():
    rng = np.random.default_rng(3)
    grid = np.linspace(-12.0, 13.0, 200001)
    p, q = norm.pdf(grid, 0, 1), norm.pdf(grid, 1, 1)
    m = 0.5 * (p + q)
    exact = 0.5 * trapezoid(p * np.log(p / m), grid) + 0.5 * trapezoid(q * np.log(q / m), grid)
    estimate = js_divergence(rng.normal(0, 1, size=5000), rng.normal(1, 1, size=5000))
    assert estimate == pytest.approx(exact, abs=0.05)


def test_js_needs_two_samples():
    with pytest.raises(TransferError, match="two samples"):
        js_divergence(np.array([1.0]), np.array([1.0, 2.0]))


@pytest.mark.parametrize("values,expected", [
    ([5.0], [0.2]),
    ([1.0, 1.0, 1.0], [1.0, 1.0, 1.0]),
    ([0.5, 0.6, 50.0], [2.0, 1.0 / 0.6, 0.02]),
    ([1.0, 1.0, 1.0, 1.0, 100.0], [1.0, 1.0, 1.0, 1.0, 0.0]),
    ([0.0, 1.0], [PSI_CAP, 1.0]),
])
def test_psi(values, expected):
    np.testing.assert_allclose(psi(values), expected, rtol=1e-12)


def test_psi_rejects_negative_values():
    with pytest.raises(TransferError):
        psi([0.1, -0.2])


def test_sjs_sums_cached_divergences():
    ctx = _context([[0.1, 0.3]])
    assert sjs(ctx, 0, []) == 0.0
    assert ctx.sjs(0, ["a"]) == pytest.approx(0.1)
    assert ctx.sjs(0, ["a", "b"]) == pytest.approx(0.4)
    with pytest.raises(TransferError, match="unknown variable"):
        ctx.sjs(0, ["zz"])
    with pytest.raises(TransferError, match="unknown source"):
        ctx.sjs(3, ["a"])


def test_weights_combine_gate_and_local_similarity():
    ctx = _context([[0.2, 0.2], [0.2, 0.2]])
    w = ctx.weights(("a", "b"), local=[1.0, 0.5])
    np.testing.assert_allclose(w.weights, [2.0 / 3.0, 1.0 / 3.0])
    assert w.positive() == (0, 1)


def test_weights_skip_sources_outside_the_kept_set():
    ctx = _context([[0.2, 0.2], [0.1, 0.1]], kept=(1,))
    np.testing.assert_allclose(ctx.weights(("a",)).weights, [0.0, 1.0])


def test_source_weights_normalize():
    assert SourceWeights.normalized([2.0, 6.0]).weights.tolist() == [0.25, 0.75]
    zero = SourceWeights.normalized([0.0, 0.0])
    assert not zero.any_positive
    assert zero.positive() == ()


def test_build_context_eta_and_kept_sources():
    rng = np.random.default_rng(4)
    target = Dataset(("a", "b"), rng.normal(size=(25, 2)))
    sources = [Dataset(("a", "b"), rng.normal(size=(3000, 2))) for _ in range(2)]
    ctx = build_context(target, sources)
    assert ctx.kept_sources == (0, 1)
    assert ctx.eta == pytest.approx(25 / 3000)
    assert ctx.per_variable_js.shape == (2, 2)
    np.testing.assert_allclose(ctx.global_sjs, ctx.per_variable_js.sum(axis=1))


def test_build_context_caps_eta_at_one():
    rng = np.random.default_rng(5)
    target = Dataset(("a",), rng.normal(size=(200, 1)))
    ctx = build_context(target, [Dataset(("a",), rng.normal(size=(50, 1)))])
    assert ctx.eta == 1.0


def test_build_context_without_sources():
    ctx = build_context(Dataset(("a",), np.arange(10.0)), [])
    assert not ctx.transfer_enabled
    assert ctx.eta == 1.0


def test_build_context_aligns_column_order():
    rng = np.random.default_rng(6)
    target = Dataset(("a", "b"), rng.normal(size=(30, 2)))
    source = Dataset(("b", "a"), rng.normal(size=(60, 2)))
    ctx = build_context(target, [source])
    assert ctx.sources[0].names == ("a", "b")
    np.testing.assert_array_equal(ctx.sources[0].column("a"), source.column("a"))


def test_build_context_rejects_other_variables():
    with pytest.raises(TransferError, match="differ from target"):
        build_context(Dataset(("a",), np.arange(5.0)), [Dataset(("b",), np.arange(5.0))])


@pytest.mark.parametrize("eta", [0.0, 1.5])
def test_with_eta_validates(eta):
    with pytest.raises(TransferError):
        _context([[0.1, 0.1]]).with_eta(eta)


def test_with_eta_copies():
    ctx = _context([[0.1, 0.1]])
    assert ctx.with_eta(1.0).eta == 1.0
    assert ctx.eta == 0.5
