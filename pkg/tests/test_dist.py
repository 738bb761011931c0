import math

import numpy as np
import pytest
from scipy import stats

from survae.ad import Node, Parameter, finite_diff_check, ops
from survae.dist import (MLP, Bernoulli, Categorical, ConditionalAffineNormal, ConditionalBernoulli,
                         ConditionalCategorical, ConditionalDiagonalNormal, ConditionalLogitNormal,
                         ContextError, DiagonalNormal, HalfNormal, HalfNormalBelow, MaxOfNormals,
                         RectifiedNormal, SortedNormals, StandardNormal, TruncatedNormalBelow, Uniform,
                         from_config)

def lp1(d, v, context=None):
    return d.log_prob(Node(np.asarray(v, dtype=float).reshape(-1, 1)), context).value


def test_standard_normal_at_mode():
    assert math.isclose(lp1(StandardNormal(1), [0.0])[0], -0.5 * math.log(2 * math.pi), abs_tol=1e-15)


def test_uniform_value():
    assert math.isclose(lp1(Uniform(1, 0.0, 2.0), [0.7])[0], -math.log(2.0), abs_tol=1e-15)
    assert lp1(Uniform(1, 0.0, 2.0), [2.5])[0] == -np.inf


def test_categorical_uniform_six():
    d = Categorical(1, 6)
    assert np.allclose(lp1(d, np.arange(6)), -math.log(6), atol=1e-15)


def trap(dens, grid):
    return float(np.sum((dens[1:] + dens[:-1]) * np.diff(grid) / 2))


@pytest.mark.parametrize("dist,lo,hi", [
    (StandardNormal(1), -10, 10), (DiagonalNormal(1, [0.4], [-0.3]), -10, 10), (HalfNormal(1), 0, 10),
    (HalfNormal(1, 2.0, negative=True), -20, 0), (MaxOfNormals(1, 3), -10, 10), (Uniform(1, -1.0, 2.0), -1, 2),
], ids=lambda v: getattr(v, "family", str(v)))
def test_continuous_quadrature_normalizes(dist, lo, hi):
    grid = np.linspace(lo, hi, 4001)
    assert abs(trap(np.exp(lp1(dist, grid)), grid) - 1.0) < 1e-4


@pytest.mark.parametrize("bound", [-1.5, 0.0, 2.0])
def test_truncated_fills_normalize(bound):
    # the support is open at the bound, so integrate up to just below it
    grid = np.linspace(bound - 12, np.nextafter(bound, -np.inf), 4001)
    for fill in (TruncatedNormalBelow(), HalfNormalBelow(0.7)):
        dens = np.exp(fill.log_prob_elements(Node(grid), Node(np.full_like(grid, bound))).value)
        assert abs(trap(dens, grid) - 1.0) < 1e-4


def test_sorted_normals_normalizes_on_grid():
    g = np.linspace(-8, 8, 801)
    a, b = np.meshgrid(g, g, indexing="ij")
    dens = np.exp(SortedNormals(2).log_prob(Node(np.stack([a.ravel(), b.ravel()], 1))).value).reshape(a.shape)
    h = g[1] - g[0]
    # the ascending cone has a density jump on the diagonal; a Riemann sum is adequate at this step
    assert abs(dens.sum() * h * h - 1.0) < 1e-2


def test_rectified_normal_atom_plus_density():
    d = RectifiedNormal(1)
    assert math.isclose(lp1(d, [0.0])[0], -math.log(2.0), abs_tol=1e-15)
    pos = np.linspace(0, 10, 4001)
    pos[0] = np.nextafter(0.0, 1.0)
    assert abs(trap(np.exp(lp1(d, pos)), pos) + 0.5 - 1.0) < 1e-4
    assert lp1(d, [-0.1])[0] == -np.inf


def test_discrete_sums():
    logits = np.array([0.3, -1.2, 2.0, 0.0])
    d = Categorical(1, 4, logits)
    assert abs(np.exp(lp1(d, np.arange(4))).sum() - 1.0) < 1e-12
    b = Bernoulli(2, np.array([0.7, -0.4]))
    pts = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
    assert abs(np.exp(b.log_prob(Node(pts)).value).sum() - 1.0) < 1e-12
    cc = ConditionalCategorical(2, 3, 1, hidden=[4], rng=np.random.default_rng(0))
    for p in cc.named_parameters().values():
        p.value[...] = np.random.default_rng(1).normal(size=p.value.shape)
    ctx = Node(np.full((9, 1), 0.4))
    grid = np.array([[i, j] for i in range(3) for j in range(3)], dtype=float)
    assert abs(np.exp(cc.log_prob(Node(grid), ctx).value).sum() - 1.0) < 1e-12


def test_uniform_samples_in_support(rng):
    s = Uniform(2, 0.0, 1.0).sample(rng, 10000)
    assert s.min() >= 0.0 and s.max() < 1.0


def test_bernoulli_mean(rng):
    s = Bernoulli(1).sample(rng, 100000)
    assert abs(s.mean() - 0.5) < 0.01


@pytest.mark.parametrize("bound", [-30.0, -3.0, 0.0, 5.0, 40.0])
def test_truncated_samples_below_bound(rng, bound):
    b = np.full(100000, bound)
    for fill in (TruncatedNormalBelow(), HalfNormalBelow()):
        s = fill.sample_elements(rng, b)
        assert np.all(s < b) and np.all(np.isfinite(s))


def test_truncated_normal_matches_scipy(rng):
    s = TruncatedNormalBelow().sample_elements(rng, np.full(100000, 0.5))
    ks = stats.kstest(s, stats.truncnorm(-np.inf, 0.5).cdf)
    assert ks.statistic < 0.01


def test_sample_with_log_prob_consistent(rng):
    for d in (StandardNormal(3), DiagonalNormal(3, [0.1, 0.2, 0.3], [-0.5, 0.0, 0.5]), HalfNormal(2),
              Uniform(2, -1.0, 3.0), MaxOfNormals(2, 3), SortedNormals(3)):
        z, lp = d.sample_with_log_prob(rng, 7)
        assert np.allclose(lp.value, d.log_prob(z).value, rtol=0, atol=1e-12)


def test_categorical_sample_log_prob_is_normalized_logit(rng):
    logits = np.array([1.0, -0.5, 0.2])
    d = Categorical(1, 3, logits)
    v, lp = d.sample_with_log_prob(rng, 50)
    expected = (logits - np.log(np.exp(logits).sum()))[v.value[:, 0].astype(int)]
    assert np.allclose(lp.value, expected, atol=1e-15)


def test_conditional_requires_context(rng):
    for d in (ConditionalDiagonalNormal(1, 2, rng=rng), ConditionalBernoulli(1, 2, rng=rng),
              ConditionalCategorical(1, 3, 2, rng=rng), ConditionalAffineNormal(1, 2)):
        with pytest.raises(ContextError):
            d.log_prob(Node(np.zeros((1, 1))))
        with pytest.raises(ContextError):
            d.sample(rng, 1)
    with pytest.raises(ContextError):
        TruncatedNormalBelow().log_prob(Node(np.zeros((1, 1))))


def test_conditional_logit_normal_normalizes():
    d = ConditionalLogitNormal(1, 1, hidden=[3], rng=np.random.default_rng(0))
    for p in d.named_parameters().values():
        p.value[...] = 0.5 * np.random.default_rng(2).normal(size=p.value.shape)
    u = np.linspace(1e-7, 1 - 1e-7, 200001)
    dens = np.exp(d.log_prob(Node(u[:, None]), Node(np.full((len(u), 1), 0.3))).value)
    assert abs(trap(dens, u) - 1.0) < 1e-4


def test_reparameterized_gradients_diagonal_normal():
    d = DiagonalNormal(2, [0.2, -0.1], [0.1, -0.3])

    def f(rng):
        z, lp = d.sample_with_log_prob(rng, 5)
        return ops.sum(ops.square(z)) + ops.sum(lp)

    report = finite_diff_check(f, d.named_parameters(), seed=3, rel_tol=1e-4)
    assert report.passed, report.max_rel_err


def test_reparameterized_gradients_conditionals():
    rng = np.random.default_rng(4)
    ctx = Node(rng.normal(size=(6, 2)))
    for d in (ConditionalDiagonalNormal(2, 2, hidden=[5], rng=rng), ConditionalLogitNormal(2, 2, hidden=[5], rng=rng),
              ConditionalAffineNormal(2, 2, rng.normal(size=(2, 2)), [0.1, 0.2], [-0.2, 0.1])):
        for p in d.named_parameters().values():
            p.value[...] = 0.3 * rng.normal(size=p.value.shape)

        def f(r, d=d):
            z, lp = d.sample_with_log_prob(r, context=ctx)
            return ops.sum(ops.tanh(z)) + ops.sum(lp)

        report = finite_diff_check(f, d.named_parameters(), seed=5, rel_tol=1e-4)
        assert report.passed, (d.family, report.max_rel_err)


def test_fill_sample_gradient_in_bound():
    b = Parameter(np.array([0.3, -1.0]), "b")
    for fill in (TruncatedNormalBelow(), HalfNormalBelow()):
        report = finite_diff_check(lambda r, fill=fill: ops.sum(fill.rsample_elements(r, b)), {"b": b},
                                   seed=1, rel_tol=1e-4)
        assert report.passed


def test_mlp_zero_last_outputs_zero(rng):
    net = MLP(3, [8, 4], 2, rng=rng, zero_last=True)
    assert not net(Node(rng.normal(size=(5, 3)))).value.any()
    assert net.num_parameters() == 3 * 8 + 8 + 8 * 4 + 4 + 4 * 2 + 2


def test_from_config_round_trip(rng):
    for d in (StandardNormal(2), Uniform(2, 0.0, 4.0), HalfNormal(3, 2.0), Categorical(2, 5), MaxOfNormals(1, 2)):
        again = from_config(d.to_config(), rng)
        assert type(again) is type(d) and again.to_config() == d.to_config()
    with pytest.raises(ValueError, match="unknown distribution"):
        from_config({"family": "cauchy", "dim": 1})
