import math

import numpy as np
import pytest

from survae import dist
from survae.dist import ConditionalAffineNormal
from survae.flow import Flow
from survae.layers import ConfigError, PPCALayer, StochasticPermutation, VAELayer, layer_from_config, linear_gaussian_vae
from survae.oracle import gaussian_kl, gaussian_log_marginal, quadrature_log_marginal


def test_stochastic_permutation_zero_contribution_and_multiset(rng):
    layer = StochasticPermutation(5)
    x = rng.normal(size=(100, 5))
    z, v = layer.inference(x, rng)
    assert not v.value.any()
    assert np.array_equal(np.sort(z.value, 1), np.sort(x, 1))
    assert np.array_equal(np.sort(layer.generative(x, rng), 1), np.sort(x, 1))


def test_stochastic_permutation_uniform_orders(rng):
    x = np.tile([[0.0, 1.0, 2.0]], (100_000, 1))
    z = StochasticPermutation(3).inference(x, rng)[0].value
    codes = (z * [9, 3, 1]).sum(1)
    _, counts = np.unique(codes, return_counts=True)
    assert len(counts) == 6
    assert np.all(np.abs(counts / 1e5 - 1 / 6) < 0.01)


def test_vae_identical_densities_cancel():
    # encoder and decoder both N(0, 1) regardless of context; with z drawn at 0 and x = 0, V = 0
    enc = ConditionalAffineNormal(1, 1)
    dec = ConditionalAffineNormal(1, 1)
    layer = VAELayer(1, 1, enc, dec)

    class Zero:
        def standard_normal(self, shape):
            return np.zeros(shape)

    z, v = layer.inference(np.zeros((1, 1)), Zero())
    assert z.value[0, 0] == 0.0 and v.value[0] == 0.0


def test_vae_gap_equals_kl():
    a, b, s = 1.5, 0.3, 0.8
    w, c, ls = 0.2, 0.1, -0.7
    layer = linear_gaussian_vae(a, b, s, exact_posterior=False, enc_weight=w, enc_bias=c, enc_log_std=ls)
    flow = Flow(dist.StandardNormal(1), [layer])
    x = 0.9
    rng = np.random.default_rng(0)
    lw = flow.log_weights(np.array([[x]]), 100_000, rng)[0]
    elbo, se = lw.mean(), lw.std(ddof=1) / math.sqrt(len(lw))
    marginal = float(gaussian_log_marginal([[x - b]], [[a]], s)[0])
    prec = a * a + s * s
    kl = gaussian_kl(w * x + c, math.exp(2 * ls), a * (x - b) / prec, s * s / prec)
    assert elbo <= marginal
    assert abs((marginal - elbo) - kl) < 3 * se


def test_vae_exact_posterior_is_tight():
    layer = linear_gaussian_vae(2.0, 1.0, 0.5)
    flow = Flow(dist.StandardNormal(1), [layer])
    x = np.array([[0.3], [2.0]])
    lw = flow.log_weights(x, 64, np.random.default_rng(1))
    expected = gaussian_log_marginal(x - 1.0, [[2.0]], 0.5)
    assert np.max(np.abs(lw - expected[:, None])) < 1e-12


def test_vae_default_networks_and_config(rng):
    layer = VAELayer(3, 2, hidden=[5], rng=rng)
    z, v = layer.inference(rng.normal(size=(4, 3)), rng)
    assert z.shape == (4, 2) and v.shape == (4,)
    assert layer.generative(z.value, rng).shape == (4, 3)
    again = layer_from_config(layer.to_config(), 3, rng)
    assert again.to_config() == layer.to_config()
    with pytest.raises(ConfigError, match="latent_dim"):
        layer_from_config({"kind": "vae"}, 3, rng)


def test_ppca_posterior_example():
    layer = PPCALayer(1, [[1.0]], 1.0)
    mean, cov = layer.posterior(np.zeros((1, 1)))
    assert mean[0, 0] == 0.0 and math.isclose(cov[0, 0], 0.5, abs_tol=1e-15)


def test_ppca_large_sigma_prior_dominates():
    means = [abs(PPCALayer(1, [[1.0]], s).posterior(np.array([[3.0]]))[0][0, 0]) for s in (1, 10, 100, 1000)]
    assert all(a > b for a, b in zip(means, means[1:])) and means[-1] < 1e-5


def test_ppca_rank_deficient():
    with pytest.raises(ConfigError, match="rank"):
        PPCALayer(3, [[1.0, 2.0], [2.0, 4.0], [0.5, 1.0]], 0.5)


def test_ppca_zero_variance_estimator():
    w = [[1.0, 0.2], [0.3, -0.7], [0.5, 0.5]]
    flow = Flow(dist.StandardNormal(2), [PPCALayer(3, w, 0.6)])
    x = np.random.default_rng(2).normal(size=(5, 3))
    lw = flow.log_weights(x, 200, np.random.default_rng(3))
    assert np.max(np.abs(lw - gaussian_log_marginal(x, w, 0.6)[:, None])) < 1e-12


def test_ppca_quadrature_one_dim():
    flow = Flow(dist.StandardNormal(1), [PPCALayer(1, [[1.0]], 1.0)])
    x = np.array([[-1.2], [0.0], [2.5]])
    q = quadrature_log_marginal(flow, x)
    assert np.max(np.abs(q - gaussian_log_marginal(x, [[1.0]], 1.0))) < 1e-6


def test_stochastic_layers_need_rng():
    with pytest.raises(ValueError, match="rng"):
        StochasticPermutation(2).inference(np.zeros((1, 2)))
