"""Stochastic layers: both directions sample, V = log p(x|z) - log q(z|x)."""

from __future__ import annotations

import math

import numpy as np

from ..ad import Node, as_node, ops
from ..dist import ConditionalAffineNormal, ConditionalDiagonalNormal, from_config as dist_from_config, sum_event
from .base import STOCHASTIC, ConfigError, Layer, constant_v, register
from .surjections import _need_rng


@register
class StochasticPermutation(Layer):
    """Shuffles the feature axis independently per example; V is identically 0."""

    kind = "stochastic_permutation"
    orientations = (STOCHASTIC,)
    catalog = {STOCHASTIC: dict(
        forward="x = z[pi], pi uniform",
        inverse="z = x[pi], pi uniform",
        contribution="0",
        oracle="log_prob unchanged by insertion before an exchangeable base",
    )}

    def __init__(self, dim):
        super().__init__(dim, STOCHASTIC)

    def _shuffle(self, v: Node, rng) -> Node:
        perm = np.argsort(_need_rng(rng, self.kind).random(v.shape), axis=1)
        return ops.gather(v, perm, axis=1)

    def inference(self, x, rng=None):
        x = as_node(x)
        self._check_dim(x)
        return self._shuffle(x, rng), constant_v(x.shape[0])

    def generative(self, z, rng=None):
        return self._shuffle(Node(np.asarray(as_node(z).value)), rng).value

    @classmethod
    def from_config(cls, cfg, dim, rng):
        return cls(dim)


@register
class VAELayer(Layer):
    """Encoder q(z|x) and decoder p(x|z); the latent size may differ from the data size."""

    kind = "vae"
    orientations = (STOCHASTIC,)
    catalog = {STOCHASTIC: dict(
        forward="x ~ p(x|z)",
        inverse="z ~ q(z|x)",
        contribution="log p(x|z) - log q(z|x)",
        oracle="linear-Gaussian marginal; gap equals KL(q || posterior)",
    )}

    def __init__(self, dim, latent_dim, encoder=None, decoder=None, hidden=(64,), rng=None):
        super().__init__(dim, STOCHASTIC)
        self.latent_dim = int(latent_dim)
        self.encoder = encoder or ConditionalDiagonalNormal(latent_dim, dim, hidden=hidden, rng=rng)
        self.decoder = decoder or ConditionalDiagonalNormal(dim, latent_dim, hidden=hidden, rng=rng)
        if self.encoder.dim != self.latent_dim or self.decoder.dim != self.dim:
            raise ConfigError("vae: encoder/decoder sizes do not match dim and latent_dim")

    @property
    def out_dim(self):
        return self.latent_dim

    def inference(self, x, rng=None):
        x = as_node(x)
        self._check_dim(x)
        z, lq = self.encoder.sample_with_log_prob(_need_rng(rng, self.kind), context=x)
        return z, self.decoder.log_prob(x, z) - lq

    def generative(self, z, rng=None):
        return self.decoder.sample(_need_rng(rng, self.kind), context=Node(np.asarray(as_node(z).value)))

    def to_config(self):
        return {"kind": self.kind, "latent_dim": self.latent_dim,
                "encoder": self.encoder.to_config(), "decoder": self.decoder.to_config()}

    @classmethod
    def from_config(cls, cfg, dim, rng):
        latent = cfg.get("latent_dim")
        if latent is None:
            raise ConfigError("vae: latent_dim is required")
        enc = cfg.get("encoder")
        dec = cfg.get("decoder")
        enc = dist_from_config(enc, rng) if enc else None
        dec = dist_from_config(dec, rng) if dec else None
        return cls(dim, latent, enc, dec, hidden=cfg.get("hidden", [64]), rng=rng)


def linear_gaussian_vae(a: float, b: float, sigma: float, exact_posterior: bool = True,
                        enc_weight=None, enc_bias=None, enc_log_std=None) -> VAELayer:
    """1-D layer with decoder N(a z + b, sigma^2) and an affine Gaussian encoder.

    With ``exact_posterior`` the encoder is the true posterior under a
    standard normal prior; otherwise the given encoder parameters are used.
    """
    if a == 0:
        raise ConfigError("linear_gaussian_vae: slope must be nonzero")
    decoder = ConditionalAffineNormal(1, 1, [[a]], [b], [math.log(sigma)])
    if exact_posterior:
        prec = a * a + sigma * sigma
        enc_weight, enc_bias = a / prec, -a * b / prec
        enc_log_std = 0.5 * math.log(sigma * sigma / prec)
    encoder = ConditionalAffineNormal(1, 1, [[enc_weight]], [enc_bias], [enc_log_std])
    return VAELayer(1, 1, encoder, decoder)


@register
class PPCALayer(Layer):
    """Linear-Gaussian decoder x = z W^T + noise with its exact Gaussian posterior as encoder.

    With a standard normal base every single-sample estimate equals the log
    marginal, so the bound gap is zero. ``W`` and ``sigma`` are fixed.
    """

    kind = "ppca"
    orientations = (STOCHASTIC,)
    catalog = {STOCHASTIC: dict(
        forward="x = z W^T + sigma * e",
        inverse="z ~ N(x W M^-1, sigma^2 M^-1), M = W^T W + sigma^2 I",
        contribution="log N(x; z W^T, sigma^2 I) - log q(z|x)",
        oracle="closed-form log N(x; 0, W W^T + sigma^2 I); zero-variance estimator",
    )}

    def __init__(self, dim, weight, sigma):
        super().__init__(dim, STOCHASTIC)
        w = np.atleast_2d(np.asarray(weight, dtype=float))
        if w.shape[0] != dim:
            raise ConfigError(f"ppca: weight must have {dim} rows, got shape {w.shape}")
        if np.linalg.matrix_rank(w) < w.shape[1]:
            raise ConfigError("ppca: weight matrix must have full column rank")
        if sigma <= 0:
            raise ConfigError("ppca: sigma must be positive")
        self.weight = w
        self.sigma = float(sigma)
        m = w.T @ w + self.sigma ** 2 * np.eye(w.shape[1])
        self.m_inv = np.linalg.inv(m)
        self.post_map = w @ self.m_inv
        self.post_chol = np.linalg.cholesky(self.sigma ** 2 * self.m_inv)

    @property
    def latent_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.latent_dim

    def posterior(self, x):
        """Mean (batch, m) and covariance (m, m) of p(z|x)."""
        x = np.atleast_2d(np.asarray(as_node(x).value))
        return x @ self.post_map, self.sigma ** 2 * self.m_inv

    def inference(self, x, rng=None):
        x = as_node(x)
        self._check_dim(x)
        eps = _need_rng(rng, self.kind).standard_normal((x.shape[0], self.latent_dim))
        z = ops.matmul(x, Node(self.post_map)) + Node(eps @ self.post_chol.T)
        log_q = (sum_event(ops.normal_log_prob(Node(eps)))
                 - float(np.log(np.diag(self.post_chol)).sum()))
        mean = ops.matmul(z, Node(self.weight.T))
        log_p = sum_event(ops.normal_log_prob(x, mean, math.log(self.sigma)))
        return z, log_p - log_q

    def generative(self, z, rng=None):
        z = np.asarray(as_node(z).value)
        noise = _need_rng(rng, self.kind).standard_normal((len(z), self.dim))
        return z @ self.weight.T + self.sigma * noise

    def to_config(self):
        return {"kind": self.kind, "weight": self.weight.tolist(), "sigma": self.sigma}

    @classmethod
    def from_config(cls, cfg, dim, rng):
        if "weight" not in cfg:
            raise ConfigError("ppca: weight is required")
        return cls(dim, cfg["weight"], cfg.get("sigma", 1.0))
