"""Brute-force references for likelihood contributions.

The quadrature oracle integrates or sums the joint density of data and
latent variables built from raw density factors (the base, classifiers,
fills, auxiliary and decoder distributions). It never calls a layer's
``inference`` method, so it checks the V formulas rather than restating
them. Supported flows have a single non-bijective layer over the base.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .ad import Node
from .layers import GENERATIVE, INFERENCE, ConfigError, permutation_rank


class OracleError(ValueError):
    pass


@dataclass
class Grid:
    """Trapezoid grid: ``n`` nodes for 1-D integrals, ``n2`` per axis for 2-D ones."""

    lo: float = -10.0
    hi: float = 10.0
    n: int = 4001
    n2: int = 401


def _trapezoid(lo: float, hi: float, n: int):
    t = np.linspace(lo, hi, n)
    w = np.full(n, (hi - lo) / (n - 1))
    w[[0, -1]] *= 0.5
    return t, w


def _log_integrate(log_f, lows, highs, grid: Grid) -> float:
    """log of the integral of exp(log_f) over a box of dimension 1 or 2."""
    m = len(lows)
    if m == 0:
        return float(log_f(np.zeros((1, 0)))[0])
    if m > 2:
        raise OracleError(f"quadrature supports at most 2 latent dimensions, got {m}")
    if any(h <= l for l, h in zip(lows, highs)):
        return -math.inf
    n = grid.n if m == 1 else grid.n2
    axes = [_trapezoid(l, h, n) for l, h in zip(lows, highs)]
    pts = np.stack(np.meshgrid(*[a[0] for a in axes], indexing="ij"), axis=-1).reshape(-1, m)
    logw = np.log(np.prod(np.stack(np.meshgrid(*[a[1] for a in axes], indexing="ij"), axis=-1).reshape(-1, m), axis=1))
    return float(special.logsumexp(log_f(pts) + logw))


def _base_lp(flow, z):
    return np.asarray(flow.base.log_prob(Node(np.asarray(z, dtype=float))).value)


def _lse_terms(terms):
    return special.logsumexp(np.stack(terms, axis=0), axis=0)


def _abs(flow, layer, x, grid):
    n, d = x.shape
    terms = []
    for pattern in range(2 ** d):
        s = 1.0 - 2.0 * ((pattern >> np.arange(d)) & 1)
        if layer.orientation == INFERENCE:
            z = s * x
            # x = s * z with z >= 0; a zero coordinate carries the + sign
            ok = np.all((z > 0) | ((x == 0) & (s > 0)), axis=1)
            lp = _base_lp(flow, np.abs(x))
            if layer.sign_model == "uniform":
                lp = lp - d * math.log(2.0)
            else:
                pat = np.full((n, 1), float(pattern))
                lp = lp + layer.classifier.log_prob(pat, Node(np.abs(x))).value
        else:
            if np.any(x < 0):
                raise OracleError("abs (generative) marginal needs non-negative x")
            z = s * x
            ok = np.all((x > 0) | (s > 0), axis=1)
            lp = _base_lp(flow, z)
        terms.append(np.where(ok, lp, -np.inf))
    return _lse_terms(terms)


def _sort(flow, layer, x, grid):
    n, d = x.shape
    terms = []
    for perm in itertools.permutations(range(d)):
        perm = np.broadcast_to(np.array(perm), (n, d))
        if layer.orientation == INFERENCE:
            z = np.take_along_axis(x, perm, axis=1)
            ok = np.all(np.diff(z, axis=1) > 0, axis=1)
            lp = _base_lp(flow, z)
            if layer.perm_model == "uniform":
                lp = lp - math.lgamma(d + 1)
            else:
                rank = permutation_rank(perm).astype(float).reshape(n, 1)
                lp = lp + layer.classifier.log_prob(rank, Node(z)).value
        else:
            if np.any(np.diff(x, axis=1) < 0):
                raise OracleError("sort (generative) marginal needs ascending rows")
            z = np.empty_like(x)
            np.put_along_axis(z, perm, x, axis=1)
            ok = np.ones(n, dtype=bool)
            lp = _base_lp(flow, z)
        terms.append(np.where(ok, lp, -np.inf))
    return _lse_terms(terms)


def _max(flow, layer, x, grid):
    n = len(x)
    g, k = layer.groups, layer.k
    if layer.orientation == INFERENCE:
        pooled = x.reshape(n, g, k)
        top = pooled.max(axis=-1)
        terms = []
        for combo in itertools.product(range(k), repeat=g):
            idx = np.broadcast_to(np.array(combo), (n, g))
            chosen = np.take_along_axis(pooled, idx[..., None], axis=-1)[..., 0]
            others = np.arange(k) != idx[..., None]
            below = np.where(others, pooled < chosen[..., None], True)
            ok = np.all(below, axis=(1, 2))
            lp = _base_lp(flow, chosen)
            if layer.index_model == "uniform":
                lp = lp - g * math.log(k)
            else:
                lp = lp + layer.classifier.log_prob(idx.astype(float), Node(chosen)).value
            bound = np.broadcast_to(chosen[..., None], pooled.shape)
            fill = layer.fill_dist.log_prob_elements(Node(pooled), Node(bound)).value
            lp = lp + np.where(others, fill, 0.0).sum(axis=(1, 2))
            terms.append(np.where(ok, lp, -np.inf))
        return np.where(np.isfinite(top).all(axis=1), _lse_terms(terms), -np.inf)
    # x = max of each group of z: sum over argmax slots, integrate the rest below x
    out = np.empty(n)
    free = g * (k - 1)
    if free > 2:
        raise OracleError("max (generative) quadrature supports at most 2 free coordinates; use mc_log_marginal")
    for r in range(n):
        terms = []
        for combo in itertools.product(range(k), repeat=g):
            slots = [(gi, j) for gi in range(g) for j in range(k) if j != combo[gi]]

            def log_f(pts, combo=combo, slots=slots, r=r):
                z = np.repeat(np.repeat(x[r][:, None], k, axis=1)[None], len(pts), axis=0)
                for c, (gi, j) in enumerate(slots):
                    z[:, gi, j] = pts[:, c]
                return _base_lp(flow, z.reshape(len(pts), g * k))

            highs = [x[r, gi] for gi, _ in slots]
            terms.append(_log_integrate(log_f, [grid.lo] * len(slots), highs, grid))
        out[r] = special.logsumexp(terms)
    return out


def _slice(flow, layer, x, grid):
    kept, extra = layer.split
    if layer.orientation == INFERENCE:
        x1, x2 = x[:, :kept], x[:, kept:]
        ctx = Node(x1) if layer.aux == "conditional_normal" else None
        return _base_lp(flow, x1) + layer.aux_dist.log_prob(Node(x2), ctx).value
    out = np.empty(len(x))
    for r in range(len(x)):
        def log_f(pts, r=r):
            return _base_lp(flow, np.concatenate([np.repeat(x[r:r + 1], len(pts), axis=0), pts], axis=1))
        out[r] = _log_integrate(log_f, [grid.lo] * extra, [grid.hi] * extra, grid)
    return out


def _round(flow, layer, x, grid):
    n, d = x.shape
    if layer.orientation == INFERENCE:
        terms = []
        for shift in itertools.product((-1.0, 0.0, 1.0), repeat=d):
            z = np.floor(x) + np.array(shift)
            u = x - z
            ok = np.all((u >= 0) & (u < 1), axis=1)
            lp = _base_lp(flow, z)
            if layer.deq_model == "conditional":
                safe = np.where(ok[:, None], u, 0.5)
                lp = lp + layer.noise.log_prob(Node(safe), Node(z)).value
            terms.append(np.where(ok, lp, -np.inf))
        return _lse_terms(terms)
    if np.any(x != np.floor(x)):
        raise OracleError("dequantization marginal needs integer x")
    out = np.empty(n)
    for r in range(n):
        def log_f(pts, r=r):
            return _base_lp(flow, x[r] + pts)
        out[r] = _log_integrate(log_f, [0.0] * d, [1.0] * d, grid)
    return out


def _relu(flow, layer, x, grid):
    n, d = x.shape
    scale = layer.scale
    if layer.orientation == INFERENCE:
        neg = x <= 0
        half = math.log(2.0) - math.log(scale) - 0.5 * (x / scale) ** 2 - 0.5 * math.log(2 * math.pi)
        return _base_lp(flow, np.maximum(x, 0.0)) + np.where(neg, half, 0.0).sum(axis=1)
    if np.any(x < 0):
        raise OracleError("relu (generative) marginal needs non-negative x")
    out = np.empty(n)
    for r in range(n):
        zero = np.flatnonzero(x[r] == 0)

        def log_f(pts, r=r, zero=zero):
            z = np.repeat(x[r:r + 1], len(pts), axis=0)
            z[:, zero] = pts
            return _base_lp(flow, z)
        out[r] = _log_integrate(log_f, [grid.lo] * len(zero), [0.0] * len(zero), grid)
    return out


def _stochastic_permutation(flow, layer, x, grid):
    d = x.shape[1]
    terms = [_base_lp(flow, x[:, list(p)]) for p in itertools.permutations(range(d))]
    return _lse_terms(terms) - math.lgamma(d + 1)


def _vae(flow, layer, x, grid):
    m = layer.latent_dim
    out = np.empty(len(x))
    for r in range(len(x)):
        def log_f(pts, r=r):
            xr = Node(np.repeat(x[r:r + 1], len(pts), axis=0))
            return _base_lp(flow, pts) + layer.decoder.log_prob(xr, Node(pts)).value
        out[r] = _log_integrate(log_f, [grid.lo] * m, [grid.hi] * m, grid)
    return out


def _ppca(flow, layer, x, grid):
    m = layer.latent_dim
    w, sigma = layer.weight, layer.sigma
    out = np.empty(len(x))
    for r in range(len(x)):
        def log_f(pts, r=r):
            resid = x[r][None] - pts @ w.T
            lik = (-0.5 * (resid / sigma) ** 2 - math.log(sigma) - 0.5 * math.log(2 * math.pi)).sum(axis=1)
            return _base_lp(flow, pts) + lik
        out[r] = _log_integrate(log_f, [grid.lo] * m, [grid.hi] * m, grid)
    return out


_HANDLERS = {
    "abs": _abs, "sort": _sort, "max": _max, "slice": _slice, "round": _round, "relu": _relu,
    "stochastic_permutation": _stochastic_permutation, "vae": _vae, "ppca": _ppca,
}


def quadrature_log_marginal(flow, x, grid: Grid | None = None):
    """log p(x) by exact enumeration and trapezoid quadrature over latents.

    Returns a float for a single example and an array for a batch.
    """
    grid = grid or Grid()
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if len(flow.layers) == 0:
        out = _base_lp(flow, x)
    elif len(flow.layers) == 1:
        layer = flow.layers[0]
        try:
            handler = _HANDLERS[layer.kind]
        except KeyError:
            raise OracleError(f"no quadrature rule for layer kind {layer.kind!r}") from None
        out = handler(flow, layer, x, grid)
    else:
        raise OracleError("quadrature oracle supports flows with at most one layer")
    return float(out[0]) if single else out


def mc_log_marginal(flow, x, k: int, rng, chunk: int = 4096) -> tuple:
    """Importance-sampling estimate of log p(x) with the flow's own proposal, and its standard error."""
    if k < 2:
        raise ValueError("k must be at least 2")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if flow.exact:
        return flow.log_likelihood(x).value, np.zeros(len(x))
    lw = flow.log_weights(x, k, rng, chunk=chunk)
    top = lw.max(axis=1, keepdims=True)
    w = np.exp(lw - top)
    mean = w.mean(axis=1)
    est = np.log(mean) + top[:, 0]
    se = w.std(axis=1, ddof=1) / (math.sqrt(k) * mean)
    return est, se


@dataclass
class DeltaLimitPoint:
    sigma: float
    elbo: float
    cov_value: float
    gap: float


def gaussian_elbo(x: float, a: float, b: float, sigma: float, q_mean: float, q_var: float) -> float:
    """Exact ELBO of z ~ N(0, 1), x|z ~ N(a z + b, sigma^2) under q = N(q_mean, q_var)."""
    rec = (-0.5 * math.log(2 * math.pi * sigma ** 2)
           - ((x - b - a * q_mean) ** 2 + a * a * q_var) / (2 * sigma ** 2))
    prior = -0.5 * math.log(2 * math.pi) - 0.5 * (q_mean ** 2 + q_var)
    entropy = 0.5 * math.log(2 * math.pi * math.e * q_var)
    return rec + prior + entropy


def exact_posterior(x: float, a: float, b: float, sigma: float) -> tuple:
    prec = a * a + sigma * sigma
    return a * (x - b) / prec, sigma * sigma / prec


def delta_limit_sequence(a: float, b: float, sigmas, x: float = 0.0) -> list:
    """ELBO of the noisy affine model vs the noiseless change of variables, per sigma."""
    if a == 0:
        raise ConfigError("delta limit needs a nonzero slope")
    u = (x - b) / a
    cov_value = -0.5 * u * u - 0.5 * math.log(2 * math.pi) - math.log(abs(a))
    out = []
    for sigma in sigmas:
        m, v = exact_posterior(x, a, b, sigma)
        elbo = gaussian_elbo(x, a, b, sigma, m, v)
        out.append(DeltaLimitPoint(float(sigma), elbo, cov_value, abs(elbo - cov_value)))
    return out


def gaussian_log_marginal(x, weight, sigma: float) -> np.ndarray:
    """log N(x; 0, W W^T + sigma^2 I) per row."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    w = np.atleast_2d(np.asarray(weight, dtype=float))
    cov = w @ w.T + sigma ** 2 * np.eye(w.shape[0])
    _, logdet = np.linalg.slogdet(cov)
    quad = np.einsum("ij,ij->i", x, np.linalg.solve(cov, x.T).T)
    return -0.5 * (quad + logdet + w.shape[0] * math.log(2 * math.pi))


def gaussian_kl(m1, v1, m2, v2) -> float:
    """KL(N(m1, v1) || N(m2, v2)) for scalars."""
    return 0.5 * (math.log(v2 / v1) + (v1 + (m1 - m2) ** 2) / v2 - 1.0)
