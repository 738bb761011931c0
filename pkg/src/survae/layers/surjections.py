"""Surjective layers.

Inference-oriented surjections (abs, max, sort, multi-scale slice,
quantization, relu) are deterministic from x to z and give exact
likelihoods. Generative-oriented ones (the mirrors, including augmentation
and dequantization) are deterministic from z to x; their inference pass
samples from a right inverse and V is a single-sample bound term.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from ..ad import Node, as_node, ops
from ..dist import (
    ConditionalCategorical,
    ConditionalDiagonalNormal,
    ConditionalLogitNormal,
    HalfNormalBelow,
    StandardNormal,
    TruncatedNormalBelow,
    sum_event,
)
from ..dist.distributions import LOG2
from .base import GENERATIVE, INFERENCE, ConfigError, Layer, SupportError, constant_v, normalize_orientation, register


def _need_rng(rng, kind):
    if rng is None:
        raise ValueError(f"{kind}: this pass samples and needs an rng")
    return rng


def _choose(model, allowed, kind):
    if model not in allowed:
        raise ConfigError(f"{kind}: model must be one of {allowed}, got {model!r}")
    return model


class Surjection(Layer):
    orientations = (INFERENCE, GENERATIVE)
    default_orientation = INFERENCE

    def __init__(self, dim, orientation=None):
        super().__init__(dim, normalize_orientation(orientation or self.default_orientation))

    def to_config(self):
        return {"kind": self.kind, "orientation": self.orientation}


# -- abs ------------------------------------------------------------------------------


@register
class AbsSurjection(Surjection):
    """Elementwise magnitude with a sign model over all 2^dim sign patterns.

    Pattern index: bit j is set when coordinate j is negative. The classifier
    is a joint categorical, so it can represent correlated signs.
    """

    kind = "abs"
    catalog = {
        INFERENCE: dict(
            forward="x = s * z, s ~ p(s|z)",
            inverse="z = |x|, s = sign(x) with sign(0) = +1",
            contribution="log p(s|z); uniform: -dim * log 2",
            oracle="two-term sum over signs per coordinate; half-normal base recovers N(x)",
        ),
        GENERATIVE: dict(
            forward="x = |z|",
            inverse="z = s * x, s ~ q(s|x)",
            contribution="-log q(s|x); uniform: +dim * log 2",
            oracle="exact enumeration of sign patterns under a symmetric base",
        ),
    }
    max_classifier_dim = 10

    def __init__(self, dim, orientation=None, sign_model="uniform", hidden=(200, 100), rng=None):
        super().__init__(dim, orientation)
        self.sign_model = _choose(sign_model, ("uniform", "classifier"), self.kind)
        self.hidden = [int(h) for h in hidden]
        if self.sign_model == "classifier":
            if dim > self.max_classifier_dim:
                raise ConfigError(f"abs classifier enumerates 2^dim patterns; dim {dim} is too large")
            self.classifier = ConditionalCategorical(1, 2 ** dim, dim, hidden=self.hidden, rng=rng)

    def _bits(self):
        return 2.0 ** np.arange(self.dim)

    def _pattern_log_prob(self, pattern: np.ndarray, context) -> Node:
        n = len(pattern)
        if self.sign_model == "uniform":
            return constant_v(n, -self.dim * LOG2)
        return self.classifier.log_prob(pattern.reshape(n, 1), context)

    def _sample_pattern(self, rng, context) -> np.ndarray:
        n = len(as_node(context).value)
        if self.sign_model == "uniform":
            neg = rng.random((n, self.dim)) < 0.5
            return (neg * self._bits()).sum(axis=1)
        return self.classifier.sample(rng, context=context).reshape(n)

    def _signs(self, pattern: np.ndarray) -> np.ndarray:
        neg = (pattern.astype(np.int64)[:, None] >> np.arange(self.dim)) & 1
        return 1.0 - 2.0 * neg

    def inference(self, x, rng=None):
        x = as_node(x)
        self._check_dim(x)
        if self.orientation == INFERENCE:
            z = ops.abs(x)
            pattern = ((x.value < 0) * self._bits()).sum(axis=1)
            return z, self._pattern_log_prob(pattern, z)
        if np.any(x.value < 0):
            raise SupportError("abs (generative): data must be non-negative")
        pattern = self._sample_pattern(_need_rng(rng, self.kind), x)
        z = x * Node(self._signs(pattern))
        return z, -self._pattern_log_prob(pattern, x)

    def generative(self, z, rng=None):
        z = as_node(z)
        if self.orientation == GENERATIVE:
            return np.abs(z.value)
        pattern = self._sample_pattern(_need_rng(rng, self.kind), z)
        return self._signs(pattern) * z.value

    def to_config(self):
        cfg = {**super().to_config(), "sign_model": self.sign_model}
        if self.sign_model == "classifier":
            cfg["hidden"] = self.hidden
        return cfg

    @classmethod
    def from_config(cls, cfg, dim, rng):
        return cls(dim, cfg.get("orientation"), cfg.get("sign_model", "uniform"),
                   cfg.get("hidden", [200, 100]), rng=rng)


# -- max ------------------------------------------------------------------------------


@register
class MaxSurjection(Surjection):
    """Max over consecutive groups of ``k`` features.

    The deterministic side has G groups and the other side G * k features.
    The index model picks which slot holds the maximum and the fill model
    places the other k - 1 values strictly below it.
    """

    kind = "max"
    catalog = {
        INFERENCE: dict(
            forward="k ~ p(k|z), x_k = z, x_-k ~ p(x_-k|z, k) below z",
            inverse="z = max x, k = argmax x (lowest index on ties)",
            contribution="log p(k|z) + log p(x_-k|z, k)",
            oracle="order-statistic base with truncated-normal fill recovers prod N(x_i)",
        ),
        GENERATIVE: dict(
            forward="x = max z",
            inverse="k ~ q(k|x), z_k = x, z_-k ~ q(z_-k|x, k) below x",
            contribution="-log q(k|x) - log q(z_-k|x, k)",
            oracle="importance-sampled marginal of the max of iid normals",
        ),
    }
    fills = ("half_normal", "truncated_normal")

    def __init__(self, dim, orientation=None, k=2, index_model="uniform", fill="half_normal",
                 fill_scale=1.0, hidden=(200, 100), rng=None):
        super().__init__(dim, orientation)
        self.k = int(k)
        if self.k < 2:
            raise ConfigError("max: pool size k must be at least 2")
        if self.orientation == INFERENCE and dim % self.k:
            raise ConfigError(f"max: dimension {dim} is not divisible by pool size {self.k}")
        self.groups = dim // self.k if self.orientation == INFERENCE else dim
        self.index_model = _choose(index_model, ("uniform", "classifier"), self.kind)
        self.fill = _choose(fill, self.fills, self.kind)
        self.fill_scale = float(fill_scale)
        self.fill_dist = HalfNormalBelow(fill_scale) if fill == "half_normal" else TruncatedNormalBelow()
        self.hidden = [int(h) for h in hidden]
        if self.index_model == "classifier":
            self.classifier = ConditionalCategorical(self.groups, self.k, self.groups, hidden=self.hidden, rng=rng)

    @property
    def out_dim(self):
        return self.groups if self.orientation == INFERENCE else self.groups * self.k

    def _index_log_prob(self, idx: np.ndarray, context) -> Node:
        if self.index_model == "uniform":
            return constant_v(len(idx), -self.groups * math.log(self.k))
        return self.classifier.log_prob(idx.astype(float), context)

    def _sample_index(self, rng, context) -> np.ndarray:
        n = len(as_node(context).value)
        if self.index_model == "uniform":
            return rng.integers(0, self.k, size=(n, self.groups))
        return self.classifier.sample(rng, context=context).astype(np.intp)

    def _expand(self, top: Node) -> Node:
        n = top.shape[0]
        return ops.broadcast_to(ops.reshape(top, (n, self.groups, 1)), (n, self.groups, self.k))

    def _fill_log_prob(self, pooled: Node, top: Node, idx: np.ndarray) -> Node:
        elems = self.fill_dist.log_prob_elements(pooled, self._expand(top))
        is_top = np.arange(self.k) == idx[..., None]
        return sum_event(ops.where(is_top, Node(np.zeros(elems.shape)), elems))

    def _unpool(self, top: Node, idx: np.ndarray, rng) -> tuple:
        """Place ``top`` at ``idx`` and fill the other slots; returns (values, fill log-prob)."""
        bound = self._expand(top)
        fill = self.fill_dist.rsample_elements(rng, bound)
        is_top = np.arange(self.k) == idx[..., None]
        pooled = ops.where(is_top, bound, fill)
        return pooled, self._fill_log_prob(pooled, top, idx)

    def inference(self, x, rng=None):
        x = as_node(x)
        self._check_dim(x)
        n = x.shape[0]
        if self.orientation == INFERENCE:
            pooled = ops.reshape(x, (n, self.groups, self.k))
            z, idx = ops.max_along_axis(pooled, axis=-1)
            return z, self._index_log_prob(idx, z) + self._fill_log_prob(pooled, z, idx)
        rng = _need_rng(rng, self.kind)
        idx = self._sample_index(rng, x)
        pooled, fill_lp = self._unpool(x, idx, rng)
        return ops.reshape(pooled, (n, self.groups * self.k)), -(self._index_log_prob(idx, x) + fill_lp)

    def generative(self, z, rng=None):
        z = Node(np.asarray(as_node(z).value))
        n = z.shape[0]
        if self.orientation == GENERATIVE:
            return z.value.reshape(n, self.groups, self.k).max(axis=-1)
        rng = _need_rng(rng, self.kind)
        idx = self._sample_index(rng, z)
        pooled, _ = self._unpool(z, idx, rng)
        return pooled.value.reshape(n, self.groups * self.k)

    def to_config(self):
        cfg = {**super().to_config(), "k": self.k, "index_model": self.index_model, "fill": self.fill}
        if self.fill == "half_normal":
            cfg["fill_scale"] = self.fill_scale
        if self.index_model == "classifier":
            cfg["hidden"] = self.hidden
        return cfg

    @classmethod
    def from_config(cls, cfg, dim, rng):
        return cls(dim, cfg.get("orientation"), cfg.get("k", 2), cfg.get("index_model", "uniform"),
                   cfg.get("fill", "half_normal"), cfg.get("fill_scale", 1.0), cfg.get("hidden", [200, 100]),
                   rng=rng)


# -- sort -----------------------------------------------------------------------------


def permutation_rank(perm: np.ndarray) -> np.ndarray:
    """Lexicographic rank of each row of ``perm`` (matches itertools order)."""
    perm = np.asarray(perm)
    d = perm.shape[1]
    rank = np.zeros(len(perm), dtype=np.int64)
    for i in range(d):
        smaller_later = (perm[:, i + 1:] < perm[:, i:i + 1]).sum(axis=1)
        rank += smaller_later * math.factorial(d - 1 - i)
    return rank


@register
class SortSurjection(Surjection):
    """Ascending sort of the feature axis.

    The generative pass scatters z into position I, so x[I] = z and
    argsort(x) = I. The classifier enumerates all D! orders.
    """

    kind = "sort"
    catalog = {
        INFERENCE: dict(
            forward="I ~ p(I|z), x[I] = z",
            inverse="z = sort(x) ascending, I = argsort(x) (stable)",
            contribution="log p(I|z); uniform: -log D!",
            oracle="sorted-normals base recovers prod N(x_i); invariance under shuffling x",
        ),
        GENERATIVE: dict(
            forward="x = sort(z)",
            inverse="I ~ q(I|x), z[I] = x",
            contribution="-log q(I|x); uniform: +log D!",
            oracle="exact sum over the D! preimages under an exchangeable base",
        ),
    }
    max_classifier_dim = 5

    def __init__(self, dim, orientation=None, perm_model="uniform", hidden=(200, 100), rng=None):
        super().__init__(dim, orientation)
        self.perm_model = _choose(perm_model, ("uniform", "classifier"), self.kind)
        self.hidden = [int(h) for h in hidden]
        if self.perm_model == "classifier":
            if dim > self.max_classifier_dim:
                raise ConfigError(f"sort classifier enumerates D! orders; only D <= {self.max_classifier_dim}")
            self.table = np.array(list(itertools.permutations(range(dim))), dtype=np.intp)
            self.classifier = ConditionalCategorical(1, len(self.table), dim, hidden=self.hidden, rng=rng)

    def _perm_log_prob(self, perm: np.ndarray, context) -> Node:
        n = len(perm)
        if self.perm_model == "uniform":
            return constant_v(n, -math.lgamma(self.dim + 1))
        return self.classifier.log_prob(permutation_rank(perm).astype(float).reshape(n, 1), context)

    def _sample_perm(self, rng, context) -> np.ndarray:
        n = len(as_node(context).value)
        if self.perm_model == "uniform":
            return np.argsort(rng.random((n, self.dim)), axis=1)
        rank = self.classifier.sample(rng, context=context).astype(np.intp).reshape(n)
        return self.table[rank]

    def inference(self, x, rng=None):
        x = as_node(x)
        self._check_dim(x)
        if self.orientation == INFERENCE:
            z, perm = ops.sort_along_axis(x, axis=1)
            return z, self._perm_log_prob(perm, z)
        if np.any(np.diff(x.value, axis=1) < 0):
            raise SupportError("sort (generative): data rows must be in ascending order")
        perm = self._sample_perm(_need_rng(rng, self.kind), x)
        return ops.scatter(x, perm, self.dim, axis=1), -self._perm_log_prob(perm, x)

    def generative(self, z, rng=None):
        z = np.asarray(as_node(z).value)
        if self.orientation == GENERATIVE:
            return np.sort(z, axis=1, kind="stable")
        perm = self._sample_perm(_need_rng(rng, self.kind), z)
        x = np.empty_like(z)
        np.put_along_axis(x, perm, z, axis=1)
        return x

    def to_config(self):
        cfg = {**super().to_config(), "perm_model": self.perm_model}
        if self.perm_model == "classifier":
            cfg["hidden"] = self.hidden
        return cfg

    @classmethod
    def from_config(cls, cfg, dim, rng):
        return cls(dim, cfg.get("orientation"), cfg.get("perm_model", "uniform"), cfg.get("hidden", [200, 100]),
                   rng=rng)


# -- slice ----------------------------------------------------------------------------


@register
class SliceSurjection(Surjection):
    """Keeps the first ``split[0]`` features; the other ``split[1]`` are auxiliary.

    Inference orientation drops the auxiliary part (multi-scale); generative
    orientation appends sampled auxiliary features (augmentation).
    """

    kind = "slice"
    default_orientation = GENERATIVE
    catalog = {
        INFERENCE: dict(
            forward="x = [z, x2], x2 ~ p(x2|z)",
            inverse="z = x1",
            contribution="log p(x2|z)",
            oracle="dropping features of a Gaussian base; normal auxiliary closed form",
        ),
        GENERATIVE: dict(
            forward="x = z1",
            inverse="z = [x, z2], z2 ~ q(z2|x)",
            contribution="-log q(z2|x)",
            oracle="Gaussian augmentation bound; iid auxiliary integrates out exactly",
        ),
    }

    def __init__(self, dim, orientation=None, split=None, aux="standard_normal", hidden=(64,), rng=None):
        super().__init__(dim, orientation)
        if split is None or len(split) != 2 or min(split) < 1:
            raise ConfigError(f"slice: split must be two positive sizes, got {split!r}")
        self.split = [int(s) for s in split]
        if self.orientation == INFERENCE and sum(self.split) != dim:
            raise ConfigError(f"slice: split {self.split} does not sum to dimension {dim}")
        if self.orientation == GENERATIVE and self.split[0] != dim:
            raise ConfigError(f"slice: kept size {self.split[0]} differs from data dimension {dim}")
        self.aux = _choose(aux, ("standard_normal", "conditional_normal"), self.kind)
        self.hidden = [int(h) for h in hidden]
        kept, extra = self.split
        if self.aux == "standard_normal":
            self.aux_dist = StandardNormal(extra)
        else:
            self.aux_dist = ConditionalDiagonalNormal(extra, kept, hidden=self.hidden, rng=rng)

    @property
    def out_dim(self):
        return self.split[0] if self.orientation == INFERENCE else sum(self.split)

    def _ctx(self, kept):
        return kept if self.aux == "conditional_normal" else None

    def inference(self, x, rng=None):
        x = as_node(x)
        self._check_dim(x)
        if self.orientation == INFERENCE:
            kept, extra = ops.split(x, self.split, axis=1)
            return kept, self.aux_dist.log_prob(extra, self._ctx(kept))
        extra, lq = self.aux_dist.sample_with_log_prob(_need_rng(rng, self.kind), n=x.shape[0], context=self._ctx(x))
        return ops.concat([x, extra], axis=1), -lq

    def generative(self, z, rng=None):
        z = np.asarray(as_node(z).value)
        if self.orientation == GENERATIVE:
            return z[:, :self.split[0]].copy()
        extra = self.aux_dist.sample(_need_rng(rng, self.kind), n=len(z), context=self._ctx(Node(z)))
        return np.concatenate([z, extra], axis=1)

    def to_config(self):
        cfg = {**super().to_config(), "split": self.split, "aux": self.aux}
        if self.aux == "conditional_normal":
            cfg["hidden"] = self.hidden
        return cfg

    @classmethod
    def from_config(cls, cfg, dim, rng):
        return cls(dim, cfg.get("orientation"), cfg.get("split"), cfg.get("aux", "standard_normal"),
                   cfg.get("hidden", [64]), rng=rng)


# -- rounding -------------------------------------------------------------------------


@register
class RoundingSurjection(Surjection):
    """floor between integers and the reals.

    Generative orientation is dequantization (z = x + u); inference
    orientation is quantization (z = floor(x)) with an in-bin model for the
    fractional part.
    """

    kind = "round"
    default_orientation = GENERATIVE
    catalog = {
        INFERENCE: dict(
            forward="x = z + u, u ~ p(u|z) on [0, 1)",
            inverse="z = floor(x)",
            contribution="log p(x|z); uniform: 0",
            oracle="unit-bin integral of a piecewise-constant density",
        ),
        GENERATIVE: dict(
            forward="x = floor(z)",
            inverse="z = x + u, u ~ q(u|x) on [0, 1)",
            contribution="-log q(u|x); uniform: 0",
            oracle="quadrature over u for a uniform base; tight for bin-constant densities",
        ),
    }

    def __init__(self, dim, orientation=None, deq_model="uniform", hidden=(64,), rng=None):
        super().__init__(dim, orientation)
        self.deq_model = _choose(deq_model, ("uniform", "conditional"), self.kind)
        self.hidden = [int(h) for h in hidden]
        if self.deq_model == "conditional":
            self.noise = ConditionalLogitNormal(dim, dim, hidden=self.hidden, rng=rng)

    @staticmethod
    def _check_integer(v, what):
        if np.any(v != np.floor(v)):
            raise SupportError(f"round: {what} must be integer-valued")

    def _noise_log_prob(self, u, context) -> Node:
        if self.deq_model == "uniform":
            return constant_v(u.shape[0])
        return self.noise.log_prob(u, context)

    def _sample_noise(self, rng, context):
        if self.deq_model == "uniform":
            u = Node(rng.random(context.shape))
            return u, constant_v(context.shape[0])
        return self.noise.sample_with_log_prob(rng, context=context)

    def inference(self, x, rng=None):
        x = as_node(x)
        self._check_dim(x)
        if self.orientation == INFERENCE:
            z = Node(np.floor(x.value))
            return z, self._noise_log_prob(x - z, z)
        self._check_integer(x.value, "dequantization input")
        u, lq = self._sample_noise(_need_rng(rng, self.kind), Node(x.value))
        return x + u, -lq

    def generative(self, z, rng=None):
        z = np.asarray(as_node(z).value)
        if self.orientation == GENERATIVE:
            return np.floor(z)
        self._check_integer(z, "quantized latent")
        u, _ = self._sample_noise(_need_rng(rng, self.kind), Node(z))
        # keep x inside [z, z + 1) even if the noise rounds up to 1
        return np.minimum(z + u.value, np.nextafter(z + 1.0, -np.inf))

    def to_config(self):
        cfg = {**super().to_config(), "deq_model": self.deq_model}
        if self.deq_model == "conditional":
            cfg["hidden"] = self.hidden
        return cfg

    @classmethod
    def from_config(cls, cfg, dim, rng):
        return cls(dim, cfg.get("orientation"), cfg.get("deq_model", "uniform"), cfg.get("hidden", [64]), rng=rng)


# -- relu -----------------------------------------------------------------------------


@register
class ReLUSurjection(Surjection):
    """max(., 0) elementwise with a negative half-normal on the collapsed side."""

    kind = "relu"
    catalog = {
        INFERENCE: dict(
            forward="x = z where z > 0, else x ~ p(x) on (-inf, 0]",
            inverse="z = max(x, 0)",
            contribution="sum over x <= 0 of log p(x)",
            oracle="rectified-normal base with negative half-normal recovers N(x)",
        ),
        GENERATIVE: dict(
            forward="x = max(z, 0)",
            inverse="z = x where x > 0, else z ~ q(z) on (-inf, 0]",
            contribution="-sum over x = 0 of log q(z)",
            oracle="atom mass of a normal base below zero",
        ),
    }

    def __init__(self, dim, orientation=None, scale=1.0):
        super().__init__(dim, orientation)
        if scale <= 0:
            raise ConfigError("relu: half-normal scale must be positive")
        self.scale = float(scale)

    def _neg_log_prob(self, v: Node, mask: np.ndarray) -> Node:
        """Negative half-normal log-density summed over ``mask`` coordinates."""
        safe = ops.where(mask, v, Node(np.zeros(v.shape)))
        lp = ops.normal_log_prob(safe * (1.0 / self.scale)) + (LOG2 - math.log(self.scale))
        return sum_event(ops.where(mask, lp, Node(np.zeros(v.shape))))

    def _draw(self, rng, shape):
        return -self.scale * np.abs(rng.standard_normal(shape))

    def inference(self, x, rng=None):
        x = as_node(x)
        self._check_dim(x)
        if self.orientation == INFERENCE:
            return ops.relu(x), self._neg_log_prob(x, x.value <= 0)
        if np.any(x.value < 0):
            raise SupportError("relu (generative): data must be non-negative")
        zero = x.value == 0
        fill = Node(self._draw(_need_rng(rng, self.kind), x.shape))
        z = ops.where(zero, fill, x)
        return z, -self._neg_log_prob(z, zero)

    def generative(self, z, rng=None):
        z = np.asarray(as_node(z).value)
        if self.orientation == GENERATIVE:
            return np.maximum(z, 0.0)
        if np.any(z < 0):
            raise SupportError("relu (inference): latent must be non-negative")
        fill = self._draw(_need_rng(rng, self.kind), z.shape)
        return np.where(z > 0, z, fill)

    def to_config(self):
        return {**super().to_config(), "scale": self.scale}

    @classmethod
    def from_config(cls, cfg, dim, rng):
        return cls(dim, cfg.get("orientation"), cfg.get("scale", 1.0))


__all__ = [
    "AbsSurjection", "MaxSurjection", "ReLUSurjection", "RoundingSurjection", "SliceSurjection",
    "SortSurjection", "Surjection", "permutation_rank",
]
