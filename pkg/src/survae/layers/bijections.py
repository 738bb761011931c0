"""Bijective layers: V is the log absolute Jacobian determinant of x -> z."""

from __future__ import annotations

import numpy as np

from ..ad import Node, Parameter, as_node, ops
from ..dist import MLP, sum_event
from .base import Bijection, ConfigError, SupportError, constant_v, register

CLAMP = 1e-6


@register
class AffineCoupling(Bijection):
    """RealNVP coupling: the second half is scaled and shifted by a net of the first half.

    Inference: z2 = (x2 - t) * exp(-s), V = -sum(s), with s = s_max * tanh(raw).
    """

    kind = "affine_coupling"
    catalog = {"bijective": dict(
        forward="x1 = z1, x2 = z2 * exp(s(z1)) + t(z1)",
        inverse="z1 = x1, z2 = (x2 - t(x1)) * exp(-s(x1))",
        contribution="-sum s(x1)",
        oracle="closed-form affine law with constant s, t; round trip; finite differences",
    )}

    def __init__(self, dim: int, hidden=(200, 100), s_max: float = 2.0, rng=None):
        if dim % 2:
            raise ConfigError(f"affine_coupling needs an even dimension, got {dim}")
        super().__init__(dim)
        self.half = dim // 2
        self.s_max = float(s_max)
        self.net = MLP(self.half, hidden, 2 * self.half, rng=rng, zero_last=True)

    def _shift_scale(self, x1):
        raw_s, t = ops.split(self.net(x1), [self.half, self.half], axis=1)
        return self.s_max * ops.tanh(raw_s), t

    def inference(self, x, rng=None):
        x = as_node(x)
        self._check_dim(x)
        x1, x2 = ops.split(x, [self.half, self.half], axis=1)
        s, t = self._shift_scale(x1)
        z2 = (x2 - t) * ops.exp(-s)
        return ops.concat([x1, z2], axis=1), -sum_event(s)

    def generative_with_logdet(self, z):
        z1, z2 = ops.split(as_node(z), [self.half, self.half], axis=1)
        s, t = self._shift_scale(z1)
        x2 = z2 * ops.exp(s) + t
        return ops.concat([z1, x2], axis=1), sum_event(s)

    def to_config(self):
        return {**super().to_config(), "hidden": self.net.hidden, "s_max": self.s_max}

    @classmethod
    def from_config(cls, cfg, dim, rng):
        return cls(dim, hidden=cfg.get("hidden", [200, 100]), s_max=cfg.get("s_max", 2.0), rng=rng)


@register
class ActNorm(Bijection):
    """Per-dimension affine z = (x - shift) * exp(-log_scale) with data-dependent init."""

    kind = "actnorm"
    catalog = {"bijective": dict(
        forward="x = z * exp(log_scale) + shift",
        inverse="z = (x - shift) * exp(-log_scale)",
        contribution="-sum log_scale",
        oracle="identity at zero parameters; first-batch standardization",
    )}

    def __init__(self, dim: int, initialized: bool = False):
        super().__init__(dim)
        self.shift = Parameter(np.zeros(dim))
        self.log_scale = Parameter(np.zeros(dim))
        self.initialized = bool(initialized)

    def initialize(self, x) -> None:
        x = np.asarray(as_node(x).value)
        self.shift.value[...] = x.mean(axis=0)
        self.log_scale.value[...] = np.log(x.std(axis=0))
        self.initialized = True

    def _require_init(self):
        if not self.initialized:
            raise RuntimeError("actnorm used before initialization; call initialize(x) on a data batch")

    def inference(self, x, rng=None):
        self._require_init()
        x = as_node(x)
        self._check_dim(x)
        shape = x.shape
        z = (x - ops.broadcast_to(self.shift, shape)) * ops.exp(-ops.broadcast_to(self.log_scale, shape))
        return z, ops.broadcast_to(-ops.sum(self.log_scale), (shape[0],))

    def generative_with_logdet(self, z):
        self._require_init()
        z = as_node(z)
        shape = z.shape
        x = z * ops.exp(ops.broadcast_to(self.log_scale, shape)) + ops.broadcast_to(self.shift, shape)
        return x, ops.broadcast_to(ops.sum(self.log_scale), (shape[0],))

    def to_config(self):
        return {**super().to_config(), "initialized": self.initialized}

    @classmethod
    def from_config(cls, cfg, dim, rng):
        return cls(dim, initialized=cfg.get("initialized", False))


class ElementwiseBijection(Bijection):
    """Same scalar bijection applied to every coordinate."""

    def _check_domain(self, x: Node) -> None:
        pass

    def _inverse(self, x: Node):
        """Return (z, elementwise log|dz/dx|)."""
        raise NotImplementedError

    def _forward(self, z: Node):
        """Return (x, elementwise log|dx/dz|)."""
        raise NotImplementedError

    def inference(self, x, rng=None):
        x = as_node(x)
        self._check_dim(x)
        self._check_domain(x)
        z, ld = self._inverse(x)
        return z, sum_event(ld)

    def generative_with_logdet(self, z):
        x, ld = self._forward(as_node(z))
        return x, sum_event(ld)

    @classmethod
    def from_config(cls, cfg, dim, rng):
        return cls(dim)


@register
class ElementwiseAffine(ElementwiseBijection):
    kind = "affine"
    catalog = {"bijective": dict(
        forward="x = a * z + b",
        inverse="z = (x - b) / a",
        contribution="-dim * log|a|",
        oracle="hand-derived Gaussian change of variables",
    )}

    def __init__(self, dim: int, a: float = 1.0, b: float = 0.0):
        if a == 0:
            raise ConfigError("affine bijection needs a != 0")
        super().__init__(dim)
        self.a, self.b = float(a), float(b)

    def _inverse(self, x):
        return (x - self.b) * (1.0 / self.a), Node(np.full(x.shape, -np.log(abs(self.a))))

    def _forward(self, z):
        return z * self.a + self.b, Node(np.full(z.shape, np.log(abs(self.a))))

    def to_config(self):
        return {**super().to_config(), "a": self.a, "b": self.b}

    @classmethod
    def from_config(cls, cfg, dim, rng):
        return cls(dim, a=cfg.get("a", 1.0), b=cfg.get("b", 0.0))


def _log_dsigmoid(y: Node) -> Node:
    return ops.neg(ops.softplus(ops.neg(y))) - ops.softplus(y)


def _check_unit(kind, x: Node):
    v = x.value
    if np.any(v < 0) or np.any(v > 1):
        raise SupportError(f"{kind}: input outside [0, 1]")


@register
class Logit(ElementwiseBijection):
    """Inference applies logit to (0, 1) data; inputs are clamped to [1e-6, 1 - 1e-6]."""

    kind = "logit"
    catalog = {"bijective": dict(
        forward="x = sigmoid(z)",
        inverse="z = logit(x)",
        contribution="sum -log x - log(1 - x)",
        oracle="logistic density closed form",
    )}

    def _check_domain(self, x):
        _check_unit(self.kind, x)

    def _inverse(self, x):
        xc = ops.clip(x, CLAMP, 1.0 - CLAMP)
        return ops.log(xc) - ops.log(1.0 - xc), ops.neg(ops.log(xc) + ops.log(1.0 - xc))

    def _forward(self, z):
        return ops.sigmoid(z), _log_dsigmoid(z)


@register
class Sigmoid(ElementwiseBijection):
    kind = "sigmoid"
    catalog = {"bijective": dict(
        forward="x = logit(z)",
        inverse="z = sigmoid(x)",
        contribution="sum log sigmoid(x) + log(1 - sigmoid(x))",
        oracle="logistic density closed form",
    )}

    def _inverse(self, x):
        return ops.sigmoid(x), _log_dsigmoid(x)

    def _forward(self, z):
        _check_unit(self.kind, z)
        zc = ops.clip(z, CLAMP, 1.0 - CLAMP)
        return ops.log(zc) - ops.log(1.0 - zc), ops.neg(ops.log(zc) + ops.log(1.0 - zc))


@register
class Softplus(ElementwiseBijection):
    kind = "softplus"
    catalog = {"bijective": dict(
        forward="x = log(exp(z) - 1)",
        inverse="z = softplus(x)",
        contribution="sum log sigmoid(x)",
        oracle="closed-form transformed Gaussian",
    )}

    def _inverse(self, x):
        return ops.softplus(x), ops.neg(ops.softplus(ops.neg(x)))

    def _forward(self, z):
        if np.any(z.value < 0):
            raise SupportError("softplus: generative input must be positive")
        zc = ops.clip(z, CLAMP, np.inf)
        x = ops.log_expm1(zc)
        return x, zc - x


@register
class InverseSoftplus(ElementwiseBijection):
    """Inference maps (0, inf) to the real line; inputs below 1e-6 are clamped."""

    kind = "inverse_softplus"
    catalog = {"bijective": dict(
        forward="x = softplus(z)",
        inverse="z = log(exp(x) - 1)",
        contribution="sum -log(1 - exp(-x))",
        oracle="closed-form transformed Gaussian",
    )}

    def _check_domain(self, x):
        if np.any(x.value < 0):
            raise SupportError("inverse_softplus: input must be non-negative")

    def _inverse(self, x):
        xc = ops.clip(x, CLAMP, np.inf)
        z = ops.log_expm1(xc)
        return z, xc - z

    def _forward(self, z):
        return ops.softplus(z), ops.neg(ops.softplus(ops.neg(z)))


@register
class Permutation(Bijection):
    """Fixed reordering of the feature axis; inference applies perm, generative its inverse."""

    kind = "permutation"
    catalog = {"bijective": dict(
        forward="x = z[perm^-1]",
        inverse="z = x[perm]",
        contribution="0",
        oracle="identity of log_prob under insertion",
    )}

    def __init__(self, dim: int, perm):
        super().__init__(dim)
        perm = np.asarray(perm, dtype=np.intp)
        if sorted(perm.tolist()) != list(range(dim)):
            raise ConfigError(f"permutation {perm.tolist()} is not a permutation of range({dim})")
        self.perm = perm
        self.inverse_perm = np.argsort(perm)

    def inference(self, x, rng=None):
        x = as_node(x)
        self._check_dim(x)
        idx = np.broadcast_to(self.perm, x.shape)
        return ops.gather(x, idx, axis=1), constant_v(x.shape[0])

    def generative_with_logdet(self, z):
        z = as_node(z)
        idx = np.broadcast_to(self.inverse_perm, z.shape)
        return ops.gather(z, idx, axis=1), constant_v(z.shape[0])

    def to_config(self):
        return {**super().to_config(), "perm": self.perm.tolist()}

    @classmethod
    def from_config(cls, cfg, dim, rng):
        perm = cfg.get("perm")
        if perm is None or perm == "reverse":
            perm = list(range(dim))[::-1]
        elif perm == "random":
            perm = np.random.default_rng(cfg.get("seed", 0)).permutation(dim).tolist()
        return cls(dim, perm)
