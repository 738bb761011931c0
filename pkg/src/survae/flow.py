"""Flows: an ordered layer list (data side first) over a base distribution.

Architecture descriptor schema (a JSON-compatible dict)::

    {"data_dim": 2,
     "seed": 0,                       # network init seed, optional
     "base": {"family": "standard_normal", "dim": 2},
     "layers": [{"kind": "affine_coupling", "hidden": [200, 100]},
                {"kind": "permutation", "perm": "reverse"}, ...]}

``base.dim`` may be omitted; it is inferred from the end of the layer
chain. Each layer entry holds ``kind``, an optional ``orientation`` and the
keyword settings of that layer kind (see docs/LAYERS.md).
"""

from __future__ import annotations

import copy
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .ad import Module, Node, as_node
from .dist import Distribution
from .dist import from_config as dist_from_config
from .layers import ActNorm, ConfigError, Layer, layer_from_config

EXACT = "exact-log-prob"
ELBO = "elbo"
IWBO = "iwbo"

IWBO_CHUNK = 16


@dataclass
class EvalResult:
    value: np.ndarray
    kind: str
    k: Optional[int] = None


def thread_count() -> int:
    raw = os.environ.get("SURVAE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"SURVAE_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


class Flow(Module):
    """Runs the layers front to back for likelihoods and back to front for samples."""

    def __init__(self, base: Distribution, layers=(), data_dim: Optional[int] = None, seed: int = 0):
        self.base = base
        self.layers = list(layers)
        self.data_dim = int(data_dim if data_dim is not None else (self.layers[0].dim if self.layers else base.dim))
        self.seed = int(seed)
        self._validate()

    def _validate(self):
        dim = self.data_dim
        for i, layer in enumerate(self.layers):
            if layer.dim != dim:
                raise ConfigError(f"layer {i} ({layer.kind}) expects {layer.dim} features but receives {dim}")
            dim = layer.out_dim
        if self.base.dim != dim:
            raise ConfigError(f"base has dimension {self.base.dim} but the layer chain ends at {dim}")

    @property
    def exact(self) -> bool:
        return all(layer.exact for layer in self.layers)

    def _check_input(self, x: Node):
        if x.ndim != 2 or x.shape[1] != self.data_dim:
            raise ConfigError(f"expected data of shape (batch, {self.data_dim}), got {x.shape}")

    def log_likelihood(self, x, rng=None) -> Node:
        """log p(z) + sum of V over layers, as a differentiable per-example Node."""
        x = as_node(x)
        self._check_input(x)
        total = None
        for layer in self.layers:
            x, v = layer.inference(x, rng)
            total = v if total is None else total + v
        lp = self.base.log_prob(x)
        return lp if total is None else lp + total

    def log_prob(self, x, rng=None) -> EvalResult:
        """Exact log density for exact flows, otherwise a one-sample ELBO estimate."""
        value = self.log_likelihood(x, rng).value
        return EvalResult(value, EXACT if self.exact else ELBO, None if self.exact else 1)

    def log_weights(self, x, k: int, rng, chunk: int = IWBO_CHUNK) -> np.ndarray:
        """(batch, k) single-sample estimates.

        Draws are split into fixed chunks, each with its own stream seeded by
        (root, chunk index), so results do not depend on the thread count.
        """
        if k < 1:
            raise ValueError("k must be at least 1")
        x = np.asarray(as_node(x).value, dtype=float)
        self._check_input(Node(x))
        n = len(x)
        root = int(rng.integers(0, 2 ** 63 - 1))
        chunks = [(start, min(chunk, k - start)) for start in range(0, k, chunk)]

        def run(job):
            index, (start, size) = job
            chunk_rng = np.random.default_rng([root, index])
            rep = np.repeat(x, size, axis=0)
            return self.log_likelihood(Node(rep), chunk_rng).value.reshape(n, size)

        workers = min(thread_count(), len(chunks))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(run, enumerate(chunks)))
        else:
            parts = [run(job) for job in enumerate(chunks)]
        return np.concatenate(parts, axis=1)

    def iwbo(self, x, k: int, rng=None) -> EvalResult:
        if k < 1:
            raise ValueError("k must be at least 1")
        if self.exact:
            return EvalResult(self.log_likelihood(x).value, EXACT, k)
        lw = self.log_weights(x, k, rng)
        return EvalResult(special.logsumexp(lw, axis=1) - math.log(k), IWBO, k)

    def bounds(self, x, k: int, rng=None) -> tuple:
        """(ELBO, IWBO) per example from the same k draws; ELBO <= IWBO always."""
        if self.exact:
            v = self.log_likelihood(x).value
            return v, v.copy()
        lw = self.log_weights(x, k, rng)
        return lw.mean(axis=1), special.logsumexp(lw, axis=1) - math.log(k)

    def sample(self, n: int, rng) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be at least 1")
        z = self.base.sample(rng, n)
        for layer in reversed(self.layers):
            z = layer.generative(z, rng)
        return np.asarray(z)

    def data_init(self, x, rng=None) -> None:
        """Initialize every ActNorm layer from the activations of batch ``x``."""
        h = Node(np.asarray(as_node(x).value))
        for layer in self.layers:
            if isinstance(layer, ActNorm) and not layer.initialized:
                layer.initialize(h)
            h = Node(layer.inference(h, rng)[0].value)

    def descriptor(self) -> dict:
        return {"data_dim": self.data_dim, "seed": self.seed, "base": self.base.to_config(),
                "layers": [layer.to_config() for layer in self.layers]}


def build_from_spec(desc: dict, rng: Optional[np.random.Generator] = None) -> Flow:
    """Construct a Flow from an architecture descriptor, validating the chain."""
    if not isinstance(desc, dict) or "base" not in desc:
        raise ConfigError("descriptor needs a 'base' entry")
    seed = int(desc.get("seed", 0))
    rng = rng if rng is not None else np.random.default_rng(seed)
    layer_cfgs = desc.get("layers", [])
    base_cfg = dict(desc["base"])
    data_dim = desc.get("data_dim")
    if data_dim is None:
        if layer_cfgs:
            raise ConfigError("descriptor needs 'data_dim' when it has layers")
        data_dim = base_cfg.get("dim")
    dim = int(data_dim)
    layers: list[Layer] = []
    for i, cfg in enumerate(layer_cfgs):
        try:
            layer = layer_from_config(cfg, dim, rng)
        except (ConfigError, TypeError, ValueError) as err:
            raise ConfigError(f"layer {i}: {err}") from None
        layers.append(layer)
        dim = layer.out_dim
    base_cfg.setdefault("dim", dim)
    try:
        base = dist_from_config(base_cfg, rng)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"base: {err}") from None
    return Flow(base, layers, data_dim=int(data_dim), seed=seed)


def _coupling_stack(n: int, hidden=(200, 100), between=None) -> list:
    between = between or (lambda i: {"kind": "permutation", "perm": "reverse"})
    out = []
    for i in range(n):
        out.append({"kind": "affine_coupling", "hidden": list(hidden)})
        if i < n - 1:
            out.append(between(i))
    return out


PRESETS = {
    "baseline": {
        "data_dim": 2,
        "base": {"family": "standard_normal"},
        "layers": _coupling_stack(4),
    },
    "absflow-symmetric": {
        "data_dim": 2,
        "base": {"family": "standard_normal"},
        "layers": [{"kind": "abs", "orientation": "inference", "sign_model": "uniform"},
                   {"kind": "inverse_softplus"}] + _coupling_stack(4),
    },
    "absflow-symmetric-logit": {
        "data_dim": 2,
        "base": {"family": "standard_normal"},
        "layers": [{"kind": "abs", "orientation": "inference", "sign_model": "uniform"},
                   {"kind": "affine", "a": 8.0, "b": 0.0},
                   {"kind": "logit"}] + _coupling_stack(4),
    },
    "absflow-antisymmetric": {
        "data_dim": 2,
        "base": {"family": "uniform", "lo": 0.0, "hi": 4.0},
        "layers": [{"kind": "abs", "orientation": "inference", "sign_model": "classifier",
                    "hidden": [200, 100]}],
    },
    "augmented": {
        "data_dim": 2,
        "base": {"family": "standard_normal"},
        "layers": [{"kind": "slice", "orientation": "generative", "split": [2, 2], "aux": "standard_normal"}]
        + _coupling_stack(2),
    },
    "sortflow-toy": {
        "data_dim": 4,
        "base": {"family": "standard_normal"},
        "layers": [{"kind": "sort", "orientation": "inference", "perm_model": "uniform"}]
        + _coupling_stack(4, hidden=(64, 64),
                          between=lambda i: {"kind": "permutation", "perm": "random", "seed": 100 + i}),
    },
    "permuteflow-toy": {
        "data_dim": 4,
        "base": {"family": "standard_normal"},
        "layers": [{"kind": "stochastic_permutation"}]
        + _coupling_stack(4, hidden=(64, 64), between=lambda i: {"kind": "stochastic_permutation"}),
    },
}

PRESET_DATASETS = {
    "sortflow-toy": "exchangeable-gaussian-sets",
    "permuteflow-toy": "exchangeable-gaussian-sets",
    "absflow-antisymmetric": "checkerboard",
}


def preset(name: str) -> dict:
    try:
        return copy.deepcopy(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown architecture {name!r}; presets: {', '.join(sorted(PRESETS))}") from None
