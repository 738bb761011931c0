from __future__ import annotations

from typing import Optional

import numpy as np

from ..ad import Module, Node, as_node

BIJECTIVE = "bijective"
INFERENCE = "inference"    # surjective X -> Z, exact likelihood
GENERATIVE = "generative"  # surjective Z -> X, lower bound
STOCHASTIC = "stochastic"

_ORIENTATION_ALIASES = {
    "inference-surjective": INFERENCE, "inference": INFERENCE,
    "generative-surjective": GENERATIVE, "generative": GENERATIVE,
}

REGISTRY: dict = {}


class ConfigError(ValueError):
    """An architecture or layer configuration that cannot be built."""


class SupportError(ValueError):
    """Input outside the set a layer's deterministic map is defined on."""


def register(cls):
    REGISTRY[cls.kind] = cls
    return cls


def normalize_orientation(value: str) -> str:
    try:
        return _ORIENTATION_ALIASES[value]
    except KeyError:
        raise ConfigError(f"unknown orientation {value!r}") from None


def constant_v(n: int, value: float = 0.0) -> Node:
    return Node(np.full(n, float(value)))


class Layer(Module):
    """One SurVAE transformation.

    ``inference`` maps data-side x to latent-side z and returns the per-example
    likelihood contribution V(x, z); ``generative`` maps z back to x and only
    returns samples.
    """

    kind = "layer"
    orientations: tuple = ()
    catalog: dict = {}

    def __init__(self, dim: int, orientation: str):
        self.dim = int(dim)
        self.orientation = orientation

    @property
    def out_dim(self) -> int:
        return self.dim

    @property
    def exact(self) -> bool:
        return self.orientation in (BIJECTIVE, INFERENCE)

    def inference(self, x, rng: Optional[np.random.Generator] = None):
        raise NotImplementedError

    def generative(self, z, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        raise NotImplementedError

    def apply(self, value, direction: str, rng=None):
        """Run one direction; V is None for non-bijective generative passes."""
        if direction == "inference":
            return self.inference(as_node(value), rng)
        if direction == "generative":
            return self.generative(np.asarray(as_node(value).value), rng), None
        raise ValueError(f"direction must be 'inference' or 'generative', got {direction!r}")

    def to_config(self) -> dict:
        cfg = {"kind": self.kind}
        if len(self.orientations) > 1:
            cfg["orientation"] = self.orientation
        return cfg

    def _check_dim(self, x):
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ConfigError(f"{self.kind}: expected input of shape (batch, {self.dim}), got {x.shape}")


class Bijection(Layer):
    orientations = (BIJECTIVE,)

    def __init__(self, dim: int):
        super().__init__(dim, BIJECTIVE)

    def generative_with_logdet(self, z):
        """x = f(z) and log|det dx/dz|, the negative of the inference V."""
        raise NotImplementedError

    def generative(self, z, rng=None):
        return self.generative_with_logdet(as_node(z))[0].value

    def apply(self, value, direction, rng=None):
        if direction == "generative":
            return self.generative_with_logdet(as_node(value))
        return super().apply(value, direction, rng)
