"""Layer catalog: bijections, surjections in both orientations, stochastic layers."""

from __future__ import annotations

from .base import (
    BIJECTIVE,
    GENERATIVE,
    INFERENCE,
    REGISTRY,
    STOCHASTIC,
    Bijection,
    ConfigError,
    Layer,
    SupportError,
    normalize_orientation,
)
from .bijections import (
    ActNorm,
    AffineCoupling,
    ElementwiseAffine,
    InverseSoftplus,
    Logit,
    Permutation,
    Sigmoid,
    Softplus,
)
from .checks import RightInverseError, RightInverseReport, check_right_inverse
from .stochastic import PPCALayer, StochasticPermutation, VAELayer, linear_gaussian_vae
from .surjections import (
    AbsSurjection,
    MaxSurjection,
    ReLUSurjection,
    RoundingSurjection,
    SliceSurjection,
    SortSurjection,
    permutation_rank,
)


def layer_from_config(cfg: dict, dim: int, rng=None) -> Layer:
    """Build one layer whose inference input has ``dim`` features."""
    kind = cfg.get("kind")
    try:
        cls = REGISTRY[kind]
    except KeyError:
        raise ConfigError(f"unknown layer kind {kind!r}") from None
    if "orientation" in cfg and cfg["orientation"] is not None:
        orientation = normalize_orientation(cfg["orientation"])
        if orientation not in cls.orientations:
            raise ConfigError(f"{kind} does not support orientation {cfg['orientation']!r}")
    return cls.from_config(cfg, dim, rng)


__all__ = [
    "BIJECTIVE", "GENERATIVE", "INFERENCE", "REGISTRY", "STOCHASTIC",
    "AbsSurjection", "ActNorm", "AffineCoupling", "Bijection", "ConfigError", "ElementwiseAffine",
    "InverseSoftplus", "Layer", "Logit", "MaxSurjection", "PPCALayer", "Permutation", "ReLUSurjection",
    "RoundingSurjection", "Sigmoid", "SliceSurjection", "Softplus", "SortSurjection", "StochasticPermutation",
    "RightInverseError", "RightInverseReport", "SupportError", "VAELayer", "check_right_inverse", "layer_from_config", "linear_gaussian_vae", "normalize_orientation",
    "permutation_rank",
]
