"""Density estimation with bijective, surjective, and stochastic layers."""

from .flow import PRESETS, EvalResult, Flow, build_from_spec, preset

__version__ = "0.1.0"

__all__ = ["PRESETS", "EvalResult", "Flow", "build_from_spec", "preset", "__version__"]
