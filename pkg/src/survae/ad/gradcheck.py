"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .node import ADError, Node, Parameter, backward


class GradCheckError(ADError):
    pass


@dataclass
class GradCheckReport:
    max_rel_err: dict = field(default_factory=dict)
    rel_tol: float = 1e-5

    @property
    def worst(self) -> float:
        return max(self.max_rel_err.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst < self.rel_tol


def _evaluate(f, seed):
    out = f(np.random.default_rng(seed)) if seed is not None else f()
    if not isinstance(out, Node):
        out = Node(out)
    return out


def finite_diff_check(
    f: Callable,
    params: Mapping[str, Parameter],
    eps: float = 1e-5,
    rel_tol: float = 1e-5,
    atol: float = 1e-8,
    seed: Optional[int] = None,
    max_components: Optional[int] = None,
) -> GradCheckReport:
    """Compare backward gradients of scalar ``f`` against central differences.

    With ``seed`` set, ``f`` receives a freshly seeded generator on every
    evaluation, so stochastic layers see the same noise at theta, theta+eps
    and theta-eps. A component whose absolute discrepancy is below ``atol``
    counts as exact. ``max_components`` subsamples large parameters.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    params = dict(params)
    for p in params.values():
        p.zero_grad()
    root = _evaluate(f, seed)
    if not np.isfinite(root.value).all():
        raise GradCheckError("objective is not finite at the unperturbed point")
    backward(root)
    analytic = {name: (p.grad if p.grad is not None else np.zeros_like(p.value)).copy()
                for name, p in params.items()}

    pick = np.random.default_rng(12345)
    report = GradCheckReport(rel_tol=rel_tol)
    for name, p in params.items():
        flat = p.value.reshape(-1)
        comps = np.arange(flat.size)
        if max_components is not None and flat.size > max_components:
            comps = np.sort(pick.choice(flat.size, max_components, replace=False))
        worst = 0.0
        for i in comps:
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(_evaluate(f, seed).value)
            flat[i] = orig - eps
            lo = float(_evaluate(f, seed).value)
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise GradCheckError(f"objective not finite when perturbing {name}[{i}]")
            numeric = (hi - lo) / (2.0 * eps)
            a = analytic[name].reshape(-1)[i]
            diff = abs(a - numeric)
            if diff > atol:
                worst = max(worst, diff / max(abs(a), abs(numeric)))
        report.max_rel_err[name] = worst
    for p in params.values():
        p.zero_grad()
    return report
