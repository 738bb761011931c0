"""Right-inverse checker for surjective and bijective layers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ad import Node
from .base import BIJECTIVE, GENERATIVE, INFERENCE, ConfigError


class RightInverseError(AssertionError):
    pass


@dataclass
class RightInverseReport:
    draws: int
    max_error: float
    nonfinite: int

    @property
    def passed(self) -> bool:
        return self.max_error <= 1e-9 and self.nonfinite == 0


def check_right_inverse(layer, values, rng, draws: int = 100_000, atol: float = 1e-9,
                        chunk: int = 20_000, raise_on_failure: bool = True) -> RightInverseReport:
    """Sample the stochastic direction ``draws`` times and map back deterministically.

    Inference surjections take latent ``values`` z and require
    inference(generative(z)) == z. Generative surjections take data ``values``
    x and require generative(inference(x)) == x. Every draw must also give a
    finite V, which rejects samples that leave the fiber through the support.
    """
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if layer.orientation not in (INFERENCE, GENERATIVE, BIJECTIVE):
        raise ConfigError(f"{layer.kind} is stochastic; it has no deterministic direction to check")
    reps = -(-draws // len(values))
    worst, bad, done = 0.0, 0, 0
    while done < reps:
        step = min(max(1, chunk // len(values)), reps - done)
        batch = np.repeat(values, step, axis=0)
        if layer.orientation == GENERATIVE:
            z, v = layer.inference(Node(batch), rng)
            back = layer.generative(z.value, rng)
        else:
            x = layer.generative(batch, rng)
            back, v = layer.inference(Node(x), rng)
            back = back.value
        worst = max(worst, float(np.max(np.abs(back - batch))))
        bad += int(np.sum(~np.isfinite(v.value)))
        done += step
    report = RightInverseReport(done * len(values), worst, bad)
    if raise_on_failure and (worst > atol or bad):
        raise RightInverseError(f"{layer.kind} ({layer.orientation}): right-inverse check failed, "
                                f"max deviation {worst:.3g}, {bad} draws with non-finite V")
    return report
