"""Adam, learning-rate schedule, and the minibatch training loop.

Every random choice is a pure function of (seed, iteration): the epoch
shuffle uses ``default_rng([seed, 0, epoch])`` and layer noise uses
``default_rng([seed, 1, iteration])``. Resuming from a checkpoint therefore
needs only the parameters, the Adam moments, and the iteration count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ad import backward, ops

BETA1, BETA2, ADAM_EPS = 0.9, 0.999, 1e-8


class TrainingError(RuntimeError):
    pass


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    iterations: int = 10000
    batch_size: int = 128
    warmup_iters: int = 0
    decay_per_epoch: float = 1.0
    seed: int = 0
    dropout: float = 0.0
    epoch_iters: int = 1000
    clip_norm: float = 10.0
    trace_every: int = 100

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.iterations < 0 or self.warmup_iters < 0:
            raise ValueError("iterations and warmup_iters must be non-negative")
        if self.dropout != 0.0:
            raise ValueError("dropout is not supported; it must be 0")


@dataclass
class TrainResult:
    trace: list
    state: AdamState
    iteration: int


def lr_at(config: TrainConfig, iteration: int) -> float:
    """Linear warmup to ``lr``, then one multiplicative decay per epoch."""
    if iteration < 0:
        raise ValueError("iteration must be non-negative")
    if iteration < config.warmup_iters:
        return config.lr * iteration / config.warmup_iters
    epochs = (iteration - config.warmup_iters) // config.epoch_iters
    return config.lr * config.decay_per_epoch ** epochs


def adam_step(params: dict, grads: dict, state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update, in place on each Parameter's value."""
    state.step += 1
    c1 = 1.0 - BETA1 ** state.step
    c2 = 1.0 - BETA2 ** state.step
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.value.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter has {p.value.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.value)
            state.v[name] = np.zeros_like(p.value)
        v = state.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * g * g
        p.value -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)


def clip_grads(grads: dict, max_norm: float) -> float:
    """Scale all gradients together so their global norm is at most ``max_norm``."""
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def batch_indices(n: int, config: TrainConfig, iteration: int) -> np.ndarray:
    per_epoch = max(1, n // config.batch_size)
    epoch, pos = divmod(iteration, per_epoch)
    perm = np.random.default_rng([config.seed, 0, epoch]).permutation(n)
    if config.batch_size > n:
        return perm
    return perm[pos * config.batch_size:(pos + 1) * config.batch_size]


def noise_rng(config: TrainConfig, iteration: int) -> np.random.Generator:
    return np.random.default_rng([config.seed, 1, iteration])


def train(flow, data: np.ndarray, config: TrainConfig, state: AdamState | None = None,
          start_iteration: int = 0, callback=None) -> TrainResult:
    """Minimize the mean negative log-likelihood (or negative ELBO) of ``flow``.

    The trace holds (iteration, lr, mean_nats) every ``trace_every`` steps,
    where mean_nats averages the loss over that window.
    """
    data = np.asarray(data, dtype=float)
    state = state if state is not None else AdamState()
    params = flow.named_parameters()
    trace, window = [], []
    if start_iteration == 0 and config.iterations > 0:
        flow.data_init(data[batch_indices(len(data), config, 0)], noise_rng(config, 0))
    end = start_iteration + config.iterations
    for it in range(start_iteration, end):
        lr = lr_at(config, it)
        x = data[batch_indices(len(data), config, it)]
        loss = -ops.mean(flow.log_likelihood(x, noise_rng(config, it)))
        value = float(loss.value)
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss {value} at iteration {it} (batch seed [{config.seed}, {it}])")
        for p in params.values():
            p.grad = None
        backward(loss)
        grads = {name: (p.grad if p.grad is not None else np.zeros_like(p.value)) for name, p in params.items()}
        clip_grads(grads, config.clip_norm)
        adam_step(params, grads, state, lr)
        window.append(value)
        if (it + 1) % config.trace_every == 0:
            trace.append((it + 1, lr, float(np.mean(window))))
            window = []
        if callback is not None:
            callback(it, value)
    for p in params.values():
        p.grad = None
    return TrainResult(trace, state, end)


def write_trace(path, trace) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,lr,mean_nats\n")
        for it, lr, nats in trace:
            fh.write(f"{it},{lr:.17g},{nats:.17g}\n")
