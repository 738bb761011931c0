"""Synthetic datasets and their exact log densities.

Parameters (the canonical definitions used everywhere in this package):

- checkerboard: uniform over the 8 "on" squares of a 4x4 lattice of 2x2
  squares covering [-4, 4]^2; a point is on when floor(x/2) + floor(y/2)
  is even. Flipping the sign of one coordinate maps on squares to off ones.
- gaussians: equal mixture of 8 isotropic normals, sigma 0.2, centred on the
  circle of radius 2 at angles 2*pi*j/8.
- circles: a ring of radius 1 or 2.5 (equal odds), uniform angle, radial
  noise N(0, 0.08^2).
- corners: equal mixture of 4 normals centred at (+-2, +-2), sd 0.8 along the
  diagonal through the origin and 0.15 across it.
- exchangeable-gaussian-sets: ``dim`` iid N(0, 1) values per example.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

NAMES = ("checkerboard", "corners", "gaussians", "circles", "exchangeable-gaussian-sets")
TEST_SEED_OFFSET = 1_000_003

GAUSSIANS_RADIUS, GAUSSIANS_SIGMA, GAUSSIANS_COUNT = 2.0, 0.2, 8
CIRCLES_RADII, CIRCLES_SIGMA = (1.0, 2.5), 0.08
CORNERS_CENTER, CORNERS_ALONG, CORNERS_ACROSS = 2.0, 0.8, 0.15
SET_DIM = 4


@dataclass
class Dataset:
    name: str
    n: int
    seed: int
    samples: np.ndarray


def _check(name, n):
    if name not in NAMES:
        raise ValueError(f"unknown dataset {name!r}; choose from {', '.join(NAMES)}")
    if n < 1:
        raise ValueError("n must be at least 1")


def _checkerboard(rng, n):
    x = rng.random(n) * 8.0 - 4.0
    col = np.floor(x / 2.0)
    # pick a row of matching parity among the 4 rows
    row = 2.0 * rng.integers(0, 2, size=n) + np.mod(col, 2.0) - 2.0
    y = 2.0 * (row + rng.random(n))
    return np.stack([x, y], axis=1)


def _gaussian_centers():
    ang = 2.0 * np.pi * np.arange(GAUSSIANS_COUNT) / GAUSSIANS_COUNT
    return GAUSSIANS_RADIUS * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def _gaussians(rng, n):
    comp = rng.integers(0, GAUSSIANS_COUNT, size=n)
    return _gaussian_centers()[comp] + GAUSSIANS_SIGMA * rng.standard_normal((n, 2))


def _circles(rng, n):
    radius = np.asarray(CIRCLES_RADII)[rng.integers(0, 2, size=n)]
    theta = 2.0 * np.pi * rng.random(n)
    rho = radius + CIRCLES_SIGMA * rng.standard_normal(n)
    return np.stack([rho * np.cos(theta), rho * np.sin(theta)], axis=1)


def _corner_frames():
    signs = np.array([[1, 1], [-1, 1], [-1, -1], [1, -1]], dtype=float)
    centers = CORNERS_CENTER * signs
    along = signs / math.sqrt(2.0)
    across = np.stack([-along[:, 1], along[:, 0]], axis=1)
    return centers, along, across


def _corners(rng, n):
    centers, along, across = _corner_frames()
    comp = rng.integers(0, 4, size=n)
    a = CORNERS_ALONG * rng.standard_normal(n)
    c = CORNERS_ACROSS * rng.standard_normal(n)
    return centers[comp] + a[:, None] * along[comp] + c[:, None] * across[comp]


def generate(name: str, n: int, seed: int, dim: int = SET_DIM) -> Dataset:
    """Draw ``n`` examples; the same (name, n, seed) always gives the same array."""
    _check(name, n)
    rng = np.random.default_rng(seed)
    if name == "checkerboard":
        x = _checkerboard(rng, n)
    elif name == "gaussians":
        x = _gaussians(rng, n)
    elif name == "circles":
        x = _circles(rng, n)
    elif name == "corners":
        x = _corners(rng, n)
    else:
        x = rng.standard_normal((n, dim))
    return Dataset(name, n, seed, x)


def train_test(name: str, n: int, seed: int, dim: int = SET_DIM) -> tuple:
    """Independent train and test draws of ``n`` examples each."""
    return generate(name, n, seed, dim).samples, generate(name, n, seed + TEST_SEED_OFFSET, dim).samples


def log_density(name: str, x: np.ndarray) -> np.ndarray:
    """Exact log density of each row (circles treats the radius noise as unbounded)."""
    x = np.asarray(x, dtype=float)
    if name == "checkerboard":
        inside = np.all(np.abs(x) <= 4.0, axis=1)
        on = np.mod(np.floor(x[:, 0] / 2.0) + np.floor(x[:, 1] / 2.0), 2.0) == 0
        return np.where(inside & on, -math.log(32.0), -np.inf)
    if name == "gaussians":
        d = x[:, None, :] - _gaussian_centers()[None]
        lp = -0.5 * (d ** 2).sum(-1) / GAUSSIANS_SIGMA ** 2 - math.log(2 * math.pi * GAUSSIANS_SIGMA ** 2)
        return special.logsumexp(lp, axis=1) - math.log(GAUSSIANS_COUNT)
    if name == "corners":
        centers, along, across = _corner_frames()
        d = x[:, None, :] - centers[None]
        a = (d * along[None]).sum(-1) / CORNERS_ALONG
        c = (d * across[None]).sum(-1) / CORNERS_ACROSS
        lp = -0.5 * (a ** 2 + c ** 2) - math.log(2 * math.pi * CORNERS_ALONG * CORNERS_ACROSS)
        return special.logsumexp(lp, axis=1) - math.log(4.0)
    if name == "circles":
        rho = np.hypot(x[:, 0], x[:, 1])
        lp = [-0.5 * ((rho - r) / CIRCLES_SIGMA) ** 2 - math.log(CIRCLES_SIGMA * math.sqrt(2 * math.pi))
              for r in CIRCLES_RADII]
        return special.logsumexp(np.stack(lp, axis=1), axis=1) - math.log(2.0) - np.log(2 * math.pi * rho)
    if name == "exchangeable-gaussian-sets":
        return (-0.5 * x ** 2 - 0.5 * math.log(2 * math.pi)).sum(axis=1)
    raise ValueError(f"unknown dataset {name!r}")


def entropy_mc(name: str, n: int = 1_000_000, seed: int = 0) -> tuple:
    """Monte Carlo differential entropy in nats and its standard error."""
    x = generate(name, n, seed).samples
    nll = -log_density(name, x)
    return float(nll.mean()), float(nll.std(ddof=1) / math.sqrt(n))


def write_csv(path, samples: np.ndarray) -> None:
    samples = np.asarray(samples, dtype=float)
    header = "x,y" if samples.shape[1] == 2 else ",".join(f"x{i}" for i in range(samples.shape[1]))
    np.savetxt(path, samples, delimiter=",", header=header, comments="", fmt="%.17g")


def read_csv(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1, dtype=float))
