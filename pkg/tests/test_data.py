import math

import numpy as np
import pytest

from survae import data

SYMMETRIC = ("gaussians", "circles", "corners")


def test_checkerboard_support():
    x = data.generate("checkerboard", 100_000, 0).samples
    on = np.mod(np.floor(x[:, 0] / 2) + np.floor(x[:, 1] / 2), 2) == 0
    assert on.all() and np.all(np.abs(x) <= 4)


def test_checkerboard_is_antisymmetric_under_one_flip():
    x = data.generate("checkerboard", 1000, 0).samples
    assert np.all(data.log_density("checkerboard", x * [-1, 1]) == -np.inf)


def test_gaussians_mean():
    x = data.generate("gaussians", 100_000, 3).samples
    assert np.all(np.abs(x.mean(0)) < 0.02)


@pytest.mark.parametrize("name", data.NAMES)
def test_same_seed_same_tensor(name):
    a = data.generate(name, 500, 11).samples
    b = data.generate(name, 500, 11).samples
    assert np.array_equal(a, b)
    assert not np.array_equal(a, data.generate(name, 500, 12).samples)


def test_exchangeable_sets_shape():
    assert data.generate("exchangeable-gaussian-sets", 10, 0, dim=6).samples.shape == (10, 6)


def test_unknown_dataset_and_bad_n():
    with pytest.raises(ValueError, match="unknown dataset"):
        data.generate("moons", 10, 0)
    with pytest.raises(ValueError):
        data.generate("gaussians", 0, 0)


def test_train_test_are_independent():
    tr, te = data.train_test("gaussians", 100, 0)
    assert tr.shape == te.shape == (100, 2) and not np.array_equal(tr, te)


@pytest.mark.parametrize("name", SYMMETRIC)
def test_point_symmetry_histogram(name):
    x = data.generate(name, 128_000, 5).samples
    edges = np.linspace(-4, 4, 41)
    h, _, _ = np.histogram2d(x[:, 0], x[:, 1], bins=[edges, edges])
    flipped = h[::-1, ::-1]
    se = np.sqrt(h + flipped)
    ok = (np.abs(h - flipped) <= 4 * se) | (se == 0)
    assert ok.mean() >= 0.99


@pytest.mark.parametrize("name", ["checkerboard", "gaussians", "corners", "circles"])
def test_log_density_normalizes(name):
    g = np.linspace(-5, 5, 1000)  # even count keeps the origin off the grid
    a, b = np.meshgrid(g, g, indexing="ij")
    pts = np.stack([a.ravel(), b.ravel()], 1)
    dens = np.exp(data.log_density(name, pts)).reshape(a.shape)
    h = g[1] - g[0]
    # riemann sum; the checkerboard edges and the circles origin limit accuracy
    assert abs(dens.sum() * h * h - 1) < 5e-3


def test_log_density_matches_samples_histogram():
    x = data.generate("gaussians", 200_000, 1).samples
    edges = np.linspace(-3, 3, 31)
    h, _, _ = np.histogram2d(x[:, 0], x[:, 1], bins=[edges, edges], density=True)
    c = (edges[1:] + edges[:-1]) / 2
    a, b = np.meshgrid(c, c, indexing="ij")
    dens = np.exp(data.log_density("gaussians", np.stack([a.ravel(), b.ravel()], 1))).reshape(a.shape)
    assert np.max(np.abs(h - dens)) < 0.06


def test_gaussians_entropy_oracle():
    est, se = data.entropy_mc("gaussians", 400_000, seed=2)
    # reference from independent 2-D quadrature of -p log p
    g = np.linspace(-3.5, 3.5, 1401)
    a, b = np.meshgrid(g, g, indexing="ij")
    lp = data.log_density("gaussians", np.stack([a.ravel(), b.ravel()], 1))
    h = g[1] - g[0]
    quad = float(-(np.exp(lp) * lp).sum() * h * h)
    assert abs(quad - 1.698061) < 1e-5
    assert abs(est - quad) < 4 * se


def test_checkerboard_entropy_exact():
    est, se = data.entropy_mc("checkerboard", 1000, 0)
    assert math.isclose(est, math.log(32), abs_tol=1e-12) and se < 1e-12


def test_csv_round_trip(tmp_path):
    x = data.generate("corners", 50, 0).samples
    path = tmp_path / "c.csv"
    data.write_csv(path, x)
    text = path.read_text().splitlines()
    assert text[0] == "x,y" and len(text) == 51
    assert np.array_equal(data.read_csv(path), x)
