import numpy as np
import pytest

from spatialdp.simgen import (
    SimConfig,
    coefficient_field,
    generate_covariates,
    generate_response,
    grid_coords,
    kernel_regions,
    partition_regions,
    simulate,
)


def test_single_region():
    coords = np.random.default_rng(0).uniform(size=(10, 2))
    assert np.all(partition_regions(coords, 1) == 0)


def test_row_of_nine_terciles():
    coords = np.column_stack([np.arange(9.0), np.zeros(9)])
    labels = partition_regions(coords, 3)
    assert np.bincount(labels).tolist() == [3, 3, 3]
    assert labels.tolist() == [0, 0, 0, 1, 1, 1, 2, 2, 2]


def test_partition_errors():
    with pytest.raises(ValueError):
        partition_regions(np.zeros((2, 2)), 3)
    with pytest.raises(ValueError):
        partition_regions(np.zeros((4, 2)), 2)  # all ties: an empty region


def test_default_partition_contiguous_bands():
    cfg = SimConfig()
    labels = partition_regions(grid_coords(cfg), 3).reshape(cfg.nrow, cfg.ncol)
    assert np.all(np.diff(labels, axis=1) >= 0)
    assert np.all(labels == labels[0])


def test_covariates_deterministic_and_unit_variance():
    coords = grid_coords(SimConfig(nrow=5, ncol=6))
    a = generate_covariates(coords, 0.3, 2, 11)
    assert np.array_equal(a, generate_covariates(coords, 0.3, 2, 11))
    draws = np.stack([generate_covariates(coords, 0.3, 1, s)[:, 0] for s in range(2000)])
    var = draws.var(axis=0)
    assert np.all(np.abs(var - 1) < 0.15)
    assert abs(var.mean() - 1) < 0.03


def test_vanishing_range_decorrelates():
    coords = grid_coords(SimConfig(nrow=4, ncol=4))
    draws = np.stack([generate_covariates(coords, 1e-4, 1, s)[:, 0] for s in range(3000)])
    corr = np.corrcoef(draws.T)
    assert np.max(np.abs(corr[~np.eye(16, dtype=bool)])) < 0.1


def test_covariates_reject_bad_range():
    with pytest.raises(ValueError):
        generate_covariates(np.zeros((3, 2)), 0.0, 1, 0)


def test_noiseless_response():
    rng = np.random.default_rng(0)
    X, beta = rng.normal(size=(7, 3)), rng.normal(size=(7, 3))
    np.testing.assert_array_equal(generate_response(X, beta, 0.0, 1), np.sum(X * beta, axis=1))


def test_pure_noise_variance():
    X = np.ones((20000, 1))
    y = generate_response(X, np.zeros((20000, 1)), 1.0, 3)
    assert abs(y.var() - 1) < 3 * np.sqrt(2 / 20000)


def test_zero_amplitude_piecewise_constant():
    coords = grid_coords(SimConfig())
    regions = partition_regions(coords, 3)
    base = np.arange(6.0).reshape(3, 2)
    field = coefficient_field(coords, regions, base, 0.0)
    np.testing.assert_array_equal(field, base[regions])
    smooth = coefficient_field(coords, regions, base, 0.1)
    assert np.max(np.abs(smooth - field)) <= 0.1 + 1e-12


def test_simulate_defaults_deterministic():
    a, beta_a = simulate(SimConfig(seed=4))
    b, beta_b = simulate(SimConfig(seed=4))
    assert a.n == 156 and a.p == 6
    assert np.array_equal(a.y, b.y) and np.array_equal(a.X, b.X)
    assert np.array_equal(beta_a, beta_b)
    # tercile cuts fall exactly on columns 4 and 8, which go to the upper band: 4, 4, 5 columns
    assert np.bincount(a.true_labels).tolist() == [48, 48, 60]
    assert len(a.edges) == 12 * 12 + 11 * 13
    c, _ = simulate(SimConfig(seed=5))
    assert not np.array_equal(a.y, c.y)


def test_ols_recovers_region_coefficients():
    cfg = SimConfig(amplitude=0.0, noise_sd=0.05, seed=2)
    data, beta = simulate(cfg)
    base = cfg.base_coefficients()
    for r in range(cfg.regions):
        idx = data.true_labels == r
        X, y = data.X[idx], data.y[idx]
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        resid = y - X @ coef
        s2 = resid @ resid / (idx.sum() - cfg.p)
        se = np.sqrt(np.diag(s2 * np.linalg.inv(X.T @ X)))
        assert np.all(np.abs(coef - base[r]) <= 3 * se + 1e-12)


@pytest.mark.parametrize("family", ["Uniform", "SquaredExponential"])
def test_kernel_partition(family):
    cfg = SimConfig(partition=family, seed=1)
    data, _ = simulate(cfg)
    sizes = np.bincount(data.true_labels, minlength=3)
    assert sizes.min() >= 156 // 9 and sizes.sum() == 156
    again, _ = simulate(cfg)
    assert np.array_equal(data.true_labels, again.true_labels)


def test_kernel_partition_errors():
    with pytest.raises(ValueError):
        kernel_regions(np.zeros((2, 2)), 3, "Uniform", 0.5, 0)
    with pytest.raises(ValueError):
        SimConfig(partition="voronoi")
    with pytest.raises(ValueError):
        SimConfig(phi=0.0)
