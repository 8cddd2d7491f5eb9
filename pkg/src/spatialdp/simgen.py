"""Synthetic spatially clustered regression data on a lattice of areal units."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from spatialdp.graph import SpatialDataset, grid_edges
from spatialdp.stick import (
    EXPONENTIAL_LAMBDA,
    INVGAMMA_LAMBDA_SQ_HALF,
    SQEXP,
    UNIFORM,
    KernelSpec,
    SticksAndKnots,
    UnitSquare,
    assignment_probs,
)

PARTITIONS = ("bands", UNIFORM, SQEXP)

# region-level coefficients used when (regions, p) == (3, 6)
DEFAULT_BASE = np.array([
    [-1.00, -0.04, -0.46, 1.29, 2.46, -1.05],
    [0.62, -0.29, -1.06, -0.06, 3.71, -0.51],
    [2.31, 0.29, -1.14, 0.53, 2.19, 0.37],
])


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    The lattice spans ``lon_range`` x ``lat_range`` with ``nrow * ncol``
    cell centres. ``base`` holds one row of coefficients per region; when
    omitted it is the built-in table for 3 regions and 6 covariates, or a
    seeded uniform draw on [-2, 2] otherwise.

    ``partition`` is ``"bands"`` for quantile bands along the first
    coordinate, or a kernel family name to draw regions from a spatial
    stick-breaking realisation of that family (bandwidth scale
    ``kernel_lambda``).
    """

    nrow: int = 12
    ncol: int = 13
    p: int = 6
    regions: int = 3
    phi: float = 0.3
    amplitude: float = 0.1
    noise_sd: float = 0.5
    seed: int = 0
    base: tuple | None = None
    lon_range: tuple = (-85.5, -81.0)
    lat_range: tuple = (30.5, 35.0)
    partition: str = "bands"
    kernel_lambda: float = 0.5

    def __post_init__(self):
        if self.partition not in PARTITIONS:
            raise ValueError(f"partition must be one of {PARTITIONS}, got {self.partition!r}")
        if not self.kernel_lambda > 0:
            raise ValueError("kernel_lambda must be positive")
        if self.p < 1 or self.regions < 1:
            raise ValueError("p and regions must be at least 1")
        if not self.phi > 0:
            raise ValueError("phi must be positive")
        if self.noise_sd < 0 or self.amplitude < 0:
            raise ValueError("noise_sd and amplitude must be non-negative")
        if self.nrow < 1 or self.ncol < 1:
            raise ValueError("grid dimensions must be positive")

    @property
    def n(self) -> int:
        return self.nrow * self.ncol

    def base_coefficients(self) -> np.ndarray:
        if self.base is not None:
            base = np.asarray(self.base, dtype=float).reshape(self.regions, self.p)
        elif (self.regions, self.p) == DEFAULT_BASE.shape:
            base = DEFAULT_BASE.copy()
        else:
            base = np.random.default_rng(self.seed).uniform(-2, 2, size=(self.regions, self.p))
        return base


def grid_coords(cfg: SimConfig) -> np.ndarray:
    """Row-major cell centres as (lon, lat)."""
    lon = np.linspace(*cfg.lon_range, cfg.ncol)
    lat = np.linspace(*cfg.lat_range, cfg.nrow)
    LON, LAT = np.meshgrid(lon, lat)
    return np.column_stack([LON.ravel(), LAT.ravel()])


def partition_regions(coords, region_count: int, direction=(1.0, 0.0)) -> np.ndarray:
    """Split locations into contiguous bands by quantiles of a coordinate projection."""
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0]
    if region_count < 1:
        raise ValueError("region_count must be at least 1")
    if region_count > n:
        raise ValueError(f"cannot form {region_count} regions from {n} locations")
    score = coords @ np.asarray(direction, dtype=float)
    cuts = np.quantile(score, np.arange(1, region_count) / region_count)
    labels = np.searchsorted(cuts, score, side="right")
    sizes = np.bincount(labels, minlength=region_count)
    if np.any(sizes == 0):
        raise ValueError(f"partition produced empty regions (sizes {sizes.tolist()})")
    return labels


def kernel_regions(coords, region_count: int, family: str, lam: float, seed,
                   min_size: int | None = None, max_tries: int = 1000) -> np.ndarray:
    """Draw region labels from a spatial stick-breaking prior realisation.

    Sticks are Beta(1, 1), knots uniform on the unit square and bandwidths
    follow the sampled-bandwidth model of ``family``. Each location's region
    is drawn from its assignment probabilities; realisations with a region
    smaller than ``min_size`` (default ``n // (3 * region_count)``) are redrawn.
    """
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0]
    if region_count > n:
        raise ValueError(f"cannot form {region_count} regions from {n} locations")
    mode = EXPONENTIAL_LAMBDA if family == UNIFORM else INVGAMMA_LAMBDA_SQ_HALF
    spec = KernelSpec(family, mode, lam)
    unit = UnitSquare(coords).transform(coords)
    min_size = max(1, n // (3 * region_count)) if min_size is None else min_size
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        V = rng.beta(1.0, 1.0, size=region_count)
        V[-1] = 1.0
        psi = rng.uniform(size=(region_count, 2))
        eps = spec.sample_bandwidths(rng, (region_count, 2))
        probs = assignment_probs(SticksAndKnots(V, psi, eps), spec, unit)
        u = rng.random(n)[:, None]
        labels = np.minimum(np.sum(np.cumsum(probs, axis=1) < u, axis=1), region_count - 1)
        if np.bincount(labels, minlength=region_count).min() >= min_size:
            return labels
    raise ValueError(f"no {family} realisation gave {region_count} regions of size >= {min_size}")


def generate_covariates(coords, phi: float, p: int, seed) -> np.ndarray:
    """Columns of spatially correlated normals with covariance ``exp(-d / phi)``.

    Distances are Euclidean on coordinates rescaled to the unit square.
    """
    if not phi > 0:
        raise ValueError("phi must be positive")
    unit = UnitSquare(coords).transform(coords)
    C = np.exp(-cdist(unit, unit) / phi)
    try:
        L = linalg.cholesky(C, lower=True)
    except linalg.LinAlgError:
        L = linalg.cholesky(C + 1e-8 * np.eye(len(C)), lower=True)
    rng = np.random.default_rng(seed)
    return L @ rng.standard_normal((len(C), p))


def coefficient_field(coords, regions: np.ndarray, base: np.ndarray, amplitude: float) -> np.ndarray:
    """Region base coefficients plus a low-frequency sinusoidal perturbation."""
    unit = UnitSquare(coords).transform(coords)
    p = base.shape[1]
    phase = np.arange(p)
    wave = np.sin(np.pi * (unit[:, [0]] + unit[:, [1]]) + phase[None, :])
    return base[regions] + amplitude * wave


def generate_response(X, beta, noise_sd: float, seed) -> np.ndarray:
    """``y_i = x_i' beta_i + e_i`` with iid ``N(0, noise_sd^2)`` errors."""
    X = np.asarray(X, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if X.shape != beta.shape:
        raise ValueError("X and the coefficient field must have the same shape")
    rng = np.random.default_rng(seed)
    return np.sum(X * beta, axis=1) + noise_sd * rng.standard_normal(X.shape[0])


def simulate(cfg: SimConfig) -> tuple[SpatialDataset, np.ndarray]:
    """Generate one dataset; returns it with the true coefficient field (n, p)."""
    coords = grid_coords(cfg)
    cov_seed, noise_seed, region_seed = np.random.SeedSequence(cfg.seed).spawn(3)
    if cfg.partition == "bands":
        regions = partition_regions(coords, cfg.regions)
    else:
        regions = kernel_regions(coords, cfg.regions, cfg.partition, cfg.kernel_lambda,
                                 region_seed)
    X = generate_covariates(coords, cfg.phi, cfg.p, cov_seed)
    beta = coefficient_field(coords, regions, cfg.base_coefficients(), cfg.amplitude)
    y = generate_response(X, beta, cfg.noise_sd, noise_seed)
    data = SpatialDataset(coords=coords, y=y, X=X, edges=grid_edges(cfg.nrow, cfg.ncol),
                          true_labels=regions, lonlat=True)
    return data, beta
