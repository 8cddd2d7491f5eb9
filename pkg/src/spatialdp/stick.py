"""Spatial stick-breaking construction with knot-centred kernels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

UNIFORM = "Uniform"
SQEXP = "SquaredExponential"

FIXED_LAMBDA = "FixedLambda"
EXPONENTIAL_LAMBDA = "ExponentialLambda"
FIXED_LAMBDA_SQ_HALF = "FixedLambdaSqHalf"
INVGAMMA_LAMBDA_SQ_HALF = "InverseGamma_1p5_LambdaSqHalf"

IG_SHAPE = 1.5
_LGAMMA_IG_SHAPE = float(gammaln(IG_SHAPE))

#: Admissible (kernel family, bandwidth model) combinations.
KERNEL_ROWS = (
    (UNIFORM, FIXED_LAMBDA),
    (UNIFORM, EXPONENTIAL_LAMBDA),
    (SQEXP, FIXED_LAMBDA_SQ_HALF),
    (SQEXP, INVGAMMA_LAMBDA_SQ_HALF),
)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus the model for the per-knot bandwidths.

    ``ExponentialLambda`` draws each bandwidth from an exponential
    distribution with mean ``lam``; ``InverseGamma_1p5_LambdaSqHalf`` uses
    shape 1.5 and scale ``lam**2 / 2``.
    """

    family: str = SQEXP
    bandwidth_mode: str = FIXED_LAMBDA_SQ_HALF
    lam: float = 1.0

    def __post_init__(self):
        if (self.family, self.bandwidth_mode) not in KERNEL_ROWS:
            raise ValueError(
                f"unsupported kernel/bandwidth pair ({self.family}, {self.bandwidth_mode}); "
                f"choose one of {KERNEL_ROWS}"
            )
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")

    @property
    def fixed(self) -> bool:
        return self.bandwidth_mode in (FIXED_LAMBDA, FIXED_LAMBDA_SQ_HALF)

    def initial_bandwidth(self) -> float:
        """Fixed value, or the prior mean for random bandwidths."""
        if self.bandwidth_mode == FIXED_LAMBDA:
            return self.lam
        if self.bandwidth_mode == FIXED_LAMBDA_SQ_HALF:
            return self.lam**2 / 2
        if self.bandwidth_mode == EXPONENTIAL_LAMBDA:
            return self.lam
        # inverse gamma mean scale / (shape - 1)
        return (self.lam**2 / 2) / (IG_SHAPE - 1)

    def log_prior(self, eps) -> float:
        """Joint log prior density of an array of bandwidths (0 for fixed modes)."""
        eps = np.asarray(eps, dtype=float)
        if self.bandwidth_mode == EXPONENTIAL_LAMBDA:
            return float(np.sum(-np.log(self.lam) - eps / self.lam))
        if self.bandwidth_mode == INVGAMMA_LAMBDA_SQ_HALF:
            scale = self.lam**2 / 2
            return float(np.sum(IG_SHAPE * np.log(scale) - _LGAMMA_IG_SHAPE
                                - (IG_SHAPE + 1) * np.log(eps) - scale / eps))
        return 0.0

    def sample_bandwidths(self, rng: np.random.Generator, size) -> np.ndarray:
        """Draw bandwidths from the prior (constant for fixed modes)."""
        if self.bandwidth_mode == EXPONENTIAL_LAMBDA:
            return rng.exponential(self.lam, size=size)
        if self.bandwidth_mode == INVGAMMA_LAMBDA_SQ_HALF:
            return (self.lam**2 / 2) / rng.gamma(IG_SHAPE, size=size)
        return np.full(size, self.initial_bandwidth())


@dataclass
class SticksAndKnots:
    """Stick fractions ``V``, knots ``psi`` in the unit square, bandwidths ``eps``."""

    V: np.ndarray
    psi: np.ndarray
    eps: np.ndarray

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=float).ravel()
        K = self.V.shape[0]
        self.psi = np.asarray(self.psi, dtype=float).reshape(K, 2)
        self.eps = np.asarray(self.eps, dtype=float).reshape(K, 2)

    @property
    def K(self) -> int:
        return self.V.shape[0]

    def validate(self) -> None:
        if self.V[-1] != 1.0:
            raise ValueError("final stick must equal 1")
        if np.any(self.V <= 0) or np.any(self.V > 1):
            raise ValueError("stick fractions must lie in (0, 1]")
        if np.any(self.psi < 0) or np.any(self.psi > 1):
            raise ValueError("knots must lie in the unit square")
        if np.any(self.eps <= 0):
            raise ValueError("bandwidths must be positive")

    def copy(self) -> SticksAndKnots:
        return SticksAndKnots(self.V.copy(), self.psi.copy(), self.eps.copy())

    @classmethod
    def initial(cls, K: int, spec: KernelSpec, rng: np.random.Generator) -> SticksAndKnots:
        V = np.full(K, 0.5)
        V[-1] = 1.0
        psi = rng.uniform(size=(K, 2))
        eps = np.full((K, 2), spec.initial_bandwidth())
        return cls(V, psi, eps)


class UnitSquare:
    """Per-axis affine map of coordinates onto ``[0, 1]^2``."""

    def __init__(self, coords):
        coords = np.asarray(coords, dtype=float)
        self.lo = coords.min(axis=0)
        span = coords.max(axis=0) - self.lo
        self.span = np.where(span > 0, span, 1.0)

    def transform(self, coords) -> np.ndarray:
        return (np.asarray(coords, dtype=float) - self.lo) / self.span

    def inverse(self, unit) -> np.ndarray:
        return np.asarray(unit, dtype=float) * self.span + self.lo


def _check_eps(eps):
    if np.any(np.asarray(eps) <= 0):
        raise ValueError("kernel bandwidths must be positive")


def kernel_value(spec: KernelSpec, s, psi_i, eps_i) -> float:
    """Kernel weight of knot ``psi_i`` with bandwidth pair ``eps_i`` at point ``s``."""
    _check_eps(eps_i)
    return float(kernel_matrix(spec.family, np.reshape(s, (1, 2)),
                               np.reshape(psi_i, (1, 2)), np.reshape(eps_i, (1, 2)))[0, 0])


def kernel_matrix(family: str, coords, psi, eps) -> np.ndarray:
    """Kernel weights for every (location, knot) pair, shape (n, K)."""
    diff = np.abs(coords[:, None, :] - psi[None, :, :])
    if family == UNIFORM:
        return np.all(diff < eps[None, :, :] / 2, axis=2).astype(float)
    if family == SQEXP:
        return np.exp(-0.5 * np.sum((diff / eps[None, :, :]) ** 2, axis=2))
    raise ValueError(f"unknown kernel family {family!r}")


def local_sticks(sk: SticksAndKnots, family: str, coords) -> np.ndarray:
    """Location-specific stick fractions, final column pinned to 1."""
    Vs = kernel_matrix(family, coords, sk.psi, sk.eps) * sk.V[None, :]
    Vs[:, -1] = 1.0
    return Vs


def probs_from_sticks(Vs: np.ndarray) -> np.ndarray:
    remain = np.cumprod(1.0 - Vs[:, :-1], axis=1)
    p = Vs.copy()
    p[:, 1:-1] *= remain[:, :-1]
    p[:, -1] = remain[:, -1] if Vs.shape[1] > 1 else 1.0
    return p


def assignment_probs(sk: SticksAndKnots, spec: KernelSpec, coords) -> np.ndarray:
    """Per-location cluster probabilities, shape (n, K), rows summing to one."""
    sk.validate()
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    return probs_from_sticks(local_sticks(sk, spec.family, coords))


def log_assignment_probs(sk: SticksAndKnots, family: str, coords) -> np.ndarray:
    """Log of :func:`assignment_probs` without the validation overhead."""
    Vs = local_sticks(sk, family, coords)
    with np.errstate(divide="ignore"):
        logv = np.log(Vs)
        log1m = np.log1p(-Vs[:, :-1])
    out = logv.copy()
    out[:, 1:] += np.cumsum(log1m, axis=1)
    return out
