"""Hierarchical model: hyperparameters, chain state and log-density terms.

The likelihood is the geographically weighted pseudo-likelihood: location
``i`` contributes ``sum_j log N(y_j; x_j' beta_{Z_i}, sigma2_i / w_ij)`` over
every ``j`` with ``w_ij > 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from spatialdp.graph import SpatialDataset, SpatialWeights
from spatialdp.stick import KernelSpec, SticksAndKnots, log_assignment_probs

LOG_2PI = float(np.log(2 * np.pi))


@dataclass(frozen=True)
class Hyperparameters:
    """Prior settings.

    Cluster atoms follow ``beta_k ~ N(mu_k, Sigma_k)``,
    ``mu_k | Sigma_k ~ N(m, Sigma_k)``, ``Sigma_k ~ IW(Dk, ck)``;
    ``sigma2(s) ~ IG(alpha1, alpha2)``; ``V_k ~ Beta(a_v, b_v)``;
    ``b ~ U(0, D)``.
    """

    K: int
    m: np.ndarray
    Dk: np.ndarray
    ck: float
    alpha1: float = 2.0
    alpha2: float = 1.0
    a_v: float = 1.0
    b_v: float = 1.0
    D: float = 2.0
    kernel: KernelSpec = field(default_factory=KernelSpec)

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.m, dtype=float))
        Dk = np.atleast_2d(np.asarray(self.Dk, dtype=float))
        p = m.shape[0]
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "Dk", Dk)
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if Dk.shape != (p, p) or not np.allclose(Dk, Dk.T):
            raise ValueError("Dk must be a symmetric p x p matrix")
        try:
            linalg.cholesky(Dk, lower=True)
        except linalg.LinAlgError as exc:
            raise ValueError("Dk must be positive definite") from exc
        if not self.ck > p - 1:
            raise ValueError(f"ck must exceed p - 1 = {p - 1}, got {self.ck}")
        for name in ("alpha1", "alpha2", "a_v", "b_v", "D"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def p(self) -> int:
        return self.m.shape[0]

    @classmethod
    def default(cls, p: int, K: int = 9, dk_scale: float = 1.0, ck: float | None = None,
                **kwargs) -> Hyperparameters:
        """Zero prior mean, ``Dk = dk_scale * I`` and ``ck = p + 2`` unless given."""
        return cls(K=K, m=np.zeros(p), Dk=dk_scale * np.eye(p),
                   ck=float(p + 2) if ck is None else ck, **kwargs)

    def sigma_prior_mean(self) -> np.ndarray:
        """Mean of ``IW(Dk, ck)`` where defined, else ``Dk``."""
        dof = self.ck - self.p - 1
        return self.Dk / dof if dof > 0 else self.Dk.copy()


@dataclass
class ChainState:
    """One MCMC state. Allocations ``Z`` are zero-based cluster indices."""

    Z: np.ndarray
    beta: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray
    sigma2: np.ndarray
    sticks: SticksAndKnots
    b: float

    @property
    def K(self) -> int:
        return self.beta.shape[0]

    def copy(self) -> ChainState:
        return ChainState(self.Z.copy(), self.beta.copy(), self.mu.copy(), self.Sigma.copy(),
                          self.sigma2.copy(), self.sticks.copy(), float(self.b))

    def validate(self, hyper: Hyperparameters) -> None:
        K = self.K
        if np.any(self.Z < 0) or np.any(self.Z >= K):
            raise ValueError("allocation out of range")
        if np.any(self.sigma2 <= 0) or not np.all(np.isfinite(self.sigma2)):
            raise ValueError("sigma2 must be positive and finite")
        if not 0 < self.b < hyper.D:
            raise ValueError("weight bandwidth outside (0, D)")
        for k in range(K):
            S = self.Sigma[k]
            if not np.allclose(S, S.T):
                raise ValueError(f"Sigma[{k}] not symmetric")
            linalg.cholesky(S, lower=True)
        self.sticks.validate()


def mvn_logpdf(x, mean, cov) -> float:
    """Multivariate normal log density via a Cholesky factor."""
    L = linalg.cholesky(cov, lower=True)
    z = linalg.solve_triangular(L, np.asarray(x) - mean, lower=True)
    return float(-0.5 * (len(z) * LOG_2PI + z @ z) - np.sum(np.log(np.diag(L))))


def _loglik_const(sigma2: np.ndarray, W: SpatialWeights) -> np.ndarray:
    """Residual-free part of each location's pseudo-log-likelihood."""
    return -0.5 * W.n_eff * (LOG_2PI + np.log(sigma2)) + 0.5 * W.log_w_sum


def local_log_likelihood(i: int, beta, state: ChainState, data: SpatialDataset,
                         W: SpatialWeights) -> float:
    """Weighted pseudo-log-likelihood of all observations at location ``i``."""
    w = W.w[i]
    if not np.any(w > 0):
        raise ValueError(f"location {i} has no positive weights")
    r2 = (data.y - data.X @ np.asarray(beta, dtype=float)) ** 2
    const = _loglik_const(state.sigma2[i:i + 1], SpatialWeights(W.w[i:i + 1], W.b))[0]
    return float(const - w @ r2 / (2 * state.sigma2[i]))


def loglik_matrix(beta: np.ndarray, sigma2: np.ndarray, data: SpatialDataset,
                  W: SpatialWeights) -> np.ndarray:
    """``local_log_likelihood`` for every location and every atom, shape (n, K)."""
    r2 = (data.y[:, None] - data.X @ beta.T) ** 2
    return _loglik_const(sigma2, W)[:, None] - (W.w @ r2) / (2 * sigma2[:, None])


def allocation_loglik(state: ChainState, data: SpatialDataset, W: SpatialWeights) -> float:
    """Full pseudo-log-likelihood at the current allocations."""
    r = data.y[None, :] - state.beta[state.Z] @ data.X.T  # (n_loc, n_obs)
    ss = np.sum(W.w * r**2, axis=1)
    return float(np.sum(_loglik_const(state.sigma2, W) - ss / (2 * state.sigma2)))


def obs_weights(k: int, state: ChainState, W: SpatialWeights) -> np.ndarray:
    """``c_j = sum_{i: Z_i = k} w_ij / sigma2_i`` for every observation ``j``."""
    members = state.Z == k
    return (1.0 / state.sigma2[members]) @ W.w[members]


def log_posterior_beta(k: int, beta, state: ChainState, data: SpatialDataset,
                       W: SpatialWeights) -> float:
    """Log full conditional of atom ``k`` up to an additive constant in the other blocks."""
    beta = np.asarray(beta, dtype=float)
    members = state.Z == k
    prior = mvn_logpdf(beta, state.mu[k], state.Sigma[k])
    if not np.any(members):
        return prior
    r2 = (data.y - data.X @ beta) ** 2
    c = (1.0 / state.sigma2[members]) @ W.w[members]
    const = np.sum(_loglik_const(state.sigma2[members], _rows(W, members)))
    return float(const - 0.5 * c @ r2 + prior)


def _rows(W: SpatialWeights, mask) -> SpatialWeights:
    return SpatialWeights(W.w[mask], W.b)


def grad_log_posterior_beta(k: int, beta, state: ChainState, data: SpatialDataset,
                            W: SpatialWeights) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    c = obs_weights(k, state, W)
    resid = data.y - data.X @ beta
    prior = linalg.cho_solve(linalg.cho_factor(state.Sigma[k], lower=True), beta - state.mu[k])
    return data.X.T @ (c * resid) - prior


def neg_hessian_beta(k: int, state: ChainState, data: SpatialDataset,
                     W: SpatialWeights) -> np.ndarray:
    """Negative Hessian of :func:`log_posterior_beta`; constant in ``beta``."""
    c = obs_weights(k, state, W)
    return (data.X.T * c) @ data.X + linalg.inv(state.Sigma[k])


def pointwise_loglik(state: ChainState, data: SpatialDataset, coords_unit: np.ndarray,
                     family: str) -> np.ndarray:
    """Per-observation log predictive density with the allocation summed out.

    ``log sum_k p_k(s_i) N(y_i; x_i' beta_k, sigma2_i)``.
    """
    logp = log_assignment_probs(state.sticks, family, coords_unit)
    resid = data.y[:, None] - data.X @ state.beta.T
    logn = -0.5 * (LOG_2PI + np.log(state.sigma2)[:, None] + resid**2 / state.sigma2[:, None])
    a = logp + logn
    amax = np.max(a, axis=1, keepdims=True)
    return (amax + np.log(np.sum(np.exp(a - amax), axis=1, keepdims=True))).ravel()
