"""Blocked MCMC for the spatial stick-breaking clustered regression.

One sweep updates, in order: allocations, cluster atoms (gradient-informed
Metropolis-Hastings), the Normal-Inverse-Wishart level of each atom, the
local variances, the sticks/knots/kernel bandwidths, and the weight
bandwidth ``b``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit, logit

from spatialdp.graph import SpatialDataset, SpatialWeights, graph_distances, weight_matrix
from spatialdp.model import (
    ChainState,
    Hyperparameters,
    allocation_loglik,
    loglik_matrix,
    obs_weights,
    pointwise_loglik,
)
from spatialdp.stick import (
    SticksAndKnots,
    UnitSquare,
    kernel_matrix,
    local_sticks,
    probs_from_sticks,
)

log = logging.getLogger(__name__)

BLOCKS = ("Z", "beta", "mu_sigma", "sigma2", "sticks", "b")
STEP_BLOCKS = ("beta", "V", "psi", "eps", "b")
TARGET_ACCEPT = {"beta": 0.57, "V": 0.44, "psi": 0.44, "eps": 0.44, "b": 0.44}


class SamplerError(RuntimeError):
    """A block update failed; the message carries the iteration and block."""


@dataclass(frozen=True)
class SamplerConfig:
    """Run length, proposal scales and switches for :func:`run_chain`.

    ``step_beta`` is relative to the conditional posterior scale when
    ``precondition`` is on, absolute otherwise. ``fixed`` lists blocks held
    at their initial values.
    """

    iterations: int = 10000
    burn_in: int = 2000
    thin: int = 1
    seed: int = 0
    step_beta: float = 1.0
    step_v: float = 1.0
    step_psi: float = 0.1
    step_eps: float = 0.3
    step_b: float = 0.5
    adapt: bool = True
    init: str = "random"
    beta_proposal: str = "mala"
    precondition: bool = True
    fixed: tuple = ()
    sigma2_init: float | None = None
    check_states: bool = False

    def __post_init__(self):
        if self.iterations < 1 or not 0 <= self.burn_in < self.iterations:
            raise ValueError("require 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        for name in ("step_beta", "step_v", "step_psi", "step_eps", "step_b"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.init not in ("random", "ols"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.beta_proposal not in ("mala", "rw"):
            raise ValueError(f"unknown beta_proposal {self.beta_proposal!r}")
        unknown = set(self.fixed) - set(BLOCKS)
        if unknown:
            raise ValueError(f"unknown fixed blocks {sorted(unknown)}")
        object.__setattr__(self, "fixed", tuple(self.fixed))

    @property
    def n_kept(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def steps(self) -> dict:
        return {"beta": self.step_beta, "V": self.step_v, "psi": self.step_psi,
                "eps": self.step_eps, "b": self.step_b}


@dataclass
class Trace:
    """Thinned post-burn-in draws, stacked along the first axis."""

    iteration: np.ndarray
    Z: np.ndarray
    beta: np.ndarray
    mu: np.ndarray
    Sigma: np.ndarray
    sigma2: np.ndarray
    V: np.ndarray
    psi: np.ndarray
    eps: np.ndarray
    b: np.ndarray
    loglik: np.ndarray
    accepted: dict = field(default_factory=dict)
    proposed: dict = field(default_factory=dict)
    steps: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.Z.shape[0]

    def acceptance_rates(self) -> dict:
        return {k: (self.accepted[k] / self.proposed[k] if self.proposed.get(k) else float("nan"))
                for k in self.accepted}

    def state(self, c: int) -> ChainState:
        return ChainState(self.Z[c].copy(), self.beta[c].copy(), self.mu[c].copy(),
                          self.Sigma[c].copy(), self.sigma2[c].copy(),
                          SticksAndKnots(self.V[c], self.psi[c], self.eps[c]), float(self.b[c]))


# ---------------------------------------------------------------------------
# block updates


def sample_Z(state: ChainState, data: SpatialDataset, W: SpatialWeights, probs: np.ndarray,
             rng: np.random.Generator) -> np.ndarray:
    """Draw every allocation from its categorical full conditional."""
    with np.errstate(divide="ignore"):
        logits = loglik_matrix(state.beta, state.sigma2, data, W) + np.log(probs)
    mx = np.max(logits, axis=1, keepdims=True)
    if not np.all(np.isfinite(mx)):
        bad = np.flatnonzero(~np.isfinite(mx.ravel()))
        raise ValueError(f"allocation weights vanish at locations {bad[:5].tolist()}")
    w = np.exp(logits - mx)
    cdf = np.cumsum(w, axis=1)
    u = rng.random(data.n) * cdf[:, -1]
    Z = np.sum(cdf < u[:, None], axis=1)
    return np.minimum(Z, state.K - 1)


class _BetaTarget:
    """Gaussian full conditional of one atom in natural parameters.

    ``log pi(beta) = -beta' P beta / 2 + h' beta + const``.
    """

    def __init__(self, k, state, data, W):
        c = obs_weights(k, state, W)
        Sinv = linalg.cho_solve(linalg.cho_factor(state.Sigma[k], lower=True),
                                np.eye(state.beta.shape[1]))
        self.P = (data.X.T * c) @ data.X + Sinv
        self.P = 0.5 * (self.P + self.P.T)
        self.h = data.X.T @ (c * data.y) + Sinv @ state.mu[k]

    def logpdf(self, beta):
        return -0.5 * beta @ self.P @ beta + self.h @ beta

    def grad(self, beta):
        return self.h - self.P @ beta


def update_beta(k: int, state: ChainState, data: SpatialDataset, W: SpatialWeights,
                rng: np.random.Generator, step: float, proposal: str = "mala",
                precondition: bool = True) -> tuple[np.ndarray, bool]:
    """One Metropolis-Hastings move for atom ``k``.

    The Langevin proposal is ``beta + step**2 / 2 * M grad + step * M^{1/2} xi``
    with ``M`` the inverse conditional precision when ``precondition`` is set
    and the identity otherwise; ``proposal="rw"`` drops the drift.
    """
    target = _BetaTarget(k, state, data, W)
    beta = state.beta[k]
    p = beta.shape[0]
    if precondition:
        R = linalg.cholesky(target.P, lower=True)

        def mass(v):
            return linalg.cho_solve((R, True), v)

        def noise(xi):
            return linalg.solve_triangular(R.T, xi, lower=False)

        def quad(v):
            return v @ target.P @ v
    else:
        def mass(v):
            return v

        def noise(xi):
            return xi

        def quad(v):
            return v @ v

    drift = 0.5 * step**2 if proposal == "mala" else 0.0

    def mean(b):
        return b + drift * mass(target.grad(b)) if drift else b

    prop = mean(beta) + step * noise(rng.standard_normal(p))
    log_ratio = target.logpdf(prop) - target.logpdf(beta)
    if drift:
        log_ratio += (-quad(beta - mean(prop)) + quad(prop - mean(beta))) / (2 * step**2)
    u = rng.random()
    if not np.isfinite(log_ratio):
        return beta.copy(), False
    if np.log(u) < log_ratio:
        return prop, True
    return beta.copy(), False


def sample_inverse_wishart(scale: np.ndarray, dof: float, rng: np.random.Generator) -> np.ndarray:
    """Draw from ``IW(scale, dof)`` (mean ``scale / (dof - p - 1)``) by Bartlett factors."""
    p = scale.shape[0]
    A = np.zeros((p, p))
    A[np.diag_indices(p)] = np.sqrt(rng.chisquare(dof - np.arange(p)))
    A[np.tril_indices(p, -1)] = rng.standard_normal(p * (p - 1) // 2)
    # inverse of the Wishart(scale^-1, dof) draw L^-T A A' L^-1 is G G' with G = L A^-T
    L = linalg.cholesky(scale, lower=True)
    G = L @ linalg.solve_triangular(A, np.eye(p), lower=True).T
    return G @ G.T


def update_mu_sigma(k: int, state: ChainState, hyper: Hyperparameters,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Conjugate Normal-Inverse-Wishart draw given the single atom ``beta_k``."""
    beta = state.beta[k]
    dev = beta - hyper.m
    scale = hyper.Dk + 0.5 * np.outer(dev, dev)
    try:
        linalg.cholesky(scale, lower=True)
    except linalg.LinAlgError as exc:
        raise ValueError(f"posterior scale of cluster {k} not positive definite") from exc
    Sigma = sample_inverse_wishart(scale, hyper.ck + 1, rng)
    mean = 0.5 * (hyper.m + beta)
    mu = rng.multivariate_normal(mean, Sigma / 2, method="cholesky")
    return mu, Sigma


def update_sigma2(state: ChainState, data: SpatialDataset, W: SpatialWeights,
                  hyper: Hyperparameters, rng: np.random.Generator) -> np.ndarray:
    """Conjugate inverse-gamma draw of every local variance."""
    r = data.y[None, :] - state.beta[state.Z] @ data.X.T
    shape = hyper.alpha1 + 0.5 * W.n_eff
    rate = hyper.alpha2 + 0.5 * np.sum(W.w * r**2, axis=1)
    return rate / rng.gamma(shape)


class _StickTarget:
    """Allocation log-probability with a cached kernel matrix."""

    def __init__(self, sk: SticksAndKnots, family: str, coords: np.ndarray, Z: np.ndarray):
        self.family = family
        self.coords = coords
        self.Z = Z
        self.rows = np.arange(len(Z))
        self.L = kernel_matrix(family, coords, sk.psi, sk.eps)

    def column(self, psi_k, eps_k):
        return kernel_matrix(self.family, self.coords, psi_k[None, :], eps_k[None, :])[:, 0]

    def __call__(self, V, L=None) -> float:
        if len(self.Z) == 0:
            return 0.0
        Vs = (self.L if L is None else L) * V[None, :]
        Vs[:, -1] = 1.0
        Z = self.Z
        with np.errstate(divide="ignore"):
            out = np.log(Vs[self.rows, Z])
            log1m = np.log1p(-Vs[:, :-1])
        if Vs.shape[1] > 1:
            csum = np.cumsum(log1m, axis=1)
            has_prev = Z > 0
            out[has_prev] += csum[self.rows[has_prev], Z[has_prev] - 1]
        return float(np.sum(out))


def _reflect(x):
    x = np.mod(x, 2.0)
    return np.where(x > 1.0, 2.0 - x, x)


def update_sticks(state: ChainState, coords_unit: np.ndarray, hyper: Hyperparameters,
                  rng: np.random.Generator, steps: dict) -> tuple[SticksAndKnots, dict, dict]:
    """Metropolis-within-Gibbs sweep over stick fractions, knots and bandwidths.

    Returns the new sticks plus accepted and proposed counts per sub-block.
    """
    spec = hyper.kernel
    sk = state.sticks.copy()
    K = sk.K
    tgt = _StickTarget(sk, spec.family, coords_unit, state.Z)
    acc = {"V": 0, "psi": 0, "eps": 0}
    prop_n = {"V": 0, "psi": 0, "eps": 0}
    cur = tgt(sk.V)

    a, b = hyper.a_v, hyper.b_v
    for k in range(K - 1):
        v = sk.V[k]
        u_new = logit(v) + steps["V"] * rng.standard_normal()
        v_new = expit(u_new)
        prop_n["V"] += 1
        if not 0.0 < v_new < 1.0:
            rng.random()
            continue
        V_new = sk.V.copy()
        V_new[k] = v_new
        new = tgt(V_new)
        # Beta prior times the logit Jacobian v(1 - v)
        log_ratio = new - cur + a * (np.log(v_new) - np.log(v)) + b * (np.log1p(-v_new) - np.log1p(-v))
        if np.log(rng.random()) < log_ratio:
            sk.V = V_new
            cur = new
            acc["V"] += 1

    for k in range(K - 1):
        psi_new = _reflect(sk.psi[k] + steps["psi"] * rng.standard_normal(2))
        L_new = tgt.L.copy()
        L_new[:, k] = tgt.column(psi_new, sk.eps[k])
        new = tgt(sk.V, L_new)
        prop_n["psi"] += 1
        if np.log(rng.random()) < new - cur:
            sk.psi[k] = psi_new
            tgt.L = L_new
            cur = new
            acc["psi"] += 1

    if not spec.fixed:
        for k in range(K - 1):
            eps = sk.eps[k]
            eps_new = eps * np.exp(steps["eps"] * rng.standard_normal(2))
            L_new = tgt.L.copy()
            L_new[:, k] = tgt.column(sk.psi[k], eps_new)
            new = tgt(sk.V, L_new)
            log_ratio = (new - cur + spec.log_prior(eps_new) - spec.log_prior(eps)
                         + np.sum(np.log(eps_new) - np.log(eps)))
            prop_n["eps"] += 1
            if np.log(rng.random()) < log_ratio:
                sk.eps[k] = eps_new
                tgt.L = L_new
                cur = new
                acc["eps"] += 1
    return sk, acc, prop_n


def update_b(state: ChainState, data: SpatialDataset, d: np.ndarray, hyper: Hyperparameters,
             rng: np.random.Generator, step: float, W: SpatialWeights | None = None
             ) -> tuple[float, SpatialWeights, bool]:
    """Random-walk move on ``logit(b / D)``; weights are recomputed for the proposal."""
    D = hyper.D
    b = state.b
    if W is None:
        W = weight_matrix(d, b)
    b_new = D * expit(logit(b / D) + step * rng.standard_normal())
    u = rng.random()
    if not 0.0 < b_new < D:
        return b, W, False
    W_new = weight_matrix(d, b_new)
    trial = state.copy()
    trial.b = b_new
    log_ratio = (allocation_loglik(trial, data, W_new) - allocation_loglik(state, data, W)
                 + np.log(b_new) + np.log(D - b_new) - np.log(b) - np.log(D - b))
    if np.isfinite(log_ratio) and np.log(u) < log_ratio:
        return b_new, W_new, True
    return b, W, False


# ---------------------------------------------------------------------------
# driver


def initial_state(data: SpatialDataset, hyper: Hyperparameters, config: SamplerConfig,
                  rng: np.random.Generator) -> ChainState:
    n, p, K = data.n, data.p, hyper.K
    if config.init == "random":
        Z = rng.integers(0, K, size=n)
    else:
        coef, *_ = np.linalg.lstsq(data.X, data.y, rcond=None)
        resid = data.y - data.X @ coef
        score = resid * np.sign(data.X @ coef + 1e-12)
        edges = np.quantile(score, np.linspace(0, 1, K + 1)[1:-1])
        Z = np.searchsorted(edges, score, side="right")
    dof = hyper.ck - p - 1
    cov = hyper.Dk / dof if dof > 0 else np.eye(p)
    beta = rng.multivariate_normal(hyper.m, cov, size=K, method="cholesky")
    mu = np.tile(hyper.m, (K, 1))
    Sigma = np.tile(hyper.sigma_prior_mean(), (K, 1, 1))
    s2 = config.sigma2_init if config.sigma2_init is not None else float(np.var(data.y, ddof=1)) if n > 1 else 1.0
    sigma2 = np.full(n, s2)
    sticks = SticksAndKnots.initial(K, hyper.kernel, rng)
    return ChainState(Z, beta, mu, Sigma, sigma2, sticks, hyper.D / 2)


def run_chain(config: SamplerConfig, hyper: Hyperparameters, data: SpatialDataset,
              distances: np.ndarray | None = None, init: ChainState | None = None) -> Trace:
    """Run one chain and return its thinned post-burn-in trace.

    ``distances`` defaults to hop counts over the dataset's adjacency graph.
    """
    if data.n < 1:
        raise ValueError("need at least one location")
    if hyper.p != data.p:
        raise ValueError(f"hyperparameters are for p = {hyper.p}, data has p = {data.p}")
    rng = np.random.default_rng(config.seed)
    d = graph_distances(data) if distances is None else np.asarray(distances, dtype=float)
    coords_unit = UnitSquare(data.coords).transform(data.coords)
    state = initial_state(data, hyper, config, rng) if init is None else init.copy()
    fixed = set(config.fixed)
    W = weight_matrix(d, state.b)
    family = hyper.kernel.family

    n, p, K = data.n, data.p, hyper.K
    M = config.n_kept
    tr = Trace(
        iteration=np.zeros(M, dtype=int), Z=np.zeros((M, n), dtype=int),
        beta=np.zeros((M, K, p)), mu=np.zeros((M, K, p)), Sigma=np.zeros((M, K, p, p)),
        sigma2=np.zeros((M, n)), V=np.zeros((M, K)), psi=np.zeros((M, K, 2)),
        eps=np.zeros((M, K, 2)), b=np.zeros(M), loglik=np.zeros((M, n)),
        accepted={k: 0 for k in STEP_BLOCKS}, proposed={k: 0 for k in STEP_BLOCKS},
    )
    log_steps = {k: np.log(v) for k, v in config.steps().items()}
    kept = 0

    for t in range(config.iterations):
        steps = {k: float(np.exp(v)) for k, v in log_steps.items()}
        acc = {k: 0 for k in STEP_BLOCKS}
        prop = {k: 0 for k in STEP_BLOCKS}
        block = "Z"
        try:
            if "Z" not in fixed:
                probs = probs_from_sticks(local_sticks(state.sticks, family, coords_unit))
                state.Z = sample_Z(state, data, W, probs, rng)
            block = "beta"
            if "beta" not in fixed:
                for k in range(K):
                    state.beta[k], ok = update_beta(k, state, data, W, rng, steps["beta"],
                                                    config.beta_proposal, config.precondition)
                    acc["beta"] += ok
                    prop["beta"] += 1
            block = "mu_sigma"
            if "mu_sigma" not in fixed:
                for k in range(K):
                    state.mu[k], state.Sigma[k] = update_mu_sigma(k, state, hyper, rng)
            block = "sigma2"
            if "sigma2" not in fixed:
                state.sigma2 = update_sigma2(state, data, W, hyper, rng)
            block = "sticks"
            if "sticks" not in fixed:
                state.sticks, a_s, p_s = update_sticks(state, coords_unit, hyper, rng, steps)
                for key in a_s:
                    acc[key] += a_s[key]
                    prop[key] += p_s[key]
            block = "b"
            if "b" not in fixed:
                state.b, W, ok = update_b(state, data, d, hyper, rng, steps["b"], W)
                acc["b"] += ok
                prop["b"] += 1
        except (ValueError, linalg.LinAlgError) as exc:
            raise SamplerError(f"iteration {t}, block {block}: {exc}") from exc

        if t < config.burn_in:
            if config.adapt:
                gain = (t + 1) ** -0.6
                for key in STEP_BLOCKS:
                    if prop[key]:
                        rate = acc[key] / prop[key]
                        log_steps[key] += gain * (rate - TARGET_ACCEPT[key])
            continue
        for key in STEP_BLOCKS:
            tr.accepted[key] += acc[key]
            tr.proposed[key] += prop[key]
        offset = t - config.burn_in + 1
        if offset % config.thin == 0 and kept < M:
            if config.check_states:
                state.validate(hyper)
            tr.iteration[kept] = t
            tr.Z[kept] = state.Z
            tr.beta[kept] = state.beta
            tr.mu[kept] = state.mu
            tr.Sigma[kept] = state.Sigma
            tr.sigma2[kept] = state.sigma2
            tr.V[kept] = state.sticks.V
            tr.psi[kept] = state.sticks.psi
            tr.eps[kept] = state.sticks.eps
            tr.b[kept] = state.b
            tr.loglik[kept] = pointwise_loglik(state, data, coords_unit, family)
            kept += 1
        if t == config.burn_in and config.adapt:
            log.debug("adapted steps: %s", {k: float(np.exp(v)) for k, v in log_steps.items()})
    tr.steps = {k: float(np.exp(v)) for k, v in log_steps.items()}
    return tr
