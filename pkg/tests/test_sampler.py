import math

import numpy as np
import pytest
from conftest import random_dataset, random_state, random_weights

from oracles import batch_means_se
from spatialdp import sampler as sampler_mod
from spatialdp.graph import SpatialDataset, SpatialWeights, graph_distances, grid_edges
from spatialdp.model import Hyperparameters
from spatialdp.sampler import (
    SamplerConfig,
    SamplerError,
    run_chain,
    sample_inverse_wishart,
    sample_Z,
    update_b,
    update_beta,
    update_mu_sigma,
    update_sigma2,
    update_sticks,
)
from spatialdp.stick import SQEXP, KernelSpec


def complete_graph(n):
    return np.array([(i, j) for i in range(n) for j in range(i + 1, n)], dtype=int).reshape(-1, 2)


# -- allocations


def test_single_category_allocates_everything(rng):
    data = random_dataset(rng, 10, 2)
    state = random_state(rng, 10, 2, 1)
    Z = sample_Z(state, data, random_weights(rng, 10), np.ones((10, 1)), rng)
    assert np.all(Z == 0)


def test_zero_prior_mass_never_chosen(rng):
    data = random_dataset(rng, 10, 2)
    state = random_state(rng, 10, 2, 3)
    probs = np.tile([0.5, 0.0, 0.5], (10, 1))
    for _ in range(200):
        assert not np.any(sample_Z(state, data, random_weights(rng, 10), probs, rng) == 1)


def test_equal_atoms_follow_prior_probabilities(rng):
    data = random_dataset(rng, 1, 2)
    state = random_state(rng, 1, 2, 2)
    state.beta[1] = state.beta[0]
    W = SpatialWeights(np.ones((1, 1)), 1.0)
    draws = np.array([sample_Z(state, data, W, np.array([[0.5, 0.5]]), rng)[0]
                      for _ in range(10000)])
    freq = np.mean(draws == 0)
    assert abs(freq - 0.5) <= 3 * math.sqrt(0.25 / 10000)


# -- cluster atoms


def scalar_conjugate_setup(rng, n=8):
    X = rng.standard_normal((n, 1))
    y = 1.5 * X[:, 0] + 0.3 * rng.standard_normal(n)
    data = SpatialDataset(coords=rng.uniform(size=(n, 2)), y=y, X=X, edges=complete_graph(n))
    state = random_state(rng, n, 1, 2)
    state.Z[:] = 0
    state.sigma2[:] = 0.7
    state.mu[0] = 0.2
    state.Sigma[0] = np.array([[2.0]])
    W = SpatialWeights(np.ones((n, n)), 1.0)
    prec = n * np.sum(X[:, 0] ** 2) / 0.7 + 1 / 2.0
    mean = (n * np.sum(X[:, 0] * y) / 0.7 + 0.2 / 2.0) / prec
    return data, state, W, mean, 1 / prec


@pytest.mark.parametrize("proposal,precondition,step", [("mala", True, 1.0), ("mala", False, 0.05),
                                                        ("rw", True, 1.0)])
def test_beta_conjugate_scalar_mean(rng, proposal, precondition, step):
    data, state, W, mean, var = scalar_conjugate_setup(rng)
    draws = np.empty(20000)
    acc = 0
    for t in range(draws.size):
        state.beta[0], ok = update_beta(0, state, data, W, rng, step, proposal, precondition)
        acc += ok
        draws[t] = state.beta[0, 0]
    draws = draws[2000:]
    assert 0 < acc < 20000
    assert abs(draws.mean() - mean) <= 3 * batch_means_se(draws)
    assert draws.var() == pytest.approx(var, rel=0.1)


def test_beta_vanishing_step_does_not_move(rng):
    data, state, W, *_ = scalar_conjugate_setup(rng)
    before = state.beta[0].copy()
    for precondition in (True, False):
        new, ok = update_beta(0, state, data, W, rng, 1e-12, "mala", precondition)
        assert ok
        np.testing.assert_allclose(new, before, atol=1e-9)


def test_empty_cluster_samples_prior(rng):
    n, p = 5, 2
    data = random_dataset(rng, n, p)
    state = random_state(rng, n, p, 2)
    state.Z[:] = 0
    state.Sigma[1] = np.array([[1.0, 0.6], [0.6, 2.0]])
    W = random_weights(rng, n)
    draws = np.empty((20000, p))
    for t in range(len(draws)):
        state.beta[1], _ = update_beta(1, state, data, W, rng, 1.0)
        draws[t] = state.beta[1]
    for j in range(p):
        assert abs(draws[:, j].mean() - state.mu[1, j]) <= 3 * batch_means_se(draws[:, j])
    np.testing.assert_allclose(np.cov(draws.T), state.Sigma[1], atol=0.08)


# -- Normal-Inverse-Wishart level


def test_inverse_wishart_mean(rng):
    scale = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 1.5]])
    dof = 12.0
    draws = np.array([sample_inverse_wishart(scale, dof, rng) for _ in range(20000)])
    np.testing.assert_allclose(draws.mean(axis=0), scale / (dof - 4), atol=0.01)
    assert all(np.all(np.linalg.eigvalsh(S) > 0) for S in draws[:100])


def test_mu_sigma_at_prior_mean(rng):
    hyper = Hyperparameters(K=1, m=np.array([1.0, -1.0]), Dk=np.eye(2), ck=8.0)
    state = random_state(rng, 3, 2, 1)
    state.beta[0] = hyper.m
    draws = [update_mu_sigma(0, state, hyper, rng) for _ in range(20000)]
    mu = np.array([d[0] for d in draws])
    Sig = np.array([d[1] for d in draws])
    # scale update adds nothing: Sigma ~ IW(Dk, ck + 1)
    np.testing.assert_allclose(Sig.mean(axis=0), np.eye(2) / (9 - 3), atol=0.01)
    for j in range(2):
        assert abs(mu[:, j].mean() - hyper.m[j]) <= 3 * mu[:, j].std() / math.sqrt(len(mu))


def test_sigma_concentrates_at_large_dof(rng):
    s0 = 0.8
    ck = 1e6
    hyper = Hyperparameters(K=1, m=np.zeros(2), Dk=ck * s0 * np.eye(2), ck=ck)
    state = random_state(rng, 3, 2, 1)
    for _ in range(20):
        _, Sigma = update_mu_sigma(0, state, hyper, rng)
        np.testing.assert_allclose(Sigma, s0 * np.eye(2), atol=0.01)


# -- local variances


def test_sigma2_zero_residuals(rng):
    n = 4
    X = rng.standard_normal((n, 2))
    beta = np.array([0.5, -0.25])
    data = SpatialDataset(coords=rng.uniform(size=(n, 2)), y=X @ beta, X=X, edges=np.zeros((0, 2)))
    state = random_state(rng, n, 2, 1)
    state.beta[0] = beta
    state.Z[:] = 0
    W = random_weights(rng, n)
    hyper = Hyperparameters.default(2, K=1, alpha1=2.0, alpha2=1.0)
    draws = np.array([update_sigma2(state, data, W, hyper, rng) for _ in range(20000)])
    expected = 1.0 / (2.0 + W.n_eff / 2 - 1)
    se = draws.std(axis=0) / math.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - expected) <= 3 * se)


def test_sigma2_prior_when_no_effective_data(rng):
    data = random_dataset(rng, 1, 1)
    state = random_state(rng, 1, 1, 1)
    hyper = Hyperparameters.default(1, K=1, alpha1=3.0, alpha2=2.0)
    # the location's only weight is excluded from its own sum here
    W = SpatialWeights(np.full((1, 1), 1e-300), 1.0)
    draws = np.array([update_sigma2(state, data, W, hyper, rng)[0] for _ in range(20000)])
    prior_mean = 2.0 / (3.0 + 0.5 - 1)
    assert abs(draws.mean() - prior_mean) <= 3 * draws.std() / math.sqrt(len(draws))


# -- sticks, knots and bandwidths


def stick_hyper(K, mode="InverseGamma_1p5_LambdaSqHalf", a_v=2.0, b_v=3.0, p=1):
    return Hyperparameters.default(p, K=K, a_v=a_v, b_v=b_v, kernel=KernelSpec(SQEXP, mode, 0.5))


def test_sticks_without_allocations_follow_prior(rng):
    hyper = stick_hyper(3)
    state = random_state(rng, 0, 1, 3)
    state.Z = np.zeros(0, dtype=int)
    steps = {"V": 1.0, "psi": 0.3, "eps": 0.5}
    V = np.empty((20000, 2))
    for t in range(len(V)):
        state.sticks, _, _ = update_sticks(state, np.zeros((0, 2)), hyper, rng, steps)
        V[t] = state.sticks.V[:2]
        assert state.sticks.V[-1] == 1.0
    for k in range(2):
        assert abs(V[:, k].mean() - 0.4) <= 3 * batch_means_se(V[:, k])


def test_sticks_keep_invariants(rng):
    hyper = stick_hyper(4)
    state = random_state(rng, 30, 1, 4)
    coords = rng.uniform(size=(30, 2))
    steps = {"V": 2.0, "psi": 5.0, "eps": 2.0}
    for _ in range(200):
        state.sticks, acc, prop = update_sticks(state, coords, hyper, rng, steps)
        state.sticks.validate()
        assert all(0 <= acc[k] <= prop[k] for k in acc)


def test_fixed_bandwidths_are_not_updated(rng):
    hyper = stick_hyper(3, mode="FixedLambdaSqHalf")
    state = random_state(rng, 20, 1, 3)
    eps0 = state.sticks.eps.copy()
    for _ in range(50):
        state.sticks, _, prop = update_sticks(state, rng.uniform(size=(20, 2)), hyper, rng,
                                              {"V": 1.0, "psi": 0.2, "eps": 1.0})
        assert prop["eps"] == 0
    np.testing.assert_array_equal(state.sticks.eps, eps0)


# -- weight bandwidth


def test_b_uniform_when_weights_do_not_depend_on_it(rng):
    n = 5
    data = SpatialDataset(coords=rng.uniform(size=(n, 2)), y=rng.standard_normal(n),
                          X=rng.standard_normal((n, 1)), edges=complete_graph(n))
    d = graph_distances(data)
    hyper = Hyperparameters.default(1, K=1, D=3.0)
    state = random_state(rng, n, 1, 1)
    state.b = 1.5
    draws = np.empty(30000)
    for t in range(len(draws)):
        state.b, _, _ = update_b(state, data, d, hyper, rng, 1.5)
        assert 0 < state.b < 3.0
        draws[t] = state.b
    assert abs(draws.mean() - 1.5) <= 3 * batch_means_se(draws)
    assert draws.var() == pytest.approx(9 / 12, rel=0.1)


def test_b_acceptance_strictly_inside_unit_interval(rng):
    data = SpatialDataset(coords=rng.uniform(size=(16, 2)), y=rng.standard_normal(16),
                          X=rng.standard_normal((16, 2)), edges=grid_edges(4, 4))
    d = graph_distances(data)
    hyper = Hyperparameters.default(2, K=2)
    state = random_state(rng, 16, 2, 2)
    W = None
    acc = 0
    for _ in range(1000):
        state.b, W, ok = update_b(state, data, d, hyper, rng, 0.5, W)
        acc += ok
    assert 0 < acc < 1000


# -- driver


def small_problem(seed=0, n=12, p=2, K=3):
    rng = np.random.default_rng(seed)
    coords = np.column_stack([np.repeat(np.arange(3), 4), np.tile(np.arange(4), 3)]).astype(float)
    X = rng.standard_normal((n, p))
    y = X @ np.ones(p) + 0.1 * rng.standard_normal(n)
    data = SpatialDataset(coords=coords, y=y, X=X, edges=grid_edges(3, 4), lonlat=False)
    return data, Hyperparameters.default(p, K=K)


def test_run_chain_shapes_and_counters():
    data, hyper = small_problem()
    cfg = SamplerConfig(iterations=53, burn_in=10, thin=4, seed=1, check_states=True)
    tr = run_chain(cfg, hyper, data)
    assert len(tr) == cfg.n_kept == 10
    assert tr.Z.shape == (10, 12) and tr.beta.shape == (10, 3, 2)
    assert tr.Sigma.shape == (10, 3, 2, 2) and tr.loglik.shape == (10, 12)
    assert np.all(np.isfinite(tr.loglik))
    assert np.all(np.diff(tr.iteration) == 4)
    rates = tr.acceptance_rates()
    assert math.isnan(rates.pop("eps"))  # fixed bandwidths are never proposed
    for rate in rates.values():
        assert 0 <= rate <= 1
    assert np.all(tr.V[:, -1] == 1.0)
    assert np.all((tr.b > 0) & (tr.b < hyper.D))


def test_run_chain_deterministic():
    data, hyper = small_problem()
    cfg = SamplerConfig(iterations=40, burn_in=10, seed=7)
    a, b = run_chain(cfg, hyper, data), run_chain(cfg, hyper, data)
    for name in ("Z", "beta", "mu", "Sigma", "sigma2", "V", "psi", "eps", "b", "loglik"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    c = run_chain(SamplerConfig(iterations=40, burn_in=10, seed=8), hyper, data)
    assert not np.array_equal(a.beta, c.beta)


def test_adaptation_stops_at_burn_in():
    data, hyper = small_problem()
    short = run_chain(SamplerConfig(iterations=31, burn_in=30, seed=3), hyper, data)
    long = run_chain(SamplerConfig(iterations=80, burn_in=30, seed=3), hyper, data)
    assert short.steps == long.steps
    frozen = run_chain(SamplerConfig(iterations=31, burn_in=30, seed=3, adapt=False), hyper, data)
    assert frozen.steps == pytest.approx(SamplerConfig().steps())


def test_fixed_blocks_hold_initial_values():
    data, hyper = small_problem()
    tr = run_chain(SamplerConfig(iterations=20, burn_in=5, seed=2, fixed=("sigma2", "b"),
                                 sigma2_init=0.3), hyper, data)
    assert np.all(tr.sigma2 == 0.3) and np.all(tr.b == hyper.D / 2)


def test_ols_initialisation_runs():
    data, hyper = small_problem()
    tr = run_chain(SamplerConfig(iterations=10, burn_in=2, seed=2, init="ols"), hyper, data)
    assert len(tr) == 8


def test_block_errors_carry_iteration(monkeypatch):
    data, hyper = small_problem()

    def broken(*args, **kwargs):
        raise ValueError("boom")

    monkeypatch.setattr(sampler_mod, "update_sigma2", broken)
    with pytest.raises(SamplerError, match="iteration 0, block sigma2: boom"):
        run_chain(SamplerConfig(iterations=5, burn_in=1), hyper, data)


@pytest.mark.parametrize("kwargs", [dict(burn_in=10, iterations=10), dict(thin=0),
                                    dict(step_beta=0.0), dict(init="kmeans"),
                                    dict(fixed=("nope",))])
def test_sampler_config_validation(kwargs):
    with pytest.raises(ValueError):
        SamplerConfig(**kwargs)


def test_hyper_dimension_mismatch():
    data, _ = small_problem()
    with pytest.raises(ValueError, match="p = 3"):
        run_chain(SamplerConfig(iterations=2, burn_in=1), Hyperparameters.default(3), data)
