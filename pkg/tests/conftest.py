import sys

import numpy as np
import pytest

from spatialdp.graph import SpatialDataset


def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def random_dataset(rng, n, p, edge_prob=0.3, true_labels=None):
    """Small dataset with random covariates, responses and an Erdos-Renyi graph."""
    coords = np.column_stack([rng.uniform(-10, 10, n), rng.uniform(-60, 60, n)])
    X = rng.standard_normal((n, p))
    y = rng.standard_normal(n)
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < edge_prob]
    return SpatialDataset(coords=coords, y=y, X=X, edges=np.array(edges, dtype=int).reshape(-1, 2),
                          true_labels=true_labels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_state(rng, n, p, K, sigma_scale=1.0):
    """Valid ChainState with random atoms, SPD covariances and local variances."""
    from spatialdp.model import ChainState
    from spatialdp.stick import SticksAndKnots

    A = rng.standard_normal((K, p, p))
    Sigma = sigma_scale * (A @ np.transpose(A, (0, 2, 1)) / p + np.eye(p))
    V = np.append(rng.uniform(0.2, 0.8, K - 1), 1.0)
    sticks = SticksAndKnots(V, rng.uniform(size=(K, 2)), np.full((K, 2), 0.5))
    return ChainState(Z=rng.integers(0, K, n), beta=rng.standard_normal((K, p)),
                      mu=rng.standard_normal((K, p)), Sigma=Sigma,
                      sigma2=rng.uniform(0.5, 2.0, n), sticks=sticks, b=1.0)


def random_weights(rng, n, zero_prob=0.2):
    """Symmetric weights with unit diagonal and some zero (unreachable) pairs."""
    from spatialdp.graph import SpatialWeights

    w = rng.uniform(0.05, 1.0, (n, n))
    w = np.triu(w, 1)
    w[rng.random((n, n)) < zero_prob] = 0.0
    w = np.triu(w, 1)
    w = w + w.T + np.eye(n)
    return SpatialWeights(w, 1.0)
