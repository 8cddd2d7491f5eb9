"""Clustering accuracy and estimation-quality metrics."""

import numpy as np


def _pairs(x):
    x = np.asarray(x, dtype=np.int64)
    return int(np.sum(x * (x - 1) // 2))


def rand_index(labels_a, labels_b) -> float:
    """Fraction of unordered location pairs on which two clusterings agree."""
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape:
        raise ValueError("labelings must have equal length")
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least two items")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    both = _pairs(table)
    same_a = _pairs(table.sum(axis=1))
    same_b = _pairs(table.sum(axis=0))
    total = n * (n - 1) // 2
    apart = total - same_a - same_b + both
    return (both + apart) / total


def _prepare(estimates, truth=None):
    est = np.asarray(estimates, dtype=float)
    if est.ndim == 2:
        est = est[:, :, None]
    if est.ndim != 3 or est.shape[0] < 1:
        raise ValueError("estimates must have shape (R, n, p) with R >= 1")
    if not np.all(np.isfinite(est)):
        raise ValueError("estimates must be finite")
    if truth is None:
        return est, None
    true = np.asarray(truth, dtype=float).reshape(est.shape[1], est.shape[2])
    if not np.all(np.isfinite(true)):
        raise ValueError("truth must be finite")
    return est, true


def mab(estimates, truth) -> np.ndarray:
    """Mean over locations of the replicate-averaged absolute error."""
    est, true = _prepare(estimates, truth)
    return np.mean(np.mean(np.abs(est - true), axis=0), axis=0)


def mmse(estimates, truth) -> np.ndarray:
    """Mean over locations of the replicate-averaged squared error."""
    est, true = _prepare(estimates, truth)
    return np.mean(np.mean((est - true) ** 2, axis=0), axis=0)


def msd(estimates) -> np.ndarray:
    """Mean over locations of the replicate standard deviation (divisor R - 1)."""
    est, _ = _prepare(estimates)
    if est.shape[0] < 2:
        raise ValueError("MSD needs at least two replicates")
    return np.mean(np.std(est, axis=0, ddof=1), axis=0)


def estimation_metrics(estimates, truth) -> dict:
    """MAB, MSD and MMSE per coefficient.

    Parameters
    ----------
    estimates : array_like, shape (R, n, p)
        Posterior estimates per replicate, location and coefficient; R >= 2.
    truth : array_like, shape (n, p)

    Returns
    -------
    dict
        Arrays of length p under ``"MAB"``, ``"MSD"`` and ``"MMSE"``.
    """
    return {"MAB": mab(estimates, truth), "MSD": msd(estimates), "MMSE": mmse(estimates, truth)}
