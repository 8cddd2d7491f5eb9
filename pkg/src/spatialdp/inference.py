"""Posterior summaries: cluster configurations, HPD intervals and WAIC."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp


def membership_matrix(labels) -> np.ndarray:
    """``B[i, j] = 1`` iff locations ``i`` and ``j`` share a label."""
    labels = np.asarray(labels)
    return (labels[:, None] == labels[None, :]).astype(np.int8)


def _as_trace(Z_trace) -> np.ndarray:
    Z = np.asarray(Z_trace)
    if Z.ndim != 2 or Z.shape[0] < 1:
        raise ValueError("expected an (M, n) array of allocations with M >= 1")
    return Z


def posterior_similarity(Z_trace, chunk: int = 256) -> np.ndarray:
    """Average membership matrix over the trace."""
    Z = _as_trace(Z_trace)
    M, n = Z.shape
    acc = np.zeros((n, n))
    for start in range(0, M, chunk):
        block = Z[start:start + chunk]
        acc += np.sum(block[:, :, None] == block[:, None, :], axis=0)
    return acc / M


def dahl_configuration(Z_trace, chunk: int = 256) -> tuple[np.ndarray, int]:
    """Least-squares clustering.

    Returns the labels of the draw whose membership matrix is closest in
    squared error to the posterior similarity matrix, and that draw's
    zero-based position in the trace. Ties go to the earliest draw.
    """
    Z = _as_trace(Z_trace)
    M, n = Z.shape
    # integer co-clustering counts keep the loss exact, so ties are detected exactly
    S = np.zeros((n, n), dtype=np.int64)
    for start in range(0, M, chunk):
        block = Z[start:start + chunk]
        S += np.sum(block[:, :, None] == block[:, None, :], axis=0)
    # M^2 * sum (B - S/M)^2 = sum B (M^2 - 2 M S) + sum S^2, with B binary
    coef = M * M - 2 * M * S
    loss = np.empty(M, dtype=np.int64)
    for start in range(0, M, chunk):
        block = Z[start:start + chunk]
        B = (block[:, :, None] == block[:, None, :]).astype(np.int64)
        loss[start:start + chunk] = np.einsum("cij,ij->c", B, coef)
    best = int(np.argmin(loss))
    return Z[best].copy(), best


def overlap_map(labels, reference) -> dict:
    """Map each label in ``labels`` to the reference cluster it overlaps most.

    Ties go to the smallest reference label.
    """
    labels = np.asarray(labels)
    reference = np.asarray(reference)
    ref_ids = np.unique(reference)
    out = {}
    for k in np.unique(labels):
        counts = [np.count_nonzero(reference[labels == k] == g) for g in ref_ids]
        out[k] = ref_ids[int(np.argmax(counts))]
    return out


def align_to_reference(Z_trace, reference) -> np.ndarray:
    """Relabel every draw into the reference configuration's label space."""
    Z = _as_trace(Z_trace)
    out = np.empty_like(Z)
    for c in range(Z.shape[0]):
        mapping = overlap_map(Z[c], reference)
        out[c] = [mapping[k] for k in Z[c]]
    return out


def mode_configuration(Z_trace, align: bool = True, reference=None) -> np.ndarray:
    """Most frequent label per location; ties go to the smallest label.

    With ``align`` the draws are first relabelled by maximal overlap with
    ``reference`` (the Dahl configuration when not given), so the result
    lives in the reference's label space.
    """
    Z = _as_trace(Z_trace)
    if align:
        if reference is None:
            reference, _ = dahl_configuration(Z)
        Z = align_to_reference(Z, reference)
    ids = np.unique(Z)
    counts = np.stack([np.sum(Z == g, axis=0) for g in ids])
    return ids[np.argmax(counts, axis=0)]


def hpd_interval(samples, level: float = 0.95) -> tuple[float, float]:
    """Shortest interval spanning ``ceil(level * M)`` sorted draws."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    M = x.shape[0]
    if M < 2:
        raise ValueError("need at least two samples")
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    k = max(1, math.ceil(round(level * M, 9)))
    widths = x[k - 1:] - x[:M - k + 1]
    i = int(np.argmin(widths))
    return float(x[i]), float(x[i + k - 1])


def waic(pointwise) -> float:
    """Watanabe-Akaike criterion on the deviance scale (lower is better).

    ``pointwise`` is an (M draws, n observations) log-likelihood matrix.
    """
    ll = np.asarray(pointwise, dtype=float)
    if ll.ndim != 2 or ll.shape[0] < 2:
        raise ValueError("need an (M, n) matrix with M >= 2")
    if not np.all(np.isfinite(ll)):
        raise ValueError("pointwise log-likelihoods must be finite")
    M = ll.shape[0]
    lppd = np.sum(logsumexp(ll, axis=0) - np.log(M))
    p_waic = np.sum(np.var(ll, axis=0, ddof=1))
    return float(-2.0 * (lppd - p_waic))


@dataclass
class ClusterSummary:
    """Final configuration with per-cluster coefficient summaries.

    Row ``g`` of ``mean``/``hpd_lo``/``hpd_hi`` belongs to ``clusters[g]``.
    """

    labels: np.ndarray
    clusters: np.ndarray
    sizes: np.ndarray
    mean: np.ndarray
    hpd_lo: np.ndarray
    hpd_hi: np.ndarray
    method: str
    warnings: list = field(default_factory=list)

    def rows(self):
        """Yield ``(cluster, coefficient, mean, hpd_lo, hpd_hi, size)`` tuples."""
        for g, cl in enumerate(self.clusters):
            for j in range(self.mean.shape[1]):
                yield (cl, j + 1, self.mean[g, j], self.hpd_lo[g, j], self.hpd_hi[g, j],
                       int(self.sizes[g]))


def canonical_labels(labels) -> np.ndarray:
    """Relabel to 1, 2, ... in order of first appearance."""
    labels = np.asarray(labels)
    _, first = np.unique(labels, return_index=True)
    order = labels[np.sort(first)]
    lookup = {k: i + 1 for i, k in enumerate(order)}
    return np.array([lookup[k] for k in labels], dtype=int)


def cluster_summary(trace, labels, method: str, clusters=None, level: float = 0.95
                    ) -> ClusterSummary:
    """Pool each final cluster's matching atom across draws.

    For every draw the atom used is the one covering the largest share of the
    cluster's locations. Clusters listed in ``clusters`` without members are
    dropped and reported in ``warnings``.
    """
    labels = np.asarray(labels)
    Z = np.asarray(trace.Z)
    beta = np.asarray(trace.beta)
    if labels.shape[0] != Z.shape[1]:
        raise ValueError("labels must have one entry per location")
    M, K, p = beta.shape
    ids = np.unique(labels) if clusters is None else np.asarray(clusters)
    warnings = []
    keep = []
    for g in ids:
        if np.any(labels == g):
            keep.append(g)
        else:
            warnings.append(f"cluster {g} has no members; omitted")
    G = len(keep)
    mean = np.zeros((G, p))
    lo = np.zeros((G, p))
    hi = np.zeros((G, p))
    sizes = np.zeros(G, dtype=int)
    for gi, g in enumerate(keep):
        members = labels == g
        sizes[gi] = np.count_nonzero(members)
        counts = np.stack([np.sum(Z[:, members] == k, axis=1) for k in range(K)], axis=1)
        atom = np.argmax(counts, axis=1)
        draws = beta[np.arange(M), atom]
        mean[gi] = draws.mean(axis=0)
        for j in range(p):
            if M >= 2:
                lo[gi, j], hi[gi, j] = hpd_interval(draws[:, j], level)
            else:
                lo[gi, j] = hi[gi, j] = draws[0, j]
    return ClusterSummary(labels=labels, clusters=np.asarray(keep), sizes=sizes, mean=mean,
                          hpd_lo=lo, hpd_hi=hi, method=method, warnings=warnings)
