"""Spatial data container, distance matrices and distance-decay weights."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

#: Marker for pairs of locations with no connecting path.
UNREACHABLE = np.inf

EARTH_RADIUS_KM = 6371.0


@dataclass(frozen=True)
class SpatialDataset:
    """Observed areal data.

    Parameters
    ----------
    coords : ndarray, shape (n, 2)
        Planar coordinates or (lon, lat) in degrees.
    y : ndarray, shape (n,)
    X : ndarray, shape (n, p)
    edges : ndarray, shape (m, 2)
        Undirected adjacency as zero-based index pairs, each edge listed once.
    true_labels : ndarray, shape (n,), optional
        Simulation truth only.
    lonlat : bool
        Whether ``coords`` hold longitude/latitude.
    """

    coords: np.ndarray
    y: np.ndarray
    X: np.ndarray
    edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    true_labels: np.ndarray | None = None
    lonlat: bool = True

    def __post_init__(self):
        coords = np.atleast_2d(np.asarray(self.coords, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        edges = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        n = y.shape[0]
        if coords.shape != (n, 2):
            raise ValueError(f"coords must have shape ({n}, 2), got {coords.shape}")
        if X.shape[0] != n or X.shape[1] < 1:
            raise ValueError(f"X must have {n} rows and at least one column, got {X.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.all(np.isfinite(coords))):
            raise ValueError("coords, y and X must be finite")
        if self.lonlat and np.any(np.abs(coords[:, 1]) > 90.0):
            raise ValueError("latitude outside [-90, 90]")
        if edges.size:
            if edges.min() < 0 or edges.max() >= n:
                raise ValueError("adjacency references an index outside 0..n-1")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise ValueError("adjacency contains a self-loop")
            # store each undirected edge once, smaller index first
            edges = np.unique(np.sort(edges, axis=1), axis=0)
        labels = self.true_labels
        if labels is not None:
            labels = np.asarray(labels, dtype=int).ravel()
            if labels.shape[0] != n:
                raise ValueError("true_labels must have length n")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "true_labels", labels)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def adjacency_matrix(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency matrix."""
        A = np.zeros((self.n, self.n), dtype=bool)
        if self.edges.size:
            A[self.edges[:, 0], self.edges[:, 1]] = True
            A[self.edges[:, 1], self.edges[:, 0]] = True
        return A


@dataclass(frozen=True)
class SpatialWeights:
    """Observation weights ``w[i, j]`` used when estimating at location ``i``."""

    w: np.ndarray
    b: float

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @cached_property
    def n_eff(self) -> np.ndarray:
        """Per-row count of strictly positive weights."""
        return np.count_nonzero(self.w > 0, axis=1)

    @cached_property
    def log_w_sum(self) -> np.ndarray:
        """Per-row sum of ``log w`` over positive weights."""
        with np.errstate(divide="ignore"):
            lw = np.log(self.w)
        return np.where(self.w > 0, lw, 0.0).sum(axis=1)


def graph_distances(dataset: SpatialDataset) -> np.ndarray:
    """Hop-count distances over the adjacency graph.

    Disconnected pairs are set to :data:`UNREACHABLE`.
    """
    n = dataset.n
    e = dataset.edges
    data = np.ones(len(e), dtype=float)
    graph = coo_matrix((data, (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()
    d = shortest_path(graph, method="D", directed=False, unweighted=True)
    d.setflags(write=False)
    return d


def great_circle_distances(coords, radius: float = EARTH_RADIUS_KM) -> np.ndarray:
    """Haversine distances in km between (lon, lat) points given in degrees."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    lon, lat = np.radians(coords[:, 0]), np.radians(coords[:, 1])
    if np.any(np.abs(coords[:, 1]) > 90.0):
        raise ValueError("latitude outside [-90, 90]")
    dlat = lat[:, None] - lat[None, :]
    dlon = lon[:, None] - lon[None, :]
    h = np.sin(dlat / 2) ** 2 + np.cos(lat[:, None]) * np.cos(lat[None, :]) * np.sin(dlon / 2) ** 2
    d = 2 * radius * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


def weight_matrix(d: np.ndarray, b: float) -> SpatialWeights:
    """Unit weight within distance 1, ``exp(-d / b)`` beyond, 0 if unreachable."""
    if not b > 0:
        raise ValueError(f"bandwidth must be positive, got {b}")
    d = np.asarray(d, dtype=float)
    with np.errstate(over="ignore"):
        w = np.where(d <= 1.0, 1.0, np.exp(-d / b))
    w.setflags(write=False)
    return SpatialWeights(w=w, b=float(b))


def read_edge_list(path) -> np.ndarray:
    """Read a two-column zero-based edge list; ``#`` starts a comment."""
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected two indices, got {line!r}")
            pairs.append((int(parts[0]), int(parts[1])))
    return np.asarray(pairs, dtype=int).reshape(-1, 2)


def write_edge_list(path, edges) -> None:
    with open(path, "w") as fh:
        fh.write("# undirected edges, zero-based location indices\n")
        for i, j in np.asarray(edges, dtype=int).reshape(-1, 2):
            fh.write(f"{i} {j}\n")


def grid_edges(nrow: int, ncol: int) -> np.ndarray:
    """Rook (4-neighbour) adjacency of a row-major ``nrow x ncol`` grid."""
    idx = np.arange(nrow * ncol).reshape(nrow, ncol)
    horiz = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    vert = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    return np.vstack([horiz, vert])
