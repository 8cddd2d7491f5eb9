"""File formats: dataset/truth CSVs, trace CSV + log-likelihood JSON lines, summaries."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import pandas as pd

from spatialdp.graph import SpatialDataset, read_edge_list, write_edge_list
from spatialdp.inference import ClusterSummary
from spatialdp.sampler import Trace

TRACE_BLOCKS = ("Z", "beta", "mu", "Sigma", "sigma2", "V", "psi", "eps", "b")


def _fmt(x) -> str:
    # repr of a Python float is the shortest round-trip decimal
    return repr(float(x))


def write_dataset(path, data: SpatialDataset) -> None:
    """Write ``id,lon,lat,y,x1..xp``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "lon", "lat", "y"] + [f"x{j + 1}" for j in range(data.p)])
        for i in range(data.n):
            w.writerow([i, _fmt(data.coords[i, 0]), _fmt(data.coords[i, 1]), _fmt(data.y[i])]
                       + [_fmt(v) for v in data.X[i]])


def read_dataset(path, adjacency=None, lonlat: bool = True) -> SpatialDataset:
    """Read a dataset CSV (rows are reordered by ``id``, which must be 0..n-1)."""
    df = pd.read_csv(path, float_precision="round_trip")
    required = ["id", "lon", "lat", "y"]
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    xcols = sorted((c for c in df.columns if c.startswith("x") and c[1:].isdigit()),
                   key=lambda c: int(c[1:]))
    if not xcols:
        raise ValueError(f"{path}: no covariate columns x1..xp")
    df = df.sort_values("id")
    ids = df["id"].to_numpy()
    if not np.array_equal(ids, np.arange(len(df))):
        raise ValueError(f"{path}: ids must be exactly 0..n-1")
    edges = read_edge_list(adjacency) if adjacency is not None else np.zeros((0, 2), dtype=int)
    return SpatialDataset(coords=df[["lon", "lat"]].to_numpy(float), y=df["y"].to_numpy(float),
                          X=df[xcols].to_numpy(float), edges=edges, lonlat=lonlat)


def write_truth(path, regions, beta) -> None:
    """Write ``location,region,beta1..betap`` with 1-based regions."""
    beta = np.asarray(beta)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["location", "region"] + [f"beta{j + 1}" for j in range(beta.shape[1])])
        for i, (r, row) in enumerate(zip(regions, beta)):
            w.writerow([i, int(r) + 1] + [_fmt(v) for v in row])


def read_truth(path) -> tuple[np.ndarray, np.ndarray]:
    """Return (1-based regions, coefficient field) ordered by location."""
    df = pd.read_csv(path, float_precision="round_trip").sort_values("location")
    bcols = sorted((c for c in df.columns if c.startswith("beta")), key=lambda c: int(c[4:]))
    return df["region"].to_numpy(int), df[bcols].to_numpy(float)


def write_labels(path, labels) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["location_id", "cluster"])
        for i, lab in enumerate(labels):
            w.writerow([i, int(lab)])


def read_labels(path) -> np.ndarray:
    df = pd.read_csv(path, float_precision="round_trip")
    if list(df.columns[:2]) != ["location_id", "cluster"]:
        raise ValueError(f"{path}: expected columns location_id,cluster")
    return df.sort_values("location_id")["cluster"].to_numpy(int)


def write_summary(path, summary: ClusterSummary) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cluster", "coefficient", "mean", "hpd_lo", "hpd_hi", "size"])
        for cl, j, m, lo, hi, size in summary.rows():
            w.writerow([int(cl), j, _fmt(m), _fmt(lo), _fmt(hi), size])


def write_estimates(path, est) -> None:
    """Per-location coefficient estimates, ``location_id,beta1..betap``."""
    est = np.asarray(est)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["location_id"] + [f"beta{j + 1}" for j in range(est.shape[1])])
        for i, row in enumerate(est):
            w.writerow([i] + [_fmt(v) for v in row])


def read_estimates(path) -> np.ndarray:
    df = pd.read_csv(path, float_precision="round_trip").sort_values("location_id")
    bcols = sorted((c for c in df.columns if c.startswith("beta")), key=lambda c: int(c[4:]))
    return df[bcols].to_numpy(float)


def _block_array(trace: Trace, block: str) -> np.ndarray:
    a = getattr(trace, block)
    if block == "Z":
        return a + 1
    return a


def _value_strings(flat: np.ndarray, block: str) -> list:
    if block == "Z":
        return [str(v) for v in flat.ravel().tolist()]
    return [repr(v) for v in flat.ravel().astype(float).tolist()]


def write_trace(path, loglik_path, trace: Trace) -> None:
    """Long-format CSV ``iter,block,index,value`` plus one JSON line of pointwise
    log-likelihoods per kept draw.

    ``index`` is the dotted zero-based position within the block; allocations
    are written 1-based.
    """
    frames = []
    for block in TRACE_BLOCKS:
        a = np.asarray(_block_array(trace, block))
        M = a.shape[0]
        inner = a.shape[1:]
        if inner:
            idx = np.array([".".join(map(str, t)) for t in np.ndindex(*inner)])
        else:
            idx = np.array(["0"])
        flat = a.reshape(M, -1)
        frames.append(pd.DataFrame({
            "iter": np.repeat(trace.iteration, flat.shape[1]),
            "block": block,
            "index": np.tile(idx, M),
            "value": _value_strings(flat, block),
        }))
    df = pd.concat(frames, ignore_index=True)
    df.to_csv(path, index=False, lineterminator="\n")
    with open(loglik_path, "w") as fh:
        for t, row in zip(trace.iteration, trace.loglik):
            fh.write(json.dumps({"iter": int(t), "loglik": [float(v) for v in row]}) + "\n")


def read_trace(path, loglik_path=None) -> Trace:
    """Inverse of :func:`write_trace`; ``loglik_path`` defaults to ``loglik.jsonl`` beside ``path``."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"trace not found: {path}")
    df = pd.read_csv(path, dtype={"block": str, "index": str}, float_precision="round_trip")
    iters = np.unique(df["iter"].to_numpy())
    M = len(iters)
    arrays = {}
    for block in TRACE_BLOCKS:
        sub = df[df["block"] == block]
        first = sub[sub["iter"] == iters[0]]["index"].to_numpy()
        shape = tuple(int(v) + 1 for v in first[-1].split(".")) if block != "b" else ()
        vals = sub["value"].to_numpy(float).reshape((M,) + shape)
        arrays[block] = vals
    loglik_path = Path(loglik_path) if loglik_path else path.with_name("loglik.jsonl")
    if loglik_path.exists():
        with open(loglik_path) as fh:
            ll = np.array([json.loads(line)["loglik"] for line in fh if line.strip()])
    else:
        ll = np.zeros((M, arrays["Z"].shape[1]))
    return Trace(iteration=iters, Z=arrays["Z"].astype(int) - 1, beta=arrays["beta"],
                 mu=arrays["mu"], Sigma=arrays["Sigma"], sigma2=arrays["sigma2"], V=arrays["V"],
                 psi=arrays["psi"], eps=arrays["eps"], b=arrays["b"], loglik=ll)


def merge_geojson(src, dst, columns: dict) -> None:
    """Copy a FeatureCollection adding per-location properties.

    Features match locations by an integer ``id`` property when every feature
    has one, otherwise by order.
    """
    with open(src) as fh:
        gj = json.load(fh)
    feats = gj.get("features", [])
    n = len(next(iter(columns.values())))
    if len(feats) != n:
        raise ValueError(f"GeoJSON has {len(feats)} features, expected {n}")
    by_id = all("id" in (f.get("properties") or {}) for f in feats)
    for pos, f in enumerate(feats):
        props = f.setdefault("properties", {}) or {}
        f["properties"] = props
        i = int(props["id"]) if by_id else pos
        for name, vals in columns.items():
            props[name] = int(vals[i])
    with open(dst, "w") as fh:
        json.dump(gj, fh)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


__all__ = [
    "merge_geojson", "read_dataset", "read_edge_list", "read_estimates", "read_labels",
    "read_trace", "read_truth", "sha256", "write_dataset", "write_edge_list",
    "write_estimates", "write_labels", "write_summary", "write_trace", "write_truth",
]
