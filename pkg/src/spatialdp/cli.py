"""Command-line front end: ``spatialdp <verb> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from spatialdp import __version__
from spatialdp import io
from spatialdp.config import RunConfig, parse_config
from spatialdp.graph import graph_distances, great_circle_distances
from spatialdp.inference import canonical_labels, cluster_summary, dahl_configuration, \
    mode_configuration, waic
from spatialdp.metrics import mab, mmse, msd, rand_index
from spatialdp.sampler import Trace, run_chain
from spatialdp.simgen import simulate

log = logging.getLogger("spatialdp")


class _Staging:
    """Collect outputs in a scratch directory and publish them only on success."""

    def __init__(self, out: Path):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.dir = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out))
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.dir / name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                for name in self.files:
                    shutil.move(str(self.dir / name), str(self.out / name))
        finally:
            shutil.rmtree(self.dir, ignore_errors=True)
        return False


def _distances(cfg: RunConfig, data):
    if cfg["data.distance"] == "great-circle":
        return great_circle_distances(data.coords)
    return graph_distances(data)


def _load_data(cfg: RunConfig):
    if cfg["data.dataset"] is None:
        raise ValueError("data.dataset is required for this command")
    return io.read_dataset(cfg["data.dataset"], cfg["data.adjacency"])


def location_estimates(trace: Trace) -> np.ndarray:
    """Posterior mean of each location's coefficient vector ``beta_{Z_i}``."""
    M = len(trace)
    return trace.beta[np.arange(M)[:, None], trace.Z].mean(axis=0)


def _write_summaries(stage: _Staging, trace: Trace, geojson=None) -> dict:
    dahl_raw, best = dahl_configuration(trace.Z)
    dahl = canonical_labels(dahl_raw)
    mode = mode_configuration(trace.Z, align=True, reference=dahl)
    report = {"dahl_index": best, "n_kept": len(trace)}
    for tag, labels in (("dahl", dahl), ("mode", mode)):
        summ = cluster_summary(trace, labels, tag)
        io.write_labels(stage.path(f"labels_{tag}.csv"), labels)
        io.write_summary(stage.path(f"summary_{tag}.csv"), summ)
        report[f"clusters_{tag}"] = {str(int(c)): int(s) for c, s in zip(summ.clusters, summ.sizes)}
        report.setdefault("warnings", []).extend(summ.warnings)
    io.write_estimates(stage.path("estimates.csv"), location_estimates(trace))
    report["waic"] = waic(trace.loglik) if len(trace) >= 2 else None
    if geojson:
        io.merge_geojson(geojson, stage.path("clusters.geojson"),
                         {"cluster_dahl": dahl, "cluster_mode": mode})
    return report


def _finish(stage: _Staging, report: dict, extra: dict) -> None:
    with open(stage.path("report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    artifacts = {name: io.sha256(stage.dir / name) for name in sorted(stage.files)}
    manifest = {"package_version": __version__, "artifacts": artifacts, **extra}
    with open(stage.path("manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_fit(args) -> int:
    cfg = parse_config(args.config)
    out = Path(args.out or cfg["output.dir"])
    data = _load_data(cfg)
    sampler = cfg.sampler(args.seed)
    hyper = cfg.hyper(data.p)
    trace = run_chain(sampler, hyper, data, distances=_distances(cfg, data))
    with _Staging(out) as stage:
        (stage.path("config.txt")).write_text(cfg.emit())
        io.write_trace(stage.path("trace.csv"), stage.path("loglik.jsonl"), trace)
        report = _write_summaries(stage, trace, cfg["data.geojson"])
        report["acceptance"] = trace.acceptance_rates()
        report["steps"] = trace.steps
        _finish(stage, report, {"verb": "fit", "config_sha256": cfg.digest(), "seed": sampler.seed})
    print(f"fit: {len(trace)} draws, WAIC {report['waic']!r}, "
          f"{len(report['clusters_dahl'])} Dahl clusters -> {out}")
    return 0


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config)
    out = Path(args.out or cfg["output.dir"])
    sim = cfg.sim()
    data, beta = simulate(sim)
    with _Staging(out) as stage:
        io.write_dataset(stage.path("dataset.csv"), data)
        io.write_edge_list(stage.path("adjacency.txt"), data.edges)
        io.write_truth(stage.path("truth.csv"), data.true_labels, beta)
        _finish(stage, {"n": data.n, "p": data.p, "regions": sim.regions},
                {"verb": "simulate", "config_sha256": cfg.digest(), "seed": sim.seed})
    print(f"simulate: {data.n} locations, p = {data.p} -> {out}")
    return 0


def cmd_summarize(args) -> int:
    trace_path = Path(args.trace)
    trace = io.read_trace(trace_path, args.loglik)
    out = Path(args.out) if args.out else trace_path.parent
    with _Staging(out) as stage:
        report = _write_summaries(stage, trace, args.geojson)
        _finish(stage, report, {"verb": "summarize", "trace_sha256": io.sha256(trace_path)})
    print(f"summarize: {len(trace)} draws, WAIC {report['waic']!r} -> {out}")
    return 0


def cmd_metrics(args) -> int:
    labels = io.read_labels(args.labels)
    regions, beta_true = io.read_truth(args.truth)
    ri = rand_index(labels, regions)
    out = Path(args.out) if args.out else Path(args.labels).parent
    with _Staging(out) as stage:
        with open(stage.path("rand_index.csv"), "w") as fh:
            fh.write(f"rand_index,{ri!r}\n")
        if args.estimates:
            est = np.stack([io.read_estimates(p) for p in args.estimates])
            a, s = mab(est, beta_true), mmse(est, beta_true)
            d = msd(est) if est.shape[0] >= 2 else np.full(est.shape[2], np.nan)
            with open(stage.path("metrics.csv"), "w") as fh:
                fh.write("coefficient,MAB,MSD,MMSE\n")
                for j in range(est.shape[2]):
                    fh.write(f"{j + 1},{float(a[j])!r},{float(d[j])!r},{float(s[j])!r}\n")
    print(f"rand_index,{ri!r}")
    return 0


def cmd_waic_compare(args) -> int:
    cfg = parse_config(args.config)
    out = Path(args.out or cfg["output.dir"])
    data = _load_data(cfg)
    d = _distances(cfg, data)
    truth = io.read_truth(cfg["data.truth"])[0] if cfg["data.truth"] else None
    base_seed = cfg["sampler.seed"] if args.seed is None else args.seed
    rows = []
    for offset, (family, mode, K) in enumerate(cfg["compare.models"]):
        seed = base_seed + offset
        hyper = cfg.hyper(data.p, kernel=cfg.kernel(family, mode), K=K)
        trace = run_chain(cfg.sampler(seed), hyper, data, distances=d)
        labels = dahl_configuration(trace.Z)[0]
        ri = rand_index(labels, truth) if truth is not None else float("nan")
        rows.append((waic(trace.loglik), family, mode, K, seed, ri,
                     len(np.unique(labels))))
        log.info("%s/%s/K=%d: WAIC %.3f", family, mode, K, rows[-1][0])
    rows.sort(key=lambda r: r[0])
    with _Staging(out) as stage:
        with open(stage.path("waic_compare.csv"), "w") as fh:
            fh.write("family,bandwidth_mode,K,seed,waic,rand_index,n_clusters\n")
            for w, family, mode, K, seed, ri, nc in rows:
                fh.write(f"{family},{mode},{K},{seed},{w!r},{ri!r},{nc}\n")
        _finish(stage, {"best": {"family": rows[0][1], "bandwidth_mode": rows[0][2],
                                 "K": rows[0][3], "waic": rows[0][0]}},
                {"verb": "waic-compare", "config_sha256": cfg.digest(), "seed": base_seed})
    for w, family, mode, K, *_ in rows:
        print(f"{family},{mode},{K},{w!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spatialdp", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("fit", help="run the sampler and summarise the posterior")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("summarize", help="re-derive summaries from a stored trace")
    p.add_argument("--trace", required=True)
    p.add_argument("--loglik", help="pointwise log-likelihood file (default: beside the trace)")
    p.add_argument("--geojson")
    p.add_argument("--out")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("metrics", help="Rand index and estimation metrics against truth")
    p.add_argument("--labels", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--estimates", nargs="*", help="one estimates CSV per replicate")
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("waic-compare", help="fit each configured kernel row and rank by WAIC")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_waic_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - reported as a structured record
        record = {"status": "error", "verb": args.verb, "error": type(exc).__name__,
                  "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
