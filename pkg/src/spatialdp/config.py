"""Flat ``section.key = value`` run configuration."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from spatialdp.model import Hyperparameters
from spatialdp.sampler import BLOCKS, SamplerConfig
from spatialdp.simgen import PARTITIONS, SimConfig
from spatialdp.stick import KERNEL_ROWS, KernelSpec


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none", "auto") else float(s)


def _floats(s: str) -> tuple:
    s = s.strip()
    if s.lower() in ("", "none"):
        return None
    return tuple(float(v) for v in s.replace(";", ",").split(","))


def _names(s: str) -> tuple:
    return tuple(v.strip() for v in s.split(",") if v.strip())


def _models(s: str) -> tuple:
    """``family:mode:K`` entries separated by commas."""
    out = []
    for entry in _names(s):
        parts = entry.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected family:bandwidth_mode:K, got {entry!r}")
        fam, mode, K = parts[0].strip(), parts[1].strip(), int(parts[2])
        if (fam, mode) not in KERNEL_ROWS:
            raise ValueError(f"unsupported kernel row {fam}:{mode}")
        out.append((fam, mode, K))
    return tuple(out)


def _opt_path(s: str):
    s = s.strip()
    return s or None


def _emit_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ", ".join(f"{a}:{b}:{c}" for a, b, c in v)
        return ", ".join(_emit_value(x) for x in v)
    return str(v)


# key -> (parser, default)
SCHEMA = {
    "data.dataset": (_opt_path, None),
    "data.adjacency": (_opt_path, None),
    "data.geojson": (_opt_path, None),
    "data.truth": (_opt_path, None),
    "data.distance": (str, "graph"),
    "hyper.K": (int, 9),
    "hyper.m": (_floats, None),
    "hyper.dk_scale": (float, 1.0),
    "hyper.ck": (_opt_float, None),
    "hyper.alpha1": (float, 2.0),
    "hyper.alpha2": (float, 1.0),
    "hyper.a_v": (float, 1.0),
    "hyper.b_v": (float, 1.0),
    "hyper.D": (float, 2.0),
    "kernel.family": (str, "SquaredExponential"),
    "kernel.bandwidth_mode": (str, "FixedLambdaSqHalf"),
    "kernel.lambda": (float, 1.0),
    "sampler.iterations": (int, 10000),
    "sampler.burn_in": (int, 2000),
    "sampler.thin": (int, 1),
    "sampler.seed": (int, 0),
    "sampler.step_beta": (float, 1.0),
    "sampler.step_v": (float, 1.0),
    "sampler.step_psi": (float, 0.1),
    "sampler.step_eps": (float, 0.3),
    "sampler.step_b": (float, 0.5),
    "sampler.adapt": (_bool, True),
    "sampler.init": (str, "random"),
    "sampler.beta_proposal": (str, "mala"),
    "sampler.precondition": (_bool, True),
    "sampler.fixed": (_names, ()),
    "sampler.sigma2_init": (_opt_float, None),
    "sim.nrow": (int, 12),
    "sim.ncol": (int, 13),
    "sim.p": (int, 6),
    "sim.regions": (int, 3),
    "sim.phi": (float, 0.3),
    "sim.amplitude": (float, 0.1),
    "sim.noise_sd": (float, 0.5),
    "sim.seed": (int, 0),
    "sim.base": (_floats, None),
    "sim.partition": (str, "bands"),
    "sim.kernel_lambda": (float, 0.5),
    "output.dir": (str, "out"),
    "compare.models": (_models, (("Uniform", "FixedLambda", 9),
                                 ("SquaredExponential", "FixedLambdaSqHalf", 9))),
}

PATH_KEYS = ("data.dataset", "data.adjacency", "data.geojson", "data.truth")


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration values keyed by ``section.key``."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def kernel(self, family=None, mode=None) -> KernelSpec:
        return KernelSpec(family or self["kernel.family"], mode or self["kernel.bandwidth_mode"],
                          self["kernel.lambda"])

    def sampler(self, seed: int | None = None) -> SamplerConfig:
        v = self.values
        return SamplerConfig(
            iterations=v["sampler.iterations"], burn_in=v["sampler.burn_in"],
            thin=v["sampler.thin"], seed=v["sampler.seed"] if seed is None else seed,
            step_beta=v["sampler.step_beta"], step_v=v["sampler.step_v"],
            step_psi=v["sampler.step_psi"], step_eps=v["sampler.step_eps"],
            step_b=v["sampler.step_b"], adapt=v["sampler.adapt"], init=v["sampler.init"],
            beta_proposal=v["sampler.beta_proposal"], precondition=v["sampler.precondition"],
            fixed=v["sampler.fixed"], sigma2_init=v["sampler.sigma2_init"],
        )

    def sim(self) -> SimConfig:
        v = self.values
        return SimConfig(nrow=v["sim.nrow"], ncol=v["sim.ncol"], p=v["sim.p"],
                         regions=v["sim.regions"], phi=v["sim.phi"],
                         amplitude=v["sim.amplitude"], noise_sd=v["sim.noise_sd"],
                         seed=v["sim.seed"], base=v["sim.base"], partition=v["sim.partition"],
                         kernel_lambda=v["sim.kernel_lambda"])

    def hyper(self, p: int, kernel: KernelSpec | None = None, K: int | None = None
              ) -> Hyperparameters:
        v = self.values
        m = v["hyper.m"]
        if m is None:
            m = np.zeros(p)
        elif len(m) == 1:
            m = np.full(p, m[0])
        elif len(m) != p:
            raise ConfigError(f"hyper.m has {len(m)} entries but the data have p = {p}")
        ck = v["hyper.ck"] if v["hyper.ck"] is not None else float(p + 2)
        return Hyperparameters(
            K=v["hyper.K"] if K is None else K, m=np.asarray(m, dtype=float),
            Dk=v["hyper.dk_scale"] * np.eye(p), ck=ck, alpha1=v["hyper.alpha1"],
            alpha2=v["hyper.alpha2"], a_v=v["hyper.a_v"], b_v=v["hyper.b_v"], D=v["hyper.D"],
            kernel=kernel or self.kernel(),
        )

    def emit(self) -> str:
        """Serialise every key; parsing the result yields an equal config."""
        return "".join(f"{k} = {_emit_value(self.values[k])}\n" for k in SCHEMA)

    def digest(self) -> str:
        return hashlib.sha256(self.emit().encode()).hexdigest()

    def with_values(self, **updates) -> RunConfig:
        vals = dict(self.values)
        for k, v in updates.items():
            vals[k.replace("__", ".")] = v
        return RunConfig(vals)


def _check(values: dict, lines: dict, path) -> None:
    def fail(key, msg):
        loc = f"{path}:{lines[key]}" if key in lines else str(path)
        raise ConfigError(f"{loc}: {key}: {msg}")

    it, bi = values["sampler.iterations"], values["sampler.burn_in"]
    if it < 1:
        fail("sampler.iterations", "must be at least 1")
    if not 0 <= bi < it:
        key = "sampler.burn_in" if "sampler.burn_in" in lines else "sampler.iterations"
        fail(key, f"sampler.burn_in ({bi}) must be >= 0 and less than sampler.iterations ({it})")
    if values["sampler.thin"] < 1:
        fail("sampler.thin", "must be at least 1")
    for key in ("sampler.step_beta", "sampler.step_v", "sampler.step_psi", "sampler.step_eps",
                "sampler.step_b", "hyper.dk_scale", "hyper.alpha1", "hyper.alpha2", "hyper.a_v",
                "hyper.b_v", "hyper.D", "kernel.lambda", "sim.phi", "sim.kernel_lambda"):
        if not values[key] > 0:
            fail(key, "must be positive")
    if values["hyper.K"] < 1:
        fail("hyper.K", "must be at least 1")
    if values["data.distance"] not in ("graph", "great-circle"):
        fail("data.distance", "must be 'graph' or 'great-circle'")
    if values["sampler.init"] not in ("random", "ols"):
        fail("sampler.init", "must be 'random' or 'ols'")
    if values["sampler.beta_proposal"] not in ("mala", "rw"):
        fail("sampler.beta_proposal", "must be 'mala' or 'rw'")
    bad = set(values["sampler.fixed"]) - set(BLOCKS)
    if bad:
        fail("sampler.fixed", f"unknown blocks {sorted(bad)}; choose from {list(BLOCKS)}")
    if (values["kernel.family"], values["kernel.bandwidth_mode"]) not in KERNEL_ROWS:
        fail("kernel.bandwidth_mode" if "kernel.bandwidth_mode" in lines else "kernel.family",
             f"unsupported pair ({values['kernel.family']}, {values['kernel.bandwidth_mode']})")
    for key in ("sim.nrow", "sim.ncol", "sim.p", "sim.regions"):
        if values[key] < 1:
            fail(key, "must be at least 1")
    if values["sim.noise_sd"] < 0 or values["sim.amplitude"] < 0:
        fail("sim.noise_sd" if values["sim.noise_sd"] < 0 else "sim.amplitude", "must be >= 0")
    if values["sim.partition"] not in PARTITIONS:
        fail("sim.partition", f"must be one of {list(PARTITIONS)}")
    base = values["sim.base"]
    if base is not None and len(base) != values["sim.regions"] * values["sim.p"]:
        fail("sim.base", "needs sim.regions * sim.p values")
    ck = values["hyper.ck"]
    if ck is not None and values["hyper.m"] is not None and not ck > len(values["hyper.m"]) - 1:
        fail("hyper.ck", "must exceed p - 1")
    for key in PATH_KEYS:
        p = values[key]
        if p is not None and not Path(p).exists():
            fail(key, f"file not found: {p}")


def parse_text(text: str, base_dir=None, path="<config>") -> RunConfig:
    values = {k: default for k, (_, default) in SCHEMA.items()}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'section.key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in lines:
            raise ConfigError(f"{path}:{lineno}: {key}: duplicate key (first on line {lines[key]})")
        try:
            parsed = SCHEMA[key][0](val)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {key}: {exc}") from None
        if key in PATH_KEYS and parsed is not None and base_dir is not None:
            parsed = str((Path(base_dir) / parsed).resolve()) if not Path(parsed).is_absolute() else parsed
        values[key] = parsed
        lines[key] = lineno
    _check(values, lines, path)
    return RunConfig(values)


def parse_config(path) -> RunConfig:
    """Read and validate a config file; relative data paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_text(path.read_text(), base_dir=path.parent, path=str(path))
