"""Experiment configuration: TOML (primary) or JSON files, resolved against
subcommand defaults."""
from __future__ import annotations

import copy
import itertools
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from covercert.errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DEFAULTS = {
    "divergences": {"eps": [0.1]},
    "spectral": {"tmax": 40},
    "covering-iid": {"eps": [0.1], "delta": [0.3], "trials": 500, "sizes": "auto", "size_margin": 1},
    "covering-expander": {"eps": [0.1], "delta": [0.5], "trials": 500, "K": "auto", "K_margin": 1},
    "excision-verify": {"K": [256], "samples": 10000, "windows_per_walk": 100},
    "bounds": {},
    "rates": {"kind": "wiretap"},
}
REQUIRED = {
    "divergences": ("ensemble",),
    "spectral": ("graph",),
    "covering-iid": ("ensemble",),
    "covering-expander": ("ensemble", "graph"),
    "excision-verify": ("ensemble", "graph"),
    "bounds": (),
    "rates": ("instance",),
}
GRID_KEYS = ("eps", "delta", "K", "A", "lambda", "alphabet", "C", "d", "sizes")


@dataclass
class ExperimentConfig:
    """Resolved parameters for one subcommand run; ``seed`` is mandatory."""

    subcommand: str
    seed: int
    params: dict
    base_dir: Path
    threads: int = 1

    def grid(self, *keys):
        """Cartesian product over the listed grid parameters, in key order."""
        values = [as_list(self.params[k]) for k in keys]
        for v in values:
            if not v:
                raise ConfigError("parameter grids must be nonempty")
        return list(itertools.product(*values))

    def resolved(self) -> dict:
        out = {"subcommand": self.subcommand, "seed": self.seed, "threads": self.threads}
        out.update(self.params)
        return out


def as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        if path.suffix.lower() == ".json":
            return json.loads(raw.decode())
        return tomllib.loads(raw.decode())
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None


def resolve(subcommand: str, data: dict, base_dir, seed=None, trials=None, threads=None) -> ExperimentConfig:
    """Merge ``data`` over defaults, apply command-line overrides and validate."""
    if subcommand not in DEFAULTS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    data = copy.deepcopy(data)
    section = data.pop(subcommand, None)
    if isinstance(section, dict):
        data.update(section)
    if seed is not None:
        data["seed"] = seed
    if "seed" not in data:
        raise ConfigError("config must set an integer 'seed' (or pass --seed)")
    try:
        master = int(data.pop("seed"))
    except (TypeError, ValueError):
        raise ConfigError("seed must be an integer") from None
    params = copy.deepcopy(DEFAULTS[subcommand])
    params.update(data)
    if trials is not None:
        params["trials"] = int(trials)
    n_threads = int(threads if threads is not None else params.pop("threads", 1))
    params.pop("threads", None)
    for key in REQUIRED[subcommand]:
        if key not in params:
            raise ConfigError(f"{subcommand} config needs '{key}'")
    for key in GRID_KEYS:
        if key in params and isinstance(params[key], list) and not params[key]:
            raise ConfigError(f"grid '{key}' must be nonempty")
    if "trials" in params and int(params["trials"]) < 100:
        raise ConfigError("trials must be at least 100")
    for key in ("ensemble", "graph"):
        spec = params.get(key)
        if isinstance(spec, dict):
            target = spec.get("generator", spec) if key == "ensemble" else spec
            if "generator" in spec or key == "graph":
                target.setdefault("seed", master)
    return ExperimentConfig(subcommand, master, params, Path(base_dir), max(1, n_threads))


def load(path, subcommand: str, **overrides) -> ExperimentConfig:
    return resolve(subcommand, read_config_file(path), Path(path).parent, **overrides)
