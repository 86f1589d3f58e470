"""Experiment configuration files.

Configs are INI files (``configparser``) with sections ``environment``,
``methods``, ``grid``, ``splits``, ``curve`` and ``run``. See
``configs/*.ini`` for complete examples.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

ENV_KINDS = ("clusters", "circle", "csv")
BASE_METHODS = ("itl", "uncond", "mean_oracle")
FEATURE_KINDS = ("mean_inputs", "xy_outer", "circle", "rff")


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


@dataclass(frozen=True)
class EnvironmentConfig:
    kind: str = "clusters"
    variant: str = "one"
    d: int = 20
    n_tot: int = 20
    T_tot: int = 480
    snr: float = 1.0
    sigma_w: float = 1.0
    sigma_x: float = 1.0
    r: float = 8.0
    sigma: float = 1.0
    path: Optional[str] = None
    schema: str = "generic"

    @property
    def synthetic(self) -> bool:
        return self.kind != "csv"


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    methods: Tuple[str, ...] = ("itl", "uncond", "cond:mean_inputs")
    rff_k: int = 50
    rff_sigma: float = 10.0
    lambdas: Tuple[float, ...] = tuple(np.logspace(-5, 5, 14))
    gammas: Tuple[float, ...] = tuple(np.logspace(-5, 5, 14))
    T_tr: int = 300
    T_va: int = 100
    T_te: int = 80
    within_train_fraction: float = 0.5
    checkpoints: Tuple[int, ...] = ()
    seeds: Tuple[int, ...] = (0,)
    inner_mode: str = "online"
    loss: str = "absolute"
    output_dir: str = "out"
    source: Optional[str] = None

    def __post_init__(self):
        if not self.checkpoints:
            object.__setattr__(self, "checkpoints", default_checkpoints(self.T_tr))
        validate(self)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambdas"] = [float(v) for v in self.lambdas]
        out["gammas"] = [float(v) for v in self.gammas]
        out["methods"] = list(self.methods)
        out["checkpoints"] = list(self.checkpoints)
        out["seeds"] = list(self.seeds)
        return out


def default_checkpoints(T_tr: int, count: int = 10) -> Tuple[int, ...]:
    """``count`` log-spaced task counts in ``[10, T_tr]`` (deduplicated)."""
    lo = min(10, T_tr)
    pts = np.unique(np.round(np.logspace(np.log10(lo), np.log10(T_tr), count)).astype(int))
    return tuple(int(p) for p in pts)


def method_feature(method: str) -> Optional[str]:
    """Feature-map kind of a ``cond:<kind>`` method, else ``None``."""
    if method.startswith("cond:"):
        return method.split(":", 1)[1]
    return None


def method_label(method: str) -> str:
    feat = method_feature(method)
    return f"cond-{feat}" if feat else method


def validate(cfg: ExperimentConfig) -> None:
    env = cfg.env
    if env.kind not in ENV_KINDS:
        raise ConfigError(f"environment kind must be one of {ENV_KINDS}, got {env.kind!r}")
    if env.kind == "csv" and not env.path:
        raise ConfigError("csv environment needs a path")
    if env.kind == "clusters" and env.variant not in ("one", "two_mean4", "two_mean0"):
        raise ConfigError(f"unknown clusters variant {env.variant!r}")
    if env.kind != "csv" and (env.d < 1 or env.n_tot < 2 or env.T_tot < 1):
        raise ConfigError("d, n_tot and T_tot must be positive (n_tot >= 2)")
    for m in cfg.methods:
        feat = method_feature(m)
        if feat is None and m not in BASE_METHODS:
            raise ConfigError(f"unknown method {m!r}")
        if feat is not None and feat not in FEATURE_KINDS:
            raise ConfigError(f"unknown feature map {feat!r} in method {m!r}")
    if len(set(cfg.methods)) != len(cfg.methods):
        raise ConfigError("duplicate methods")
    if not cfg.lambdas or not cfg.gammas:
        raise ConfigError("hyperparameter grids must be non-empty")
    if any(not v > 0 for v in cfg.lambdas):
        raise ConfigError("lambda values must be > 0")
    if any(v < 0 for v in cfg.gammas):
        raise ConfigError("gamma values must be >= 0")
    if cfg.T_tr < 1 or cfg.T_va < 1 or cfg.T_te < 1:
        raise ConfigError("T_tr, T_va and T_te must be >= 1")
    if env.kind != "csv" and cfg.T_tr + cfg.T_va + cfg.T_te > env.T_tot:
        raise ConfigError("T_tr + T_va + T_te exceeds T_tot")
    if not 0 < cfg.within_train_fraction < 1:
        raise ConfigError("within_train_fraction must lie in (0, 1)")
    if any(c < 1 or c > cfg.T_tr for c in cfg.checkpoints):
        raise ConfigError("checkpoints must lie in [1, T_tr]")
    if list(cfg.checkpoints) != sorted(set(cfg.checkpoints)):
        raise ConfigError("checkpoints must be strictly increasing")
    if not cfg.seeds:
        raise ConfigError("at least one seed required")
    if cfg.inner_mode not in ("online", "batch"):
        raise ConfigError(f"inner_mode must be online or batch, got {cfg.inner_mode!r}")
    if cfg.loss not in ("absolute", "squared"):
        raise ConfigError(f"loss must be absolute or squared, got {cfg.loss!r}")
    if cfg.rff_k < 1 or not cfg.rff_sigma > 0:
        raise ConfigError("rff_k must be >= 1 and rff_sigma > 0")


def _floats(text: str) -> List[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def _grid(sec, name: str, default) -> Tuple[float, ...]:
    if sec is None:
        return default
    if f"{name}_values" in sec:
        return tuple(_floats(sec[f"{name}_values"]))
    if any(f"{name}_{k}" in sec for k in ("count", "min", "max")):
        count = sec.getint(f"{name}_count", 14)
        lo = sec.getfloat(f"{name}_min", 1e-5)
        hi = sec.getfloat(f"{name}_max", 1e5)
        if count < 1 or not (0 < lo <= hi):
            raise ConfigError(f"bad {name} grid range")
        return tuple(float(v) for v in np.logspace(np.log10(lo), np.log10(hi), count))
    return default


def load_config(path) -> ExperimentConfig:
    """Parse an INI experiment file; raises :class:`ConfigError`."""
    path = Path(path)
    parser = configparser.ConfigParser()
    try:
        with path.open(encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return _from_parser(parser, path)
    except (ValueError, KeyError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc


def _from_parser(parser: configparser.ConfigParser, path: Path) -> ExperimentConfig:
    known = {"environment", "methods", "grid", "splits", "curve", "run"}
    extra = set(parser.sections()) - known
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    defaults = ExperimentConfig.__dataclass_fields__
    env_kw = {}
    if parser.has_section("environment"):
        sec = parser["environment"]
        # configparser lowercases keys, so match field names case-insensitively
        fields = {f.name.lower(): f for f in EnvironmentConfig.__dataclass_fields__.values()}
        for low, raw in sec.items():
            if low not in fields:
                raise ConfigError(f"unknown environment key {low!r}")
            key, t = fields[low].name, fields[low].type
            if t == "int":
                env_kw[key] = int(raw)
            elif t == "float":
                env_kw[key] = float(raw)
            else:
                env_kw[key] = raw.strip()
        if env_kw.get("path") and not Path(env_kw["path"]).is_absolute():
            env_kw["path"] = str((path.parent / env_kw["path"]).resolve())
    env = EnvironmentConfig(**env_kw)
    kw = {"env": env, "source": str(path)}

    if parser.has_section("methods"):
        sec = parser["methods"]
        if "methods" in sec:
            kw["methods"] = tuple(m for m in sec["methods"].replace(",", " ").split())
        if "rff_k" in sec:
            kw["rff_k"] = sec.getint("rff_k")
        if "rff_sigma" in sec:
            kw["rff_sigma"] = sec.getfloat("rff_sigma")
    grid = parser["grid"] if parser.has_section("grid") else None
    kw["lambdas"] = _grid(grid, "lambda", defaults["lambdas"].default)
    kw["gammas"] = _grid(grid, "gamma", defaults["gammas"].default)
    if parser.has_section("splits"):
        sec = parser["splits"]
        for key in ("T_tr", "T_va", "T_te"):
            if key.lower() in sec:
                kw[key] = sec.getint(key.lower())
        if "within_train_fraction" in sec:
            kw["within_train_fraction"] = sec.getfloat("within_train_fraction")
    if parser.has_section("curve"):
        sec = parser["curve"]
        if "checkpoints" in sec:
            kw["checkpoints"] = tuple(_ints(sec["checkpoints"]))
        elif "count" in sec:
            kw["checkpoints"] = default_checkpoints(kw.get("T_tr", 300), sec.getint("count"))
    if parser.has_section("run"):
        sec = parser["run"]
        if "seeds" in sec:
            kw["seeds"] = tuple(_ints(sec["seeds"]))
        for key in ("inner_mode", "loss", "output_dir"):
            if key in sec:
                kw[key] = sec[key].strip()
        if "output_dir" in kw and not Path(kw["output_dir"]).is_absolute():
            kw["output_dir"] = str((path.parent / kw["output_dir"]).resolve())
    return ExperimentConfig(**kw)
