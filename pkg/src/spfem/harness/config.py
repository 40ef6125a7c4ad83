"""Experiment configuration: INI-style files plus command-line overrides."""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

from ..mesh import ConvexPolygon, regular_polygon, unit_square
from ..weights import FeatureSet, ap_range

EXPERIMENTS = (
    "ap-sweep",
    "stability-sweep",
    "convergence-delta",
    "convergence-line",
    "apriori-divq",
    "poincare",
    "green-verify",
    "localization",
    "maximal-probes",
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    domain: str = "unit_square"
    features: str = "point 0.5 0.5"
    lambdas: tuple[float, ...] = (0.0,)
    ps: tuple[float, ...] = (2.0,)
    generations: int = 4
    base_n: int = 8
    quad_levels: int = 6
    quad_degree: int = 4
    solver_tol: float = 1e-10
    seed: int = 0
    out: str = "results"
    workers: int = 1
    options: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.generations < 3:
            raise ConfigError("generations must be >= 3 (trend columns need three values)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        self.feature_set()  # validates

    # ---------------------------------------------------------------- views
    def polygon(self) -> ConvexPolygon:
        if self.domain == "unit_square":
            return unit_square()
        if self.domain == "pentagon":
            return regular_polygon(5, 0.5, (0.5, 0.5))
        raise ConfigError(f"unknown domain {self.domain!r} (use unit_square or pentagon)")

    def feature_set(self) -> FeatureSet:
        try:
            return FeatureSet.from_text(self.features)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def opt(self, key: str, default=None, cast=str):
        for k, v in self.options:
            if k == key:
                return cast(v)
        return default

    def opt_list(self, key: str, default=(), cast=float):
        raw = self.opt(key)
        if raw is None:
            return tuple(default)
        return tuple(cast(s) for s in raw.replace(";", " ").replace(",", " ").split())

    def classify(self, lam: float, p: float, k: int | None = None) -> str:
        """in-range / endpoint / out-of-range w.r.t. the A_p interval (prediction only)."""
        k = self.feature_set().k if k is None else k
        lo, hi = ap_range(2, k, p)
        if lo < lam < hi:
            return "in-range"
        if lam in (lo, hi):
            return "endpoint"
        return "out-of-range"

    def config_hash(self) -> str:
        d = asdict(self)
        d.pop("out")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def as_dict(self) -> dict:
        d = asdict(self)
        d["options"] = dict(self.options)
        return d


DEFAULTS: dict[str, dict] = {
    "ap-sweep": dict(features="point 0 0", ps=(2.0,), lambdas=(), generations=3,
                     options=dict(depth="8", samples="16", span="3", threshold="1.5", box="-1 -1 2")),
    "stability-sweep": dict(lambdas=(0.0, -0.5, 0.5), ps=(2.0, 4.0), generations=4, base_n=8,
                            options=dict(function="sinsin")),
    "convergence-delta": dict(lambdas=(1.0,), generations=4, base_n=8, options=dict(x0="0.5 0.5")),
    "convergence-line": dict(features="segment 0.25 0.5 0.75 0.5", lambdas=(0.5,), generations=4, base_n=8,
                             quad_levels=3, options=dict(density="1", ratio_max="0.95")),
    "apriori-divq": dict(lambdas=(1.0,), ps=(2.0,), generations=4, base_n=8),
    "poincare": dict(lambdas=(0.0, -0.5), ps=(2.0,), generations=4, base_n=8),
    "green-verify": dict(generations=3, base_n=16, options=dict(holder_base_n="32", gamma="0.5")),
    "localization": dict(generations=3, base_n=16, lambdas=(0.5, 1.0, 2.0, 3.0),
                         options=dict(function="sinsin", quad_levels="3")),
    "maximal-probes": dict(generations=3, base_n=64, options=dict(resolutions="32,64,128")),
}


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.replace(";", ",").split(",") if x.strip())


_CASTS = {
    "domain": str, "features": str, "lambdas": _floats, "ps": _floats, "generations": int, "base_n": int,
    "quad_levels": int, "quad_degree": int, "solver_tol": float, "seed": int, "out": str, "workers": int,
}
_ALIASES = {"lambda": "lambdas", "p": "ps"}


def make_config(experiment: str, ini_path=None, **overrides) -> ExperimentConfig:
    """Defaults for ``experiment``, then the INI file ([common] and [<experiment>]), then overrides."""
    base = dict(DEFAULTS.get(experiment, {}))
    options = dict(base.pop("options", {}))
    values = dict(base)
    if ini_path is not None:
        cp = configparser.ConfigParser()
        if not cp.read(ini_path):
            raise ConfigError(f"cannot read config file {ini_path}")
        for section in ("common", experiment):
            if not cp.has_section(section):
                continue
            for key, raw in cp.items(section):
                key = _ALIASES.get(key, key)
                if key in _CASTS:
                    values[key] = _CASTS[key](raw)
                else:
                    options[key] = raw.strip()
    for key, val in overrides.items():
        if val is None:
            continue
        key = _ALIASES.get(key, key)
        if key == "options":
            options.update(val)
        else:
            values[key] = val
    return ExperimentConfig(experiment=experiment, options=tuple(sorted(options.items())), **values)


def with_options(cfg: ExperimentConfig, **opts) -> ExperimentConfig:
    merged = dict(cfg.options)
    merged.update({k: str(v) for k, v in opts.items()})
    return replace(cfg, options=tuple(sorted(merged.items())))


def sweep_lambdas(n: int, k: int, p: float) -> tuple[float, ...]:
    """Seven points straddling the A_p interval (a, b): a-.5, a, a+L/4, a+L/2, b-L/4, b, b+.5."""
    a, b = ap_range(n, k, p)
    L = b - a
    return (a - 0.5, a, a + L / 4, a + L / 2, b - L / 4, b, b + 0.5)
