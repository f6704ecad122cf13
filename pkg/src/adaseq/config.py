"""Experiment configuration: TOML sections mapped onto dataclasses, plus presets."""
from __future__ import annotations

import copy
import dataclasses
import math
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass
class ScenarioSection:
    kind: str = "regression"
    horizon: int = 25
    domain_radius: float = 5.0
    rho: float = 1.0
    lam: float = 0.0
    dimension: int = 3
    # regression
    sigma_x2: float = 1.0
    noise_var: float = 1.0
    circle_radius: float = 2.0
    # classification; theta is derived from rho when unset
    sigma2: float = 0.5
    theta: Optional[float] = None
    # csv
    path: Optional[str] = None
    test_fraction: float = 0.2
    loss: str = "quadratic"


@dataclass
class BoundSection:
    c_alpha: Optional[float] = None
    c_beta: Optional[float] = None
    calibrate: str = "none"  # none | exact-moments
    safety: float = 2.0
    m: Optional[float] = None
    M: Optional[float] = None
    G: float = 10.0
    A: float = 3.0
    B: float = 5.0
    sigma: float = 3.0
    k_cap: int = 10**6


@dataclass
class PolicySection:
    eps: float = 0.1
    rho_known: Optional[float] = None
    delta_T: int = 5
    approaches: list = field(default_factory=lambda: ["no-update"])


@dataclass
class DriftSection:
    mode: str = "constant-change"
    window: int = 5
    c_t: float = 1.0
    c_C: float = 0.0
    use_dn: bool = False


@dataclass
class CostSection:
    P0: float = 20.0
    P1: float = 1.0
    K0: float = 0.5
    budget: float = 700.0
    phi: str = "max-increasing-run"
    delta_T: int = 5
    iterations: int = 2000
    temperature: float = 1e-3
    rho_prior: Optional[float] = None


@dataclass
class CvSection:
    lambdas: list = field(default_factory=list)
    folds: int = 5


@dataclass
class SgdSection:
    c: Optional[float] = None
    k0: float = 1.0


@dataclass
class RunSection:
    runs: int = 20
    seed: int = 0
    test_size: int = 500
    auc: bool = False
    exact: bool = True


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    scenario: ScenarioSection = field(default_factory=ScenarioSection)
    bound: BoundSection = field(default_factory=BoundSection)
    policy: PolicySection = field(default_factory=PolicySection)
    drift: DriftSection = field(default_factory=DriftSection)
    cost: CostSection = field(default_factory=CostSection)
    cv: CvSection = field(default_factory=CvSection)
    sgd: SgdSection = field(default_factory=SgdSection)
    run: RunSection = field(default_factory=RunSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


SCENARIO_KINDS = ("regression", "classification", "csv")
APPROACHES = ("no-update", "update-past", "known-rho", "up-front-matched", "periodic-matched",
              "cost-planned", "cost-up-front", "cost-periodic", "cv")


def _coerce(value: Any, tp, path: str):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f"{path}: must be finite")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if tp is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return list(value)
    raise ConfigError(f"{path}: unsupported field type {tp}")


def _build(cls, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a table")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(f"{where}: unknown field")
    kw = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        sub = f"{path}.{f.name}" if path else f.name
        tp = hints[f.name]
        if dataclasses.is_dataclass(tp):
            kw[f.name] = _build(tp, data[f.name], sub)
        else:
            kw[f.name] = _coerce(data[f.name], tp, sub)
    return cls(**kw)


def _check(cond: bool, path: str, msg: str):
    if not cond:
        raise ConfigError(f"{path}: {msg}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    s, b, p, d, c, r = cfg.scenario, cfg.bound, cfg.policy, cfg.drift, cfg.cost, cfg.run
    _check(s.kind in SCENARIO_KINDS, "scenario.kind", f"must be one of {SCENARIO_KINDS}")
    _check(s.horizon >= 1, "scenario.horizon", "must be >= 1")
    _check(s.domain_radius > 0, "scenario.domain_radius", "must be positive")
    _check(s.rho >= 0, "scenario.rho", "must be non-negative")
    _check(s.lam >= 0, "scenario.lam", "must be non-negative")
    _check(s.dimension >= 1, "scenario.dimension", "must be >= 1")
    _check(s.loss in ("quadratic", "hinge"), "scenario.loss", "must be 'quadratic' or 'hinge'")
    if s.kind == "csv":
        _check(s.path is not None, "scenario.path", "required for kind='csv'")
    _check(b.calibrate in ("none", "exact-moments"), "bound.calibrate", "must be 'none' or 'exact-moments'")
    if b.calibrate == "none":
        _check(b.c_alpha is not None and b.c_alpha >= 0, "bound.c_alpha", "required and non-negative")
        _check(b.c_beta is not None and b.c_beta > 0, "bound.c_beta", "required and positive")
    else:
        _check(s.kind != "classification" and s.loss == "quadratic", "bound.calibrate",
               "exact-moments needs the quadratic loss")
    _check(b.safety > 0, "bound.safety", "must be positive")
    _check(b.k_cap >= 1, "bound.k_cap", "must be >= 1")
    _check(p.eps > 0, "policy.eps", "must be positive")
    _check(len(p.approaches) >= 1, "policy.approaches", "needs at least one approach")
    for i, a in enumerate(p.approaches):
        _check(a in APPROACHES, f"policy.approaches[{i}]", f"{a!r} not in {APPROACHES}")
    if "known-rho" in p.approaches:
        _check(p.rho_known is not None, "policy.rho_known", "required by the known-rho approach")
    _check(1 <= p.delta_T <= s.horizon, "policy.delta_T", "must be in [1, horizon]")
    _check(d.mode in ("constant-change", "bounded-change"), "drift.mode", "unknown mode")
    _check(d.window >= 1, "drift.window", "must be >= 1")
    _check(d.c_t >= 0 and d.c_C >= 0, "drift.c_t", "c_t and c_C must be non-negative")
    _check(c.P0 >= 0, "cost.P0", "must be non-negative")
    _check(c.P1 > 0, "cost.P1", "must be positive")
    _check(0 < c.K0 < 1, "cost.K0", "must lie in (0, 1)")
    _check(c.budget >= 0, "cost.budget", "must be non-negative")
    _check(c.phi in ("mean", "max", "max-increasing-run"), "cost.phi", "unknown aggregation")
    _check(c.iterations >= 1, "cost.iterations", "must be >= 1")
    _check(1 <= c.delta_T <= s.horizon, "cost.delta_T", "must be in [1, horizon]")
    if "cv" in p.approaches:
        _check(len(cfg.cv.lambdas) >= 1, "cv.lambdas", "needs at least one value")
        _check(cfg.cv.folds >= 2, "cv.folds", "must be >= 2")
    for i, v in enumerate(cfg.cv.lambdas):
        _check(isinstance(v, (int, float)) and v >= 0, f"cv.lambdas[{i}]", "must be a non-negative number")
    _check(r.runs >= 1, "run.runs", "must be >= 1")
    _check(0 <= r.seed < 2**64, "run.seed", "must fit in an unsigned 64-bit integer")
    _check(r.test_size >= 0, "run.test_size", "must be non-negative")
    return cfg


def from_dict(data: dict) -> ExperimentConfig:
    return validate(_build(ExperimentConfig, data, ""))


def load(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    data.setdefault("name", path.stem)
    return from_dict(data)


def _bundled(name: str) -> str:
    return str(Path(__file__).with_name("data") / name)


PRESETS: dict[str, dict] = {
    "synth-regression": {
        "name": "synth-regression",
        "scenario": {"kind": "regression", "rho": 1.0, "dimension": 3, "horizon": 25, "domain_radius": 5.0},
        "bound": {"calibrate": "exact-moments", "safety": 2.0, "G": 10.0, "A": 3.0, "B": 5.0, "sigma": 3.0},
        "policy": {"eps": 0.1, "approaches": ["no-update", "update-past"]},
        # dispersion constant from paired SGD runs sharing a start point
        "drift": {"c_C": 25.2},
        "run": {"runs": 20, "seed": 0, "test_size": 500},
    },
    "synth-regression-cost": {
        "name": "synth-regression-cost",
        "scenario": {"kind": "regression", "rho": 1.0, "dimension": 3, "horizon": 25, "domain_radius": 5.0},
        "bound": {"calibrate": "exact-moments", "safety": 2.0},
        "drift": {"c_C": 25.2},
        "policy": {"eps": 0.1, "approaches": ["cost-planned", "cost-up-front", "cost-periodic", "no-update"]},
        "cost": {"P0": 20.0, "P1": 1.0, "budget": 700.0, "phi": "max-increasing-run", "delta_T": 5,
                 "rho_prior": 1.0},
        "run": {"runs": 20, "seed": 0, "test_size": 500},
    },
    "synth-classification": {
        "name": "synth-classification",
        "scenario": {"kind": "classification", "rho": 0.3, "dimension": 2, "sigma2": 0.5, "lam": 0.1,
                     "horizon": 25, "domain_radius": 3.0, "loss": "hinge"},
        # Monte-Carlo fit of SGD runs against the exact risk, times 2
        "bound": {"c_alpha": 0.113, "c_beta": 3.106, "m": 0.1, "M": 1.6, "G": 5.0, "A": 1.0, "B": 1.0,
                  "sigma": 1.0},
        "policy": {"eps": 0.1, "approaches": ["no-update", "up-front-matched"]},
        "run": {"runs": 20, "seed": 0, "test_size": 1000, "auc": True},
    },
    "csv-stream": {
        "name": "csv-stream",
        "scenario": {"kind": "csv", "path": _bundled("regression_stream.csv"), "test_fraction": 0.2,
                     "loss": "quadratic", "domain_radius": 5.0, "sigma_x2": 1.0},
        "bound": {"calibrate": "exact-moments", "safety": 2.0},
        "policy": {"eps": 0.2, "approaches": ["no-update", "update-past"]},
        "run": {"runs": 5, "seed": 0, "test_size": 50, "exact": False},
    },
}

PRESET_NOTES = {
    "synth-regression": "drifting Gaussian regression, rho=1, eps=0.1, T=25, 20 runs",
    "synth-regression-cost": "same regression under a sampling budget (P0=20, P1=1, P=700)",
    "synth-classification": "rotating Gaussian classes with smoothed hinge loss, AUC vs all-up-front",
    "csv-stream": "bundled CSV panel replayed without replacement per step",
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown name {name!r}; choose from {sorted(PRESETS)}")
    return from_dict(copy.deepcopy(PRESETS[name]))
