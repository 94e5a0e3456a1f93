"""JSON experiment configuration.

One file describes a full experiment: driver, coefficient field, initial
reduced state, quadrature budget, simulation size, what to evaluate, and
optional plot requests.  Unknown keys raise, so typos fail fast.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

from .coefficients import CoefficientField, make_field
from .drivers import BVDriver, make_driver
from .parametrix import QuadSpec
from .simulate import SimConfig


class ConfigError(ValueError):
    """Malformed experiment configuration."""


_TOP_KEYS = {"label", "driver", "field", "initial", "quadrature",
             "simulation", "evaluation", "validation", "plot"}


@dataclass
class InitialState:
    time: float = 0.0
    level: float = 0.0
    integral: float = 0.0


@dataclass
class ExperimentConfig:
    label: str
    driver: BVDriver
    field: CoefficientField
    initial: InitialState
    quad: QuadSpec
    sim: SimConfig
    evaluation: dict = dc_field(default_factory=dict)
    validation: dict = dc_field(default_factory=dict)
    plot: dict | None = None

    @property
    def x0(self):
        return (self.initial.level, self.initial.integral)


def _pick(d: dict, cls, **overrides):
    allowed = set(cls.__dataclass_fields__)
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} for {cls.__name__}")
    merged = {**d, **overrides}
    return cls(**merged)


def load_config(path, seed=None, tol=None) -> ExperimentConfig:
    """Parse a config file; optional seed/tolerance overrides win."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("top-level config must be an object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    for key in ("driver", "field"):
        if key not in raw:
            raise ConfigError(f"config requires a '{key}' section")

    try:
        driver = make_driver(raw["driver"])
        field = make_field(raw["field"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    initial = _pick(raw.get("initial", {}), InitialState)
    quad = _pick(raw.get("quadrature", {}), QuadSpec)
    sim_over = {}
    if seed is not None:
        sim_over["seed"] = int(seed)
    sim = _pick(raw.get("simulation", {}), SimConfig, **sim_over)

    validation = dict(raw.get("validation", {}))
    if tol is not None:
        validation["tolerance"] = float(tol)

    cfg = ExperimentConfig(
        label=str(raw.get("label", Path(path).stem)),
        driver=driver, field=field, initial=initial, quad=quad, sim=sim,
        evaluation=dict(raw.get("evaluation", {})),
        validation=validation,
        plot=raw.get("plot"))
    if not 0.0 <= cfg.initial.time < driver.horizon:
        raise ConfigError("initial time must lie in [0, horizon)")
    return cfg
