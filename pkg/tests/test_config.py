"""Experiment configuration loading: grammar, defaults, overrides."""

from __future__ import annotations

import json

import pytest

from ppde import ConfigError, PowerDriver, load_config


BASE = {
    "label": "demo",
    "driver": {"kind": "power", "gamma": 0.5, "horizon": 1.0},
    "field": {
        "mu": 0.2,
        "sigma": {"kind": "sin", "base": 1.0, "amplitude": 0.1, "arg": "x1"},
        "g": {"kind": "exp_min", "cap": 5.0, "scale": 1.0, "arg": "x2"},
        "drift_bound": 0.3,
        "diffusivity_low": 0.8,
        "diffusivity_high": 1.3,
        "alpha": 0.5,
    },
    "initial": {"time": 0.0, "level": 0.1, "integral": 0.05},
    "quadrature": {"n_time": 4, "n_space": 10, "tol": 5e-3},
    "simulation": {"n_paths": 1000, "n_steps": 50, "seed": 3},
    "validation": {"tolerance": 0.03},
}


def write(tmp_path, payload, name="exp.json"):
    p = tmp_path / name
    p.write_text(json.dumps(payload))
    return p


def test_full_roundtrip(tmp_path):
    cfg = load_config(write(tmp_path, BASE))
    assert cfg.label == "demo"
    assert isinstance(cfg.driver, PowerDriver)
    assert cfg.driver.gamma == 0.5
    assert cfg.field.diffusivity_high == 1.3
    assert cfg.x0 == (0.1, 0.05)
    assert cfg.quad.n_time == 4
    assert cfg.quad.tol == 5e-3
    assert cfg.quad.max_order == 2          # untouched default
    assert cfg.sim.n_paths == 1000
    assert cfg.sim.antithetic is False
    assert cfg.validation["tolerance"] == 0.03
    assert cfg.plot is None


def test_label_defaults_to_file_stem(tmp_path):
    payload = {k: v for k, v in BASE.items() if k != "label"}
    cfg = load_config(write(tmp_path, payload, name="runA.json"))
    assert cfg.label == "runA"


def test_seed_and_tol_overrides_win(tmp_path):
    cfg = load_config(write(tmp_path, BASE), seed=99, tol=0.5)
    assert cfg.sim.seed == 99
    assert cfg.validation["tolerance"] == 0.5


def test_unknown_top_level_key(tmp_path):
    with pytest.raises(ConfigError, match="unknown top-level keys"):
        load_config(write(tmp_path, {**BASE, "solver": {}}))


def test_unknown_nested_key(tmp_path):
    bad = {**BASE, "initial": {"time": 0.0, "x1": 1.0}}
    with pytest.raises(ConfigError, match="unknown keys"):
        load_config(write(tmp_path, bad))
    bad = {**BASE, "simulation": {"paths": 10}}
    with pytest.raises(ConfigError, match="unknown keys"):
        load_config(write(tmp_path, bad))


def test_missing_required_sections(tmp_path):
    with pytest.raises(ConfigError, match="requires a 'driver'"):
        load_config(write(tmp_path, {"field": BASE["field"]}))
    with pytest.raises(ConfigError, match="requires a 'field'"):
        load_config(write(tmp_path, {"driver": BASE["driver"]}))


def test_factory_errors_become_config_errors(tmp_path):
    bad = {**BASE, "driver": {"kind": "spiral", "horizon": 1.0}}
    with pytest.raises(ConfigError, match="unknown driver kind"):
        load_config(write(tmp_path, bad))
    bad = {**BASE, "field": {"mu": 0.0}}  # no ellipticity band
    with pytest.raises(ConfigError):
        load_config(write(tmp_path, bad))


def test_initial_time_must_precede_horizon(tmp_path):
    bad = {**BASE, "initial": {"time": 1.0}}
    with pytest.raises(ConfigError, match="initial time"):
        load_config(write(tmp_path, bad))


def test_unreadable_and_invalid_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(p)
    q = tmp_path / "list.json"
    q.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="must be an object"):
        load_config(q)
