"""Coefficient fields, declared regularity, and the admissibility report.

The report values below are hand computations from the declared scaling
profiles (b0..b4) and Holder orders:

  series order      min((1 - b0)/2, alpha - b0)
  gradient order    series + (1 - b0)/2
  ito exponents     lhs (1 + b2 - b0)/(2 + 4 b4),  rhs 1 - (b3 - b2 + b0)/2
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from ppde import (
    CoefficientField,
    compute_admissibility,
    probe_hypotheses,
)
from ppde.coefficients import make_field, make_scalar
from ppde.drivers import ScalingExponents

from conftest import constant, identity_payoff


def test_field_guards():
    ok = dict(mu=constant(0.0), sigma=constant(1.0), ell=constant(0.0),
              g=identity_payoff, drift_bound=0.0,
              diffusivity_low=0.5, diffusivity_high=2.0, alpha=0.5)
    CoefficientField(**ok)
    with pytest.raises(ValueError):
        CoefficientField(**{**ok, "diffusivity_low": 0.0})
    with pytest.raises(ValueError):
        CoefficientField(**{**ok, "diffusivity_low": 3.0})
    with pytest.raises(ValueError):
        CoefficientField(**{**ok, "alpha": 1.5})
    with pytest.raises(ValueError):
        CoefficientField(**{**ok, "alpha_ell": 0.0})
    with pytest.raises(ValueError):
        CoefficientField(**{**ok, "drift_bound": -1.0})


def test_diffusivity_is_sigma_squared(smooth_field):
    x = np.array([0.3, -1.0])
    sig = smooth_field.sigma(0.2, x, 0.0 * x)
    assert np.allclose(smooth_field.diffusivity(0.2, x, 0.0 * x), sig * sig)


# ---------------------------------------------------------------------------
# admissibility report: hand oracles for the three builtin families
# ---------------------------------------------------------------------------


def test_report_linear_clock(kolmogorov_field, linear):
    # profile (0, 0, 2, 2, 1), alpha = 1/2
    r = compute_admissibility(kolmogorov_field, linear)
    assert r.spread1 == pytest.approx(0.0)
    assert r.spread2 == pytest.approx(2.0)
    assert r.series_order == pytest.approx(0.5)
    assert r.gradient_order == pytest.approx(1.0)
    assert r.envelope_gap == pytest.approx(0.0)
    assert r.correction_cap == pytest.approx(0.5)
    assert r.correction_order == pytest.approx(0.25)
    assert r.cost_order == pytest.approx(0.5)
    assert r.ito_lhs == pytest.approx(0.5)
    assert r.ito_rhs == pytest.approx(1.0)
    assert r.has_density and r.has_gradient
    assert r.has_classical_solution and r.has_ito_expansion


def test_report_power_clock(kolmogorov_field, power_half):
    # profile (0, 0, 1, 1, 1/2), alpha = 1/2
    r = compute_admissibility(kolmogorov_field, power_half)
    assert r.spread1 == pytest.approx(0.0)
    assert r.spread2 == pytest.approx(1.0)
    assert r.series_order == pytest.approx(0.5)
    assert r.gradient_order == pytest.approx(1.0)
    assert r.correction_order == pytest.approx(0.25)
    assert r.cost_order == pytest.approx(0.5)
    assert r.ito_lhs == pytest.approx(0.5)
    assert r.ito_rhs == pytest.approx(1.0)
    assert r.has_density and r.has_classical_solution and r.has_ito_expansion


def test_report_holder_pair_clock(kolmogorov_field, holder_pair):
    # profile (0.4, 0, 0.6, 1.0, 0.3): the ratio envelope genuinely blows up,
    # the density survives but no classical solution order is certified
    r = compute_admissibility(kolmogorov_field, holder_pair)
    assert r.spread1 == pytest.approx(-0.4)
    assert r.spread2 == pytest.approx(0.2)
    assert r.series_order == pytest.approx(0.1)
    assert r.gradient_order == pytest.approx(0.4)
    assert r.envelope_gap == pytest.approx(0.4)
    assert r.correction_cap == pytest.approx(-0.3)
    assert math.isnan(r.correction_order)
    assert r.ito_lhs == pytest.approx(0.375)
    assert r.ito_rhs == pytest.approx(0.6)
    assert r.has_density and r.has_gradient
    assert not r.has_classical_solution
    assert r.has_ito_expansion


def test_report_accepts_raw_profile(kolmogorov_field):
    prof = ScalingExponents(0.0, 0.0, 2.0, 2.0, 1.0)
    r = compute_admissibility(kolmogorov_field, prof)
    assert r.series_order == pytest.approx(0.5)
    assert r.exponents is prof


def test_report_rejects_unusable_spread(kolmogorov_field):
    with pytest.raises(ValueError, match="exceed -1"):
        compute_admissibility(kolmogorov_field,
                              ScalingExponents(1.2, 0.0, 2.0, 2.0, 1.0))


def test_low_alpha_kills_the_density_flag(linear):
    field = CoefficientField(
        mu=constant(0.0), sigma=constant(1.0), ell=constant(0.0),
        g=identity_payoff, drift_bound=0.0,
        diffusivity_low=0.9, diffusivity_high=1.1, alpha=0.3)
    pair = ScalingExponents(0.4, 0.0, 0.6, 1.0, 0.3)
    r = compute_admissibility(field, pair)
    # alpha - b0 = -0.1 <= 0: the series does not converge
    assert r.series_order == pytest.approx(-0.1)
    assert not r.has_density


# ---------------------------------------------------------------------------
# sampled declaration probes
# ---------------------------------------------------------------------------


def test_probe_accepts_honest_declarations(smooth_field, power_half):
    probe = probe_hypotheses(smooth_field, power_half, n_samples=4000, seed=1)
    assert probe.passed, probe.summary()


def test_probe_flags_understated_drift(power_half):
    lying = CoefficientField(
        mu=constant(0.5), sigma=constant(1.0), ell=constant(0.0),
        g=identity_payoff, drift_bound=0.1,  # actual |mu| is 5x larger
        diffusivity_low=0.9, diffusivity_high=1.1, alpha=0.5)
    probe = probe_hypotheses(lying, power_half, n_samples=1000, seed=1)
    assert not probe.passed
    bad = {r.name for r in probe.results if not r.passed}
    assert "drift bound" in bad


def test_probe_flags_wrong_ellipticity_band(power_half):
    lying = CoefficientField(
        mu=constant(0.0), sigma=constant(2.0), ell=constant(0.0),
        g=identity_payoff, drift_bound=0.0,
        diffusivity_low=0.9, diffusivity_high=1.1, alpha=0.5)
    probe = probe_hypotheses(lying, power_half, n_samples=1000, seed=1)
    assert not probe.passed
    bad = {r.name for r in probe.results if not r.passed}
    assert "ellipticity" in bad


# ---------------------------------------------------------------------------
# config-facing factories
# ---------------------------------------------------------------------------


def test_make_scalar_kinds():
    f = make_scalar(2.5)
    assert f(0.0, 1.0, 1.0) == 2.5
    f = make_scalar({"kind": "linear", "intercept": 1.0, "x1": 2.0, "t": -1.0})
    assert f(0.5, 3.0, 0.0) == pytest.approx(1.0 + 6.0 - 0.5)
    f = make_scalar({"kind": "sin", "base": 1.0, "amplitude": 0.1,
                     "frequency": 2.0, "arg": "x1"})
    assert f(0.0, 0.25, 0.0) == pytest.approx(1.0 + 0.1 * np.sin(0.5))
    f = make_scalar({"kind": "exp_min", "cap": 1.0, "scale": 2.0, "arg": "x2"})
    assert f(0.0, 0.0, 0.3) == pytest.approx(np.exp(0.6))
    assert f(0.0, 0.0, 9.0) == pytest.approx(np.exp(2.0))  # capped
    with pytest.raises(ValueError, match="unknown scalar kind"):
        make_scalar({"kind": "step"})
    with pytest.raises(ValueError, match="argument selector"):
        make_scalar({"kind": "sin", "arg": "x3"})


def test_make_field_roundtrip():
    field = make_field({
        "mu": 0.2,
        "sigma": {"kind": "sin", "base": 1.0, "amplitude": 0.1, "arg": "x1"},
        "g": {"kind": "exp_min", "cap": 5.0, "scale": 1.0, "arg": "x2"},
        "drift_bound": 0.3,
        "diffusivity_low": 0.8,
        "diffusivity_high": 1.3,
        "alpha": 0.5,
        "label": "demo",
    })
    assert field.label == "demo"
    assert field.mu(0.0, 0.0, 0.0) == pytest.approx(0.2)
    assert field.payoff(0.0, 0.5) == pytest.approx(np.exp(0.5))
    assert field.diffusivity_high == 1.3


def test_payoff_growth_guard_clips_and_warns(caplog):
    field = make_field({
        "g": {"kind": "exp_min", "cap": 1e6, "scale": 1.0, "arg": "x2"},
        "diffusivity_low": 0.9,
        "diffusivity_high": 1.1,
    })
    with caplog.at_level("WARNING", logger="ppde"):
        out = field.payoff(0.0, 40.0)
    assert out == pytest.approx(np.exp(30.0))
    assert "terminal payoff" in caplog.text
