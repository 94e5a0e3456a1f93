"""Clock (bounded-variation driver) moments, scaling, and factories.

Closed-form oracles:

  linear rate 1 on (0, 1):    mean 1/2, variance 1/12, anchored 1/3
  power gamma on (0, t):      mean_increment t^g/(g+1), anchored t^2g/(2g+1)
  any window:                 variance = anchored - mean_increment^2

Off-anchor windows are checked against adaptive quadrature of the defining
integrals, which shares no code with the closed forms under test.
"""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from ppde import (
    AbsolutelyContinuousDriver,
    DegenerateWindowError,
    PowerDriver,
    PowerSumDriver,
    TabulatedDriver,
    anchored_ladder,
    estimate_exponents,
    linear_driver,
    make_driver,
)
from ppde.drivers import ScalingExponents


def quad_moments(driver, s, t):
    """(mean, variance, anchored) straight from the definitions."""
    h = t - s
    a_s = driver.value(s)
    i1 = quad(lambda r: driver.value(r) - a_s, s, t, epsabs=1e-13, limit=200)[0]
    i2 = quad(lambda r: (driver.value(r) - a_s) ** 2, s, t,
              epsabs=1e-13, limit=200)[0]
    b = i1 / h
    return a_s + b, i2 / h - b * b, i2 / h


# ---------------------------------------------------------------------------
# closed-form windows
# ---------------------------------------------------------------------------


def test_linear_unit_window(linear):
    m = linear.moments(0.0, 1.0)
    assert m.mean == pytest.approx(0.5, abs=1e-13)
    assert m.variance == pytest.approx(1.0 / 12.0, abs=1e-13)
    assert m.anchored_variance == pytest.approx(1.0 / 3.0, abs=1e-13)
    assert m.increment == pytest.approx(1.0, abs=1e-13)
    assert m.mean_increment == pytest.approx(0.5, abs=1e-13)
    assert m.ratio == pytest.approx(4.0, abs=1e-12)


def test_linear_scaled_interior_window():
    d = linear_driver(1.0, rate=2.0)
    m = d.moments(0.25, 0.75)
    # A = 2t: mean = A(0.25) + 0.5, interior variance matches the unit case
    assert m.mean == pytest.approx(1.0, abs=1e-13)
    assert m.variance == pytest.approx(1.0 / 12.0, abs=1e-13)
    assert m.anchored_variance == pytest.approx(1.0 / 3.0, abs=1e-13)
    assert m.increment == pytest.approx(1.0, abs=1e-13)


def test_power_half_anchored_window(power_half):
    m = power_half.moments(0.0, 1.0)
    assert m.mean_increment == pytest.approx(2.0 / 3.0, abs=1e-13)
    assert m.anchored_variance == pytest.approx(0.5, abs=1e-13)
    assert m.variance == pytest.approx(1.0 / 18.0, abs=1e-13)
    assert m.ratio == pytest.approx(9.0, rel=1e-12)


def test_power_half_interior_window(power_half):
    m = power_half.moments(0.5, 1.0)
    assert m.mean == pytest.approx(0.8619288125423017, abs=1e-12)
    assert m.variance == pytest.approx(0.007078722109417818, rel=1e-10)
    assert m.anchored_variance == pytest.approx(0.03104858350253992, rel=1e-10)


@pytest.mark.parametrize("window", [(0.0, 1.0), (0.0, 0.01), (0.3, 0.31),
                                    (0.25, 0.8), (0.9999, 1.0)])
@pytest.mark.parametrize("make", [
    lambda: linear_driver(1.0, rate=0.7),
    lambda: PowerDriver(0.3, 1.0),
    lambda: PowerDriver(0.85, 1.0),
    lambda: PowerSumDriver(0.5, 0.3, 1.0, 2.0, 1.0),
    lambda: AbsolutelyContinuousDriver([0.0, 0.4, 1.0], [0.5, 2.0, 1.0]),
    lambda: TabulatedDriver([0.0, 0.4, 1.0], [0.0, 0.2, 1.0]),
])
def test_moments_match_quadrature_oracle(make, window):
    d = make()
    s, t = window
    mean, var, anchored = quad_moments(d, s, t)
    m = d.moments(s, t)
    assert m.mean == pytest.approx(mean, rel=1e-8, abs=1e-12)
    assert m.variance == pytest.approx(var, rel=1e-6, abs=1e-13)
    assert m.anchored_variance == pytest.approx(anchored, rel=1e-8, abs=1e-13)


# ---------------------------------------------------------------------------
# properties over random windows
# ---------------------------------------------------------------------------

DRIVERS = [
    linear_driver(1.0),
    PowerDriver(0.5, 1.0),
    PowerDriver(0.3, 1.0),
    PowerSumDriver(0.9, 0.4, 1.0, 1.0, 1.0),
    AbsolutelyContinuousDriver([0.0, 0.5, 1.0], [1.0, 3.0, 0.5]),
    TabulatedDriver([0.0, 0.2, 0.7, 1.0], [0.0, 0.3, 0.5, 1.0]),
]

window_st = st.tuples(
    st.floats(min_value=0.0, max_value=0.99),
    st.floats(min_value=1e-6, max_value=1.0),
).map(lambda p: (p[0], min(p[0] + p[1], 1.0))).filter(lambda w: w[1] - w[0] > 1e-7)


@given(idx=st.integers(min_value=0, max_value=len(DRIVERS) - 1), window=window_st)
@settings(max_examples=200, deadline=None)
def test_variance_decomposition_and_ratio(idx, window):
    d = DRIVERS[idx]
    s, t = window
    try:
        m = d.moments(s, t)
    except DegenerateWindowError:
        return  # flat stretch of a tabulated clock
    assert m.variance == pytest.approx(
        m.anchored_variance - m.mean_increment ** 2, rel=1e-9, abs=1e-15)
    assert m.ratio >= 1.0 - 1e-12
    assert m.variance > 0.0
    assert m.increment >= -1e-15


@given(idx=st.integers(min_value=0, max_value=len(DRIVERS) - 1),
       a=st.floats(min_value=0.0, max_value=1.0),
       b=st.floats(min_value=0.0, max_value=1.0),
       c=st.floats(min_value=0.0, max_value=1.0))
@settings(max_examples=200, deadline=None)
def test_increment_additivity_and_monotonicity(idx, a, b, c):
    d = DRIVERS[idx]
    s, t, u = sorted((a, b, c))
    total = d.increment(s, u)
    assert total == pytest.approx(d.increment(s, t) + d.increment(t, u),
                                  rel=1e-10, abs=1e-12)
    assert total >= -1e-15
    assert d.value(u) >= d.value(t) - 1e-15 >= d.value(s) - 2e-15


def test_degenerate_windows_raise(linear):
    with pytest.raises(DegenerateWindowError):
        linear.moments(0.5, 0.5 + 1e-14)
    with pytest.raises(ValueError):
        linear.moments(0.8, 0.2)
    with pytest.raises(ValueError):
        linear.moments(0.0, 1.5)
    flat = TabulatedDriver([0.0, 0.4, 0.6, 1.0], [0.0, 0.5, 0.5, 1.0])
    with pytest.raises(DegenerateWindowError):
        flat.moments(0.42, 0.58)


# ---------------------------------------------------------------------------
# Stieltjes integration of step paths
# ---------------------------------------------------------------------------


def test_stieltjes_constant_path_gives_increment(power_half):
    times = np.linspace(0.1, 0.9, 17)
    assert power_half.stieltjes(times, np.ones(16)) == pytest.approx(
        power_half.increment(0.1, 0.9), abs=1e-14)


def test_stieltjes_exact_on_linear_clock(linear):
    times = np.array([0.0, 0.25, 0.5, 1.0])
    vals = np.array([2.0, -1.0, 3.0])
    # dA = dt, so the integral is a plain weighted sum of the step values
    expected = 2.0 * 0.25 + (-1.0) * 0.25 + 3.0 * 0.5
    assert linear.stieltjes(times, vals) == pytest.approx(expected, abs=1e-14)


def test_stieltjes_linearity(power_half):
    times = np.linspace(0.0, 1.0, 9)
    rng = np.random.default_rng(3)
    f = rng.normal(size=8)
    g = rng.normal(size=8)
    lhs = power_half.stieltjes(times, 2.0 * f - 3.0 * g)
    rhs = 2.0 * power_half.stieltjes(times, f) - 3.0 * power_half.stieltjes(times, g)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)


def test_stieltjes_rejects_bad_grids(linear):
    with pytest.raises(ValueError):
        linear.stieltjes([0.5], [1.0])
    with pytest.raises(ValueError):
        linear.stieltjes([0.0, 0.6, 0.4], [1.0, 1.0])


# ---------------------------------------------------------------------------
# scaling-exponent recovery
# ---------------------------------------------------------------------------


def test_linear_profile_recovered(linear):
    est = estimate_exponents(linear)
    e = est.exponents
    assert abs(e.ratio_hi - 0.0) < 0.05
    assert abs(e.var_hi - 2.0) < 0.05
    assert abs(e.var_lo - 2.0) < 0.05
    assert abs(e.modulus - 1.0) < 0.05
    assert est.width_decades > 3.0
    assert est.n_windows >= 20


def test_power_profile_recovered(power_half):
    e = estimate_exponents(power_half).exponents
    assert abs(e.var_hi - 1.0) < 0.1
    assert abs(e.var_lo - 1.0) < 0.1
    assert abs(e.modulus - 0.5) < 0.1


def test_estimate_rejects_thin_ladders(linear):
    with pytest.raises(ValueError):
        estimate_exponents(linear, windows=anchored_ladder(1.0, n_widths=8))


def test_declared_profiles_validate():
    for d in DRIVERS:
        d.exponents.validate()
    with pytest.raises(ValueError):
        ScalingExponents(1.0, 0.0, 2.0, 1.0, 1.0).validate()  # var_hi > var_lo
    with pytest.raises(ValueError):
        ScalingExponents(0.0, 0.5, 2.0, 2.0, 1.0).validate()  # lo > hi


# ---------------------------------------------------------------------------
# config factory
# ---------------------------------------------------------------------------


def test_make_driver_kinds():
    d = make_driver({"kind": "linear", "horizon": 2.0, "rate": 0.5})
    assert d.value(2.0) == pytest.approx(1.0)
    d = make_driver({"kind": "power", "horizon": 1.0, "gamma": 0.5})
    assert isinstance(d, PowerDriver)
    assert d.value(0.25) == pytest.approx(0.5)
    d = make_driver({"kind": "holder-pair", "horizon": 1.0,
                     "gamma_hi": 0.5, "gamma_lo": 0.25})
    assert d.value(1.0) == pytest.approx(2.0)
    d = make_driver({"kind": "density", "horizon": 1.0,
                     "times": [0.0, 1.0], "density": [1.0, 3.0]})
    assert d.value(1.0) == pytest.approx(2.0)
    d = make_driver({"kind": "tabulated", "horizon": 1.0,
                     "times": [0.0, 0.5, 1.0], "values": [0.0, 0.1, 1.0]})
    assert d.value(0.5) == pytest.approx(0.1)


def test_make_driver_rejects_unknown_kind():
    with pytest.raises(ValueError, match="unknown driver kind"):
        make_driver({"kind": "brownian", "horizon": 1.0})


def test_constructor_guards():
    with pytest.raises(ValueError):
        PowerDriver(1.5, 1.0)
    with pytest.raises(ValueError):
        PowerSumDriver(0.3, 0.5, 1.0, 1.0, 1.0)  # hi < lo
    with pytest.raises(ValueError):
        AbsolutelyContinuousDriver([0.0, 1.0], [1.0, -0.5])
    with pytest.raises(ValueError):
        TabulatedDriver([0.0, 1.0], [0.0, 0.0])  # constant clock
    with pytest.raises(ValueError):
        TabulatedDriver([0.1, 1.0], [0.0, 1.0])  # must start at 0
