"""Solution evaluation: exact oracles, route consistency, residuals.

Frozen-coefficient oracles (unit diffusion, linear clock):

  g(y) = y1, mu = 0           v(s, x) = x1
  g(y) = y1, mu = c           v(s, x) = x1 + c (T - s)
  plus running cost ell = c0  adds c0 (T - s)
"""

from __future__ import annotations

import numpy as np
import pytest

from ppde import (
    CoefficientField,
    GridPath,
    ParametrixEngine,
    ReducedState,
    dupire_derivatives,
    equation_residual,
    linear_driver,
    solve_for_path,
    solve_v,
    terminal_limit,
    v_series_route,
)

from conftest import constant, identity_payoff


@pytest.fixture(scope="module")
def drifted_engine():
    field = CoefficientField(
        mu=constant(0.2), sigma=constant(1.0), ell=constant(0.0),
        g=identity_payoff, drift_bound=0.25,
        diffusivity_low=0.9, diffusivity_high=1.1, alpha=0.5)
    return ParametrixEngine(field, linear_driver(1.0))


@pytest.fixture(scope="module")
def costed_engine():
    field = CoefficientField(
        mu=constant(0.0), sigma=constant(1.0), ell=constant(0.3),
        g=identity_payoff, drift_bound=0.0,
        diffusivity_low=0.9, diffusivity_high=1.1, alpha=0.5)
    return ParametrixEngine(field, linear_driver(1.0))


@pytest.mark.parametrize("s,x", [(0.0, (0.0, 0.0)), (0.3, (0.7, -0.2)),
                                 (0.9, (-1.0, 0.5))])
def test_martingale_payoff_is_reproduced(kolmogorov_engine, s, x):
    # default nodes are widened for tail safety, which costs polynomial
    # exactness; without widening the rule integrates y1 to rounding
    out = solve_v(kolmogorov_engine, s, x)
    assert out.value == pytest.approx(x[0], abs=1e-5)
    assert out.correction_part == 0.0
    assert out.cost_part == 0.0
    assert out.k_used == 0
    exact = solve_v(kolmogorov_engine, s, x, inflate=1.0)
    assert exact.value == pytest.approx(x[0], abs=1e-12)


def test_drift_shifts_the_mean(drifted_engine):
    out = solve_v(drifted_engine, 0.25, (0.4, 0.1))
    # correction series truncation: the miss stays inside tol * scale
    band = drifted_engine.quad.tol * (1.0 + abs(out.value))
    assert out.value == pytest.approx(0.4 + 0.2 * 0.75, abs=band)
    assert out.correction_part != 0.0


def test_running_cost_accumulates(costed_engine):
    out = solve_v(costed_engine, 0.0, (0.2, 0.0))
    assert out.cost_part == pytest.approx(0.3, abs=2e-3)
    assert out.value == pytest.approx(0.2 + 0.3, abs=2e-3)


def test_terminal_time_returns_payoff(smooth_engine):
    out = solve_v(smooth_engine, 1.0, (0.3, 0.7))
    assert out.value == pytest.approx(np.exp(0.7), rel=1e-13)
    assert out.k_used == 0


def test_value_regression_anchor(smooth_engine):
    # frozen full-precision values pin the default quadrature pipeline
    assert solve_v(smooth_engine, 0.0, (0.0, 0.0)).value == pytest.approx(
        1.164493509369649, rel=1e-9)
    assert solve_v(smooth_engine, 0.0, (0.1, 0.05), max_order=1
                   ).value == pytest.approx(1.349602230722559, rel=1e-9)


def test_series_route_agrees_with_density_route(smooth_engine):
    direct = solve_v(smooth_engine, 0.5, (0.1, 0.05)).value
    series = v_series_route(smooth_engine, 0.5, (0.1, 0.05))
    assert series == pytest.approx(direct, rel=2e-2)


def test_residual_is_small_at_interior_probe(smooth_engine):
    derivs = dupire_derivatives(smooth_engine, 0.5, (0.1, 0.05), order=1)
    out = equation_residual(smooth_engine, 0.5, (0.1, 0.05), derivs=derivs)
    assert out["relative"] < 5e-3
    # the three equation terms are individually nontrivial
    assert abs(out["time_flow"]) > 1e-3
    assert abs(out["diffusion"]) > 1e-3


def test_derivatives_of_linear_solution(kolmogorov_engine):
    d = dupire_derivatives(kolmogorov_engine, 0.4, (0.2, 0.1))
    assert d.value == pytest.approx(0.2, abs=1e-5)
    assert d.space1 == pytest.approx(1.0, abs=1e-4)
    assert d.space11 == pytest.approx(0.0, abs=1e-6)
    assert d.time_flow == pytest.approx(0.0, abs=1e-6)


def test_terminal_limit_collapses_to_payoff(smooth_engine):
    rows = terminal_limit(smooth_engine, (0.3, 0.2), n_scales=3, h_max=0.05)
    gaps = [r["gap"] for r in rows]
    assert gaps[-1] < 1e-3
    assert gaps[-1] <= gaps[0]
    hs = [r["h"] for r in rows]
    assert hs == sorted(hs, reverse=True)


# ---------------------------------------------------------------------------
# reduced states and path plumbing
# ---------------------------------------------------------------------------


def test_reduced_state_from_path(linear):
    path = GridPath([0.0, 0.25, 0.5, 1.0], [1.0, 2.0, -1.0, 3.0])
    st = ReducedState.from_path(path, linear, 0.5)
    assert st.level == -1.0
    assert st.integral == pytest.approx(1.0 * 0.25 + 2.0 * 0.25)
    assert st.x == (-1.0, st.integral)


def test_reduced_state_flow_transport(linear):
    st = ReducedState(0.2, 1.5, 0.3)
    moved = st.advanced(linear, 0.6)
    assert moved.level == 1.5
    assert moved.integral == pytest.approx(0.3 + 1.5 * 0.4)
    with pytest.raises(ValueError):
        st.advanced(linear, 0.1)


def test_bumped_state_only_moves_the_level():
    st = ReducedState(0.2, 1.5, 0.3)
    up = st.bumped(0.25)
    assert up.level == 1.75
    assert up.integral == 0.3
    assert up.time == 0.2


def test_solve_for_path_reduces_then_solves(kolmogorov_engine, linear):
    path = GridPath([0.0, 0.5, 1.0], [0.7, 0.7, 0.7])
    out = solve_for_path(kolmogorov_engine, path, 0.5, inflate=1.0)
    # martingale case: v equals the current level whatever the history
    assert out.value == pytest.approx(0.7, abs=1e-12)
