"""Smooth-solution evaluation on the reduced two-component state.

The path functional collapses to a function v(s, x1, x2) of current level
and weighted running integral.  Values come from integrating the transition
density against payoff and running cost; derivatives come from divided
differences, with the time derivative taken along the frozen-path flow

    D_t v(s, x) = lim_h (v(s+h, x1, x2 + x1 (A(s+h) - A(s))) - v(s, x)) / h,

which is the derivative the equation is written in.  The residual

    D_t v + mu d_x1 v + (sigma^2 / 2) d_x1x1 v + ell

should vanish at interior points; `equation_residual` reports it against the
natural magnitude scale of its terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .parametrix import ParametrixEngine
from .paths import GridPath
from .quadrature import edge_graded_nodes


@dataclass(frozen=True)
class ReducedState:
    """(time, level, weighted running integral) snapshot of a path."""

    time: float
    level: float
    integral: float

    @classmethod
    def from_path(cls, path: GridPath, driver, time: float) -> "ReducedState":
        return cls(time=float(time),
                   level=float(path.value_at(time)),
                   integral=float(path.running_integral(driver, upto=time)))

    def bumped(self, size: float) -> "ReducedState":
        """Vertical perturbation of the current level."""
        return ReducedState(self.time, self.level + size, self.integral)

    def advanced(self, driver, new_time: float) -> "ReducedState":
        """Transport along the flow of the path frozen at its current level."""
        if new_time < self.time:
            raise ValueError("flow transport only moves forward")
        gained = self.level * (driver.value(new_time) - driver.value(self.time))
        return ReducedState(new_time, self.level, self.integral + gained)

    @property
    def x(self):
        return (self.level, self.integral)


@dataclass
class SolutionValue:
    value: float
    frozen_part: float
    correction_part: float
    cost_part: float
    k_used: int
    tail: float
    converged: bool


def _has_cost(engine: ParametrixEngine) -> bool:
    x1, x2 = engine.anchor
    probes = [(0.37, x1 + 0.61, x2 - 0.43), (0.81, x1 - 1.07, x2 + 0.89),
              (0.12, x1, x2)]
    T = engine.driver.horizon
    return any(float(np.asarray(engine.field.cost(t * T, a, b))) != 0.0
               for t, a, b in probes)


def solve_v(engine: ParametrixEngine, s: float, x, tol=None,
            max_order=None, n_y=None, inflate=2.5) -> SolutionValue:
    """v(s, x) = E[g(X_T, I_T) + int_s^T ell(r, X_r, I_r) dr]."""
    T = engine.driver.horizon
    field = engine.field
    x = np.asarray(x, dtype=float)
    if T - s <= 1e-12 * max(T, 1.0):
        g = float(np.asarray(field.payoff(x[0], x[1])))
        return SolutionValue(g, g, 0.0, 0.0, 0, 0.0, True)

    y_pts, y_w = engine.leading_nodes(s, x, T, n=n_y, inflate=inflate)
    res = engine.density(s, x, T, y_pts, tol=tol, max_order=max_order)
    g_vals = np.asarray(field.payoff(y_pts[:, 0], y_pts[:, 1]), dtype=float)
    frozen_part = float(np.dot(y_w, res.leading * g_vals))
    correction_part = float(np.dot(y_w, res.correction * g_vals))

    cost_part = 0.0
    if _has_cost(engine):
        r_nodes, r_w = edge_graded_nodes(s, T, engine.quad.n_time,
                                         left_power=1.0, right_power=1.0)
        for r, wr in zip(r_nodes, r_w):
            if r <= s or r >= T:
                continue
            z, W = engine.leading_nodes(s, x, r, n=n_y, inflate=inflate)
            dres = engine.density(s, x, r, z, tol=tol, max_order=1)
            ell = np.asarray(field.cost(r, z[:, 0], z[:, 1]), dtype=float)
            cost_part += wr * float(np.dot(W, dres.value * ell))

    g_scale = float(np.dot(y_w, np.abs(res.value * g_vals))) + abs(cost_part)
    tail = res.tail * g_scale if math.isfinite(res.tail) else res.tail
    value = frozen_part + correction_part + cost_part
    return SolutionValue(value, frozen_part, correction_part, cost_part,
                         res.k_used, tail, res.converged)


def solve_for_path(engine: ParametrixEngine, path: GridPath,
                   time: float, **kw) -> SolutionValue:
    state = ReducedState.from_path(path, engine.driver, time)
    return solve_v(engine, state.time, state.x, **kw)


def v_series_route(engine: ParametrixEngine, s: float, x,
                   order: int = 1) -> float:
    """v via the frozen part plus the convolution of the series with g.

    Independent of `solve_v`'s route: the series is contracted against the
    payoff first (per interior node, on grids adapted to each node's own
    kernel), then folded back through the frozen kernel.  Used as a
    consistency check on the density route.
    """
    T = engine.driver.horizon
    field = engine.field
    x = np.asarray(x, dtype=float)
    y_pts, y_w = engine.leading_nodes(s, x, T, inflate=2.5)
    g_vals = np.asarray(field.payoff(y_pts[:, 0], y_pts[:, 1]), dtype=float)
    fr = engine.frame(s, T)
    a_y = field.diffusivity(T, y_pts[:, 0], y_pts[:, 1])
    w1, w2 = fr.offset(x[0], x[1], y_pts[:, 0], y_pts[:, 1])
    v = float(np.dot(y_w, fr.density(a_y, w1, w2) * g_vals))

    r_nodes, r_w = edge_graded_nodes(s, T, engine.quad.n_time,
                                     left_power=1.0,
                                     right_power=engine.kappa0)
    for r, wr in zip(r_nodes, r_w):
        if r <= s or r >= T:
            continue
        z, W = engine._left_grid(s, x, r)
        fl = engine.frame(s, r)
        zw1, zw2 = fl.offset(x[0], x[1], z[:, 0], z[:, 1])
        a_z = field.diffusivity(r, z[:, 0], z[:, 1])
        f_vals = fl.density(a_z, zw1, zw2)
        if order >= 1:
            f_vals = f_vals + engine.correction_field(
                s, x, r, z[:, 0], z[:, 1], n_time=3, n_space=8)
        q0 = engine.payoff_contraction(r, z[:, 0], z[:, 1], n_space=10)
        v += wr * float(np.dot(W, f_vals * q0))

    if _has_cost(engine):
        r_nodes, r_w = edge_graded_nodes(s, T, engine.quad.n_time,
                                         left_power=1.0, right_power=1.0)
        for r, wr in zip(r_nodes, r_w):
            if r <= s or r >= T:
                continue
            z, W = engine.leading_nodes(s, x, r, inflate=2.5)
            dres = engine.density(s, x, r, z, max_order=1)
            ell = np.asarray(field.cost(r, z[:, 0], z[:, 1]), dtype=float)
            v += wr * float(np.dot(W, dres.value * ell))
    return v


@dataclass
class Derivatives:
    value: float
    time_flow: float
    space1: float
    space11: float
    step_space: float
    step_time: float


def dupire_derivatives(engine: ParametrixEngine, s: float, x,
                       order=None, richardson=True) -> Derivatives:
    """Flow time derivative and vertical first/second space derivatives.

    Every stencil evaluation runs at one fixed correction order (decided
    once at the center point) so the adaptive order-selection cannot flip
    between stencil points and pollute the differences.
    """
    T = engine.driver.horizon
    x = np.asarray(x, dtype=float)
    if order is None:
        center = engine.density(s, x, T,
                                engine.leading_nodes(s, x, T, n=8)[0])
        order = center.k_used
    max_order = 1 if order <= 1 else 2

    def value(si, xi):
        return solve_v(engine, si, xi, max_order=max_order).value

    v0 = value(s, x)

    eps = max(1e-4, 1e-2 * math.sqrt(T - s)) * (1.0 + abs(float(x[0])))

    def central(e):
        up = value(s, (x[0] + e, x[1]))
        dn = value(s, (x[0] - e, x[1]))
        return (up - dn) / (2.0 * e), (up - 2.0 * v0 + dn) / (e * e)

    d1_a, d2_a = central(eps)
    if richardson:
        d1_b, d2_b = central(eps / 2.0)
        d1 = (4.0 * d1_b - d1_a) / 3.0
        d2 = (4.0 * d2_b - d2_a) / 3.0
    else:
        d1, d2 = d1_a, d2_a

    h = 1e-3 * (T - s)
    state = ReducedState(s, float(x[0]), float(x[1]))
    ahead = state.advanced(engine.driver, s + h)
    dt_flow = (value(ahead.time, ahead.x) - v0) / h

    return Derivatives(value=v0, time_flow=dt_flow, space1=d1, space11=d2,
                       step_space=eps, step_time=h)


def equation_residual(engine: ParametrixEngine, s: float, x,
                      derivs: Derivatives | None = None) -> dict:
    """Pointwise residual of the reduced equation, with its natural scale."""
    x = np.asarray(x, dtype=float)
    if derivs is None:
        derivs = dupire_derivatives(engine, s, x)
    field = engine.field
    mu = float(np.asarray(field.mu(s, x[0], x[1])))
    sig = float(np.asarray(field.sigma(s, x[0], x[1])))
    ell = float(np.asarray(field.cost(s, x[0], x[1])))
    terms = {
        "time_flow": derivs.time_flow,
        "drift": mu * derivs.space1,
        "diffusion": 0.5 * sig * sig * derivs.space11,
        "cost": ell,
    }
    residual = sum(terms.values())
    scale = sum(abs(v) for v in terms.values()) + 1.0
    return {"residual": residual, "relative": abs(residual) / scale,
            "scale": scale, "value": derivs.value, **terms}


def terminal_limit(engine: ParametrixEngine, x, n_scales: int = 5,
                   h_max: float = 0.1) -> list:
    """Gap |v(T - h, x) - g(flow image of x at T)| over a shrinking ladder."""
    T = engine.driver.horizon
    x = np.asarray(x, dtype=float)
    rows = []
    for i in range(n_scales):
        h = h_max * T * 4.0 ** (-i)
        state = ReducedState(T - h, float(x[0]), float(x[1]))
        target = state.advanced(engine.driver, T)
        g = float(np.asarray(engine.field.payoff(target.level,
                                                 target.integral)))
        v = solve_v(engine, T - h, x).value
        rows.append({"h": h, "value": v, "payoff": g, "gap": abs(v - g)})
    return rows
