"""Bounded-variation time drivers and their window moments.

A driver is a deterministic, continuous, nondecreasing function A on [0, T]
with A(0) = 0.  It plays the role of the clock against which the running
integral of a path is taken.  Everything downstream (kernel covariances,
admissibility exponents) consumes drivers only through

* pointwise values ``A(t)`` and stable increments ``A(t) - A(s)``,
* window moments: the averaged first and second moments of ``A - A(s)``
  over a window (s, t),
* Riemann-Stieltjes integrals of step paths against dA,
* a small-window scaling profile (the ``ScalingExponents``).

Moments are always computed in increment form: the integrals

    I1 = int_s^t (A_r - A_s) dr,      I2 = int_s^t (A_r - A_s)^2 dr

are nonnegative, so no catastrophic cancellation can occur even for windows
many orders of magnitude smaller than the horizon.  Closed forms are used
where exact (piecewise-polynomial drivers, power drivers anchored at 0);
smooth cases away from the origin use Gauss-Legendre panels on the stable
increment function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

# Windows narrower than this fraction of the horizon are rejected rather
# than extrapolated: the covariance they induce is numerically singular.
MIN_WINDOW_FRACTION = 1e-12


class DegenerateWindowError(ValueError):
    """Raised when a moment or kernel window is too narrow to resolve."""


@dataclass(frozen=True)
class WindowMoments:
    """Averaged moments of a driver over a window (s, t).

    mean            (t-s)^-1 int_s^t A_r dr
    variance        (t-s)^-1 int_s^t (A_r - mean)^2 dr
    anchored_variance  (t-s)^-1 int_s^t (A_r - A_s)^2 dr
    increment       A_t - A_s
    mean_increment  mean - A_s

    ``variance`` is the variance of A over the window; ``anchored_variance``
    second-moments the increment from the left edge instead, so
    ``variance = anchored_variance - mean_increment**2`` and the ratio
    ``anchored_variance / variance >= 1`` always.
    """

    mean: float
    variance: float
    anchored_variance: float
    increment: float
    mean_increment: float

    @property
    def ratio(self) -> float:
        return self.anchored_variance / self.variance


@dataclass(frozen=True)
class ScalingExponents:
    """Small-window scaling profile of a driver.

    With h = t - s and the window moments above, the profile asserts the
    envelope inequalities (constants uniform over windows in [0, T]):

    ratio_hi   anchored_variance/variance <= C * h**(-ratio_hi)
    ratio_lo   anchored_variance/variance >= c * h**(-ratio_lo)
    var_hi     variance <= C * h**var_hi
    var_lo     variance >= c * h**var_lo
    modulus    |A_t - A_s| <= C * h**modulus

    Orderings: ratio_lo <= ratio_hi <= var_lo and ratio_lo <= var_hi <= var_lo.
    """

    ratio_hi: float
    ratio_lo: float
    var_hi: float
    var_lo: float
    modulus: float

    def validate(self) -> None:
        if not (self.ratio_lo <= self.ratio_hi + 1e-12):
            raise ValueError("ratio_lo must not exceed ratio_hi")
        if not (self.ratio_hi <= self.var_lo + 1e-12):
            raise ValueError("ratio_hi must not exceed var_lo")
        if not (self.ratio_lo <= self.var_hi + 1e-12 <= self.var_lo + 2e-12):
            raise ValueError("need ratio_lo <= var_hi <= var_lo")


def _stable_power_increment(s, r, gamma):
    """(r**gamma - s**gamma) without cancellation, elementwise.

    For r close to s the naive difference loses all digits; rewrite as
    s**gamma * expm1(gamma * log1p((r-s)/s)) which is exact to rounding.
    """
    if np.ndim(s) == 0 and float(s) == 0.0:
        return np.asarray(r, dtype=float) ** gamma
    s = np.asarray(s, dtype=float)
    r = np.asarray(r, dtype=float)
    safe = np.where(s > 0.0, s, 1.0)
    with np.errstate(over="ignore"):  # inf ratio routes to the naive branch
        ratio = np.where(s > 0.0, (r - s) / safe, np.inf)
    # cancellation only matters for r near s; past ratio 1e8 the naive
    # difference is accurate and the rewrite can overflow (subnormal s)
    near = ratio < 1e8
    rewritten = safe ** gamma * np.expm1(
        gamma * np.log1p(np.where(near, ratio, 0.0)))
    out = np.where(near, rewritten, r ** gamma - np.where(s > 0.0, s, 0.0) ** gamma)
    at_origin = s <= 0.0
    if np.any(at_origin):
        out = np.where(at_origin, r ** gamma, out)
    return out if np.ndim(out) else float(out)


@lru_cache(maxsize=32)
def _gl_nodes(n: int):
    x, w = leggauss(n)
    # map to [0, 1]
    return (x + 1.0) / 2.0, w / 2.0


def _panel_quadrature(f, s, t, breakpoints, order):
    """Integrate f over [s, t] with Gauss-Legendre panels split at breakpoints."""
    edges = [s]
    for b in breakpoints:
        if s < b < t:
            edges.append(b)
    edges.append(t)
    x, w = _gl_nodes(order)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        nodes = a + (b - a) * x
        total += (b - a) * float(np.dot(w, f(nodes)))
    return total


class BVDriver:
    """Base class: a continuous nondecreasing clock A on [0, horizon]."""

    horizon: float
    exponents: ScalingExponents

    # -- pointwise -------------------------------------------------------

    def value(self, t):
        """A(t), vectorized over t."""
        raise NotImplementedError

    def increment(self, s, t):
        """A(t) - A(s), computed stably, vectorized over t."""
        return self.value(t) - self.value(s)

    # -- window moments ---------------------------------------------------

    def _increment_integrals(self, s: float, t: float) -> tuple[float, float]:
        """(I1, I2) = (int (A_r - A_s) dr, int (A_r - A_s)^2 dr) over [s, t]."""
        raise NotImplementedError

    def _check_window(self, s: float, t: float) -> None:
        if not (0.0 <= s < t <= self.horizon * (1.0 + 1e-9)):
            raise ValueError(f"window ({s}, {t}) outside [0, {self.horizon}]")
        if t - s < MIN_WINDOW_FRACTION * self.horizon:
            raise DegenerateWindowError(
                f"window width {t - s:.3e} below resolution floor "
                f"{MIN_WINDOW_FRACTION * self.horizon:.3e}"
            )

    def moments(self, s: float, t: float) -> WindowMoments:
        self._check_window(s, t)
        h = t - s
        i1, i2 = self._increment_integrals(s, t)
        b = i1 / h
        anchored = i2 / h
        variance = anchored - b * b
        if variance <= 0.0:
            raise DegenerateWindowError(
                f"window ({s}, {t}) has nonpositive variance {variance:.3e}; "
                "driver is flat there"
            )
        return WindowMoments(
            mean=float(self.value(s)) + b,
            variance=variance,
            anchored_variance=anchored,
            increment=float(self.increment(s, t)),
            mean_increment=b,
        )

    # -- Stieltjes integral of a step path --------------------------------

    def stieltjes(self, times, values) -> float:
        """Integral of a right-continuous step path against dA, exact.

        The path equals values[i] on [times[i], times[i+1]); len(values) may
        be len(times) - 1 or len(times) (the trailing value is ignored).
        """
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("need at least two grid times")
        if np.any(np.diff(times) < 0):
            raise ValueError("grid times must be nondecreasing")
        steps = values[: times.size - 1]
        increments = np.diff(self.value(times))
        return float(np.dot(steps, increments))


class AbsolutelyContinuousDriver(BVDriver):
    """A(t) = int_0^t rho(u) du with a piecewise-linear density table.

    The density is pinned between positive bounds, so A is bi-Lipschitz and
    the scaling profile is (0, 0, 2, 2, 1).  A constant table reproduces the
    linear clock A(t) = rho * t.
    """

    def __init__(self, times, density, horizon=None):
        times = np.asarray(times, dtype=float)
        density = np.asarray(density, dtype=float)
        if times.ndim != 1 or times.size < 2 or times.shape != density.shape:
            raise ValueError("density table needs matching 1d times/values")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValueError("times must start at 0 and strictly increase")
        if np.any(density <= 0.0):
            raise ValueError("density must be strictly positive")
        self._times = times
        self._density = density
        self.horizon = float(horizon if horizon is not None else times[-1])
        if self.horizon > times[-1] * (1 + 1e-12):
            raise ValueError("horizon extends past the density table")
        # cumulative integral of the piecewise-linear density at breakpoints
        seg = np.diff(times) * (density[:-1] + density[1:]) / 2.0
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.exponents = ScalingExponents(0.0, 0.0, 2.0, 2.0, 1.0)

    def density(self, t):
        return np.interp(t, self._times, self._density)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self._times, t, side="right") - 1, 0,
                      self._times.size - 2)
        t0 = self._times[idx]
        d0 = self._density[idx]
        slope = (self._density[idx + 1] - d0) / (self._times[idx + 1] - t0)
        dt = t - t0
        out = self._cum[idx] + d0 * dt + 0.5 * slope * dt * dt
        return out if out.ndim else float(out)

    def _increment_integrals(self, s, t):
        a_s = self.value(s)
        # A is piecewise quadratic, so (A - A_s)^2 is piecewise quartic:
        # 3-point panels are exact.
        f1 = lambda r: self.value(r) - a_s
        f2 = lambda r: (self.value(r) - a_s) ** 2
        i1 = _panel_quadrature(f1, s, t, self._times, 3)
        i2 = _panel_quadrature(f2, s, t, self._times, 3)
        return i1, i2


def linear_driver(horizon: float, rate: float = 1.0) -> AbsolutelyContinuousDriver:
    """The constant-density clock A(t) = rate * t."""
    return AbsolutelyContinuousDriver([0.0, horizon], [rate, rate], horizon)


class PowerDriver(BVDriver):
    """A(t) = t**gamma for gamma in (0, 1].

    Not absolutely continuous with bounded density at the origin (the density
    gamma * t**(gamma-1) blows up), which is the interesting regime: the
    scaling profile is (0, 0, 2*gamma, 2*gamma, gamma) on windows anchored at
    the origin.
    """

    def __init__(self, gamma: float, horizon: float):
        if not (0.0 < gamma <= 1.0):
            raise ValueError("gamma must lie in (0, 1]")
        self.gamma = float(gamma)
        self.horizon = float(horizon)
        g = self.gamma
        self.exponents = ScalingExponents(0.0, 0.0, 2 * g, 2 * g, g)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = t ** self.gamma
        return out if out.ndim else float(out)

    def increment(self, s, t):
        return _stable_power_increment(s, t, self.gamma)

    def _increment_integrals(self, s, t):
        g = self.gamma
        h = t - s
        if s == 0.0:
            return t ** (g + 1) / (g + 1), t ** (2 * g + 1) / (2 * g + 1)
        if h >= 0.01 * s:
            # closed form; cancellation is bounded by (s/h)^2 <= 1e4 ulps
            p1 = (t ** (g + 1) - s ** (g + 1)) / (g + 1)
            p2 = (t ** (2 * g + 1) - s ** (2 * g + 1)) / (2 * g + 1)
            i1 = p1 - h * s ** g
            i2 = p2 - 2.0 * s ** g * p1 + h * s ** (2 * g)
            return i1, i2
        # narrow window far from the origin: A is analytic there, the
        # increment evaluated stably makes a 16-point panel exact to rounding
        x, w = _gl_nodes(16)
        inc = _stable_power_increment(s, s + h * x, g)
        return h * float(np.dot(w, inc)), h * float(np.dot(w, inc * inc))


class PowerSumDriver(BVDriver):
    """A(t) = c1 * t**g1 + c2 * t**g2 with 1 >= g1 >= g2 > 0, c1, c2 >= 0.

    The two-sided Holder pair: increments are sandwiched between multiples of
    h**g1 and h**g2 (on anchored windows), and the moment-ratio envelope may
    genuinely blow up at rate h**(-2*(g1-g2)).  Scaling profile
    (2*(g1-g2), 0, 2*g2, 2*g1, g2).
    """

    def __init__(self, gamma_hi: float, gamma_lo: float, c_hi: float,
                 c_lo: float, horizon: float):
        if not (0.0 < gamma_lo <= gamma_hi <= 1.0):
            raise ValueError("need 0 < gamma_lo <= gamma_hi <= 1")
        if c_hi < 0 or c_lo < 0 or c_hi + c_lo == 0:
            raise ValueError("coefficients must be nonnegative, not both zero")
        self.terms = ((float(c_hi), float(gamma_hi)), (float(c_lo), float(gamma_lo)))
        self.gamma_hi = float(gamma_hi)
        self.gamma_lo = float(gamma_lo)
        self.horizon = float(horizon)
        g1, g2 = self.gamma_hi, self.gamma_lo
        self.exponents = ScalingExponents(2 * (g1 - g2), 0.0, 2 * g2, 2 * g1, g2)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        out = sum(c * t ** g for c, g in self.terms)
        return out if out.ndim else float(out)

    def increment(self, s, t):
        return sum(c * _stable_power_increment(s, t, g) for c, g in self.terms)

    def _increment_integrals(self, s, t):
        h = t - s

        def power_int(a):  # int_s^t r**a dr
            if s == 0.0:
                return t ** (a + 1) / (a + 1)
            return (t ** (a + 1) - s ** (a + 1)) / (a + 1)

        if s == 0.0 or h >= 0.01 * s:
            # With B_g(r) = r^g - s^g:
            #   int B_gi dr        = power_int(gi) - h s^gi
            #   int B_gi B_gj dr   = power_int(gi+gj) - s^gj power_int(gi)
            #                        - s^gi power_int(gj) + h s^(gi+gj)
            # cancellation bounded by (s/h)^2 <= 1e4 ulps on this branch
            i1 = sum(c * (power_int(g) - h * s ** g) for c, g in self.terms)
            i2 = 0.0
            for ci, gi in self.terms:
                for cj, gj in self.terms:
                    i2 += ci * cj * (
                        power_int(gi + gj)
                        - s ** gj * power_int(gi)
                        - s ** gi * power_int(gj)
                        + h * s ** (gi + gj)
                    )
            return i1, i2
        x, w = _gl_nodes(16)
        inc = self.increment(s, s + h * x)
        return h * float(np.dot(w, inc)), h * float(np.dot(w, inc * inc))


class TabulatedDriver(BVDriver):
    """Monotone piecewise-linear interpolation of tabulated clock values."""

    def __init__(self, times, values, horizon=None):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.size < 2 or times.shape != values.shape:
            raise ValueError("table needs matching 1d times/values")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise ValueError("times must start at 0 and strictly increase")
        if values[0] != 0.0 or np.any(np.diff(values) < 0):
            raise ValueError("values must start at 0 and be nondecreasing")
        self._times = times
        self._values = values
        self.horizon = float(horizon if horizon is not None else times[-1])
        if self.horizon > times[-1] * (1 + 1e-12):
            raise ValueError("horizon extends past the table")
        slopes = np.diff(values) / np.diff(times)
        pos = slopes[slopes > 0]
        if pos.size == 0:
            raise ValueError("driver is constant; no usable window exists")
        # piecewise-linear => locally Lipschitz profile
        self.exponents = ScalingExponents(0.0, 0.0, 2.0, 2.0, 1.0)

    def value(self, t):
        out = np.interp(t, self._times, self._values)
        return out if np.ndim(out) else float(out)

    def _increment_integrals(self, s, t):
        a_s = self.value(s)
        f1 = lambda r: self.value(r) - a_s
        f2 = lambda r: (self.value(r) - a_s) ** 2
        # (A - A_s) piecewise linear, its square piecewise quadratic: GL2 exact
        i1 = _panel_quadrature(f1, s, t, self._times, 2)
        i2 = _panel_quadrature(f2, s, t, self._times, 2)
        return i1, i2


# ---------------------------------------------------------------------------
# scaling-exponent estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentEstimate:
    """Point estimates of a ScalingExponents profile plus OLS diagnostics.

    ``stderr`` holds the regression standard error for each slope under the
    same field names; ``r_squared`` the coefficient of determination.
    """

    exponents: ScalingExponents
    stderr: dict = field(default_factory=dict)
    r_squared: dict = field(default_factory=dict)
    n_windows: int = 0
    width_decades: float = 0.0


def anchored_ladder(horizon: float, n_widths: int = 22, shifts: int = 1):
    """Geometric window ladder: widths horizon * 2**-k, k = 1..n_widths.

    With shifts == 1 every window is anchored at 0, which reproduces the
    self-similar scaling of power clocks; shifts > 1 adds windows translated
    across [0, horizon] for envelope estimation over window positions.
    """
    windows = []
    for k in range(1, n_widths + 1):
        w = horizon * 2.0 ** (-k)
        if w < MIN_WINDOW_FRACTION * horizon * 4:
            break
        if shifts <= 1:
            windows.append((0.0, w))
        else:
            for j in range(shifts):
                s = (horizon - w) * j / (shifts - 1)
                windows.append((s, s + w))
    return windows


def _ols_loglog(widths, envelope):
    x = np.log(np.asarray(widths))
    y = np.log(np.asarray(envelope))
    coeffs, cov = np.polyfit(x, y, 1, cov=True)
    slope = coeffs[0]
    resid = y - np.polyval(coeffs, x)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(np.sqrt(cov[0, 0])), r2


def estimate_exponents(driver: BVDriver, windows=None) -> ExponentEstimate:
    """Estimate the small-window scaling profile from sampled windows.

    Windows are grouped by width; the extremal envelope over each width group
    is regressed against the width on log-log axes.  The default ladder is
    anchored at the origin (see ``anchored_ladder``), the placement on which
    the declared tables of the builtin families are tight.
    """
    if windows is None:
        windows = anchored_ladder(driver.horizon)
    if len(windows) < 20:
        raise ValueError("need at least 20 windows")
    groups: dict[float, list[WindowMoments]] = {}
    for s, t in windows:
        key = round(math.log(t - s), 9)
        groups.setdefault(key, []).append(driver.moments(s, t))
    widths = sorted(groups)
    span = (max(widths) - min(widths)) / math.log(10.0)
    if span < 3.0 or len(widths) < 4:
        raise ValueError("windows must span at least three decades of width")

    w_arr, ratio_hi, ratio_lo, var_hi, var_lo, mod = [], [], [], [], [], []
    for key in widths:
        ms = groups[key]
        w_arr.append(math.exp(key))
        ratio_hi.append(max(m.ratio for m in ms))
        ratio_lo.append(min(m.ratio for m in ms))
        var_hi.append(max(m.variance for m in ms))
        var_lo.append(min(m.variance for m in ms))
        mod.append(max(abs(m.increment) for m in ms))

    slopes = {}
    errs = {}
    r2s = {}
    for name, env, sign in (
        ("ratio_hi", ratio_hi, -1.0),
        ("ratio_lo", ratio_lo, -1.0),
        ("var_hi", var_hi, 1.0),
        ("var_lo", var_lo, 1.0),
        ("modulus", mod, 1.0),
    ):
        slope, err, r2 = _ols_loglog(w_arr, env)
        slopes[name] = sign * slope
        errs[name] = err
        r2s[name] = r2
    est = ScalingExponents(
        ratio_hi=slopes["ratio_hi"],
        ratio_lo=slopes["ratio_lo"],
        var_hi=slopes["var_hi"],
        var_lo=slopes["var_lo"],
        modulus=slopes["modulus"],
    )
    return ExponentEstimate(
        exponents=est,
        stderr=errs,
        r_squared=r2s,
        n_windows=len(windows),
        width_decades=span,
    )


# ---------------------------------------------------------------------------
# config-facing factory
# ---------------------------------------------------------------------------


def make_driver(spec: dict) -> BVDriver:
    """Build a driver from a config mapping; see README for the grammar."""
    kind = spec.get("kind")
    horizon = float(spec["horizon"])
    if kind == "linear":
        return linear_driver(horizon, rate=float(spec.get("rate", 1.0)))
    if kind == "density":
        return AbsolutelyContinuousDriver(spec["times"], spec["density"], horizon)
    if kind == "power":
        return PowerDriver(float(spec["gamma"]), horizon)
    if kind == "holder-pair":
        return PowerSumDriver(
            gamma_hi=float(spec["gamma_hi"]),
            gamma_lo=float(spec["gamma_lo"]),
            c_hi=float(spec.get("c_hi", 1.0)),
            c_lo=float(spec.get("c_lo", 1.0)),
            horizon=horizon,
        )
    if kind == "tabulated":
        return TabulatedDriver(spec["times"], spec["values"], horizon)
    raise ValueError(f"unknown driver kind: {kind!r}")
