"""Coefficient fields, their declared regularity, and admissibility checks.

A coefficient field packages the drift, volatility, running cost and terminal
payoff as functions of (t, x1, x2), where x1 is the current level of the
state and x2 its clock-weighted running integral, together with declared
bounds and Holder data.  ``compute_admissibility`` turns the declared data
plus a driver's scaling profile into the derived exponents that control the
singular-kernel series, and ``probe_hypotheses`` spot-checks the declared
bounds by Monte Carlo sampling.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .drivers import BVDriver, ScalingExponents

logger = logging.getLogger("ppde")

# exponential-growth guard for cost/payoff evaluations
GROWTH_CLIP = math.exp(30.0)


@dataclass(frozen=True)
class CoefficientField:
    """Coefficients of the equation plus their declared regularity.

    mu, sigma, ell: callables (t, x1, x2) -> float/array; g: (x1, x2) -> ...
    The declared data is what the admissibility report certifies:

    drift_bound        sup |mu|
    diffusivity_low/high   bounds pinning sigma**2
    alpha              Holder order of sigma (time and scaled space)
    alpha_ell          Holder order of the running cost
    holder_sigma, holder_mu, growth_constant   the corresponding constants
    """

    mu: callable
    sigma: callable
    ell: callable
    g: callable
    drift_bound: float
    diffusivity_low: float
    diffusivity_high: float
    alpha: float
    alpha_ell: float = 0.5
    holder_sigma: float = 1.0
    holder_mu: float = 1.0
    growth_constant: float = 1.0
    label: str = ""

    def __post_init__(self):
        if not (0.0 < self.diffusivity_low <= self.diffusivity_high):
            raise ValueError("need 0 < diffusivity_low <= diffusivity_high")
        if not (0.0 < self.alpha <= 1.0 and 0.0 < self.alpha_ell <= 1.0):
            raise ValueError("Holder orders must lie in (0, 1]")
        if self.drift_bound < 0.0:
            raise ValueError("drift_bound must be nonnegative")

    def diffusivity(self, t, x1, x2):
        """sigma(t, x)**2."""
        sig = self.sigma(t, x1, x2)
        return sig * sig

    def cost(self, t, x1, x2):
        return _growth_guard(self.ell(t, x1, x2), "running cost")

    def payoff(self, x1, x2):
        return _growth_guard(self.g(x1, x2), "terminal payoff")


def _growth_guard(values, what: str):
    arr = np.asarray(values, dtype=float)
    bad = np.abs(arr) > GROWTH_CLIP
    if np.any(bad):
        logger.warning("%s exceeded exp(30); clipping %d value(s)", what,
                       int(np.count_nonzero(bad)))
        arr = np.clip(arr, -GROWTH_CLIP, GROWTH_CLIP)
        return arr if arr.ndim else float(arr)
    return values


# ---------------------------------------------------------------------------
# admissibility
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdmissibilityReport:
    """Derived exponents and existence flags for a (field, driver) pair.

    With the driver profile (b0, b1, b2, b3, b4) =
    (ratio_hi, ratio_lo, var_hi, var_lo, modulus) and alpha the volatility
    Holder order:

    spread1, spread2     b1 - b0 and b2 - b0; each must exceed -1
    series_order         kappa0 = min((1-b0)/2, alpha-b0): the correction
                         kernel is integrable like (t-s)**(series_order-1)
    gradient_order       kappa1 = kappa0 + (1-b0)/2, rate for the gradient
                         correction term
    envelope_gap         max(b0-b1, b3-b2), looseness of the moment envelopes
    correction_cap       largest usable Holder order of the correction kernel
    correction_interval  admissible interval for that order
    correction_holder    the chosen order (interval midpoint)
    correction_order     kappa for the correction kernel in the second-derivative
                         estimates, at the chosen order
    cost_order           same but driven by alpha_ell
    ito_lhs, ito_rhs     the two sides of the expansion-exponent inequality
                         0 < ito_lhs < ito_rhs backing the pathwise expansion
    """

    spread1: float
    spread2: float
    series_order: float
    gradient_order: float
    envelope_gap: float
    correction_cap: float
    correction_interval: tuple
    correction_holder: float
    correction_order: float
    cost_order: float
    ito_lhs: float
    ito_rhs: float
    has_density: bool
    has_gradient: bool
    has_classical_solution: bool
    has_ito_expansion: bool
    exponents: ScalingExponents = None


def compute_admissibility(field: CoefficientField,
                          driver_or_exponents) -> AdmissibilityReport:
    """Derive series/solution exponents from declared data.

    Accepts a driver (its declared profile is used) or a raw profile.
    """
    if isinstance(driver_or_exponents, ScalingExponents):
        exps = driver_or_exponents
    else:
        exps = driver_or_exponents.exponents
    b0, b1 = exps.ratio_hi, exps.ratio_lo
    b2, b3 = exps.var_hi, exps.var_lo
    b4 = exps.modulus
    alpha = field.alpha
    alpha_ell = field.alpha_ell

    spread1 = b1 - b0
    spread2 = b2 - b0
    if spread1 <= -1.0 or spread2 <= -1.0:
        raise ValueError("shifted exponents must exceed -1; profile unusable")

    series_order = min((1.0 - b0) / 2.0, alpha - b0)
    gradient_order = series_order + (1.0 - b0) / 2.0
    envelope_gap = max(b0 - b1, b3 - b2)
    correction_cap = (0.5 - b0 - envelope_gap / 2.0
                      - max(b0 + 1.0 - 2.0 * alpha, 0.0) / 2.0)

    upper = min(series_order, correction_cap,
                (1.0 + spread1) / 2.0, (1.0 + spread2) / 2.0)
    interval = (0.0, upper)
    kernel_ratio = min((2.0 * b4 + 1.0 + spread1) / (1.0 + spread2), 1.0)

    if upper > 0.0:
        chosen = upper / 2.0
        correction_order = kernel_ratio * min(chosen, alpha) - b0
        cost_order = kernel_ratio * min(alpha_ell, alpha) - b0
        # existence asks for some admissible order, so test at the sup end
        best = kernel_ratio * min(0.999 * upper, alpha_ell, alpha) - b0
        has_classical = best > 0.0
    else:
        chosen = float("nan")
        correction_order = float("nan")
        cost_order = float("nan")
        has_classical = False

    ito_lhs = (1.0 + b2 - b0) / (2.0 + 4.0 * b4)
    ito_rhs = 1.0 - (b3 - b2 + b0) / 2.0

    return AdmissibilityReport(
        spread1=spread1,
        spread2=spread2,
        series_order=series_order,
        gradient_order=gradient_order,
        envelope_gap=envelope_gap,
        correction_cap=correction_cap,
        correction_interval=interval,
        correction_holder=chosen,
        correction_order=correction_order,
        cost_order=cost_order,
        ito_lhs=ito_lhs,
        ito_rhs=ito_rhs,
        has_density=series_order > 0.0,
        has_gradient=series_order > 0.0 and gradient_order > 0.0,
        has_classical_solution=has_classical,
        has_ito_expansion=0.0 < ito_lhs < ito_rhs,
        exponents=exps,
    )


# ---------------------------------------------------------------------------
# Monte Carlo hypothesis probing
# ---------------------------------------------------------------------------


@dataclass
class ProbeResult:
    """Worst observed/declared ratio for one declared inequality."""

    name: str
    worst_ratio: float
    location: tuple = ()

    @property
    def passed(self) -> bool:
        # 1% slack: the declared constants certify an envelope, and the probe
        # is a sample, so exact attainment counts as a pass
        return self.worst_ratio <= 1.01


@dataclass
class HypothesisProbe:
    results: list
    n_samples: int
    seed: int

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def summary(self) -> str:
        lines = []
        for r in self.results:
            flag = "ok" if r.passed else "VIOLATED"
            lines.append(f"{r.name:<18} worst ratio {r.worst_ratio:8.4f}  {flag}")
        return "\n".join(lines)


def probe_hypotheses(field: CoefficientField, driver: BVDriver,
                     n_samples: int = 2000, seed: int = 0,
                     anchor=(0.0, 0.0)) -> HypothesisProbe:
    """Sample the declared inequalities and report worst observed ratios.

    Windows are drawn with log-uniform width (down to 1e-6 of the horizon) so
    short-time Holder behavior is exercised; states are Gaussian with scale 3
    around the anchor state.
    """
    rng = np.random.default_rng(seed)
    T = driver.horizon
    exps = driver.exponents
    b0 = exps.ratio_hi
    sp1 = exps.ratio_lo - b0
    sp2 = exps.var_hi - b0
    e1 = 2.0 * field.alpha / (1.0 + sp1)
    e2 = 2.0 * field.alpha / (1.0 + sp2)
    el1 = 2.0 * field.alpha_ell / (1.0 + sp1)
    el2 = 2.0 * field.alpha_ell / (1.0 + sp2)

    width = np.exp(rng.uniform(np.log(1e-6 * T), np.log(T), n_samples))
    s = rng.uniform(0.0, T - width)
    t = s + width
    x1 = anchor[0] + 3.0 * rng.standard_normal(n_samples)
    x2 = anchor[1] + 3.0 * rng.standard_normal(n_samples)
    y1 = anchor[0] + 3.0 * rng.standard_normal(n_samples)
    y2 = anchor[1] + 3.0 * rng.standard_normal(n_samples)

    inc = driver.increment(s, t)
    # offset map: w = x - E_{s,t}(y), E(y) = (y1, y2 - inc * y1)
    w1 = x1 - y1
    w2 = x2 - (y2 - inc * y1)

    sig_x = np.asarray(field.sigma(s, x1, x2), dtype=float)
    sig_y = np.asarray(field.sigma(t, y1, y2), dtype=float)
    diff_x = sig_x * sig_x

    def worst(name, ratios):
        ratios = np.asarray(ratios, dtype=float)
        i = int(np.nanargmax(ratios))
        return ProbeResult(name=name, worst_ratio=float(ratios[i]),
                           location=(float(s[i]), float(t[i]),
                                     float(x1[i]), float(x2[i])))

    results = []
    results.append(worst("ellipticity", np.maximum(
        field.diffusivity_low / diff_x, diff_x / field.diffusivity_high)))

    mu_x = np.abs(np.asarray(field.mu(s, x1, x2), dtype=float))
    results.append(worst("drift bound", mu_x / max(field.drift_bound, 1e-300)))

    holder_sig = np.abs(sig_x - sig_y) / (
        field.holder_sigma
        * (width ** field.alpha + np.abs(w1) ** e1 + np.abs(w2) ** e2))
    results.append(worst("sigma holder", holder_sig))

    mu_y = np.asarray(field.mu(s, y1, y2), dtype=float)
    holder_mu = np.abs(np.asarray(field.mu(s, x1, x2)) - mu_y) / (
        field.holder_mu
        * (np.abs(x1 - y1) ** e1 + np.abs(x2 - y2) ** e2 + 1e-300))
    results.append(worst("mu holder", holder_mu))

    norm_x = np.sqrt(x1 * x1 + x2 * x2)
    growth = (np.abs(np.asarray(field.cost(s, x1, x2), dtype=float))
              + np.abs(np.asarray(field.payoff(x1, x2), dtype=float))) / (
        field.growth_constant * np.exp(field.growth_constant * norm_x))
    results.append(worst("growth", growth))

    norm_y = np.sqrt(y1 * y1 + y2 * y2)
    holder_ell = np.abs(
        np.asarray(field.cost(s, x1, x2), dtype=float)
        - np.asarray(field.cost(s, y1, y2), dtype=float)) / (
        field.growth_constant
        * (np.exp(field.growth_constant * norm_x)
           + np.exp(field.growth_constant * norm_y))
        * (np.abs(x1 - y1) ** el1 + np.abs(x2 - y2) ** el2 + 1e-300))
    results.append(worst("cost holder", holder_ell))

    return HypothesisProbe(results=results, n_samples=n_samples, seed=seed)


# ---------------------------------------------------------------------------
# builtin scalar functions and field factory
# ---------------------------------------------------------------------------


def _pick_arg(arg: str):
    if arg == "t":
        return lambda t, x1, x2: t
    if arg == "x1":
        return lambda t, x1, x2: x1
    if arg == "x2":
        return lambda t, x1, x2: x2
    raise ValueError(f"unknown argument selector {arg!r}")


def make_scalar(spec) -> callable:
    """Build a vectorized (t, x1, x2) -> value function from a config node."""
    if isinstance(spec, (int, float)):
        spec = {"kind": "constant", "value": float(spec)}
    kind = spec.get("kind")
    if kind == "constant":
        v = float(spec["value"])
        return lambda t, x1, x2: np.full_like(np.asarray(x1, dtype=float), v) \
            if np.ndim(x1) else v
    if kind == "linear":
        a = float(spec.get("intercept", 0.0))
        bx1 = float(spec.get("x1", 0.0))
        bx2 = float(spec.get("x2", 0.0))
        bt = float(spec.get("t", 0.0))
        return lambda t, x1, x2: a + bx1 * np.asarray(x1) + bx2 * np.asarray(x2) \
            + bt * np.asarray(t)
    if kind == "sin":
        base = float(spec.get("base", 0.0))
        amp = float(spec.get("amplitude", 1.0))
        freq = float(spec.get("frequency", 1.0))
        pick = _pick_arg(spec.get("arg", "x1"))
        return lambda t, x1, x2: base + amp * np.sin(freq * pick(t, x1, x2))
    if kind == "exp_min":
        cap = float(spec.get("cap", 5.0))
        scale = float(spec.get("scale", 1.0))
        pick = _pick_arg(spec.get("arg", "x2"))
        return lambda t, x1, x2: np.exp(scale * np.minimum(pick(t, x1, x2), cap))
    raise ValueError(f"unknown scalar kind {kind!r}")


def make_field(spec: dict) -> CoefficientField:
    """Build a CoefficientField from a config mapping; see README."""
    mu = make_scalar(spec.get("mu", 0.0))
    sigma = make_scalar(spec.get("sigma", 1.0))
    ell = make_scalar(spec.get("ell", 0.0))
    g_spec = spec.get("g", {"kind": "linear", "x1": 1.0})
    g3 = make_scalar(g_spec)
    g = lambda x1, x2: g3(0.0, x1, x2)
    return CoefficientField(
        mu=mu,
        sigma=sigma,
        ell=ell,
        g=g,
        drift_bound=float(spec.get("drift_bound", 0.0)),
        diffusivity_low=float(spec["diffusivity_low"]),
        diffusivity_high=float(spec["diffusivity_high"]),
        alpha=float(spec.get("alpha", 0.5)),
        alpha_ell=float(spec.get("alpha_ell", 0.5)),
        holder_sigma=float(spec.get("holder_sigma", 1.0)),
        holder_mu=float(spec.get("holder_mu", 1.0)),
        growth_constant=float(spec.get("growth_constant", 1.0)),
        label=spec.get("label", ""),
    )
