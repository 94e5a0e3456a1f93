"""Monte Carlo simulation of the level/running-integral pair.

The level follows an Euler scheme while the running integral is accumulated
exactly against the driver increments: on each step the level is frozen at
its left endpoint, so I gains X_k (A(t_{k+1}) - A(t_k)) with the increment
taken from the driver's exact values.  Randomness comes from a counter-based
generator keyed by (seed, chunk start), so results are identical for any
chunk size schedule with the same boundaries and any thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .parametrix import ParametrixEngine
from .solver import _has_cost, solve_v


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 100_000
    n_steps: int = 400
    seed: int = 0
    chunk: int = 20_000
    antithetic: bool = False


@dataclass
class MCResult:
    """``n_samples`` counts independent samples: path pairs count once when
    the ensemble is antithetic."""

    mean: float
    stderr: float
    n_samples: int
    n_steps: int


def _rng_for_chunk(seed: int, start: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, start]))


def _chunk_bounds(n_paths: int, chunk: int):
    out = []
    start = 0
    while start < n_paths:
        out.append((start, min(start + chunk, n_paths)))
        start += chunk
    return out


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("PPDE_THREADS", "1")))
    except ValueError:
        return 1


class PathSimulator:
    """Chunked Euler simulation with streaming reductions."""

    def __init__(self, field, driver, s: float, x, config: SimConfig):
        self.field = field
        self.driver = driver
        self.s = float(s)
        self.x = (float(x[0]), float(x[1]))
        self.config = config
        T = driver.horizon
        self.times = np.linspace(self.s, T, config.n_steps + 1)
        self.a_vals = np.array([driver.value(t) for t in self.times])
        self.with_cost = None

    def _needs_cost(self) -> bool:
        if self.with_cost is None:
            x1, x2 = self.x
            probes = [(self.s, x1, x2),
                      (0.5 * (self.s + self.times[-1]), x1 + 0.7, x2 - 0.3),
                      (self.times[-1], x1 - 0.9, x2 + 0.4)]
            self.with_cost = any(
                float(np.asarray(self.field.cost(t, a, b))) != 0.0
                for t, a, b in probes)
        return self.with_cost

    def _run_chunk(self, start: int, stop: int, snapshot_times=()):
        n = stop - start
        rng = _rng_for_chunk(self.config.seed, start)
        x1 = np.full(n, self.x[0])
        x2 = np.full(n, self.x[1])
        cost_acc = np.zeros(n)
        w_acc = np.zeros(n)
        with_cost = self._needs_cost()
        snap_idx = {self._nearest_step(t): t for t in snapshot_times}
        snaps = {}
        if 0 in snap_idx:
            snaps[0] = (x1.copy(), x2.copy(), cost_acc.copy(), w_acc.copy())
        for k in range(self.config.n_steps):
            t = self.times[k]
            dt = self.times[k + 1] - t
            da = self.a_vals[k + 1] - self.a_vals[k]
            mu = np.asarray(self.field.mu(t, x1, x2), dtype=float)
            sig = np.asarray(self.field.sigma(t, x1, x2), dtype=float)
            if with_cost:
                cost_acc = cost_acc + np.asarray(
                    self.field.cost(t, x1, x2), dtype=float) * dt
            if self.config.antithetic:
                half = (n + 1) // 2
                raw = rng.standard_normal(half)
                dw = np.concatenate([raw, -raw[:n - half]]) * math.sqrt(dt)
            else:
                dw = rng.standard_normal(n) * math.sqrt(dt)
            x2 = x2 + x1 * da
            x1 = x1 + mu * dt + sig * dw
            w_acc = w_acc + dw
            if (k + 1) in snap_idx:
                snaps[k + 1] = (x1.copy(), x2.copy(), cost_acc.copy(),
                                w_acc.copy())
        return x1, x2, cost_acc, snaps

    def _nearest_step(self, t: float) -> int:
        return int(round((t - self.s) / (self.times[1] - self.times[0]))) \
            if len(self.times) > 1 else 0

    def _map_chunks(self, fn):
        bounds = _chunk_bounds(self.config.n_paths, self.config.chunk)
        workers = _thread_count()
        if workers == 1:
            return [fn(a, b) for a, b in bounds]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(fn, a, b) for a, b in bounds]
            return [f.result() for f in futures]

    # -- reductions -----------------------------------------------------------

    def expectation(self) -> MCResult:
        """Monte Carlo value of g(X_T, I_T) + accumulated running cost.

        Antithetic ensembles reduce over path-pair averages, which are the
        independent samples the standard error is built from.
        """
        g = self.field.payoff

        def work(a, b):
            x1, x2, cost_acc, _ = self._run_chunk(a, b)
            vals = np.asarray(g(x1, x2), dtype=float) + cost_acc
            if self.config.antithetic:
                n = len(vals)
                half = (n + 1) // 2
                paired = 0.5 * (vals[:n - half] + vals[half:])
                vals = np.concatenate([paired, vals[n - half:half]])
            return vals.sum(), np.square(vals).sum(), len(vals)

        tot, tot2, n = 0.0, 0.0, 0
        for s1, s2, c in self._map_chunks(work):
            tot += s1
            tot2 += s2
            n += c
        mean = tot / n
        var = max(tot2 / n - mean * mean, 0.0) * n / max(n - 1, 1)
        return MCResult(mean, math.sqrt(var / n), n, self.config.n_steps)

    def rectangle_probabilities(self, rects) -> list:
        """Empirical P[(X_T, I_T) in rect] with normal-approx intervals."""
        rects = [tuple(map(float, r)) for r in rects]

        def work(a, b):
            x1, x2, _, _ = self._run_chunk(a, b)
            return np.array([
                np.count_nonzero((x1 >= lo1) & (x1 <= hi1)
                                 & (x2 >= lo2) & (x2 <= hi2))
                for lo1, hi1, lo2, hi2 in rects]), len(x1)

        hits = np.zeros(len(rects))
        n = 0
        for h, c in self._map_chunks(work):
            hits += h
            n += c
        out = []
        for (lo1, hi1, lo2, hi2), k in zip(rects, hits):
            p = k / n
            se = math.sqrt(max(p * (1.0 - p), 1e-12) / n)
            out.append({"rect": (lo1, hi1, lo2, hi2), "p_mc": p,
                        "stderr": se, "n": n})
        return out

    def terminal_sample(self, n_keep: int = 4096):
        """Small terminal sample for grid sizing and plots."""
        keep1, keep2 = [], []
        for a, b in _chunk_bounds(min(self.config.n_paths, n_keep),
                                  self.config.chunk):
            x1, x2, _, _ = self._run_chunk(a, b)
            keep1.append(x1)
            keep2.append(x2)
        return np.concatenate(keep1), np.concatenate(keep2)

    def snapshots(self, snapshot_times):
        """(x1, x2, cost, W) snapshots at the nearest grid times, all paths."""
        snapshot_times = list(snapshot_times)

        def work(a, b):
            _, _, _, snaps = self._run_chunk(a, b, snapshot_times)
            return snaps

        merged = {}
        for snaps in self._map_chunks(work):
            for k, arrays in snaps.items():
                merged.setdefault(k, []).append(arrays)
        out = {}
        for k, parts in merged.items():
            out[self.times[k]] = tuple(
                np.concatenate([p[i] for p in parts]) for i in range(4))
        return out


def rectangle_model_probability(engine: ParametrixEngine, s: float, x,
                                rect, n_leg: int = 12,
                                max_order: int | None = None) -> float:
    """Model probability of a terminal rectangle via tensor Legendre nodes."""
    lo1, hi1, lo2, hi2 = map(float, rect)
    T = engine.driver.horizon
    u, w = np.polynomial.legendre.leggauss(n_leg)
    y1 = 0.5 * (hi1 - lo1) * u + 0.5 * (hi1 + lo1)
    y2 = 0.5 * (hi2 - lo2) * u + 0.5 * (hi2 + lo2)
    pts = np.column_stack([np.repeat(y1, n_leg), np.tile(y2, n_leg)])
    wts = np.outer(w, w).ravel() * 0.25 * (hi1 - lo1) * (hi2 - lo2)
    res = engine.density(s, np.asarray(x, dtype=float), T, pts,
                         max_order=max_order)
    return float(np.dot(wts, res.value))


@dataclass
class CheckpointStat:
    time: float
    mean: float
    stderr: float


@dataclass
class MartingaleReport:
    v0: float
    checkpoints: list
    slope: float
    slope_stderr: float
    max_gap: float


def _value_tables(engine: ParametrixEngine, t: float, x1, x2,
                  grid_n: int, max_order: int, n_y: int):
    """Interpolators for v and dx1_v on a rectangle covering the cloud."""
    lo1, hi1 = np.quantile(x1, [0.002, 0.998])
    lo2, hi2 = np.quantile(x2, [0.002, 0.998])
    pad1 = 0.15 * (hi1 - lo1) + 1e-9
    pad2 = 0.15 * (hi2 - lo2) + 1e-9
    g1 = np.linspace(lo1 - pad1, hi1 + pad1, grid_n)
    g2 = np.linspace(lo2 - pad2, hi2 + pad2, grid_n)
    table = np.empty((grid_n, grid_n))
    for i, a in enumerate(g1):
        for j, b in enumerate(g2):
            table[i, j] = solve_v(engine, float(t), (a, b),
                                  max_order=max_order, n_y=n_y).value
    # bilinear tables bias the mean upward on convex v by O(spacing^2),
    # which at n=1e5 paths is several standard errors; cubic removes it
    interp = RegularGridInterpolator((g1, g2), table, method="cubic",
                                     bounds_error=False, fill_value=None)
    slope_table = np.gradient(table, g1, axis=0)
    interp_d = RegularGridInterpolator((g1, g2), slope_table,
                                       bounds_error=False, fill_value=None)
    return interp, interp_d


def martingale_check(engine: ParametrixEngine, s: float, x,
                     config: SimConfig, checkpoint_times=None,
                     grid_n: int = 13, max_order: int = 1,
                     n_y: int = 12) -> MartingaleReport:
    """Constancy of E[v(t, X_t, I_t) + accumulated cost] along checkpoints.

    v is tabulated on a per-checkpoint rectangle covering the simulated
    cloud and interpolated; the checkpoint means would all equal v(s, x)
    for the exact solution, so both the drift (fitted slope in t) and the
    worst absolute gap are reported.
    """
    T = engine.driver.horizon
    if checkpoint_times is None:
        checkpoint_times = [s + q * (T - s) for q in (0.15, 0.3, 0.5, 0.7, 0.85)]
    sim = PathSimulator(engine.field, engine.driver, s, x, config)
    snaps = sim.snapshots(checkpoint_times)
    v0 = solve_v(engine, s, np.asarray(x, dtype=float),
                 max_order=max_order, n_y=n_y).value

    stats = []
    for t in sorted(snaps):
        x1, x2, cost, _ = snaps[t]
        interp, _ = _value_tables(engine, t, x1, x2, grid_n, max_order, n_y)
        vals = interp(np.column_stack([x1, x2])) + cost
        mean = float(np.mean(vals))
        se = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
        stats.append(CheckpointStat(float(t), mean, se))

    times = np.array([c.time for c in stats])
    means = np.array([c.mean for c in stats])
    ses = np.array([c.stderr for c in stats])
    tbar = times.mean()
    denom = float(np.sum((times - tbar) ** 2))
    coef = (times - tbar) / denom
    slope = float(np.dot(coef, means))
    slope_se = float(math.sqrt(np.sum((coef * ses) ** 2)))
    max_gap = float(np.max(np.abs(means - v0)))
    return MartingaleReport(v0, stats, slope, slope_se, max_gap)


@dataclass
class ItoSlopeReport:
    slope: float
    slope_stderr: float
    n_increments: int


def ito_slope_check(engine: ParametrixEngine, s: float, x,
                    config: SimConfig, checkpoint_times=None,
                    grid_n: int = 13, max_order: int = 1,
                    n_y: int = 12) -> ItoSlopeReport:
    """Regress v-increments on the Brownian term of the pathwise expansion.

    Along simulated paths, D_k = v(t_{k+1},.) - v(t_k,.) + cost increment
    equals the stochastic integral of sigma * dx1_v over the subinterval,
    so pairing D_k with Z_k = sigma * dx1_v * dW frozen at the left
    checkpoint gives a through-origin regression whose slope tends to one
    as the checkpoints refine.  v and dx1_v come from per-checkpoint
    tables shared with ``martingale_check``.
    """
    T = engine.driver.horizon
    if checkpoint_times is None:
        checkpoint_times = [s + q * (T - s)
                            for q in (0.0, 0.2, 0.4, 0.6, 0.8)]
    sim = PathSimulator(engine.field, engine.driver, s, x, config)
    snaps = sim.snapshots(checkpoint_times)
    times = sorted(snaps)

    tables = {t: _value_tables(engine, t, snaps[t][0], snaps[t][1],
                               grid_n, max_order, n_y)
              for t in times}
    d_all, z_all = [], []
    for t0, t1 in zip(times[:-1], times[1:]):
        x1_0, x2_0, cost0, w0 = snaps[t0]
        x1_1, x2_1, cost1, w1 = snaps[t1]
        pts0 = np.column_stack([x1_0, x2_0])
        v0 = tables[t0][0](pts0)
        v1 = tables[t1][0](np.column_stack([x1_1, x2_1]))
        d_all.append(v1 + cost1 - v0 - cost0)
        sig = np.asarray(engine.field.sigma(t0, x1_0, x2_0), dtype=float)
        z_all.append(sig * tables[t0][1](pts0) * (w1 - w0))
    d = np.concatenate(d_all)
    z = np.concatenate(z_all)
    den = float(np.dot(z, z))
    if den == 0.0:
        raise ValueError("Brownian term vanished on every increment")
    slope = float(np.dot(z, d)) / den
    resid = d - slope * z
    se = math.sqrt(float(np.dot(resid, resid)) / (max(len(d) - 1, 1) * den))
    return ItoSlopeReport(slope, se, len(d))
