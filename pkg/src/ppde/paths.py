"""Step paths on a time grid, with the bump and freeze operations.

Functionals of paths are evaluated on right-continuous step paths: the path
equals ``values[i]`` on ``[times[i], times[i+1])`` and ``values[-1]`` at the
final time.  Two operations generate the derivative probes:

* ``bump(u, size)``: add ``size`` to the path from time ``u`` onward
  (vertical perturbation),
* ``freeze(u)``: hold the value at ``u`` constant afterwards (the horizontal
  flow used for time derivatives).
"""

from __future__ import annotations

import bisect

import numpy as np


class GridPath:
    """Right-continuous step path sampled on a strictly increasing grid."""

    def __init__(self, times, values):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ValueError("need at least two grid times")
        if times.shape != values.shape:
            raise ValueError("times and values must have equal length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("grid times must strictly increase")
        self.times = times
        self.values = values

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def value_at(self, u: float) -> float:
        if u < self.times[0] or u > self.times[-1] * (1 + 1e-12):
            raise ValueError(f"time {u} outside the grid span")
        idx = bisect.bisect_right(self.times.tolist(), u) - 1
        idx = min(max(idx, 0), self.times.size - 1)
        return float(self.values[idx])

    def _with_breakpoint(self, u: float) -> "GridPath":
        """Return an equal path whose grid contains u."""
        if u in self.times:
            return self
        idx = int(np.searchsorted(self.times, u))
        times = np.insert(self.times, idx, u)
        values = np.insert(self.values, idx, self.values[idx - 1])
        return GridPath(times, values)

    def bump(self, u: float, size: float) -> "GridPath":
        """The path plus size * indicator([u, horizon])."""
        base = self._with_breakpoint(u)
        values = base.values.copy()
        values[base.times >= u - 1e-15] += size
        return GridPath(base.times, values)

    def freeze(self, u: float) -> "GridPath":
        """The path stopped at u: constant equal to value_at(u) afterwards."""
        base = self._with_breakpoint(u)
        values = base.values.copy()
        values[base.times >= u - 1e-15] = self.value_at(u)
        return GridPath(base.times, values)

    def running_integral(self, driver, upto: float) -> float:
        """Exact Stieltjes integral of the path against dA over [0, upto]."""
        base = self._with_breakpoint(upto)
        mask = base.times <= upto * (1 + 1e-15)
        times = base.times[mask]
        if times.size < 2:
            return 0.0
        return driver.stieltjes(times, base.values[mask])

    @classmethod
    def constant(cls, value: float, horizon: float) -> "GridPath":
        return cls([0.0, horizon], [value, value])
