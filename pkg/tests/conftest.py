"""Shared fixtures: drivers, coefficient fields, engines.

Engines are session-scoped so their kernel-frame caches persist across
tests; everything here is deterministic, so sharing is safe.
"""

from __future__ import annotations

import numpy as np
import pytest

from ppde import (
    CoefficientField,
    ParametrixEngine,
    PowerDriver,
    PowerSumDriver,
    linear_driver,
)


def constant(v):
    """(t, x1, x2) -> v, broadcasting over x1."""
    return lambda t, x1, x2: v + 0.0 * np.asarray(x1, dtype=float)


def identity_payoff(x1, x2):
    return np.asarray(x1, dtype=float) + 0.0 * np.asarray(x2, dtype=float)


def exp_capped_payoff(x1, x2):
    return np.exp(np.minimum(np.asarray(x2, dtype=float), 5.0))


@pytest.fixture(scope="session")
def linear():
    return linear_driver(1.0)


@pytest.fixture(scope="session")
def power_half():
    return PowerDriver(0.5, 1.0)


@pytest.fixture(scope="session")
def holder_pair():
    return PowerSumDriver(0.5, 0.3, 1.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def kolmogorov_field():
    # unit diffusion, zero drift, identity payoff: density, solution and
    # moments are all known in closed form
    return CoefficientField(
        mu=constant(0.0),
        sigma=constant(1.0),
        ell=constant(0.0),
        g=identity_payoff,
        drift_bound=0.0,
        diffusivity_low=0.9,
        diffusivity_high=1.1,
        alpha=0.5,
        label="kolmogorov",
    )


@pytest.fixture(scope="session")
def smooth_field():
    # the nonconstant-sigma case used throughout the cross checks
    return CoefficientField(
        mu=constant(0.2),
        sigma=lambda t, x1, x2: 1.0 + 0.1 * np.sin(np.asarray(x1, dtype=float)),
        ell=constant(0.0),
        g=exp_capped_payoff,
        drift_bound=0.3,
        diffusivity_low=0.8,
        diffusivity_high=1.3,
        alpha=0.5,
        label="smooth",
    )


@pytest.fixture(scope="session")
def kolmogorov_engine(kolmogorov_field, linear):
    return ParametrixEngine(kolmogorov_field, linear)


@pytest.fixture(scope="session")
def smooth_engine(smooth_field, power_half):
    return ParametrixEngine(smooth_field, power_half)
