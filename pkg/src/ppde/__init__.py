"""Transition densities and smooth solutions for parabolic equations with
running-integral path dependence.

The state is the pair (current level, weighted running integral); the weight
is a continuous increasing function of bounded variation whose local scaling
behaviour sets every exponent in the construction.  The density is built by
iterated convolutions around frozen Gaussian kernels, the solution by
integrating it against payoff and running cost, and both are cross-checked
against direct simulation of the underlying dynamics.
"""

from .coefficients import (AdmissibilityReport, CoefficientField,
                           compute_admissibility, make_field,
                           probe_hypotheses)
from .config import ConfigError, ExperimentConfig, load_config
from .drivers import (AbsolutelyContinuousDriver, BVDriver,
                      DegenerateWindowError, PowerDriver, PowerSumDriver,
                      ScalingExponents, TabulatedDriver, WindowMoments,
                      anchored_ladder, estimate_exponents, linear_driver,
                      make_driver)
from .kernels import KernelFrame, delta0, diagonal_domination_constant
from .parametrix import (DensityResult, NonConvergenceError,
                         ParametrixEngine, QuadSpec)
from .paths import GridPath
from .simulate import (ItoSlopeReport, MartingaleReport, MCResult,
                       PathSimulator, SimConfig, ito_slope_check,
                       martingale_check, rectangle_model_probability)
from .solver import (Derivatives, ReducedState, SolutionValue,
                     dupire_derivatives, equation_residual, solve_for_path,
                     solve_v, terminal_limit, v_series_route)

__version__ = "0.1.0"

__all__ = [
    "AbsolutelyContinuousDriver", "AdmissibilityReport", "BVDriver",
    "CoefficientField", "ConfigError", "DegenerateWindowError",
    "DensityResult", "Derivatives", "ExperimentConfig", "GridPath",
    "ItoSlopeReport", "KernelFrame", "MartingaleReport", "MCResult", "NonConvergenceError",
    "ParametrixEngine", "PathSimulator", "PowerDriver", "PowerSumDriver",
    "QuadSpec", "ReducedState", "ScalingExponents", "SimConfig",
    "SolutionValue", "TabulatedDriver", "WindowMoments", "anchored_ladder",
    "compute_admissibility", "delta0", "diagonal_domination_constant",
    "dupire_derivatives", "equation_residual", "estimate_exponents",
    "linear_driver", "load_config", "make_driver", "make_field",
    "ito_slope_check", "martingale_check", "probe_hypotheses", "rectangle_model_probability",
    "solve_for_path", "solve_v", "terminal_limit", "v_series_route",
]
