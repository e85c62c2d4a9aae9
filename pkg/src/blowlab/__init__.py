"""Numerical construction of blow-up solutions of the bad Boussinesq equation.

The solution is recovered from explicit scattering data through a scalar
integral equation on two rays, solved by a Nystrom discretisation.
"""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .scattering import (DerivativeBlowup, Degenerate, LogFamily, ScatteringProfile,
                         Unbounded, build_profile, load_config, parse_config,
                         validate_profile)
from .solution import SolutionSample, asymptotic_prediction, u_eval, u_grid, u_leading

__all__ = ["DerivativeBlowup", "Degenerate", "LogFamily", "ScatteringProfile",
           "Unbounded", "build_profile", "load_config", "parse_config",
           "validate_profile", "SolutionSample", "asymptotic_prediction", "u_eval",
           "u_grid", "u_leading"]
