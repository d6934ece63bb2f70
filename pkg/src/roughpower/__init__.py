"""Rough differential equations with power-type coefficients.

Increment algebra and sewing, geometric rough paths, controlled-path
integration, power coefficients with their Lamperti transform, an adaptive
second-order scheme with shell tracking, and exponent studies.
"""

from __future__ import annotations

from . import analysis, coefficients, controlled, errors, fixtures, increments, roughpath, sewing, solver
from .coefficients import PowerCoefficient
from .errors import (ConfigError, InsufficientShells, MaxSteps, MuTooSmall, NoConvergence, NotClosed,
                     NotInC2Pi, OriginDerivative, RegularityBudget, RoughPowerError, StepUnderflow)
from .increments import Inc1, Inc2Grid, Inc3Grid, TimeGrid
from .roughpath import RoughPath, fbm_rough_path
from .solver import SolverParams, solve_1d_lamperti, solve_md_davie

__version__ = "0.1.0"
