"""Deterministic drivers for tests and studies."""

from __future__ import annotations

import numpy as np

from .coefficients import PowerCoefficient, lamperti_phi
from .errors import ConfigError
from .increments import Inc1, TimeGrid
from .roughpath import RoughPath, lift_piecewise_linear

__all__ = ["linear_driver", "smooth_driver", "ramp_driver", "zero_hit_fixture"]


def linear_driver(n: int, slope=1.0, T: float = 1.0, gamma: float = 1.0) -> RoughPath:
    """``x_t = slope * t`` (scalar or vector slope) on ``n`` equal steps."""
    grid = TimeGrid.uniform(n, T)
    s = np.atleast_1d(np.asarray(slope, dtype=float))
    return lift_piecewise_linear(Inc1(grid, grid.points[:, None] * s[None, :]), grid, gamma,
                                 {"kind": "linear", "slope": s.tolist()})


def smooth_driver(n: int, amplitude: float = 0.5, frequency: float = 1.0, d: int = 1,
                  T: float = 1.0, gamma: float = 1.0) -> RoughPath:
    """``x^c_t = amplitude * sin(2 pi frequency (c + 1) t)`` for each component ``c``."""
    grid = TimeGrid.uniform(n, T)
    t = grid.points
    x = np.stack([amplitude * np.sin(2 * np.pi * frequency * (c + 1) * t) for c in range(d)], axis=1)
    return lift_piecewise_linear(Inc1(grid, x), grid, gamma,
                                 {"kind": "smooth", "amplitude": amplitude, "frequency": frequency})


def ramp_driver(n: int, amplitude: float, gamma: float, tau_star: float = 0.75,
                T: float = 1.0) -> RoughPath:
    """Self-similar driver ``x_t = A (sgn(1 - t/tau*) |1 - t/tau*|**gamma - 1)``.

    ``x_0 = 0``; near ``tau*`` the path behaves like ``|tau* - t|**gamma``, so it
    is gamma-Hölder with the same local constant at every scale.
    """
    if not 0 < tau_star < T:
        raise ConfigError("tau_star must lie inside (0, T)")
    grid = TimeGrid.uniform(n, T)
    u = 1.0 - grid.points / tau_star
    x = amplitude * (np.sign(u) * np.abs(u) ** gamma - 1.0)
    return lift_piecewise_linear(Inc1(grid, x[:, None]), grid, gamma,
                                 {"kind": "ramp", "amplitude": amplitude, "tau_star": tau_star})


def zero_hit_fixture(kappa: float = 0.8, gamma: float = 0.4, a: float = 1.0,
                     tau_star: float = 0.75, level: int = 16, c1: float = 1.0):
    """Case-B fixture: a 1-d power coefficient and a ramp driver whose
    Lamperti solution ``phi^{-1}(x + phi(a))`` reaches 0 exactly at ``tau*``.

    Returns ``(pc, rp)``.
    """
    pc = PowerCoefficient(kappa, c1)
    A = float(lamperti_phi(pc, a))
    return pc, ramp_driver(2 ** level, A, gamma, tau_star)
