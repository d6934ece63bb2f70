"""Sewing map on dyadic grids and the discrete sewing bound."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import MuTooSmall, NotClosed, NotInC2Pi
from .increments import (Inc2Grid, Inc3Grid, TimeGrid, delta2, delta_holder_norm,
                         holder_norm2, holder_norm3)

__all__ = [
    "SewingResult",
    "sew",
    "k_mu",
    "discrete_sewing_check",
    "telescoped_remainder",
    "sewing_constant",
]


def sewing_constant(mu: float) -> float:
    """``1 / (2**mu - 2)``, the constant attached to the sewing map."""
    if mu <= 1:
        raise MuTooSmall(f"sewing needs mu > 1, got {mu}")
    return 1.0 / (2.0 ** mu - 2.0)


@dataclass
class SewingResult:
    lambda_h: Inc2Grid
    mu: float
    bound_constant: float
    norm_h: float
    norm_lambda: float
    closure_residual: float = 0.0

    def bound_holds(self, slack: float = 0.05) -> bool:
        return self.norm_lambda <= self.bound_constant * self.norm_h * (1.0 + slack)

    @property
    def ratio(self) -> float:
        """``norm_lambda / norm_h`` (0 when h vanishes)."""
        return self.norm_lambda / self.norm_h if self.norm_h > 0 else 0.0

    def to_json(self) -> str:
        g = self.lambda_h
        i, j = np.triu_indices(len(g.grid), 1)
        return json.dumps({
            "mu": self.mu,
            "bound_constant": self.bound_constant,
            "norm_h": self.norm_h,
            "norm_lambda": self.norm_lambda,
            "closure_residual": self.closure_residual,
            "points": g.grid.points.tolist(),
            "pairs": np.column_stack([i, j]).tolist(),
            "values": g.values[i, j].reshape(i.size, -1).tolist(),
        })


def _first_block(i: int, j: int) -> int:
    """Largest aligned dyadic block ``[i, i + b]`` inside ``[i, j]``."""
    b = 1
    while i % (2 * b) == 0 and i + 2 * b <= j:
        b *= 2
    return b


def _sew_dyadic_grid(h: np.ndarray, level: int) -> np.ndarray:
    """Midpoint-insertion recursion on ``2**level`` intervals, then compose."""
    n = 2 ** level + 1
    g = np.zeros((n, n) + h.shape[3:])
    size = 1
    while size < n - 1:
        # blocks of length 2*size built from two blocks of length size
        s = np.arange(0, n - 1, 2 * size)
        m, t = s + size, s + 2 * size
        g[s, t] = g[s, m] + g[m, t] + h[s, m, t]
        size *= 2
    for i in range(n - 3, -1, -1):
        for j in range(i + 2, n):
            b = _first_block(i, j)
            if i + b == j:
                continue
            k = i + b
            g[i, j] = g[i, k] + g[k, j] + h[i, k, j]
    return g


def _sew_callable(h, grid: TimeGrid, depth: int) -> np.ndarray:
    t = grid.points
    n = t.size
    a, b = t[:-1], t[1:]
    # values on consecutive coarse intervals from a 2**depth refinement
    blocks = np.zeros_like(a)
    width = (b - a) / 2 ** depth
    level_vals = None
    size = 1
    for lev in range(depth):
        nb = 2 ** (depth - lev - 1)  # blocks per coarse interval at this level
        k = np.arange(nb)
        s = a[:, None] + (2 * k[None, :]) * size * width[:, None]
        m = s + size * width[:, None]
        e = s + 2 * size * width[:, None]
        hv = np.asarray(h(s, m, e), dtype=float)
        if level_vals is None:
            level_vals = hv
        else:
            level_vals = level_vals[:, 0::2] + level_vals[:, 1::2] + hv
        size *= 2
    if level_vals is not None:
        blocks = level_vals[:, 0]
    g = np.zeros((n, n))
    idx = np.arange(n - 1)
    g[idx, idx + 1] = blocks
    for i in range(n - 3, -1, -1):
        j = np.arange(i + 2, n)
        g[i, j] = g[i, i + 1] + g[i + 1, j] + np.asarray(h(t[i], t[i + 1], t[j]), dtype=float)
    return g


def sew(h, mu: float, refinement_depth: int = 0, *, grid: TimeGrid | None = None,
        tol: float = 1e-10) -> SewingResult:
    """Approximate the sewing map of a closed three-index increment.

    Parameters
    ----------
    h : Inc3Grid or callable
        Either grid values on a uniform grid with ``2**D`` intervals, or a
        vectorised function ``h(s, u, t)``; in the latter case every interval
        of ``grid`` is refined ``2**refinement_depth`` times.
    mu : float
        Regularity exponent, must exceed 1.
    tol : float
        Closedness tolerance, relative to ``max |h|``.

    Returns
    -------
    SewingResult
        ``lambda_h`` vanishes on the finest consecutive pairs and satisfies
        ``delta(lambda_h) = h`` on the grid.

    Raises
    ------
    MuTooSmall, NotClosed
    """
    const = sewing_constant(mu)
    if isinstance(h, Inc3Grid):
        if refinement_depth:
            raise ValueError("refinement needs a callable increment")
        grid = h.grid
        level = grid.dyadic_level
        if level is None:
            raise ValueError("sewing of grid values needs a dyadic grid")
        h3 = h
        g = _sew_dyadic_grid(h.values, level)
    else:
        if grid is None:
            raise ValueError("a callable increment needs a grid")
        h3 = Inc3Grid.from_function(grid, h)
        g = _sew_callable(h, grid, refinement_depth)
    lam = Inc2Grid(grid, g)
    scale = float(np.max(np.abs(h3.values))) if h3.values.size else 0.0
    resid = float(np.max(np.abs(delta2(lam).values - h3.values))) if h3.values.size else 0.0
    if scale > 0 and resid > tol * scale:
        raise NotClosed(f"delta h does not vanish: residual {resid:.3e} (scale {scale:.3e})")
    return SewingResult(lam, mu, const, holder_norm3(h3, mu), holder_norm2(lam, mu),
                        resid / scale if scale > 0 else 0.0)


def k_mu(mu: float) -> float:
    """``2**mu * zeta(mu)``.

    Partial sum up to ``N = 1000`` plus an Euler-Maclaurin tail; the neglected
    term is of order ``N**(-mu-5)``.
    """
    if mu <= 1:
        raise MuTooSmall(f"K_mu needs mu > 1, got {mu}")
    N = 1000
    l = np.arange(1, N, dtype=float)
    head = math.fsum(l ** -mu)
    tail = (N ** (1 - mu) / (mu - 1) + 0.5 * N ** -mu + mu / 12.0 * N ** (-mu - 1)
            - mu * (mu + 1) * (mu + 2) / 720.0 * N ** (-mu - 3))
    return 2.0 ** mu * (head + tail)


def telescoped_remainder(A: Inc2Grid) -> Inc2Grid:
    """``R_ij = A_ij - sum_{k=i}^{j-1} A_{k,k+1}``; consecutive entries vanish."""
    n = len(A.grid)
    cons = A.consecutive()
    cum = np.concatenate([np.zeros((1,) + cons.shape[1:]), np.cumsum(cons, axis=0)])
    R = A.values - (cum[None, :] - cum[:, None])
    idx = np.arange(n - 1)
    R[idx, idx + 1] = 0.0
    iu = np.tril_indices(n)
    R[iu] = 0.0
    return Inc2Grid(A.grid, R)


def discrete_sewing_check(R: Inc2Grid, mu: float, atol: float = 0.0):
    """Compare ``||R||_mu`` with ``K_mu ||delta R||_mu`` on the grid.

    Returns ``(lhs, rhs, passed)``.  Raises NotInC2Pi when a consecutive
    entry exceeds ``atol`` in absolute value.
    """
    K = k_mu(mu)
    cons = np.abs(R.consecutive())
    if cons.size and float(cons.max()) > atol:
        raise NotInC2Pi(f"consecutive entry of size {float(cons.max()):.3e}")
    lhs = holder_norm2(R, mu)
    rhs = K * delta_holder_norm(R, mu)
    return lhs, rhs, bool(lhs <= rhs)
