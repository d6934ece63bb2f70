"""Controlled paths, composition and compensated Riemann sums."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NoConvergence, RegularityBudget
from .increments import Inc1, Inc2Grid, TimeGrid
from .roughpath import RoughPath

__all__ = [
    "SmoothMap",
    "ControlledPath",
    "IntegralResult",
    "compose_smooth",
    "compose_controlled",
    "rough_integral",
    "integral_defect",
    "ito_stratonovich_residual",
    "probe_indices",
]


@dataclass
class SmoothMap:
    """Map ``R^d -> R^n`` with analytic derivatives.

    Callables act on arrays of shape ``(N, d)`` and return ``(N, n)``,
    ``(N, n, d)`` and ``(N, n, d, d)`` respectively.
    """

    value: Callable
    jac: Callable
    hess: Callable | None = None

    @classmethod
    def identity(cls, d: int) -> "SmoothMap":
        eye = np.eye(d)
        return cls(lambda x: np.array(x, dtype=float),
                   lambda x: np.broadcast_to(eye, (len(x), d, d)).copy(),
                   lambda x: np.zeros((len(x), d, d, d)))

    @classmethod
    def linear(cls, A) -> "SmoothMap":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        n, d = A.shape
        return cls(lambda x: np.asarray(x) @ A.T,
                   lambda x: np.broadcast_to(A, (len(x), n, d)).copy(),
                   lambda x: np.zeros((len(x), n, d, d)))

    @classmethod
    def elementwise(cls, f, f1, f2=None) -> "SmoothMap":
        """Apply scalar ``f`` componentwise (diagonal Jacobian)."""
        def jac(x):
            x = np.asarray(x, dtype=float)
            N, d = x.shape
            out = np.zeros((N, d, d))
            idx = np.arange(d)
            out[:, idx, idx] = f1(x)
            return out

        def hess(x):
            x = np.asarray(x, dtype=float)
            N, d = x.shape
            out = np.zeros((N, d, d, d))
            idx = np.arange(d)
            out[:, idx, idx, idx] = f2(x)
            return out

        return cls(lambda x: f(np.asarray(x, dtype=float)), jac, hess if f2 is not None else None)

    @classmethod
    def scalar(cls, g, grad, hess) -> "SmoothMap":
        """Scalar field ``g: R^d -> R`` from ``g``, gradient and Hessian
        callables on ``(N, d)`` arrays returning ``(N,)``, ``(N, d)``, ``(N, d, d)``."""
        return cls(lambda x: np.asarray(g(x))[:, None],
                   lambda x: np.asarray(grad(x))[:, None, :],
                   lambda x: np.asarray(hess(x))[:, None, :, :])


@dataclass(eq=False)
class ControlledPath:
    """``z`` with derivative ``zeta`` such that ``dz_st = zeta_s dx_st + r_st``.

    ``z.values`` has shape ``(N, *vshape)`` and ``zeta.values`` shape
    ``(N, *vshape, d)``.
    """

    z: Inc1
    zeta: Inc1
    eta: float
    base: RoughPath = field(repr=False)

    def __post_init__(self):
        if self.zeta.values.shape != self.z.values.shape + (self.base.d,):
            raise ValueError("zeta must have shape (N, *value_shape, d)")
        if self.eta <= self.base.gamma:
            raise ValueError("eta must exceed the driver's gamma")

    def remainder(self, i, j) -> np.ndarray:
        """``r_ij = z_j - z_i - zeta_i dx_ij`` (vectorised)."""
        i = np.asarray(i)
        j = np.asarray(j)
        zv, zt = self.z.values, self.zeta.values
        dx = self.base.increment(i, j)
        return zv[j] - zv[i] - np.einsum("...d,...d->...", zt[i], _bcast(dx, zt[i]))

    def remainder_grid(self, indices=None) -> Inc2Grid:
        """Remainder on all pairs of a sub-grid (default: 64-point probe grid)."""
        idx = probe_indices(self.base.n) if indices is None else np.asarray(indices)
        k = idx.size
        a, b = np.triu_indices(k, 1)
        vals = np.zeros((k, k) + self.z.values.shape[1:])
        vals[a, b] = self.remainder(idx[a], idx[b])
        return Inc2Grid(TimeGrid(self.base.grid.points[idx] - self.base.grid.points[idx[0]]), vals)

    def remainder_seminorm(self, mu: float, stride: int = 1) -> float:
        """``max |r_st| / (t-s)**mu`` over pairs of every ``stride``-th point."""
        n = self.base.n
        idx = np.arange(0, n, stride)
        t = self.base.grid.points
        best = 0.0
        for k, i in enumerate(idx[:-1]):
            j = idx[k + 1:]
            r = self.remainder(np.full(j.size, i), j).reshape(j.size, -1)
            best = max(best, float(np.max(np.linalg.norm(r, axis=1) / (t[j] - t[i]) ** mu)))
        return best


def _bcast(dx: np.ndarray, zt: np.ndarray) -> np.ndarray:
    # dx (..., d) against zeta (..., *vshape, d)
    extra = zt.ndim - dx.ndim
    return dx.reshape(dx.shape[:-1] + (1,) * extra + dx.shape[-1:])


def probe_indices(n: int, n_probe: int = 64) -> np.ndarray:
    """``n_probe + 1`` equally spaced indices including both ends (or all)."""
    if n - 1 <= n_probe:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, n_probe + 1)).astype(int))


def compose_smooth(f: SmoothMap, lam: float, rp: RoughPath) -> ControlledPath:
    """``z = f(x)`` with derivative ``Df(x)`` and remainder order ``gamma (1 + lam)``."""
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    x = rp.x.values
    z = np.asarray(f.value(x), dtype=float)
    zeta = np.asarray(f.jac(x), dtype=float)
    return ControlledPath(Inc1(rp.grid, z), Inc1(rp.grid, zeta), rp.gamma * (1 + lam), rp)


def compose_controlled(g: SmoothMap, cp: ControlledPath, lam: float = 1.0) -> ControlledPath:
    """``w = g(z)`` with derivative ``Dg(z) zeta`` (chain rule at first order)."""
    z = cp.z.values
    flat = z.reshape(z.shape[0], -1)
    w = np.asarray(g.value(flat), dtype=float)
    Dg = np.asarray(g.jac(flat), dtype=float)
    zt = cp.zeta.values.reshape(z.shape[0], flat.shape[1], cp.base.d)
    zeta = np.einsum("Nkn,Nnd->Nkd", Dg, zt)
    eta = min(cp.eta, cp.base.gamma * (1 + lam))
    return ControlledPath(Inc1(cp.z.grid, w), Inc1(cp.z.grid, zeta), eta, cp.base)


def _step_terms(m: ControlledPath, P: np.ndarray) -> np.ndarray:
    """Compensated terms ``m_p dx_pq + zeta_p x2_pq`` on consecutive points of P."""
    return _step_terms_pairs(m, P[:-1], P[1:])


@dataclass
class IntegralResult:
    value: np.ndarray | float
    error: float
    depth: int
    level_values: list
    converged: bool

    def __float__(self):
        return float(np.asarray(self.value).reshape(-1)[0])


def _level_partition(s: int, t: int, stride: int) -> np.ndarray:
    first = -(-s // stride) * stride
    inner = np.arange(first, t, stride)
    inner = inner[inner > s]
    return np.concatenate([[s], inner, [t]]).astype(int)


def rough_integral(m: ControlledPath, rp: RoughPath | None = None, s_index: int = 0,
                   t_index: int | None = None, depth: int | None = None,
                   tol: float | None = None, min_depth: int = 1) -> IntegralResult:
    """Compensated Riemann sums of ``int_s^t m dx`` on nested dyadic partitions.

    The level-``k`` partition is ``{s, t}`` together with every grid point in
    ``(s, t)`` whose index is a multiple of ``2**(D - k)``, where the driver's
    grid has ``2**D`` intervals.  The returned value is the finest-level sum;
    the error estimate extrapolates the last difference with rate
    ``eta + gamma - 1``.

    Parameters
    ----------
    m : ControlledPath
        Integrand with values in ``R^d`` (row covector) or ``R^{n x d}``.
    depth : int, optional
        Finest level used (default ``D``).
    tol : float, optional
        If given, raise NoConvergence when the last two levels differ by more.

    Raises
    ------
    RegularityBudget
        If ``eta + gamma <= 1``.
    """
    rp = m.base if rp is None else rp
    if rp is not m.base:
        raise ValueError("integrand is controlled by a different rough path")
    theta = m.eta + rp.gamma - 1.0
    if theta <= 0:
        raise RegularityBudget(f"eta + gamma = {m.eta + rp.gamma:.4f} <= 1")
    t_index = rp.n - 1 if t_index is None else t_index
    if not 0 <= s_index < t_index < rp.n:
        raise IndexError("need s_index < t_index inside the grid")
    D = rp.grid.dyadic_level
    if D is None:
        raise ValueError("rough_integral needs a uniform grid with 2**D intervals")
    depth = D if depth is None else min(depth, D)
    levels = []
    for k in range(min(min_depth, depth), depth + 1):
        P = _level_partition(s_index, t_index, 2 ** (D - k))
        levels.append(np.sum(_step_terms(m, P), axis=0))
    val = levels[-1]
    if len(levels) > 1:
        diff = float(np.max(np.abs(np.asarray(levels[-1]) - np.asarray(levels[-2]))))
    else:
        diff = float("inf")
    err = diff / (2.0 ** theta - 1.0)
    converged = tol is None or diff <= tol
    if tol is not None and not converged:
        raise NoConvergence(f"levels {depth - 1} and {depth} differ by {diff:.3e} > {tol:.3e}")
    return IntegralResult(val, err, depth, levels, diff <= (tol if tol is not None else np.inf))


def _cumulative_sums(m: ControlledPath, stride: int) -> tuple:
    P = np.arange(0, m.base.n, stride)
    terms = _step_terms(m, P)
    C = np.concatenate([np.zeros((1,) + terms.shape[1:]), np.cumsum(terms, axis=0)])
    return P, C


def integral_defect(m: ControlledPath, indices=None, stride: int = 1) -> float:
    """Check the local expansion of the integral on triples of a sub-grid.

    With ``Z = I - m dx - zeta x2`` (``I`` the compensated sum at the given
    stride), return ``max |delta Z_sut - (r_su dx_ut + (zeta_u - zeta_s) x2_ut)|``.
    """
    rp = m.base
    idx = probe_indices(rp.n, 16) if indices is None else np.asarray(indices)
    if np.any(idx % stride):
        raise ValueError("probe indices must lie on the stride grid")
    P, C = _cumulative_sums(m, stride)
    k = idx.size
    s, u, t = (a.ravel() for a in np.meshgrid(np.arange(k), np.arange(k), np.arange(k), indexing="ij"))
    keep = (s < u) & (u < t)
    s, u, t = idx[s[keep]], idx[u[keep]], idx[t[keep]]
    ps, pu, pt = s // stride, u // stride, t // stride

    def Z(a, b, pa, pb):
        I = C[pb] - C[pa]
        loc = _step_terms_pairs(m, a, b)
        return I - loc

    dZ = Z(s, t, ps, pt) - Z(s, u, ps, pu) - Z(u, t, pu, pt)
    r = m.remainder(s, u)
    dxut = rp.increment(u, t)
    x2ut = rp.area(u, t)
    dzeta = m.zeta.values[u] - m.zeta.values[s]
    rdx = _r_dx(r, dxut)
    x2b = x2ut.reshape(x2ut.shape[:1] + (1,) * (dzeta.ndim - 3) + x2ut.shape[1:])
    dzx2 = np.einsum("...ab,...ba->...", dzeta, x2b)
    return float(np.max(np.abs(dZ - (rdx + dzx2)))) if s.size else 0.0


def _r_dx(r: np.ndarray, dx: np.ndarray) -> np.ndarray:
    # r has the integrand's value shape (..., d) or (..., n, d); contract the last axis
    return np.einsum("...d,...d->...", r, _bcast(dx, r))


def _step_terms_pairs(m: ControlledPath, i, j) -> np.ndarray:
    rp = m.base
    dx = rp.increment(i, j)
    x2 = rp.area(i, j)
    mv = m.z.values[i]
    zt = m.zeta.values[i]
    first = np.einsum("...d,...d->...", mv, _bcast(dx, mv))
    # zeta^{i i1} x2^{i1 i}
    x2b = x2.reshape(x2.shape[:1] + (1,) * (zt.ndim - 3) + x2.shape[1:])
    return first + np.einsum("...ab,...ba->...", zt, x2b)


def ito_stratonovich_residual(g: SmoothMap, rp: RoughPath, depth: int,
                              n_probe: int = 64, lam: float = 1.0) -> tuple:
    """Residual ``g(x_t) - g(x_s) - int_s^t grad g(x) dx`` on probe pairs.

    The integral is the compensated sum on the level-``depth`` dyadic grid;
    probes are ``n_probe + 1`` equally spaced points (they must lie on that
    grid).  Returns ``(Inc2Grid, sup)``.
    """
    D = rp.grid.dyadic_level
    if D is None:
        raise ValueError("needs a uniform grid with 2**D intervals")
    if depth > D:
        raise ValueError(f"depth {depth} exceeds grid level {D}")
    stride = 2 ** (D - depth)
    idx = probe_indices(rp.n, n_probe)
    if np.any(idx % stride):
        raise ValueError("probe points do not lie on the level-depth grid")
    x = rp.x.values
    gx = np.asarray(g.value(x))[:, 0]
    grad = np.asarray(g.jac(x))[:, 0, :]
    hess = np.asarray(g.hess(x))[:, 0, :, :]
    if (2 + lam) * rp.gamma <= 1:
        raise RegularityBudget("(2 + lambda) gamma must exceed 1")
    m = ControlledPath(Inc1(rp.grid, grad), Inc1(rp.grid, hess), rp.gamma * (1 + lam), rp)
    P, C = _cumulative_sums(m, stride)
    k = idx.size
    a, b = np.triu_indices(k, 1)
    vals = np.zeros((k, k))
    I = C[idx[b] // stride] - C[idx[a] // stride]
    vals[a, b] = gx[idx[b]] - gx[idx[a]] - I
    grid = TimeGrid(rp.grid.points[idx] - rp.grid.points[idx[0]])
    return Inc2Grid(grid, vals), float(np.max(np.abs(vals)))
