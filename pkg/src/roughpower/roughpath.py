"""Geometric rough paths: lifts, fBm drivers, norms and roughness."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .increments import Inc1, Inc2Grid, TimeGrid

__all__ = [
    "RoughPath",
    "RoughnessEstimate",
    "chen_extend",
    "lift_piecewise_linear",
    "fbm_increments",
    "fbm_rough_path",
    "rough_norm",
    "roughness_modulus",
    "lift_residuals",
    "write_rough_path",
    "read_rough_path",
    "sphere_net",
]


@dataclass(eq=False)
class RoughPath:
    """Path ``x`` on a grid with second-level blocks on consecutive pairs.

    ``x2[k]`` is the ``d x d`` matrix ``int_{t_k}^{t_{k+1}} (x_u - x_{t_k})
    (x) dx_u``.  Blocks on longer pairs are obtained with Chen's relation.
    ``check_blocks`` optionally holds independently stored blocks on
    non-consecutive pairs ``(i, j)``; they are compared against the Chen
    extension by :func:`lift_residuals`.
    """

    grid: TimeGrid
    x: Inc1
    x2: np.ndarray
    gamma: float
    meta: dict = field(default_factory=dict)
    check_blocks: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = self.x.values
        if vals.ndim == 1:
            self.x = Inc1(self.grid, vals[:, None])
        self.x2 = np.asarray(self.x2, dtype=float)
        n, d = self.x.values.shape
        if self.x2.shape != (n - 1, d, d):
            raise ValueError(f"x2 must have shape {(n - 1, d, d)}, got {self.x2.shape}")
        self._cum = None

    @property
    def d(self) -> int:
        return self.x.values.shape[1]

    @property
    def n(self) -> int:
        return len(self.grid)

    @property
    def dx(self) -> np.ndarray:
        return np.diff(self.x.values, axis=0)

    def _cumulative(self) -> np.ndarray:
        # Z_k = sum_{u<k} x2_u + (x_u - x_0) (x) dx_u ; block (i, j) follows
        if self._cum is None:
            xv = self.x.values
            p = xv[:-1] - xv[0]
            inc = self.x2 + p[:, :, None] * self.dx[:, None, :]
            z = np.zeros((self.n, self.d, self.d))
            np.cumsum(inc, axis=0, out=z[1:])
            self._cum = z
        return self._cum

    def area(self, i, j) -> np.ndarray:
        """Second-level block on pairs ``(i, j)`` (vectorised over arrays)."""
        i = np.asarray(i)
        j = np.asarray(j)
        z = self._cumulative()
        xv = self.x.values
        pi = xv[i] - xv[0]
        dij = xv[j] - xv[i]
        return z[j] - z[i] - pi[..., :, None] * dij[..., None, :]

    def increment(self, i, j) -> np.ndarray:
        xv = self.x.values
        return xv[np.asarray(j)] - xv[np.asarray(i)]

    def restrict(self, indices) -> "RoughPath":
        """Rough path on a sub-grid (indices must include 0)."""
        idx = np.asarray(indices)
        if idx[0] != 0 or np.any(np.diff(idx) <= 0):
            raise ValueError("indices must start at 0 and increase")
        grid = TimeGrid(self.grid.points[idx], self.grid.T)
        x2 = self.area(idx[:-1], idx[1:])
        return RoughPath(grid, Inc1(grid, self.x.values[idx]), x2, self.gamma, dict(self.meta))

    def area_grid(self) -> Inc2Grid:
        """All pairs as an ``Inc2Grid`` (O(n^2 d^2) memory)."""
        n = self.n
        i, j = np.triu_indices(n, 1)
        v = np.zeros((n, n, self.d, self.d))
        v[i, j] = self.area(i, j)
        return Inc2Grid(self.grid, v)


@dataclass
class RoughnessEstimate:
    gamma_hat: float
    L: float
    epsilon_grid: np.ndarray
    L_per_eps: np.ndarray
    skipped: int = 0

    def to_dict(self) -> dict:
        return {"gamma_hat": self.gamma_hat, "L": self.L,
                "epsilon_grid": [float(e) for e in self.epsilon_grid],
                "L_per_eps": [float(v) for v in self.L_per_eps],
                "skipped": self.skipped}


def chen_extend(rp: RoughPath, s_index: int, t_index: int) -> np.ndarray:
    """Assemble the block on ``(s, t)`` from consecutive blocks, left to right."""
    if not 0 <= s_index < t_index < rp.n:
        raise IndexError(f"need 0 <= s < t < {rp.n}, got ({s_index}, {t_index})")
    xv = rp.x.values
    acc = rp.x2[s_index].copy()
    for u in range(s_index + 1, t_index):
        acc += rp.x2[u] + np.outer(xv[u] - xv[s_index], xv[u + 1] - xv[u])
    return acc


def lift_piecewise_linear(path: Inc1, coarse_grid: TimeGrid | None = None,
                          gamma: float = 0.5, meta: dict | None = None) -> RoughPath:
    """Exact second level of the piecewise-linear interpolant.

    The symmetric part of every block is set to ``dx (x) dx / 2`` and the
    antisymmetric part (the area) is summed from per-segment contributions on
    the fine grid, so both Chen's relation and geometric symmetry hold up to
    rounding.
    """
    fine = path.grid
    xf = path.values
    if xf.ndim == 1:
        xf = xf[:, None]
    if coarse_grid is None:
        coarse_grid = fine
    idx = np.searchsorted(fine.points, coarse_grid.points)
    idx = np.clip(idx, 0, len(fine) - 1)
    if not np.allclose(fine.points[idx], coarse_grid.points, rtol=0, atol=1e-12 * max(fine.T, 1.0)):
        raise ValueError("the fine grid does not refine the coarse grid")
    if idx[0] != 0 or idx[-1] != len(fine) - 1:
        raise ValueError("coarse and fine grids must share endpoints")
    d = xf.shape[1]
    xc = xf[idx]
    dxc = np.diff(xc, axis=0)
    sym = 0.5 * dxc[:, :, None] * dxc[:, None, :]
    if d == 1:
        x2 = sym
    else:
        p = xf[:-1] - xf[0]
        df = np.diff(xf, axis=0)
        m = p[:, :, None] * df[:, None, :]
        w = np.zeros((len(fine), d, d))
        np.cumsum(m, axis=0, out=w[1:])
        pc = xc[:-1] - xf[0]
        blk = w[idx[1:]] - w[idx[:-1]] - pc[:, :, None] * dxc[:, None, :]
        x2 = sym + 0.5 * (blk - np.swapaxes(blk, 1, 2))
    return RoughPath(coarse_grid, Inc1(coarse_grid, xc), x2, gamma, dict(meta or {}))


def _davies_harte(n: int, H: float, rng: np.random.Generator) -> np.ndarray | None:
    """Unit-step fractional Gaussian noise of length n, or None if the
    circulant embedding is not nonnegative definite."""
    k = np.arange(n + 1, dtype=float)
    r = 0.5 * ((k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))
    row = np.concatenate([r, r[-2:0:-1]])
    lam = np.fft.fft(row).real
    if np.min(lam) < -1e-10 * np.max(lam):
        return None
    lam = np.clip(lam, 0.0, None)
    m = row.size
    w = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    y = np.fft.fft(np.sqrt(lam / m) * w)
    return y.real[:n]


def _cholesky_fbm(n: int, H: float, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(1, n + 1, dtype=float)
    cov = 0.5 * (t[:, None] ** (2 * H) + t[None, :] ** (2 * H)
                 - np.abs(t[:, None] - t[None, :]) ** (2 * H))
    L = np.linalg.cholesky(cov)
    b = L @ rng.standard_normal(n)
    return np.diff(np.concatenate([[0.0], b]))


def fbm_increments(n: int, H: float, T: float = 1.0, rng=None,
                   method: str = "auto") -> np.ndarray:
    """Increments of fractional Brownian motion on ``n`` equal steps over ``[0, T]``.

    Parameters
    ----------
    method : {"auto", "davies-harte", "cholesky"}
        ``auto`` tries circulant embedding and falls back to a Cholesky
        factorisation of the covariance (only sensible for small ``n``).
    """
    if not 0 < H < 1:
        raise ConfigError(f"Hurst index must lie in (0, 1), got {H}")
    rng = np.random.default_rng(rng)
    g = None
    if method in ("auto", "davies-harte"):
        g = _davies_harte(n, H, rng)
        if g is None and method == "davies-harte":
            raise ConfigError("circulant embedding is not nonnegative definite")
    if g is None:
        if n > 8192:
            raise ConfigError("Cholesky fallback limited to n <= 8192")
        g = _cholesky_fbm(n, H, rng)
    return g * (T / n) ** H


def fbm_rough_path(H: float, d: int, n_coarse: int, refine_factor: int = 8,
                   seed: int = 0, T: float = 1.0, gamma_margin: float = 0.02,
                   method: str = "auto") -> RoughPath:
    """Lift of a ``d``-dimensional fBm with independent components.

    Components are sampled on a grid ``refine_factor`` times finer than the
    returned one and lifted through the piecewise-linear interpolant.
    """
    if not 1.0 / 3.0 < H <= 0.5:
        raise ConfigError(f"H must lie in (1/3, 1/2], got {H}")
    if refine_factor < 4:
        raise ConfigError("refine_factor must be at least 4")
    if d < 1 or n_coarse < 1:
        raise ConfigError("d and n_coarse must be positive")
    rng = np.random.default_rng(seed)
    n_f = n_coarse * refine_factor
    xf = np.zeros((n_f + 1, d))
    for c in range(d):
        xf[1:, c] = np.cumsum(fbm_increments(n_f, H, T, rng, method))
    fine = TimeGrid.uniform(n_f, T)
    coarse = TimeGrid.uniform(n_coarse, T)
    meta = {"H": H, "seed": seed, "refine_factor": refine_factor, "d": d,
            "n_coarse": n_coarse, "T": T, "gamma_margin": gamma_margin}
    return lift_piecewise_linear(Inc1(fine, xf), coarse, H - gamma_margin, meta)


def rough_norm(rp: RoughPath, gamma: float | None = None, stride: int = 1) -> float:
    """``||x||_gamma + ||x2||_{2 gamma}`` over all grid pairs.

    ``stride > 1`` restricts the supremum to every ``stride``-th point.
    """
    gamma = rp.gamma if gamma is None else gamma
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    idx = np.arange(0, rp.n, stride)
    if idx[-1] != rp.n - 1:
        idx = np.append(idx, rp.n - 1)
    t = rp.grid.points[idx]
    a = b = 0.0
    for k, i in enumerate(idx[:-1]):
        j = idx[k + 1:]
        h = t[k + 1:] - t[k]
        dx = np.linalg.norm(rp.increment(i, j), axis=-1)
        x2 = np.linalg.norm(rp.area(np.full(j.size, i), j), axis=(-2, -1))
        a = max(a, float(np.max(dx / h ** gamma)))
        b = max(b, float(np.max(x2 / h ** (2 * gamma))))
    return a + b


def lift_residuals(rp: RoughPath, n_triples: int = 2000, seed: int = 0) -> dict:
    """Chen and symmetry residuals relative to ``max |dx|^2``.

    Chen is checked on random triples ``s < u < t`` using left-to-right
    extensions and on every stored check block; symmetry on every consecutive
    block and on the sampled pairs.
    """
    rng = np.random.default_rng(seed)
    n = rp.n
    dx = rp.dx
    scale = max(float(np.max(np.sum(dx * dx, axis=1))), 1e-300)
    sym = rp.x2 + np.swapaxes(rp.x2, 1, 2) - dx[:, :, None] * dx[:, None, :]
    sym_res = float(np.max(np.abs(sym))) / scale
    chen_res = 0.0
    if n >= 3:
        tri = np.sort(np.stack([rng.choice(n, 3, replace=False) for _ in range(n_triples)]), axis=1)
        s, u, t = tri.T
        big = rp.area(s, t)
        lhs = big - rp.area(s, u) - rp.area(u, t)
        dsu, dut = rp.increment(s, u), rp.increment(u, t)
        ch = lhs - dsu[:, :, None] * dut[:, None, :]
        dst = rp.increment(s, t)
        loc = max(float(np.max(np.sum(dst * dst, axis=1))), 1e-300)
        chen_res = float(np.max(np.abs(ch))) / max(scale, loc)
        sy = big + np.swapaxes(big, 1, 2) - dst[:, :, None] * dst[:, None, :]
        sym_res = max(sym_res, float(np.max(np.abs(sy))) / max(scale, loc))
    for (i, j), blk in rp.check_blocks.items():
        ref = chen_extend(rp, i, j)
        dij = rp.increment(i, j)
        loc = max(scale, float(np.dot(dij, dij)))
        chen_res = max(chen_res, float(np.max(np.abs(blk - ref))) / loc)
        sy = blk + blk.T - np.outer(dij, dij)
        sym_res = max(sym_res, float(np.max(np.abs(sy))) / loc)
    return {"chen": chen_res, "symmetry": sym_res}


def sphere_net(d: int, per_plane: int = 32) -> np.ndarray:
    """Unit directions: ``+-1`` for d=1, else ``per_plane`` angles in every
    coordinate 2-plane."""
    if d == 1:
        return np.array([[1.0], [-1.0]])
    ang = 2 * np.pi * np.arange(per_plane) / per_plane
    dirs = []
    for a in range(d):
        for b in range(a + 1, d):
            v = np.zeros((per_plane, d))
            v[:, a] = np.cos(ang)
            v[:, b] = np.sin(ang)
            dirs.append(v)
    return np.concatenate(dirs)


def roughness_modulus(rp: RoughPath, gamma: float, eps_hat: float, eps_list,
                      n_probe: int = 64, directions: np.ndarray | None = None) -> RoughnessEstimate:
    """Estimate the Hölder-roughness modulus of the driver.

    For each probe time ``s``, scale ``eps`` and direction ``phi`` take the
    largest ``|<phi, x_t - x_s>| / eps**(gamma + eps_hat)`` over grid times
    with ``eps/2 < |t - s| < eps`` (either side of ``s``); the modulus is the
    smallest such value.  Windows without grid points are skipped with a
    warning.
    """
    eps_arr = np.asarray(eps_list, dtype=float)
    T = rp.grid.T
    if np.any(eps_arr <= 0) or np.any(eps_arr > T / 2 + 1e-15):
        raise ValueError("eps values must lie in (0, T/2]")
    expo = gamma + eps_hat
    phis = sphere_net(rp.d) if directions is None else np.atleast_2d(directions)
    t = rp.grid.points
    xv = rp.x.values
    probes = np.unique(np.linspace(0, rp.n - 1, n_probe).round().astype(int))
    proj = xv @ phis.T  # (n, n_dir)
    per_eps = np.full(eps_arr.size, np.inf)
    skipped = 0
    for e, eps in enumerate(eps_arr):
        for s in probes:
            gap = np.abs(t - t[s])
            win = (gap > eps / 2) & (gap < eps)
            if not np.any(win):
                skipped += 1
                continue
            vals = np.max(np.abs(proj[win] - proj[s]), axis=0) / eps ** expo
            per_eps[e] = min(per_eps[e], float(np.min(vals)))
    if skipped:
        warnings.warn(f"skipped {skipped} empty (s, eps) windows", RuntimeWarning, stacklevel=2)
    finite = per_eps[np.isfinite(per_eps)]
    L = float(np.min(finite)) if finite.size else float("nan")
    return RoughnessEstimate(expo, L, eps_arr, per_eps, skipped)


def _check_pairs(n_int: int) -> list:
    pairs = []
    L = 2
    while L < n_int:
        pairs.append((0, L))
        L *= 2
    if n_int >= 2:
        pairs.append((0, n_int))
    return sorted(set(pairs))


def write_rough_path(rp: RoughPath, out_dir) -> None:
    """Write ``path.csv``, ``area.csv`` and ``meta.json`` into ``out_dir``.

    ``area.csv`` carries every consecutive block followed by blocks
    ``(0, 2**l)`` and ``(0, n)``, which serve as consistency checks on reload.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = rp.d
    with open(out / "path.csv", "w") as fh:
        fh.write(",".join(["t"] + [f"x{c + 1}" for c in range(d)]) + "\n")
        for tk, row in zip(rp.grid.points, rp.x.values):
            fh.write(",".join(repr(float(v)) for v in (tk, *row)) + "\n")
    cols = [f"a{a + 1}{b + 1}" for a in range(d) for b in range(d)]
    with open(out / "area.csv", "w") as fh:
        fh.write(",".join(["i", "j"] + cols) + "\n")
        for k in range(rp.n - 1):
            fh.write(",".join([str(k), str(k + 1)] + [repr(float(v)) for v in rp.x2[k].ravel()]) + "\n")
        for i, j in _check_pairs(rp.n - 1):
            blk = rp.area(i, j)
            fh.write(",".join([str(i), str(j)] + [repr(float(v)) for v in blk.ravel()]) + "\n")
    side = {"gamma": rp.gamma, "d": d, "n_points": rp.n, "T": rp.grid.T}
    side.update({k: v for k, v in rp.meta.items() if k not in side})
    (out / "meta.json").write_text(json.dumps(side, indent=2, sort_keys=True))


def read_rough_path(in_dir) -> RoughPath:
    """Inverse of :func:`write_rough_path`; extra blocks become ``check_blocks``."""
    src = Path(in_dir)
    side = json.loads((src / "meta.json").read_text())
    p = np.loadtxt(src / "path.csv", delimiter=",", skiprows=1, ndmin=2)
    grid = TimeGrid(p[:, 0], side.get("T"))
    d = p.shape[1] - 1
    a = np.loadtxt(src / "area.csv", delimiter=",", skiprows=1, ndmin=2)
    i = a[:, 0].astype(int)
    j = a[:, 1].astype(int)
    blocks = a[:, 2:].reshape(-1, d, d)
    n = grid.points.size
    cons = (j == i + 1)
    x2 = np.full((n - 1, d, d), np.nan)
    x2[i[cons]] = blocks[cons]
    if np.isnan(x2).any():
        raise ValueError("area.csv is missing consecutive blocks")
    checks = {(int(a_), int(b_)): blk for a_, b_, blk in zip(i[~cons], j[~cons], blocks[~cons])}
    meta = {k: v for k, v in side.items() if k not in ("gamma", "d", "n_points", "T")}
    return RoughPath(grid, Inc1(grid, p[:, 1:]), x2, float(side["gamma"]), meta, checks)
