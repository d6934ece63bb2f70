"""Increments over a time grid.

One-, two- and three-index increments are stored densely: ``Inc2Grid.values``
has shape ``(n, n, *shape)`` and ``Inc3Grid.values`` has shape
``(n, n, n, *shape)``.  Only entries with strictly increasing indices carry
information; everything else is kept at zero.

All seminorms computed here are *grid* seminorms: the supremum is taken over
grid points only, so they lower-bound the continuum quantity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "TimeGrid",
    "Inc1",
    "Inc2Grid",
    "Inc3Grid",
    "delta1",
    "delta2",
    "holder_norm2",
    "holder_norm3",
    "delta_holder_norm",
    "product",
    "product_rule_check",
    "write_inc1",
    "read_inc1",
    "write_inc2",
    "read_inc2",
]


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing times starting at 0."""

    points: np.ndarray
    T: float | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("a time grid needs at least two points")
        if pts[0] != 0.0:
            raise ValueError("a time grid must start at 0")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        T = float(pts[-1]) if self.T is None else float(self.T)
        if T < pts[-1]:
            raise ValueError("horizon T is smaller than the last grid point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "T", T)

    @classmethod
    def uniform(cls, n_intervals: int, T: float = 1.0) -> "TimeGrid":
        pts = np.arange(n_intervals + 1, dtype=float) * (T / n_intervals)
        pts[-1] = T
        return cls(pts, T)

    def __len__(self):
        return self.points.size

    @property
    def n_intervals(self) -> int:
        return self.points.size - 1

    @property
    def is_uniform(self) -> bool:
        d = np.diff(self.points)
        return bool(np.allclose(d, d[0], rtol=1e-9, atol=0.0))

    @property
    def dyadic_level(self) -> int | None:
        """``D`` if the grid is uniform with ``2**D`` intervals, else None."""
        n = self.n_intervals
        if n & (n - 1) or not self.is_uniform:
            return None
        return n.bit_length() - 1

    def sub(self, indices) -> "TimeGrid":
        idx = np.asarray(indices)
        pts = self.points[idx]
        return TimeGrid(pts - pts[0])

    def to_dict(self) -> dict:
        return {"n_points": int(self.points.size), "T": self.T,
                "uniform": self.is_uniform}


def _entry_norm(values: np.ndarray, n_index: int) -> np.ndarray:
    """Euclidean (Frobenius) norm over the trailing value axes."""
    if values.ndim == n_index:
        return np.abs(values)
    axes = tuple(range(n_index, values.ndim))
    return np.sqrt(np.sum(values * values, axis=axes))


@dataclass
class Inc1:
    """Path values, one entry (scalar, vector or matrix) per grid point."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != len(self.grid):
            raise ValueError("values must have one entry per grid point")

    @property
    def shape(self) -> tuple:
        return self.values.shape[1:]

    @property
    def dim(self) -> int:
        return int(np.prod(self.shape)) if self.shape else 1


@dataclass
class Inc2Grid:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = len(self.grid)
        if self.values.shape[:2] != (n, n):
            raise ValueError("Inc2Grid values must have shape (n, n, ...)")

    @property
    def shape(self) -> tuple:
        return self.values.shape[2:]

    def __getitem__(self, ij):
        i, j = ij
        if i == j:
            return np.zeros(self.shape) if self.shape else 0.0
        return self.values[i, j]

    def consecutive(self) -> np.ndarray:
        idx = np.arange(len(self.grid) - 1)
        return self.values[idx, idx + 1]

    @classmethod
    def from_function(cls, grid: TimeGrid, fn) -> "Inc2Grid":
        """Build ``h_{st} = fn(s, t)`` with broadcasting (s, t arrays)."""
        t = grid.points
        vals = np.asarray(fn(t[:, None], t[None, :]), dtype=float)
        vals = np.broadcast_to(vals, (t.size, t.size) + vals.shape[2:]).copy()
        return cls(grid, _upper(vals, 2))


@dataclass
class Inc3Grid:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        n = len(self.grid)
        if self.values.shape[:3] != (n, n, n):
            raise ValueError("Inc3Grid values must have shape (n, n, n, ...)")

    @property
    def shape(self) -> tuple:
        return self.values.shape[3:]

    @classmethod
    def from_function(cls, grid: TimeGrid, fn) -> "Inc3Grid":
        """Build ``h_{sut} = fn(s, u, t)`` with broadcasting."""
        t = grid.points
        vals = np.asarray(fn(t[:, None, None], t[None, :, None], t[None, None, :]),
                          dtype=float)
        n = t.size
        vals = np.broadcast_to(vals, (n, n, n) + vals.shape[3:]).copy()
        return cls(grid, _upper(vals, 3))


def _upper(values: np.ndarray, k: int) -> np.ndarray:
    """Zero every entry whose first ``k`` indices are not strictly increasing."""
    n = values.shape[0]
    idx = np.arange(n)
    if k == 2:
        mask = idx[:, None] < idx[None, :]
    else:
        mask = (idx[:, None, None] < idx[None, :, None]) & (idx[None, :, None] < idx[None, None, :])
    mask = mask.reshape(mask.shape + (1,) * (values.ndim - k))
    return np.where(mask, values, 0.0)


def delta1(f: Inc1) -> Inc2Grid:
    """``(delta f)_{st} = f_t - f_s``."""
    v = f.values
    return Inc2Grid(f.grid, _upper(v[None, :] - v[:, None], 2))


def delta2(h: Inc2Grid) -> Inc3Grid:
    """``(delta h)_{sut} = h_{st} - h_{su} - h_{ut}``."""
    v = h.values
    d = v[:, None, :] - v[:, :, None] - v[None, :, :]
    return Inc3Grid(h.grid, _upper(d, 3))


def holder_norm2(h: Inc2Grid, mu: float) -> float:
    """Grid seminorm ``max_{s<t} |h_{st}| / (t-s)**mu``."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    n = len(h.grid)
    if n < 2:
        return 0.0
    iu = np.triu_indices(n, 1)
    num = _entry_norm(h.values[iu], 1)
    den = (h.grid.points[iu[1]] - h.grid.points[iu[0]]) ** mu
    return float(np.max(num / den)) if num.size else 0.0


def holder_norm3(h: Inc3Grid, mu: float) -> float:
    """Grid seminorm ``max_{s<u<t} |h_{sut}| / (t-s)**mu``."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    t = h.grid.points
    num = _entry_norm(h.values, 3)
    gap = t[None, None, :] - t[:, None, None]
    den = np.where(gap > 0, gap, 0.0) ** mu
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return float(ratio.max())


def delta_holder_norm(h: Inc2Grid, mu: float) -> float:
    """``holder_norm3(delta2(h), mu)`` without materialising the cube.

    Memory is O(n^2); useful for grids of a few thousand points.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    v = h.values
    t = h.grid.points
    n = t.size
    best = 0.0
    for s in range(n - 2):
        # rows u in (s, n), columns t in (u, n)
        d = v[s, None, s + 1:] - v[s, s + 1:, None] - v[s + 1:, s + 1:]
        num = _entry_norm(d, 2)
        num = np.triu(num, 1)
        den = (t[s + 1:] - t[s]) ** mu
        best = max(best, float(np.max(num / den[None, :])))
    return best


def product(g: Inc1, h) -> Inc2Grid | Inc3Grid:
    """Product ``(gh)_{t_1..} = g_{t_1} h_{t_1..}`` for scalar ``g``.

    Also accepts an Inc2Grid ``g`` times Inc2Grid ``h`` giving the
    three-index ``(gh)_{sut} = g_{su} h_{ut}``.
    """
    if isinstance(g, Inc1):
        gv = g.values.reshape(g.values.shape[0], *(1,) * (h.values.ndim - 1))
        if isinstance(h, Inc2Grid):
            return Inc2Grid(h.grid, gv * h.values)
        return Inc3Grid(h.grid, gv * h.values)
    vals = g.values[:, :, None] * h.values[None, :, :]
    return Inc3Grid(h.grid, _upper(vals, 3))


def product_rule_check(g: Inc1, h: Inc2Grid) -> float:
    """Residual of the discrete Leibniz rule for ``g`` in C1, ``h`` in C2.

    With ``delta h_{sut} = h_st - h_su - h_ut`` and ``(gh)_{st} = g_s h_st`` the
    identity reads ``delta(gh) = g delta(h) - delta(g) h``.  Returns the max
    absolute deviation over all ordered triples.
    """
    lhs = delta2(product(g, h)).values
    rhs = product(g, delta2(h)).values - product(delta1(g), h).values
    diff = _upper(lhs - rhs, 3)
    return float(np.max(np.abs(diff))) if diff.size else 0.0


# -- serialization ---------------------------------------------------------

def _fmt_rows(rows: np.ndarray) -> str:
    return "\n".join(",".join(repr(float(v)) for v in row) for row in rows)


def write_inc1(f: Inc1, csv_path) -> None:
    csv_path = Path(csv_path)
    vals = f.values.reshape(len(f.grid), -1)
    header = "t," + ",".join(f"v{k}" for k in range(vals.shape[1]))
    rows = np.column_stack([f.grid.points, vals])
    csv_path.write_text(header + "\n" + _fmt_rows(rows) + "\n")
    meta = {"kind": "Inc1", "grid": f.grid.to_dict(), "value_shape": list(f.shape)}
    csv_path.with_suffix(".json").write_text(json.dumps(meta, indent=2))


def read_inc1(csv_path) -> Inc1:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    grid = TimeGrid(data[:, 0], meta["grid"]["T"])
    vals = data[:, 1:].reshape((data.shape[0], *meta["value_shape"]))
    return Inc1(grid, vals)


def write_inc2(h: Inc2Grid, csv_path) -> None:
    """Long format: one row ``s,t,value...`` per ordered pair."""
    csv_path = Path(csv_path)
    n = len(h.grid)
    i, j = np.triu_indices(n, 1)
    vals = h.values[i, j].reshape(i.size, -1)
    t = h.grid.points
    header = "s,t," + ",".join(f"v{k}" for k in range(vals.shape[1]))
    rows = np.column_stack([t[i], t[j], vals])
    csv_path.write_text(header + "\n" + _fmt_rows(rows) + "\n")
    meta = {"kind": "Inc2Grid", "grid": h.grid.to_dict(),
            "points": [float(p) for p in t], "value_shape": list(h.shape)}
    csv_path.with_suffix(".json").write_text(json.dumps(meta, indent=2))


def read_inc2(csv_path) -> Inc2Grid:
    csv_path = Path(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    grid = TimeGrid(np.array(meta["points"]), meta["grid"]["T"])
    n = len(grid)
    shape = tuple(meta["value_shape"])
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    values = np.zeros((n, n) + shape)
    i, j = np.triu_indices(n, 1)
    values[i, j] = data[:, 2:].reshape((i.size,) + shape)
    return Inc2Grid(grid, values)
