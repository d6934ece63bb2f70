"""Lamperti solver, adaptive second-order scheme and the shell ladder."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coefficients import PowerCoefficient, lamperti_phi, lamperti_phi_inverse
from .errors import ConfigError, MaxSteps, StepUnderflow
from .increments import Inc1, Inc2Grid, TimeGrid
from .roughpath import RoughPath

__all__ = [
    "SolverParams",
    "ShellTrace",
    "SolutionPath",
    "i_index",
    "j_index",
    "track_shells",
    "solve_1d_lamperti",
    "solve_md_davie",
    "remainder_grid",
    "write_solution",
    "read_solution",
]

ZERO_INDEX = 10 ** 9  # shell index assigned to the origin
B1 = 3.0 / 8.0
B2 = 3.0 / 2.0


@dataclass
class SolverParams:
    """Step control for the adaptive scheme.

    The local mesh in shell ``q`` is at most ``c0 * 2**(-alpha * max(q, 0))``
    with ``alpha = (1 - kappa) / gamma``; each such window is split into
    ``substeps`` scheme steps.  ``rel_step`` bounds the first-order move
    ``|sigma(y)| osc(x)`` of a step relative to ``|y|`` (None disables it).
    """

    gamma: float
    kappa: float
    c0: float = 0.5
    zero_threshold: float = 2.0 ** -20
    max_steps: int = 10_000_000
    substeps: int = 16
    max_halvings: int = 30
    fixed_stride: int | None = None
    rel_step: float | None = 0.25

    def __post_init__(self):
        if not 0 < self.kappa < 1 or not 0 < self.gamma <= 1:
            raise ConfigError("need kappa in (0, 1) and gamma in (0, 1]")
        if self.kappa + self.gamma <= 1:
            raise ConfigError(f"kappa + gamma = {self.kappa + self.gamma} must exceed 1")
        if self.c0 <= 0 or self.zero_threshold < 0 or self.substeps < 1:
            raise ConfigError("c0 and substeps must be positive")
        if self.rel_step is not None and self.rel_step <= 0:
            raise ConfigError("rel_step must be positive")
        if self.fixed_stride is not None and (self.fixed_stride < 1 or self.fixed_stride & (self.fixed_stride - 1)):
            raise ConfigError("fixed_stride must be a power of two")

    @property
    def alpha(self) -> float:
        return (1.0 - self.kappa) / self.gamma

    def window(self, q: int) -> float:
        return self.c0 * 2.0 ** (-self.alpha * max(q, 0))

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "kappa": self.kappa, "alpha": self.alpha,
                "c0": self.c0, "zero_threshold": self.zero_threshold,
                "max_steps": self.max_steps, "substeps": self.substeps,
                "max_halvings": self.max_halvings, "fixed_stride": self.fixed_stride,
                "rel_step": self.rel_step}


# ---------------------------------------------------------------- shells


def i_index(r):
    """Index ``q`` with ``r`` in ``[2**-(q+1), 2**-q)``; ``-1`` for ``r >= 1``."""
    r = np.asarray(r, dtype=float)
    _, e = np.frexp(r)
    q = np.where(r >= 1.0, -1, -e)
    q = np.where(r > 0, q, ZERO_INDEX)
    return int(q) if q.ndim == 0 else q.astype(np.int64)


def j_index(r):
    """Index ``q`` with ``r`` in ``[3 * 2**-(q+3), 3 * 2**-(q+2))``; ``-1`` for ``r >= 3/4``."""
    r = np.asarray(r, dtype=float)
    q = np.asarray(i_index(r / 0.75), dtype=np.int64)
    # exact boundary adjustment (3 * 2**k is representable)
    pos = r > 0
    lo = 3.0 * np.ldexp(1.0, -(np.clip(q, -1, 2000) + 3))
    hi = 3.0 * np.ldexp(1.0, -(np.clip(q, -1, 2000) + 2))
    q = np.where(pos & (q >= 0) & (r >= hi), q - 1, q)
    q = np.where(pos & (r < lo), q + 1, q)
    q = np.where(r >= 0.75, -1, q)
    q = np.where(pos, q, ZERO_INDEX)
    return int(q) if q.ndim == 0 else q


@dataclass
class ShellTrace:
    """Alternating exit indices from I- and J-intervals.

    ``entries`` holds tuples ``(lambda_k, tau_k, q_k, qhat_k)`` of grid
    positions (``tau_k``/``qhat_k`` are None when the path never leaves
    ``I_{q_k}``).
    """

    times: np.ndarray
    entries: list = field(default_factory=list)
    zero_hit: float | None = None
    zero_index: int | None = None
    b1: float = B1
    b2: float = B2

    @property
    def q(self) -> np.ndarray:
        return np.array([e[2] for e in self.entries], dtype=int)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([self.times[e[0]] for e in self.entries])

    @property
    def lambda_indices(self) -> np.ndarray:
        return np.array([e[0] for e in self.entries], dtype=int)

    def check_invariants(self, y) -> list:
        """Violations of ordering, membership bounds and unit q-steps."""
        r = _radius(y)
        bad = []
        ent = self.entries
        for k, (lam, tau, q, _) in enumerate(ent):
            nxt = ent[k + 1][0] if k + 1 < len(ent) else None
            if tau is not None and not lam < tau:
                bad.append(f"shell {k}: lambda {lam} !< tau {tau}")
            if tau is not None and nxt is not None and not tau <= nxt:
                bad.append(f"shell {k}: tau {tau} > next lambda {nxt}")
            if nxt is not None:
                end = nxt
            else:
                end = self.zero_index if self.zero_index is not None else len(r)
            seg = r[lam:end]
            seg = seg[seg > 0]
            if seg.size:
                lo = self.b1 * 2.0 ** -q
                hi = math.inf if q <= 1 else self.b2 * 2.0 ** -q
                if seg.min() < lo or seg.max() > hi:
                    bad.append(f"shell {k} (q={q}): |y| in [{seg.min():.4g}, {seg.max():.4g}] "
                               f"outside [{lo:.4g}, {hi:.4g}]")
            if nxt is not None and abs(ent[k + 1][2] - q) > 1:
                bad.append(f"shell {k}: q jumps {q} -> {ent[k + 1][2]}")
        return bad

    def to_dict(self) -> dict:
        t = self.times
        return {
            "b1": self.b1, "b2": self.b2,
            "zero_hit": self.zero_hit, "zero_index": self.zero_index,
            "entries": [{"lambda": float(t[l]), "tau": None if u is None else float(t[u]),
                         "q": int(q), "qhat": None if h is None else int(h),
                         "lambda_index": int(l), "tau_index": None if u is None else int(u)}
                        for l, u, q, h in self.entries],
        }


def _radius(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return np.abs(y) if y.ndim == 1 else np.linalg.norm(y, axis=1)


def track_shells(y, times=None) -> ShellTrace:
    """Stopping-time ladder of a sampled path (first grid point past each exit)."""
    r = _radius(y.values if isinstance(y, Inc1) else y)
    if times is None:
        times = y.grid.points if isinstance(y, Inc1) else np.arange(r.size, dtype=float)
    times = np.asarray(times, dtype=float)
    Iq = np.asarray(i_index(r))
    Jq = np.asarray(j_index(r))
    trace = ShellTrace(times)
    if r[0] == 0:
        trace.zero_hit, trace.zero_index = float(times[0]), 0
        return trace
    lam = 0
    q = int(Iq[0])
    while True:
        out = np.flatnonzero(Iq[lam + 1:] != q)
        if out.size == 0:
            trace.entries.append((lam, None, q, None))
            break
        tau = lam + 1 + int(out[0])
        if r[tau] == 0:
            trace.entries.append((lam, tau, q, None))
            trace.zero_hit, trace.zero_index = float(times[tau]), tau
            break
        qh = int(Jq[tau])
        trace.entries.append((lam, tau, q, qh))
        out = np.flatnonzero(Jq[tau + 1:] != qh)
        if out.size == 0:
            break
        lam = tau + 1 + int(out[0])
        if r[lam] == 0:
            trace.zero_hit, trace.zero_index = float(times[lam]), lam
            break
        q = int(Iq[lam])
    return trace


# ---------------------------------------------------------------- solutions


@dataclass(eq=False)
class SolutionPath:
    """Solution values at a subset of grid points.

    ``indices`` are positions in the driver's grid; ``y`` has shape
    ``(len(indices), m)``.  ``tau_index`` is the first index of the zero
    region in case B.
    """

    grid: TimeGrid
    indices: np.ndarray
    y: np.ndarray
    case_label: str
    shells: ShellTrace
    tau: float | None = None
    tau_index: int | None = None
    remainder_available: bool = True
    alternatives: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.grid.points[self.indices]

    def as_inc1(self) -> Inc1:
        g = TimeGrid(self.times, self.grid.T)
        return Inc1(g, self.y)


def _finish(grid, idx, ys, tau_index, meta, remainder_available=True) -> SolutionPath:
    idx = np.asarray(idx, dtype=int)
    ys = np.asarray(ys, dtype=float)
    if ys.ndim == 1:
        ys = ys[:, None]
    shells = track_shells(ys, grid.points[idx])
    case = "A" if tau_index is None else "B"
    tau = None if tau_index is None else float(grid.points[tau_index])
    return SolutionPath(grid, idx, ys, case, shells, tau, tau_index, remainder_available, [], meta)


def solve_1d_lamperti(pc: PowerCoefficient, a: float, x, mode: str = "absorb") -> SolutionPath:
    """``y = phi^{-1}(x - x_0 + phi(a))`` pointwise on the grid.

    Parameters
    ----------
    x : Inc1 or RoughPath
        Scalar driver.
    mode : {"absorb", "continue"}
        When the argument of ``phi^{-1}`` reaches 0: ``absorb`` sets ``y = 0``
        from then on (case B); ``continue`` uses the odd extension of
        ``phi^{-1}``, which is again a solution because ``sigma`` is even.

    For ``a = 0`` the nontrivial solution ``phi^{-1}(x - x_0)`` (odd
    extension) is returned and ``y = 0`` is attached in ``alternatives``.
    """
    if pc.m != 1 or pc.d != 1:
        raise ConfigError("the Lamperti solver is one-dimensional")
    if a < 0:
        raise ConfigError("initial condition must be nonnegative")
    if mode not in ("absorb", "continue"):
        raise ConfigError(f"unknown mode {mode!r}")
    if isinstance(x, RoughPath):
        grid, xv = x.grid, x.x.values[:, 0]
    else:
        grid, xv = x.grid, np.asarray(x.values, dtype=float).reshape(len(x.grid))
    u = xv - xv[0] + lamperti_phi(pc, a)
    idx = np.arange(len(grid))
    if a == 0:
        y = lamperti_phi_inverse(pc, u, odd=True)
        sp = _finish(grid, idx, y, None, {"mode": "continue", "a": 0.0})
        sp.alternatives.append(_finish(grid, idx, np.zeros_like(y), 0, {"mode": "zero", "a": 0.0}))
        sp.alternatives[0].case_label = "zero"
        return sp
    hit = np.flatnonzero(u <= 0)
    if mode == "absorb" and hit.size:
        k = int(hit[0])
        y = np.zeros_like(u)
        y[:k] = lamperti_phi_inverse(pc, u[:k])
        return _finish(grid, idx, y, k, {"mode": mode, "a": a})
    y = lamperti_phi_inverse(pc, u, odd=True)
    return _finish(grid, idx, y, None, {"mode": mode, "a": a})


def _oscillation(xv: np.ndarray, i: int, j: int, scalar: bool) -> float:
    seg = xv[i:j + 1] - xv[i]
    if scalar:
        return float(np.max(np.abs(seg[:, 0])))
    return float(np.sqrt(np.max(np.einsum("ij,ij->i", seg, seg))))


def _sigma_norm(pc: PowerCoefficient, y: np.ndarray, scalar: bool) -> float:
    if scalar:
        return abs(float(pc.sigma(y[0])[0, 0]))
    return float(np.linalg.norm(pc.sigma(y), 2))


def ladder_index(r: float) -> int:
    """Position of ``r`` in the merged ladder of I- and J-boundaries.

    ``I_q`` is split at ``3 * 2**-(q+2)``: its upper part gets ``2q`` and its
    lower part ``2q + 1``.  A step that changes this index by at most one
    crosses at most one boundary.
    """
    q = i_index(r)
    if q == ZERO_INDEX:
        return 2 * ZERO_INDEX
    return 2 * q + (0 if r >= 0.75 * 2.0 ** -q else 1)


def _pow2_floor(v: float) -> int:
    if v < 1:
        return 0
    return 1 << (int(v).bit_length() - 1)


def solve_md_davie(pc: PowerCoefficient, a, rp: RoughPath, params: SolverParams,
                   start_index: int = 0, stop_index: int | None = None) -> SolutionPath:
    """Adaptive second-order scheme ``y += sigma(y) dx + (Dsigma sigma)(y) x2``.

    Steps are unions of ``k`` consecutive driver intervals with ``k`` a power
    of two and the step start a multiple of ``k``; the second-level block of
    each step is the Chen extension over the driver grid.  This makes the
    scheme additive at dyadic restart points.  In shell ``q`` the step is the
    largest such ``k`` not exceeding ``c0 2**(-alpha q) / substeps``.  A step
    is halved (at most ``max_halvings`` times) while it crosses more than one
    boundary of the merged I/J ladder or while
    ``|sigma(y)| max_u |x_u - x_s| > rel_step |y|`` over the step; the second
    test adapts the window constant to the driver and the coefficient.  Steps
    accepted without meeting both tests are counted in
    ``meta["unresolved_steps"]``.  A sign change (1-d) or
    ``|y| < zero_threshold`` declares a zero hit (case B) and ``y = 0``
    afterwards.

    Raises
    ------
    StepUnderflow
        If the required window is smaller than one driver interval.
    MaxSteps
    """
    if pc.d != rp.d:
        raise ConfigError(f"coefficient has d={pc.d}, driver has d={rp.d}")
    if params.kappa != pc.kappa:
        raise ConfigError("solver parameters and coefficient disagree on kappa")
    y = np.atleast_1d(np.asarray(a, dtype=float)).copy()
    if y.shape != (pc.m,):
        raise ConfigError(f"initial condition must have length {pc.m}")
    if not np.any(y):
        raise ConfigError("the scheme needs a nonzero initial condition")
    n_int = rp.n - 1
    stop = n_int if stop_index is None else int(stop_index)
    if not 0 <= start_index < stop <= n_int:
        raise ConfigError("need start_index < stop_index within the grid")
    t = rp.grid.points
    dts = np.diff(t)
    scalar = pc.m == 1 and pc.d == 1
    xv = rp.x.values
    idx = [start_index]
    ys = [y.copy()]
    i = start_index
    steps = halvings = unresolved = 0
    tau_index = None
    sign0 = np.sign(y[0]) if scalar else 0.0
    while i < stop:
        r = float(np.linalg.norm(y))
        q = i_index(r)
        if params.fixed_stride is not None:
            k = params.fixed_stride
        else:
            h = params.window(q)
            if h < dts[i]:
                raise StepUnderflow(f"window {h:.3e} below grid mesh {dts[i]:.3e} in shell {q}",
                                    shell=q, time=float(t[i]))
            k = max(_pow2_floor(h / params.substeps / dts[i]), 1)
        while i % k:
            k //= 2
        while i + k > stop:
            k //= 2
        tries = 0
        while True:
            j = i + k
            if scalar:
                dx = xv[j, 0] - xv[i, 0]
                x2 = float(rp.area(i, j)[0, 0])
                s = float(pc.sigma(y[0])[0, 0])
                ds = float(pc.dsigma_sigma(y[0])[0, 0, 0])
                y_new = np.array([y[0] + s * dx + ds * x2])
            else:
                dx = xv[j] - xv[i]
                x2 = rp.area(i, j)
                y_new = y + pc.sigma(y) @ dx + np.einsum("aij,ij->a", pc.dsigma_sigma(y), x2)
            r_new = float(np.linalg.norm(y_new))
            hit = r_new < params.zero_threshold or (scalar and np.sign(y_new[0]) != sign0)
            coarse = (params.fixed_stride is None and not hit
                      and (abs(ladder_index(r_new) - ladder_index(r)) > 1
                           or (params.rel_step is not None
                               and _sigma_norm(pc, y, scalar) * _oscillation(xv, i, j, scalar)
                               > params.rel_step * r)))
            if coarse and k > 1 and tries < params.max_halvings:
                k //= 2
                tries += 1
                halvings += 1
                continue
            if coarse:
                unresolved += 1
            break
        steps += 1
        if steps > params.max_steps:
            raise MaxSteps(f"exceeded {params.max_steps} steps at t={t[i]:.6g}")
        i = j
        if hit:
            tau_index = i
            idx.append(i)
            ys.append(np.zeros_like(y))
            if i < stop:
                idx.append(stop)
                ys.append(np.zeros_like(y))
            break
        y = y_new
        idx.append(i)
        ys.append(y.copy())
    meta = {"steps": steps, "halvings": halvings, "unresolved_steps": unresolved,
            "start_index": start_index,
            "stop_index": stop, "params": params.to_dict(), "coefficient": pc.to_dict()}
    return _finish(rp.grid, idx, np.array(ys), tau_index, meta)


def remainder_grid(sp: SolutionPath, rp: RoughPath, pc: PowerCoefficient, window=None) -> Inc2Grid:
    """``R_st = dy_st - sigma(y_s) dx_st - (Dsigma sigma)(y_s) x2_st`` on all
    pairs of solution points inside ``window``.

    ``window`` is a pair of positions into ``sp.indices`` (half open); by
    default every point before the zero region.
    """
    n_pts = len(sp.indices)
    zero_pos = n_pts if sp.tau_index is None else int(np.searchsorted(sp.indices, sp.tau_index))
    lo, hi = (0, zero_pos) if window is None else (int(window[0]), int(window[1]))
    if hi > zero_pos or lo < 0 or hi - lo < 2:
        raise ValueError("window must lie before the zero region and hold two points")
    pos = np.arange(lo, hi)
    gi = sp.indices[pos]
    Y = sp.y[pos]
    S = pc.sigma(Y)
    DS = pc.dsigma_sigma(Y)
    k = pos.size
    a, b = np.triu_indices(k, 1)
    dx = rp.increment(gi[a], gi[b])
    x2 = rp.area(gi[a], gi[b])
    R = (Y[b] - Y[a] - np.einsum("paj,pj->pa", S[a], dx)
         - np.einsum("paij,pij->pa", DS[a], x2))
    vals = np.zeros((k, k, Y.shape[1]))
    vals[a, b] = R
    tg = rp.grid.points[gi]
    return Inc2Grid(TimeGrid(tg - tg[0]), vals)


def write_solution(sp: SolutionPath, out_dir, name: str = "solution") -> None:
    """``<name>.csv`` (t, y1..ym) and ``shells.json`` (or ``<name>_shells.json``)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    m = sp.y.shape[1]
    with open(out / f"{name}.csv", "w") as fh:
        fh.write(",".join(["t"] + [f"y{c + 1}" for c in range(m)]) + "\n")
        for tk, row in zip(sp.times, sp.y):
            fh.write(",".join(repr(float(v)) for v in (tk, *row)) + "\n")
    side = {"case": sp.case_label, "tau": sp.tau, "tau_index": sp.tau_index,
            "indices": [int(i) for i in sp.indices], "shells": sp.shells.to_dict(),
            "meta": sp.meta}
    shell_name = "shells.json" if name == "solution" else f"{name}_shells.json"
    (out / shell_name).write_text(json.dumps(side, indent=2, default=_json_default))


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def read_solution(in_dir, name: str = "solution", grid: TimeGrid | None = None) -> SolutionPath:
    src = Path(in_dir)
    data = np.loadtxt(src / f"{name}.csv", delimiter=",", skiprows=1, ndmin=2)
    shell_name = "shells.json" if name == "solution" else f"{name}_shells.json"
    side = json.loads((src / shell_name).read_text())
    idx = np.asarray(side["indices"], dtype=int)
    if grid is None:
        grid = TimeGrid(data[:, 0]) if idx[0] == 0 and np.array_equal(idx, np.arange(idx.size)) else None
        if grid is None:
            raise ValueError("a driver grid is needed to place adaptive solution points")
    sp = _finish(grid, idx, data[:, 1:], side["tau_index"], side.get("meta", {}))
    sp.case_label = side["case"]
    return sp
