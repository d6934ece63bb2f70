"""Exponent studies: regularity gain per shell, stopping-time gaps, global
Hölder continuity, scheme convergence and the change-of-variable residual."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .coefficients import PowerCoefficient
from .controlled import SmoothMap, ito_stratonovich_residual
from .errors import ConfigError, InsufficientShells
from .roughpath import RoughPath
from .solver import ShellTrace, SolutionPath, SolverParams, remainder_grid, solve_md_davie

__all__ = [
    "EpsilonKnobs",
    "epsilon_knobs",
    "Fit",
    "fit_slope",
    "RegularityReport",
    "scaling_study",
    "GapReport",
    "gap_study",
    "global_holder",
    "global_holder_report",
    "convergence_study",
    "ito_stratonovich_study",
    "local_remainder_exponent",
]


# ---------------------------------------------------------------- knobs


@dataclass
class EpsilonKnobs:
    eps1: float
    eps2: float
    eps2_bound: float
    kappa_eps1: float
    kappa_minus_eps2: float
    kappa_eps1_eps2: float
    mu_eps2: float
    gamma1: float


def epsilon_knobs(kappa: float, gamma: float, eps1: float = 0.05,
                  eps2: float | None = None) -> EpsilonKnobs:
    """Admissible ``(eps1, eps2)`` and the derived exponents.

    ``eps2`` must satisfy ``0 < eps2 < min(kappa/(1-gamma), eps1 alpha/(gamma+eps1))``;
    the default is 0.9 times that bound.  Violations raise ConfigError.
    """
    if eps1 <= 0:
        raise ConfigError("eps1 must be positive")
    alpha = (1 - kappa) / gamma
    bound = min(kappa / (1 - gamma) if gamma < 1 else math.inf, eps1 * alpha / (gamma + eps1))
    if eps2 is None:
        eps2 = 0.9 * bound
    if not 0 < eps2 < bound:
        raise ConfigError(f"eps2 = {eps2} must lie in (0, {bound:.6g})")
    return EpsilonKnobs(
        eps1, eps2, bound,
        kappa + 2 * eps1 * alpha,
        kappa - (1 - gamma) * eps2,
        kappa + 2 * alpha * eps1 - gamma * eps2 - 2 * eps1 * eps2,
        1 + 2 * alpha * eps1 - 2 * (gamma + eps1) * eps2,
        gamma + eps1,
    )


# ---------------------------------------------------------------- regression


@dataclass
class Fit:
    slope: float
    stderr: float
    intercept: float
    n: int

    def within(self, target: float, tol: float) -> bool:
        return bool(abs(self.slope - target) <= tol)


def fit_slope(x, y) -> Fit:
    """OLS of ``y`` on ``x`` dropping non-finite points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < 2 or np.ptp(x) == 0:
        return Fit(float("nan"), float("nan"), float("nan"), int(x.size))
    res = stats.linregress(x, y)
    return Fit(float(res.slope), float(res.stderr), float(res.intercept), int(x.size))


def _log2(v):
    v = np.asarray(v, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(v > 0, np.log2(np.where(v > 0, v, 1.0)), np.nan)


# ---------------------------------------------------------------- scaling


@dataclass
class RegularityReport:
    records: list
    fits: dict
    targets: dict
    knobs: EpsilonKnobs
    constants: dict
    q_range: tuple

    def passed(self, tol_y: float = 0.15, tol_R: float = 0.25) -> dict:
        return {"y": self.fits["y"].within(self.targets["y"], tol_y),
                "R": self.fits["R"].within(self.targets["R"], tol_R)}

    def to_dict(self) -> dict:
        return {"records": self.records,
                "fits": {k: asdict(v) for k, v in self.fits.items()},
                "targets": self.targets, "knobs": asdict(self.knobs),
                "constants": self.constants, "q_range": list(self.q_range)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["k", "q", "lambda", "n_windows", "n_points", "y_gamma", "R_3gamma",
                "r_gamma", "r_gamma_x2_part", "r_gamma_R_part"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols + ["slope_y", "slope_R", "slope_r"])
        sl = [repr(self.fits[k].slope) for k in ("y", "R", "r")]
        for rec in self.records:
            w.writerow([rec[c] if not isinstance(rec[c], float) else repr(rec[c]) for c in cols] + sl)
        return buf.getvalue()


def _windows(times: np.ndarray, lo: int, hi: int, width: float) -> list:
    """Consecutive position ranges ``[a, b)`` within ``[lo, hi)`` spanning at most ``width``."""
    out = []
    a = lo
    while a < hi - 1:
        b = a + 1
        while b < hi and times[b] - times[a] <= width * (1 + 1e-12):
            b += 1
        if b - a >= 2:
            out.append((a, b))
        a = b - 1 if b - 1 > a else b
    return out


def _shell_ranges(sp: SolutionPath) -> list:
    tr = sp.shells
    n_pts = len(sp.indices)
    end_all = n_pts if sp.tau_index is None else int(np.searchsorted(sp.indices, sp.tau_index))
    out = []
    for k, (lam, tau, q, _) in enumerate(tr.entries):
        nxt = tr.entries[k + 1][0] if k + 1 < len(tr.entries) else end_all
        out.append((k, lam, min(nxt, end_all), q))
    return out


def scaling_study(sp: SolutionPath, rp: RoughPath, pc: PowerCoefficient, gamma: float,
                  params: SolverParams | None = None, q_min: int = 3, q_max: int = 12,
                  eps1: float = 0.05, eps2: float | None = None, min_shells: int = 5,
                  c0: float | None = None) -> RegularityReport:
    """Per-shell grid seminorms and their decay rates in ``q``.

    Each shell ``[lambda_k, lambda_{k+1})`` is tiled into windows of length at
    most ``c0 2**(-alpha q_k)``; per shell the largest window value is kept
    for the ``gamma``-seminorm of ``y``, the ``3 gamma``-seminorm of the
    remainder ``R`` and the ``gamma``-seminorm of ``r = (Dsigma sigma)(y) x2 + R``
    (also split into its two parts).  Slopes of ``log2`` against ``q_k`` are
    fitted by OLS.

    Raises
    ------
    InsufficientShells
        Fewer than ``min_shells`` shells with ``q_min <= q_k <= q_max``.
    """
    kappa = pc.kappa
    knobs = epsilon_knobs(kappa, gamma, eps1, eps2)
    alpha = (1 - kappa) / gamma
    if c0 is None:
        c0 = params.c0 if params is not None else 0.5
    t = sp.times
    recs = []
    for k, lo, hi, q in _shell_ranges(sp):
        if not q_min <= q <= q_max or hi - lo < 2:
            continue
        wins = _windows(t, lo, hi, c0 * 2.0 ** (-alpha * q))
        if not wins:
            continue
        ymax = Rmax = rmax = rx2 = rR = 0.0
        for a, b in wins:
            R = remainder_grid(sp, rp, pc, (a, b)).values
            pos = np.arange(a, b)
            gi = sp.indices[pos]
            i, j = np.triu_indices(pos.size, 1)
            h = t[pos][j] - t[pos][i]
            dy = np.linalg.norm(sp.y[pos][j] - sp.y[pos][i], axis=1)
            Rn = np.linalg.norm(R[i, j], axis=1)
            DS = pc.dsigma_sigma(sp.y[pos][i])
            x2 = rp.area(gi[i], gi[j])
            sec = np.linalg.norm(np.einsum("paij,pij->pa", DS, x2), axis=1)
            rn = np.linalg.norm(np.einsum("paij,pij->pa", DS, x2) + R[i, j], axis=1)
            ymax = max(ymax, float(np.max(dy / h ** gamma)))
            Rmax = max(Rmax, float(np.max(Rn / h ** (3 * gamma))))
            rmax = max(rmax, float(np.max(rn / h ** gamma)))
            rx2 = max(rx2, float(np.max(sec / h ** gamma)))
            rR = max(rR, float(np.max(Rn / h ** gamma)))
        recs.append({"k": k, "q": int(q), "lambda": float(t[lo]), "n_windows": len(wins),
                     "n_points": int(hi - lo), "y_gamma": ymax, "R_3gamma": Rmax,
                     "r_gamma": rmax, "r_gamma_x2_part": rx2, "r_gamma_R_part": rR})
    if len(recs) < min_shells:
        raise InsufficientShells(f"{len(recs)} shells with {q_min} <= q <= {q_max}; need {min_shells}")
    q = np.array([r["q"] for r in recs], dtype=float)
    fits = {name: fit_slope(q, _log2([r[col] for r in recs]))
            for name, col in (("y", "y_gamma"), ("R", "R_3gamma"), ("r", "r_gamma"),
                              ("r_x2", "r_gamma_x2_part"), ("r_R", "r_gamma_R_part"))}
    targets = {"y": -kappa, "R": 2 - 3 * kappa, "r": -knobs.kappa_eps1}
    constants = {f"c_{name}": (2.0 ** f.intercept if math.isfinite(f.intercept) else None)
                 for name, f in fits.items()}
    return RegularityReport(recs, fits, targets, knobs, constants, (q_min, q_max))


# ---------------------------------------------------------------- gaps


@dataclass
class GapReport:
    q: list
    gaps: list
    fit: Fit
    lower: float
    upper: float
    tol: float

    @property
    def passed(self) -> bool:
        e = self.fit.slope
        return bool(self.lower - self.tol <= e <= self.upper + self.tol)

    def to_dict(self) -> dict:
        return {"q": self.q, "gaps": self.gaps, "fit": asdict(self.fit),
                "lower": self.lower, "upper": self.upper, "tol": self.tol,
                "passed": self.passed}


def gap_study(shells: ShellTrace, kappa: float, gamma: float, eps2: float | None = None,
              eps1: float = 0.05, q_min: int = 3, q_max: int | None = None,
              tol: float = 0.25, min_gaps: int = 5) -> GapReport:
    """Fit ``log2(lambda_{k+1} - lambda_k)`` against ``q_k``.

    Compared with the band ``[-alpha, -(alpha - eps2)]`` widened by ``tol``.
    """
    knobs = epsilon_knobs(kappa, gamma, eps1, eps2)
    alpha = (1 - kappa) / gamma
    lam = shells.lambdas
    qs = shells.q
    sel = [k for k in range(len(lam) - 1)
           if qs[k] >= q_min and (q_max is None or qs[k] <= q_max)]
    if len(sel) < min_gaps:
        raise InsufficientShells(f"{len(sel)} gaps with q >= {q_min}; need {min_gaps}")
    gaps = [float(lam[k + 1] - lam[k]) for k in sel]
    qq = [int(qs[k]) for k in sel]
    fit = fit_slope(qq, _log2(gaps))
    return GapReport(qq, gaps, fit, -alpha, -(alpha - knobs.eps2), tol)


# ---------------------------------------------------------------- global


def global_holder(sp: SolutionPath, gamma: float) -> float:
    """Grid ``gamma``-seminorm of the solution over all its points."""
    t = sp.times
    y = sp.y
    best = 0.0
    for i in range(len(t) - 1):
        dy = np.linalg.norm(y[i + 1:] - y[i], axis=1)
        best = max(best, float(np.max(dy / (t[i + 1:] - t[i]) ** gamma)))
    return best


def global_holder_report(sp: SolutionPath, gamma: float, refined: SolutionPath | None = None,
                         max_growth: float = 2.0) -> dict:
    """Seminorm over ``[0, T]`` (across a zero hit) and its growth under refinement."""
    v = global_holder(sp, gamma)
    out = {"seminorm": v, "finite": bool(math.isfinite(v))}
    if refined is not None:
        w = global_holder(refined, gamma)
        growth = w / v if v > 0 else (1.0 if w == 0 else math.inf)
        out.update({"refined_seminorm": w, "growth": growth,
                    "passed": bool(math.isfinite(w) and growth < max_growth)})
    else:
        out["passed"] = out["finite"]
    return out


# ---------------------------------------------------------------- convergence


def convergence_study(pc: PowerCoefficient, a, rp: RoughPath, gamma: float,
                      strides=(64, 32, 16, 8, 4), ref_stride: int = 1) -> dict:
    """Fixed-stride scheme errors against a fine reference.

    The error of stride ``k`` is the sup over its points of the distance to
    the reference; the observed order is the slope of ``log2 error`` against
    ``log2 mesh``.
    """
    ref = solve_md_davie(pc, a, rp, SolverParams(gamma, pc.kappa, fixed_stride=ref_stride,
                                                 zero_threshold=0.0))
    if ref.case_label != "A":
        raise ConfigError("reference solution hits zero; choose a run away from the origin")
    ref_y = np.full((rp.n, pc.m), np.nan)
    ref_y[ref.indices] = ref.y
    dt = rp.grid.points[1] - rp.grid.points[0]
    rows = []
    for k in strides:
        sp = solve_md_davie(pc, a, rp, SolverParams(gamma, pc.kappa, fixed_stride=k,
                                                    zero_threshold=0.0))
        err = float(np.max(np.linalg.norm(sp.y - ref_y[sp.indices], axis=1)))
        rows.append({"stride": int(k), "mesh": float(k * dt), "error": err})
    fit = fit_slope(_log2([r["mesh"] for r in rows]), _log2([r["error"] for r in rows]))
    return {"rows": rows, "order": fit.slope, "stderr": fit.stderr, "target": 3 * gamma - 1}


def ito_stratonovich_study(rp: RoughPath, g: SmoothMap, depths, n_probe: int = 64) -> dict:
    """Sup residual of the change-of-variable formula per depth and its decay order."""
    rows = []
    for k in depths:
        _, sup = ito_stratonovich_residual(g, rp, int(k), n_probe)
        rows.append({"depth": int(k), "sup_residual": sup})
    fit = fit_slope([r["depth"] for r in rows], _log2([r["sup_residual"] for r in rows]))
    return {"rows": rows, "order": -fit.slope, "stderr": fit.stderr}


def local_remainder_exponent(y, rp: RoughPath, pc: PowerCoefficient, lags=None,
                             min_level: float = 0.0, indices=None, statistic: str = "max") -> dict:
    """Fit ``log2 S_h`` against ``log2 h`` for ``S_h`` a statistic of ``|R_{s,s+h}|``.

    ``R = dy - sigma(y_s) dx - (Dsigma sigma)(y_s) x2`` over pairs ``(s, s+h)``
    with both ends above ``min_level`` in norm (keeps away from the origin).
    ``y`` holds values on ``indices`` of the driver grid (default: all).
    ``statistic`` is ``"max"`` (grid sup) or ``"rms"``.  For Gaussian drivers
    the sup over ``n/h`` pairs carries a ``log(n/h)`` factor that flattens the
    finite-range slope; ``"rms"`` avoids it.  Both are stored in the rows.
    """
    if statistic not in ("max", "rms"):
        raise ValueError("statistic must be 'max' or 'rms'")
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    idx = np.arange(rp.n) if indices is None else np.asarray(indices)
    if lags is None:
        lags = [2 ** j for j in range(0, int(math.log2(max(len(idx) // 8, 2))))]
    t = rp.grid.points[idx]
    r = np.linalg.norm(y, axis=1)
    rows = []
    for h in lags:
        s = np.arange(len(idx) - h)
        e = s + h
        ok = (r[s] > min_level) & (r[e] > min_level)
        s, e = s[ok], e[ok]
        if s.size == 0:
            continue
        dx = rp.increment(idx[s], idx[e])
        x2 = rp.area(idx[s], idx[e])
        R = (y[e] - y[s] - np.einsum("paj,pj->pa", pc.sigma(y[s]), dx)
             - np.einsum("paij,pij->pa", pc.dsigma_sigma(y[s]), x2))
        Rn = np.linalg.norm(R, axis=1)
        rows.append({"lag": int(h), "h": float(np.max(t[e] - t[s])),
                     "max_R": float(np.max(Rn)), "rms_R": float(np.sqrt(np.mean(Rn * Rn)))})
    col = "max_R" if statistic == "max" else "rms_R"
    fit = fit_slope(_log2([r_["h"] for r_ in rows]), _log2([r_[col] for r_ in rows]))
    return {"rows": rows, "exponent": fit.slope, "stderr": fit.stderr}
