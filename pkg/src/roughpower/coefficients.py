"""Radial power-type coefficients, their derivatives and envelope checks.

A coefficient is given by ``sigma^j(xi) = v_j rho(|xi|)`` with
``rho(r) = c1 * min(r**kappa, c2)``; ``sigma(xi)`` is the ``m x d`` matrix
whose column ``j`` is ``v_j rho(|xi|)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .errors import ConfigError, OriginDerivative

__all__ = [
    "PowerCoefficient",
    "SeminormEstimate",
    "seminorm_estimate",
    "verify_hypotheses",
    "lamperti_phi",
    "lamperti_phi_inverse",
    "sample_points",
]

MOLLIFY_WIDTH = 1e-3


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u ** 3 * (10 - 15 * u + 6 * u * u), 30 * u * u * (1 - u) ** 2, 60 * u * (1 - u) * (1 - 2 * u)


@dataclass(eq=False)
class PowerCoefficient:
    """Power coefficient ``c1 * (|xi|**kappa ^ c2)`` along fixed directions.

    Parameters
    ----------
    kappa : float
        Exponent in ``(0, 1)``.
    c1 : float
        Positive scale.
    c2 : float
        Cap (``inf`` for a pure power).
    directions : array_like, optional
        ``d x m`` array whose rows are the vectors ``v_j``; default ``[[1]]``.
    smoothing : {"none", "mollified"}
        ``mollified`` replaces the kink at the cap radius by a C^2 blend over a
        relative width of ``1e-3``.
    """

    kappa: float
    c1: float = 1.0
    c2: float = math.inf
    directions: np.ndarray = field(default_factory=lambda: np.ones((1, 1)))
    smoothing: str = "none"

    def __post_init__(self):
        if not 0 < self.kappa < 1:
            raise ConfigError(f"kappa must lie in (0, 1), got {self.kappa}")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ConfigError("c1 and c2 must be positive")
        self.directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        if self.smoothing not in ("none", "mollified"):
            raise ConfigError(f"unknown smoothing {self.smoothing!r}")

    @property
    def d(self) -> int:
        return self.directions.shape[0]

    @property
    def m(self) -> int:
        return self.directions.shape[1]

    @property
    def cap_radius(self) -> float:
        return math.inf if math.isinf(self.c2) else self.c2 ** (1.0 / self.kappa)

    def _band(self):
        rc = self.cap_radius
        return rc * (1 - MOLLIFY_WIDTH), rc * (1 + MOLLIFY_WIDTH)

    def rho(self, r, order: int = 0):
        """Radial profile and its derivatives (``order`` 0, 1 or 2)."""
        r = np.asarray(r, dtype=float)
        k, c1, c2 = self.kappa, self.c1, self.c2
        with np.errstate(divide="ignore", invalid="ignore"):
            p = [r ** k, k * r ** (k - 1), k * (k - 1) * r ** (k - 2)][order]
        if math.isinf(c2):
            return c1 * p
        rc = self.cap_radius
        if self.smoothing == "none":
            # below-cap branch at the kink itself
            cap = [np.full_like(r, c2), np.zeros_like(r), np.zeros_like(r)][order]
            return c1 * np.where(r <= rc, p, cap)
        lo, hi = self._band()
        S, S1, S2 = _smoothstep((r - lo) / (hi - lo))
        w = 1.0 / (hi - lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            pw = [r ** k, k * r ** (k - 1), k * (k - 1) * r ** (k - 2)]
        gap = c2 - pw[0]
        if order == 0:
            val = (1 - S) * pw[0] + S * c2
        elif order == 1:
            val = (1 - S) * pw[1] + S1 * w * gap
        else:
            val = (1 - S) * pw[2] - 2 * S1 * w * pw[1] + S2 * w * w * gap
        cap = [np.full_like(r, c2), np.zeros_like(r), np.zeros_like(r)][order]
        out = np.where(r < lo, p, np.where(r > hi, cap, val))
        return c1 * out

    def _radial(self, xi):
        xi = np.asarray(xi, dtype=float)
        if xi.shape[-1:] != (self.m,):
            if self.m == 1:
                xi = xi[..., None]
            else:
                raise ValueError(f"points must have trailing dimension {self.m}")
        r = np.linalg.norm(xi, axis=-1)
        return xi, r

    def sigma(self, xi) -> np.ndarray:
        """``(..., m, d)`` values; ``sigma[a, j] = v_j[a] rho(|xi|)``."""
        xi, r = self._radial(xi)
        rho = self.rho(r)
        return rho[..., None, None] * self.directions.T

    def dsigma(self, xi) -> np.ndarray:
        """``(..., m, d, m)``: ``D[a, j, b] = d sigma[a, j] / d xi_b``."""
        xi, r = self._radial(xi)
        if np.any(r == 0):
            raise OriginDerivative("derivative of sigma requested at the origin")
        unit = xi / r[..., None]
        g = self.rho(r, 1)
        return g[..., None, None, None] * self.directions.T[..., None] * unit[..., None, None, :]

    def d2sigma(self, xi) -> np.ndarray:
        """``(..., m, d, m, m)`` second derivatives."""
        xi, r = self._radial(xi)
        if np.any(r == 0):
            raise OriginDerivative("derivative of sigma requested at the origin")
        unit = xi / r[..., None]
        uu = unit[..., :, None] * unit[..., None, :]
        eye = np.eye(self.m)
        g1 = self.rho(r, 1)[..., None, None]
        g2 = self.rho(r, 2)[..., None, None]
        H = g2 * uu + g1 / r[..., None, None] * (eye - uu)
        return self.directions.T[..., None, None] * H[..., None, None, :, :]

    def dsigma_sigma(self, xi) -> np.ndarray:
        """``(..., m, d, d)``: ``DS[a, i, j] = sum_b D[a, j, b] sigma[b, i]``.

        The second-order term of the scheme is ``sum_{ij} DS[:, i, j] x2[i, j]``.
        """
        D = self.dsigma(xi)
        S = self.sigma(xi)
        return np.einsum("...ajb,...bi->...aij", D, S)

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "c1": self.c1,
                "c2": None if math.isinf(self.c2) else self.c2,
                "directions": self.directions.tolist(), "smoothing": self.smoothing}

    @classmethod
    def from_dict(cls, spec: dict) -> "PowerCoefficient":
        try:
            c2 = spec.get("c2")
            return cls(float(spec["kappa"]), float(spec.get("c1", 1.0)),
                       math.inf if c2 is None else float(c2),
                       np.asarray(spec.get("directions", [[1.0]]), dtype=float),
                       spec.get("smoothing", "none"))
        except KeyError as exc:
            raise ConfigError(f"coefficient spec is missing {exc}") from None


# ---------------------------------------------------------------- seminorms


@dataclass
class SeminormEstimate:
    alpha: float
    value: float
    samples: int
    argmax: tuple = ()


def sample_points(m: int = 1, r_min: float = 1e-6, r_max: float = 1e1, n: int = 400,
                  positive_only: bool = True, seed: int = 0, extra_radii=None) -> np.ndarray:
    """Log-spaced radii; in 1-d on the positive axis (or both signs), otherwise
    along random directions.  ``extra_radii`` are appended to the sweep."""
    if r_min <= 0 or r_max <= r_min:
        raise ValueError("need 0 < r_min < r_max")
    rng = np.random.default_rng(seed)
    r = np.geomspace(r_min, r_max, n)
    if extra_radii is not None:
        r = np.unique(np.concatenate([r, np.asarray(extra_radii, dtype=float)]))
        n = r.size
    if m == 1:
        if positive_only:
            return r[:, None]
        return (r * rng.choice([-1.0, 1.0], n))[:, None]
    u = rng.standard_normal((n, m))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return r[:, None] * u


def _pair_ratio(F, xi, alpha):
    vals = np.asarray(F(xi), dtype=float).reshape(len(xi), -1)
    r = np.linalg.norm(xi, axis=1)
    i, j = np.triu_indices(len(xi), 1)
    num = np.linalg.norm(vals[i] - vals[j], axis=1)
    den = np.abs(r[i] ** alpha - r[j] ** alpha)
    ok = den > 0
    if not np.any(ok):
        raise ValueError("degenerate sampling: all radii coincide")
    ratio = np.where(ok, num / np.where(ok, den, 1.0), 0.0)
    k = int(np.argmax(ratio))
    return float(ratio[k]), (float(r[i[k]]), float(r[j[k]])), int(ok.sum())


def seminorm_estimate(F, alpha: float, points=None, **sample_kw) -> SeminormEstimate:
    """Sampled ``sup |F(xi2) - F(xi1)| / ||xi2|^alpha - |xi1|^alpha|``.

    ``points`` is an ``(n, m)`` array; otherwise :func:`sample_points` is
    called with ``sample_kw``.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    xi = sample_points(**sample_kw) if points is None else np.atleast_2d(np.asarray(points, dtype=float))
    if xi.shape[0] == 1 and xi.shape[1] > 1 and sample_kw.get("m", 1) == 1:
        xi = xi.T
    value, loc, count = _pair_ratio(F, xi, alpha)
    return SeminormEstimate(alpha, value, count, loc)


# ---------------------------------------------------------------- Lamperti


def _check_1d(pc: PowerCoefficient):
    if pc.m != 1 or pc.d != 1:
        raise ConfigError("the Lamperti transform needs m = d = 1")
    v = float(pc.directions[0, 0])
    if v <= 0:
        raise ConfigError("sigma must be positive on the positive half-line")
    return v


def _phi_pos(pc: PowerCoefficient, xi: np.ndarray) -> np.ndarray:
    v = _check_1d(pc)
    k, c1 = pc.kappa, pc.c1
    base = xi ** (1 - k) / (c1 * v * (1 - k))
    if math.isinf(pc.c2):
        return base
    rc = pc.cap_radius
    if pc.smoothing == "none":
        lo = hi = rc
        band_val = 0.0
    else:
        lo, hi = pc._band()
        band_val = integrate.quad(lambda s: 1.0 / (v * float(pc.rho(s))), lo, hi,
                                  epsabs=0, epsrel=1e-13)[0]
    phi_lo = lo ** (1 - k) / (c1 * v * (1 - k))
    out = np.where(xi <= lo, base, phi_lo + band_val + (xi - hi) / (c1 * v * pc.c2))
    inside = (xi > lo) & (xi < hi)
    if np.any(inside):
        part = [integrate.quad(lambda s: 1.0 / (v * float(pc.rho(s))), lo, x,
                               epsabs=0, epsrel=1e-13)[0] for x in xi[inside]]
        out = out.copy()
        out[inside] = phi_lo + np.asarray(part)
    return out


def lamperti_phi(pc: PowerCoefficient, xi, odd: bool = False):
    """``phi(xi) = int_0^xi ds / sigma(s)`` for ``xi >= 0``.

    With ``odd=True`` negative arguments map to ``-phi(-xi)``; otherwise they
    raise ValueError.
    """
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0) and not odd:
        raise ValueError("phi is defined on the nonnegative half-line")
    out = np.sign(xi) * _phi_pos(pc, np.abs(np.atleast_1d(xi))).reshape(xi.shape)
    return float(out) if out.ndim == 0 else out


def lamperti_phi_inverse(pc: PowerCoefficient, u, odd: bool = False):
    """Inverse of :func:`lamperti_phi` (closed form outside the mollified band)."""
    v = _check_1d(pc)
    u = np.asarray(u, dtype=float)
    if np.any(u < 0) and not odd:
        raise ValueError("phi^{-1} is defined on the nonnegative half-line")
    k, c1 = pc.kappa, pc.c1
    a = np.abs(u)
    with np.errstate(invalid="ignore"):
        base = (c1 * v * (1 - k) * a) ** (1.0 / (1 - k))
    if math.isinf(pc.c2):
        out = base
    else:
        lo, hi = (pc.cap_radius,) * 2 if pc.smoothing == "none" else pc._band()
        u_lo, u_hi = (float(x) for x in _phi_pos(pc, np.array([lo, hi])))
        out = np.where(a <= u_lo, base, hi + (a - u_hi) * c1 * v * pc.c2)
        inside = (a > u_lo) & (a < u_hi)
        if np.any(inside):
            out = np.array(out, dtype=float)
            vals = [optimize.brentq(lambda x, target=t: float(_phi_pos(pc, np.array([x]))[0]) - target,
                                    lo, hi, xtol=1e-15, rtol=1e-15) for t in a[inside]]
            out[inside] = vals
    out = np.sign(u) * out
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------- verification


@dataclass
class CheckResult:
    name: str
    passed: bool | None
    value: float
    location: tuple = ()
    note: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "value": self.value,
                "location": list(self.location), "note": self.note}


def _refine(pts: np.ndarray) -> np.ndarray:
    return np.linspace(pts[0], pts[-1], 2 * pts.size - 1)


def _stable_sup(F, alpha, m, r_min, r_max, n, positive_only, seed, extra=None, growth=1.5):
    first = seminorm_estimate(F, alpha, m=m, r_min=r_min, r_max=r_max, n=n,
                              positive_only=positive_only, seed=seed, extra_radii=extra)
    extra2 = None if extra is None else _refine(extra)
    second = seminorm_estimate(F, alpha, m=m, r_min=r_min / 100, r_max=r_max, n=2 * n,
                               positive_only=positive_only, seed=seed + 1, extra_radii=extra2)
    ok = bool(np.isfinite(second.value) and second.value <= growth * max(first.value, 1e-300))
    return first, second, ok


def verify_hypotheses(pc: PowerCoefficient, gamma: float, r_min: float = 1e-6,
                      r_max: float = 1e1, n: int = 300, positive_only: bool = True,
                      seed: int = 0) -> dict:
    """Sample-based checks of the envelope conditions on ``pc``.

    Returns a dict with ``passed`` (all applicable checks pass) and ``checks``
    (list of per-check dicts).  Envelope checks pass when the sampled
    supremum is finite and grows by less than 1.5x when the smallest radius
    is reduced 100-fold and the sample density doubled.
    """
    k = pc.kappa
    m = pc.m
    checks = []
    checks.append(CheckResult("kappa+gamma", k + gamma > 1, k + gamma - 1.0,
                              note="kappa + gamma - 1"))
    s0 = float(np.max(np.abs(pc.sigma(np.zeros(m)))))
    checks.append(CheckResult("sigma_at_origin", s0 == 0.0, s0))

    def F_sigma(x):
        return pc.sigma(x)

    def F_ds(x):
        return pc.dsigma_sigma(x)

    # resolve the cap region explicitly so both sweeps see it
    extra = None
    if math.isfinite(pc.c2) and pc.cap_radius < r_max:
        rc = pc.cap_radius
        extra = np.linspace(rc * (1 - 4 * MOLLIFY_WIDTH), rc * (1 + 4 * MOLLIFY_WIDTH), 41)
    a1, b1, ok1 = _stable_sup(F_sigma, k, m, r_min, r_max, n, positive_only, seed, extra)
    checks.append(CheckResult("power_envelope_sigma", ok1, b1.value, b1.argmax,
                              f"alpha={k}, coarse sup {a1.value:.6g}"))
    alpha_ds = 2 * k - 1
    if alpha_ds > 0:
        a2, b2, ok2 = _stable_sup(F_ds, alpha_ds, m, r_min, r_max, n, positive_only, seed, extra)
        checks.append(CheckResult("power_envelope_dsigma_sigma", ok2, b2.value, b2.argmax,
                                  f"alpha={alpha_ds}, coarse sup {a2.value:.6g}"))
    else:
        checks.append(CheckResult("power_envelope_dsigma_sigma", None, float("nan"),
                                  note="2 kappa - 1 <= 0: exponent not positive"))

    if m == 1 and pc.d == 1 and pc.directions[0, 0] > 0:
        lam = min((2 * k - 1) / (1 - k), 1.0)
        if lam > 0:
            def F_lamp(u):
                u = np.asarray(u, dtype=float).reshape(-1)
                return pc.dsigma_sigma(lamperti_phi_inverse(pc, u)[:, None]).reshape(len(u), -1)
            u_min = float(lamperti_phi(pc, r_min))
            u_max = float(lamperti_phi(pc, r_max))
            u_extra = np.zeros(0) if extra is None else lamperti_phi(pc, extra)
            pts1 = np.unique(np.concatenate([np.geomspace(u_min, u_max, n), u_extra]))[:, None]
            pts2 = np.unique(np.concatenate([
                np.geomspace(float(lamperti_phi(pc, r_min / 100)), u_max, 2 * n),
                np.zeros(0) if extra is None else lamperti_phi(pc, _refine(extra))]))[:, None]
            e1 = seminorm_estimate(F_lamp, lam, pts1)
            e2 = seminorm_estimate(F_lamp, lam, pts2)
            ok = bool(np.isfinite(e2.value) and e2.value <= 1.5 * max(e1.value, 1e-300))
            checks.append(CheckResult("lamperti_envelope", ok, e2.value, e2.argmax,
                                      f"exponent={lam}, coarse sup {e1.value:.6g}"))
        else:
            checks.append(CheckResult("lamperti_envelope", None, float("nan"),
                                      note="exponent not positive"))

    # interpolation inequality on sampled pairs
    xi = sample_points(m, r_min, r_max, n, positive_only, seed, extra)
    r = np.linalg.norm(xi, axis=1)
    i, j = np.triu_indices(len(xi), 1)
    for name, F, alpha in (("sigma", F_sigma, k), ("dsigma_sigma", F_ds, alpha_ds)):
        if alpha <= 0:
            continue
        N = _pair_ratio(F, xi, alpha)[0]
        vals = np.asarray(F(xi)).reshape(len(xi), -1)
        lhs = np.linalg.norm(vals[i] - vals[j], axis=1)
        dist = np.linalg.norm(xi[i] - xi[j], axis=1)
        for eta in (0.0, (1 - alpha) / 2, 1 - alpha):
            rhs = alpha / (alpha + eta) * N * (r[i] ** -eta + r[j] ** -eta) * dist ** (alpha + eta)
            excess = lhs - rhs * (1 + 1e-9)
            worst = int(np.argmax(excess))
            checks.append(CheckResult(
                "interpolation_bound", bool(excess[worst] <= 0), float(excess[worst]),
                (float(r[i[worst]]), float(r[j[worst]])), f"F={name}, eta={eta:.6g}"))

    # derivative growth
    rr = np.geomspace(r_min, min(r_max, pc.cap_radius * (1 - 2 * MOLLIFY_WIDTH)), n)
    pts = sample_points(m, rr[0], rr[-1], n, True, seed)
    rn = np.linalg.norm(pts, axis=1)
    d1 = np.linalg.norm(pc.dsigma(pts).reshape(n, -1), axis=1) * rn ** (1 - k)
    d2 = np.linalg.norm(pc.d2sigma(pts).reshape(n, -1), axis=1) * rn ** (2 - k)
    ok = bool(np.all(np.isfinite(d1)) and np.all(np.isfinite(d2)))
    checks.append(CheckResult("derivative_growth", ok, float(max(d1.max(), d2.max())),
                              note=f"sup |Dsigma| r^(1-kappa) = {d1.max():.6g}, "
                                   f"sup |D2sigma| r^(2-kappa) = {d2.max():.6g}"))
    low = np.linalg.norm(pc.sigma(pts).reshape(n, -1), axis=1) / rn ** k
    checks.append(CheckResult("lower_envelope", bool(low.min() > 0), float(low.min()),
                              note="inf |sigma| / r^kappa below the cap"))
    applicable = [c for c in checks if c.passed is not None]
    return {"passed": all(c.passed for c in applicable),
            "checks": [c.to_dict() for c in checks]}
