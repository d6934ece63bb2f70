"""Command-line front end: ``roughpower {gen-path,solve,verify,study}``.

Every subcommand reads one JSON config (``--config``) carrying
``"schema_version": 1`` and writes into ``--out``.  Exit codes: 0 pass,
1 check failure or solver error, 2 insufficient data, 3 config or IO error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import (convergence_study, epsilon_knobs, gap_study, global_holder_report,
                       ito_stratonovich_study, scaling_study)
from .coefficients import PowerCoefficient, lamperti_phi, verify_hypotheses
from .controlled import SmoothMap
from .errors import ConfigError, InsufficientShells, RoughPowerError
from .fixtures import linear_driver, ramp_driver, smooth_driver
from .increments import Inc1, Inc2Grid, delta1, delta2, product_rule_check
from .roughpath import (RoughPath, fbm_rough_path, lift_residuals, read_rough_path,
                        roughness_modulus, write_rough_path)
from .sewing import discrete_sewing_check, sew, telescoped_remainder
from .solver import SolverParams, solve_1d_lamperti, solve_md_davie, write_solution

__all__ = ["main", "build_driver", "load_config"]

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_DATA, EXIT_CONFIG = 0, 1, 2, 3
LIFT_TOL = 1e-10

log = logging.getLogger("roughpower")


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    return cfg


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (np.floating, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o)}")


def _clean(v):
    # JSON has no inf/nan
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


# ---------------------------------------------------------------- builders


def build_coefficient(spec: dict | None) -> PowerCoefficient:
    if spec is None:
        raise ConfigError("a coefficient spec is required")
    if isinstance(spec, str):
        try:
            spec = json.loads(Path(spec).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read coefficient file: {exc}") from None
    if not isinstance(spec, dict):
        raise ConfigError("coefficient must be an object or a JSON file path")
    return PowerCoefficient.from_dict(spec)


def build_driver(cfg: dict, pc: PowerCoefficient | None = None) -> RoughPath:
    """Driver from ``driver_dir`` (files written by gen-path) or ``driver`` spec."""
    if "driver_dir" in cfg:
        try:
            return read_rough_path(cfg["driver_dir"])
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read driver: {exc}") from None
    spec = cfg.get("driver")
    if not isinstance(spec, dict):
        raise ConfigError("config needs 'driver' or 'driver_dir'")
    kind = spec.get("kind", "fbm")
    try:
        if kind == "fbm":
            return fbm_rough_path(float(spec["H"]), int(spec.get("d", 1)), int(spec["n"]),
                                  int(spec.get("refine", 8)), int(spec.get("seed", 0)),
                                  float(spec.get("T", 1.0)), float(spec.get("gamma_margin", 0.02)))
        if kind == "linear":
            return linear_driver(int(spec["n"]), spec.get("slope", 1.0), float(spec.get("T", 1.0)))
        if kind == "smooth":
            return smooth_driver(int(spec["n"]), float(spec.get("amplitude", 0.5)),
                                 float(spec.get("frequency", 1.0)), int(spec.get("d", 1)),
                                 float(spec.get("T", 1.0)))
        if kind == "ramp":
            gamma = float(spec["gamma"])
            if "amplitude" in spec:
                A = float(spec["amplitude"])
            else:
                if pc is None:
                    raise ConfigError("ramp driver needs 'amplitude' or a coefficient")
                A = float(lamperti_phi(pc, float(spec.get("a", 1.0))))
            return ramp_driver(2 ** int(spec.get("level", 16)), A, gamma,
                               float(spec.get("tau_star", 0.75)), float(spec.get("T", 1.0)))
    except KeyError as exc:
        raise ConfigError(f"driver spec is missing {exc}") from None
    raise ConfigError(f"unknown driver kind {kind!r}")


def build_params(cfg: dict, pc: PowerCoefficient, rp: RoughPath) -> SolverParams:
    s = dict(cfg.get("solver", {}))
    gamma = float(s.pop("gamma", rp.gamma))
    known = {"c0", "zero_threshold", "max_steps", "substeps", "max_halvings", "fixed_stride", "rel_step"}
    extra = set(s) - known
    if extra:
        raise ConfigError(f"unknown solver options {sorted(extra)}")
    return SolverParams(gamma, pc.kappa, **s)


def _initial(cfg: dict, pc: PowerCoefficient) -> np.ndarray:
    if "a" not in cfg:
        raise ConfigError("config needs an initial condition 'a'")
    a = np.atleast_1d(np.asarray(cfg["a"], dtype=float))
    if a.shape != (pc.m,):
        raise ConfigError(f"'a' must have {pc.m} entries")
    return a


# ---------------------------------------------------------------- commands


def cmd_gen_path(cfg: dict, out: Path) -> int:
    rp = build_driver(cfg)
    write_rough_path(rp, out)
    log.info("wrote %d points (d=%d) to %s", rp.n, rp.d, out)
    return EXIT_OK


def cmd_solve(cfg: dict, out: Path) -> int:
    pc = build_coefficient(cfg.get("coefficient"))
    rp = build_driver(cfg, pc)
    a = _initial(cfg, pc)
    method = cfg.get("method", "md")
    if method not in ("md", "lamperti", "both"):
        raise ConfigError(f"unknown method {method!r}")
    out.mkdir(parents=True, exist_ok=True)
    if method in ("lamperti", "both"):
        mode = cfg.get("lamperti_mode", "absorb")
        sol = solve_1d_lamperti(pc, float(a[0]), rp, mode)
        name = "solution" if method == "lamperti" else "solution_lamperti"
        write_solution(sol, out, name)
        for alt in sol.alternatives:
            write_solution(alt, out, f"{name}_zero")
        print(f"lamperti case: {sol.case_label}" + (" (y = 0 also solves)" if sol.alternatives else ""))
    if method in ("md", "both"):
        if not np.any(a):
            raise ConfigError("the md scheme needs a nonzero initial condition")
        params = build_params(cfg, pc, rp)
        sp = solve_md_davie(pc, a, rp, params)
        write_solution(sp, out, "solution")
        print(f"case: {sp.case_label}" + (f" tau={sp.tau!r}" if sp.tau is not None else ""))
        if method == "both":
            ref = sol.y[sp.indices]
            stop = len(sp.indices) if sp.tau_index is None else int(np.searchsorted(sp.indices, sp.tau_index))
            scale = float(np.max(np.abs(ref[:stop]))) if stop else 0.0
            diff = float(np.max(np.abs(sp.y[:stop] - ref[:stop]))) / scale if scale > 0 else 0.0
            log.info("lamperti vs md: relative sup difference %.3e before zero", diff)
            _dump({"relative_sup_difference": diff, "points": stop}, out / "crosscheck.json")
    return EXIT_OK


def _check(name, passed, value, **extra) -> dict:
    return _clean({"name": name, "passed": bool(passed), "value": value, **extra})


def cmd_verify(cfg: dict, out: Path) -> int:
    rp = build_driver(cfg)
    checks = []
    res = lift_residuals(rp, seed=int(cfg.get("seed", 0)))
    checks.append(_check("chen", res["chen"] < LIFT_TOL, res["chen"], tol=LIFT_TOL))
    checks.append(_check("symmetry", res["symmetry"] < LIFT_TOL, res["symmetry"], tol=LIFT_TOL))
    # algebra on a 33-point sub-grid of the driver
    idx = np.unique(np.linspace(0, rp.n - 1, min(rp.n, 33)).round().astype(int))
    sub = rp.restrict(idx)
    x = Inc1(sub.grid, sub.x.values)
    dd = delta2(delta1(x)).values
    scale = max(float(np.max(np.abs(x.values))), 1e-300)
    checks.append(_check("delta_delta", float(np.max(np.abs(dd))) <= 1e-12 * scale,
                         float(np.max(np.abs(dd))) / scale))
    g = Inc1(sub.grid, sub.x.values[:, 0])
    h = Inc2Grid(sub.grid, sub.area_grid().values[..., 0, -1])
    pr = product_rule_check(g, h)
    pr_scale = max(float(np.max(np.abs(h.values))) * float(np.max(np.abs(g.values))), 1e-300)
    checks.append(_check("product_rule", pr <= 1e-12 * pr_scale, pr / pr_scale))
    # discrete sewing on the telescoped second level, then re-sew its coboundary
    mu = float(cfg.get("sewing_mu", 3 * rp.gamma))
    if mu > 1:
        R = telescoped_remainder(h)
        atol = 1e-12 * max(1.0, float(np.max(np.abs(h.values))))
        lhs, rhs, ok = discrete_sewing_check(R, mu, atol=atol)
        checks.append(_check("discrete_sewing", ok, lhs, bound=rhs, mu=mu))
        if sub.grid.dyadic_level is not None:
            try:
                sres = sew(delta2(R), mu)
                checks.append(_check("sewing_closure", sres.closure_residual <= atol,
                                     sres.closure_residual, tol=atol))
            except RoughPowerError as exc:
                checks.append(_check("sewing_closure", False, None, error=str(exc)))
    if "coefficient" in cfg:
        pc = build_coefficient(cfg["coefficient"])
        gamma = float(cfg.get("gamma", rp.gamma))
        rep = verify_hypotheses(pc, gamma)
        checks.extend(_clean(c) for c in rep["checks"])
    failed = [c["name"] for c in checks if c["passed"] is False]
    report = {"passed": not failed, "failed": failed, "checks": checks}
    out.mkdir(parents=True, exist_ok=True)
    _dump(report, out / "report.json")
    for c in checks:
        log.info("%-28s %s", c["name"], {True: "pass", False: "FAIL", None: "n/a"}[c["passed"]])
    return EXIT_OK if not failed else EXIT_FAIL


_G_SUITE = {
    "sin": SmoothMap.scalar(lambda x: np.sin(x).sum(axis=1), lambda x: np.cos(x),
                            lambda x: np.einsum("nd,de->nde", -np.sin(x), np.eye(x.shape[1]))),
    "quadratic": SmoothMap.scalar(lambda x: 0.5 * np.sum(x * x, axis=1), lambda x: np.array(x, dtype=float),
                                  lambda x: np.broadcast_to(np.eye(x.shape[1]), (len(x),) + (x.shape[1],) * 2)),
    "linear": SmoothMap.scalar(lambda x: np.sum(x, axis=1), lambda x: np.ones_like(x),
                               lambda x: np.zeros((len(x), x.shape[1], x.shape[1]))),
}


def _write_table(rows: list, path: Path, extra: dict | None = None) -> None:
    if not rows:
        path.write_text("")
        return
    cols = list(rows[0].keys()) + list((extra or {}).keys())
    lines = [",".join(cols)]
    for r in rows:
        vals = [r[c] for c in rows[0]] + list((extra or {}).values())
        lines.append(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in vals))
    path.write_text("\n".join(lines) + "\n")


def cmd_study(cfg: dict, out: Path) -> int:
    kind = cfg.get("study")
    out.mkdir(parents=True, exist_ok=True)
    if kind == "ito_stratonovich":
        rp = build_driver(cfg)
        g = _G_SUITE.get(cfg.get("g", "sin"))
        if g is None:
            raise ConfigError(f"unknown g {cfg.get('g')!r}; choose from {sorted(_G_SUITE)}")
        depths = cfg.get("depths", list(range(8, 15)))
        res = ito_stratonovich_study(rp, g, depths)
        target = 3 * rp.gamma - 1 - 0.1
        res.update({"target": target, "passed": bool(res["order"] >= target)})
        _dump(_clean(res), out / "report.json")
        _write_table(res["rows"], out / "report.csv", {"order": res["order"]})
        return EXIT_OK if res["passed"] else EXIT_FAIL
    if kind == "roughness":
        rp = build_driver(cfg)
        est = roughness_modulus(rp, float(cfg.get("gamma", rp.gamma)), float(cfg.get("eps_hat", 0.05)),
                                cfg.get("eps_list", [2.0 ** -k for k in range(2, 8)]))
        d = est.to_dict()
        d["passed"] = bool(est.L > 0)
        _dump(_clean(d), out / "report.json")
        _write_table([{"eps": e, "L": v} for e, v in zip(d["epsilon_grid"], d["L_per_eps"])],
                     out / "report.csv")
        return EXIT_OK if d["passed"] else EXIT_FAIL
    if kind not in ("scaling", "gap", "global_holder", "convergence"):
        raise ConfigError(f"unknown study {kind!r}")
    pc = build_coefficient(cfg.get("coefficient"))
    rp = build_driver(cfg, pc)
    a = _initial(cfg, pc)
    params = build_params(cfg, pc, rp)
    gamma = params.gamma
    if kind == "convergence":
        res = convergence_study(pc, a, rp, gamma, tuple(cfg.get("strides", (64, 32, 16, 8, 4))))
        res["passed"] = bool(res["order"] >= res["target"] - 0.1)
        _dump(_clean(res), out / "report.json")
        _write_table(res["rows"], out / "report.csv", {"order": res["order"]})
        return EXIT_OK if res["passed"] else EXIT_FAIL
    eps1 = float(cfg.get("eps1", 0.05))
    eps2 = cfg.get("eps2")
    epsilon_knobs(pc.kappa, gamma, eps1, eps2)  # validate before solving
    sp = solve_md_davie(pc, a, rp, params)
    if kind == "global_holder":
        fine = replace(params, substeps=2 * params.substeps)
        sp2 = solve_md_davie(pc, a, rp, fine)
        res = global_holder_report(sp, gamma, sp2)
        res["case"] = sp.case_label
        _dump(_clean(res), out / "report.json")
        _write_table([{k: v for k, v in res.items() if not isinstance(v, (bool, str))}], out / "report.csv")
        return EXIT_OK if res["passed"] else EXIT_FAIL
    q_min, q_max = int(cfg.get("q_min", 3)), int(cfg.get("q_max", 12))
    if kind == "scaling":
        rep = scaling_study(sp, rp, pc, gamma, params, q_min, q_max, eps1, eps2)
        verdict = rep.passed(float(cfg.get("tol_y", 0.15)), float(cfg.get("tol_R", 0.25)))
        d = rep.to_dict()
        d.update({"case": sp.case_label, "passed": verdict})
        _dump(_clean(d), out / "report.json")
        (out / "report.csv").write_text(rep.to_csv())
        return EXIT_OK if all(verdict.values()) else EXIT_FAIL
    rep = gap_study(sp.shells, pc.kappa, gamma, eps2, eps1, q_min, None, float(cfg.get("tol", 0.25)))
    d = rep.to_dict()
    d["case"] = sp.case_label
    _dump(_clean(d), out / "report.json")
    _write_table([{"q": q, "gap": g} for q, g in zip(rep.q, rep.gaps)], out / "report.csv",
                 {"slope": rep.fit.slope})
    return EXIT_OK if rep.passed else EXIT_FAIL


COMMANDS = {"gen-path": cmd_gen_path, "solve": cmd_solve, "verify": cmd_verify, "study": cmd_study}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roughpower", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--out", required=True, help="output directory (created if missing)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except InsufficientShells as exc:
        print(f"InsufficientShells: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RoughPowerError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
