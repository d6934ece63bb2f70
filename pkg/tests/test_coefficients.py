from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from roughpower.coefficients import (PowerCoefficient, lamperti_phi, lamperti_phi_inverse,
                                     sample_points, seminorm_estimate, verify_hypotheses)
from roughpower.errors import ConfigError, OriginDerivative


def by_name(report):
    out = {}
    for c in report["checks"]:
        out.setdefault(c["name"], []).append(c["passed"])
    return out


def test_half_power_hand_values():
    pc = PowerCoefficient(0.5)
    assert float(pc.sigma(4.0)[0, 0]) == pytest.approx(2.0)
    assert float(pc.dsigma(4.0)[0, 0, 0]) == pytest.approx(0.25)
    assert float(pc.dsigma_sigma(4.0)[0, 0, 0]) == pytest.approx(0.5)


def test_sigma_at_origin_and_derivative_guard():
    pc = PowerCoefficient(0.8, directions=[[1.0, 0.5], [0.2, -1.0]])
    assert np.all(pc.sigma(np.zeros(2)) == 0)
    with pytest.raises(OriginDerivative):
        pc.dsigma(np.zeros(2))
    with pytest.raises(ZeroDivisionError):
        PowerCoefficient(0.5).dsigma_sigma(0.0)


def test_derivative_pure_power_sweep():
    pc = PowerCoefficient(0.7, c1=1.3)
    r = np.geomspace(1e-8, 1e3, 50)
    prod = pc.dsigma(r)[:, 0, 0, 0] * r ** (1 - 0.7)
    assert np.allclose(prod, prod[0], rtol=1e-12)


def test_shapes_multid():
    pc = PowerCoefficient(0.8, directions=np.ones((3, 2)))
    xi = np.random.default_rng(0).normal(size=(5, 2))
    assert pc.sigma(xi).shape == (5, 2, 3)
    assert pc.dsigma(xi).shape == (5, 2, 3, 2)
    assert pc.d2sigma(xi).shape == (5, 2, 3, 2, 2)
    assert pc.dsigma_sigma(xi).shape == (5, 2, 3, 3)


@given(st.integers(0, 10_000))
def test_derivatives_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    pc = PowerCoefficient(float(rng.uniform(0.55, 0.95)), float(rng.uniform(0.5, 2)),
                          directions=rng.normal(size=(2, 2)))
    xi = rng.normal(size=2)
    xi *= rng.uniform(0.1, 3) / np.linalg.norm(xi)
    h = 1e-6
    fd = np.stack([(pc.sigma(xi + h * e) - pc.sigma(xi - h * e)) / (2 * h) for e in np.eye(2)], axis=-1)
    assert np.allclose(pc.dsigma(xi), fd, rtol=1e-6, atol=1e-8)
    fd2 = np.stack([(pc.dsigma(xi + h * e) - pc.dsigma(xi - h * e)) / (2 * h) for e in np.eye(2)], axis=-1)
    assert np.allclose(pc.d2sigma(xi), fd2, rtol=1e-5, atol=1e-6)


def test_mollified_cap_is_c2():
    pc = PowerCoefficient(0.6, c2=1.5, smoothing="mollified")
    rc = pc.cap_radius
    r = np.linspace(rc * 0.995, rc * 1.005, 4001)
    for order in (0, 1, 2):
        v = pc.rho(r, order)
        assert np.max(np.abs(np.diff(v))) < 2e-2 * max(1.0, np.max(np.abs(v)))
    assert float(pc.rho(rc * 2)) == pytest.approx(1.5)


def test_plain_cap_kink():
    pc = PowerCoefficient(0.6, c2=1.5)
    rc = pc.cap_radius
    assert float(pc.rho(rc, 1)) > 0 and float(pc.rho(rc * (1 + 1e-12), 1)) == 0


def test_config_guards():
    with pytest.raises(ConfigError):
        PowerCoefficient(1.2)
    with pytest.raises(ConfigError):
        PowerCoefficient(0.5, c1=-1)
    with pytest.raises(ConfigError):
        PowerCoefficient(0.5, smoothing="spline")


def test_dict_roundtrip():
    pc = PowerCoefficient(0.8, 0.3, 2.0, [[1.0, 0.2], [-0.3, 1.0]], "mollified")
    back = PowerCoefficient.from_dict(pc.to_dict())
    assert back.to_dict() == pc.to_dict()
    assert PowerCoefficient.from_dict({"kappa": 0.5}).c2 == math.inf
    with pytest.raises(ConfigError):
        PowerCoefficient.from_dict({"c1": 1})


def test_seminorm_examples():
    r = sample_points(r_min=1e-6, r_max=10, n=200)
    est = seminorm_estimate(lambda x: np.abs(x[:, 0]) ** 0.7, 0.7, points=r)
    assert est.value == pytest.approx(1.0, rel=1e-9)
    pc = PowerCoefficient(0.6, c1=2.0)
    assert seminorm_estimate(pc.sigma, 0.6, points=r).value == pytest.approx(2.0, rel=1e-9)
    pc8 = PowerCoefficient(0.8)
    a = seminorm_estimate(pc8.dsigma_sigma, 0.6, n=100).value
    b = seminorm_estimate(pc8.dsigma_sigma, 0.6, n=400).value
    assert np.isfinite(a) and b >= a and b / a < 1.01
    with pytest.raises(ValueError):
        seminorm_estimate(pc.sigma, 0.6, points=np.ones((4, 1)))


def test_eq32_ratio_bounded_on_random_pairs():
    pc = PowerCoefficient(0.8, 1.0)
    rng = np.random.default_rng(0)
    xi1 = 10 ** rng.uniform(-6, 1, 100_000)
    xi2 = 10 ** rng.uniform(-6, 1, 100_000)
    for F, alpha in ((pc.sigma, 0.8), (pc.dsigma_sigma, 0.6)):
        num = np.abs(F(xi1).reshape(-1) - F(xi2).reshape(-1))
        den = np.abs(xi1 ** alpha - xi2 ** alpha)
        assert np.max(num / den) <= 1.0 + 1e-9


def test_lamperti_half_power():
    pc = PowerCoefficient(0.5)
    assert lamperti_phi(pc, 4.0) == pytest.approx(4.0)
    assert lamperti_phi(pc, 0.0) == 0.0
    assert lamperti_phi_inverse(pc, 4.0) == pytest.approx(4.0)
    x = np.linspace(0, 9, 10)
    assert np.allclose(lamperti_phi(pc, x), 2 * np.sqrt(x))
    assert np.allclose(lamperti_phi_inverse(pc, x), x * x / 4)
    with pytest.raises(ValueError):
        lamperti_phi(pc, -1.0)


@pytest.mark.parametrize("pc", [PowerCoefficient(0.8), PowerCoefficient(0.6, 0.5, 1.2),
                                PowerCoefficient(0.7, 1.0, 2.0, smoothing="mollified")])
def test_lamperti_roundtrip(pc):
    xi = np.geomspace(1e-8, 50, 300)
    if not math.isinf(pc.c2):
        xi = np.sort(np.concatenate([xi, pc.cap_radius * (1 + np.linspace(-2e-3, 2e-3, 21))]))
    u = lamperti_phi(pc, xi)
    assert np.allclose(lamperti_phi_inverse(pc, u), xi, rtol=1e-12, atol=1e-300)
    assert np.allclose(lamperti_phi(pc, lamperti_phi_inverse(pc, u)), u, rtol=1e-12)


def test_lamperti_matches_quadrature():
    pc = PowerCoefficient(0.7, 1.0, 2.0, smoothing="mollified")
    for xi in (0.5, pc.cap_radius, 5.0):
        oracle = quad(lambda s: 1 / float(pc.sigma(s)[0, 0]), 0, xi, limit=200,
                      points=[pc.cap_radius * (1 - 1e-3), pc.cap_radius * (1 + 1e-3)] if xi > 2 else None)[0]
        assert lamperti_phi(pc, xi) == pytest.approx(oracle, rel=1e-8)


def test_psi_solves_ode():
    # psi(x) = phi^{-1}(x + phi(a)): psi' = sigma(psi), psi'' = (Dsigma sigma)(psi)
    pc = PowerCoefficient(0.8, 1.3)
    a = 1.0
    psi = lambda x: lamperti_phi_inverse(pc, x + lamperti_phi(pc, a))
    for x in (-0.5, 0.0, 0.7):
        h = 1e-5
        d1 = (psi(x + h) - psi(x - h)) / (2 * h)
        assert d1 == pytest.approx(float(pc.sigma(psi(x))[0, 0]), rel=1e-8)
        h = 1e-4
        d2 = (psi(x + h) - 2 * psi(x) + psi(x - h)) / h ** 2
        assert d2 == pytest.approx(float(pc.dsigma_sigma(psi(x))[0, 0, 0]), rel=1e-6)


def test_lower_envelope():
    pc = PowerCoefficient(0.8, 0.7)
    r = np.geomspace(1e-8, 1e3, 200)
    assert np.all(pc.sigma(r)[:, 0, 0] >= 0.7 * r ** 0.8 * (1 - 1e-12))


def test_verify_canonical_passes():
    rep = verify_hypotheses(PowerCoefficient(0.8), 0.4)
    assert rep["passed"], [c for c in rep["checks"] if not c["passed"]]
    names = by_name(rep)
    assert {"kappa+gamma", "power_envelope_sigma", "power_envelope_dsigma_sigma",
            "interpolation_bound", "lamperti_envelope"} <= set(names)


def test_verify_kappa_gamma_flagged():
    rep = verify_hypotheses(PowerCoefficient(0.3), 0.4)
    assert not rep["passed"]
    assert by_name(rep)["kappa+gamma"] == [False]


def test_verify_interpolation_eta_zero_matches_envelope():
    rep = verify_hypotheses(PowerCoefficient(0.8), 0.4)
    by = {(c["name"], c["note"]): c["passed"] for c in rep["checks"]}
    env = [v for (n, _), v in by.items() if n.startswith("power_envelope")]
    eta0 = [v for (n, note), v in by.items() if n == "interpolation_bound" and "eta=0 " in note + " "]
    assert eta0 and all(eta0) == all(env)


def test_verify_mollified_cap_passes_plain_cap_fails():
    assert verify_hypotheses(PowerCoefficient(0.8, 1.0, 2.0, smoothing="mollified"), 0.4)["passed"]
    plain = by_name(verify_hypotheses(PowerCoefficient(0.8, 1.0, 2.0), 0.4))
    assert plain["power_envelope_dsigma_sigma"] == [False]
