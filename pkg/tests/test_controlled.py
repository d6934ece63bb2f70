from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from roughpower.controlled import (ControlledPath, SmoothMap, compose_controlled, compose_smooth,
                                   integral_defect, ito_stratonovich_residual, probe_indices,
                                   rough_integral)
from roughpower.errors import NoConvergence, RegularityBudget
from roughpower.fixtures import smooth_driver
from roughpower.increments import Inc1
from roughpower.roughpath import fbm_rough_path

SIN = SmoothMap.elementwise(np.sin, np.cos, lambda x: -np.sin(x))
SQUARE = SmoothMap.elementwise(lambda x: x * x, lambda x: 2 * x, lambda x: 2 + 0 * x)


@pytest.fixture(scope="module")
def fbm2():
    return fbm_rough_path(0.4, 2, 1024, seed=11)


def test_compose_identity(fbm2):
    cp = compose_smooth(SmoothMap.identity(2), 1.0, fbm2)
    assert np.allclose(cp.zeta.values, np.eye(2))
    assert np.max(np.abs(cp.remainder_grid().values)) < 1e-14
    assert cp.eta == pytest.approx(2 * fbm2.gamma)


def test_compose_square_remainder_is_dx_squared():
    rp = fbm_rough_path(0.4, 1, 256, seed=2)
    cp = compose_smooth(SQUARE, 1.0, rp)
    idx = probe_indices(rp.n, 32)
    R = cp.remainder_grid(idx).values[..., 0]
    a, b = np.triu_indices(idx.size, 1)
    dx = rp.increment(idx[a], idx[b])[:, 0]
    assert np.allclose(R[a, b], dx * dx, atol=1e-13)


def test_compose_sin_remainder_stable():
    rp = fbm_rough_path(0.4, 2, 2048, seed=3)
    cp = compose_smooth(SIN, 1.0, rp)
    vals = [cp.remainder_seminorm(2 * rp.gamma, stride=s) for s in (32, 8, 2)]
    assert np.all(np.isfinite(vals))
    assert max(vals) / min(vals) < 2.0


def test_compose_lambda_guard(fbm2):
    with pytest.raises(ValueError):
        compose_smooth(SIN, 0.0, fbm2)


def test_compose_controlled_identity_and_linear(fbm2):
    cp = compose_smooth(SIN, 1.0, fbm2)
    same = compose_controlled(SmoothMap.identity(2), cp)
    assert np.array_equal(same.z.values, cp.z.values) and np.array_equal(same.zeta.values, cp.zeta.values)
    A = np.array([[1.0, 2.0], [-0.5, 3.0], [0.0, 1.0]])
    lin = compose_controlled(SmoothMap.linear(A), cp)
    assert np.allclose(lin.z.values, cp.z.values @ A.T, atol=1e-15)
    assert np.allclose(lin.zeta.values, np.einsum("kn,Nnd->Nkd", A, cp.zeta.values), atol=1e-15)


def test_compose_controlled_square_of_sin():
    rp = fbm_rough_path(0.4, 1, 2048, seed=4)
    w = compose_controlled(SQUARE, compose_smooth(SIN, 1.0, rp))
    vals = [w.remainder_seminorm(2 * rp.gamma, stride=s) for s in (32, 8, 2)]
    assert max(vals) / min(vals) < 2.0
    # chain rule: derivative of sin^2 is 2 sin cos
    x = rp.x.values[:, 0]
    assert np.allclose(w.zeta.values[:, 0, 0], 2 * np.sin(x) * np.cos(x), atol=1e-14)


def test_integral_constant_integrand_exact(fbm2):
    c = np.array([0.75, -1.25])
    m = ControlledPath(Inc1(fbm2.grid, np.tile(c, (fbm2.n, 1))), Inc1(fbm2.grid, np.zeros((fbm2.n, 2, 2))),
                       1.0, fbm2)
    res = rough_integral(m, s_index=100, t_index=900, min_depth=1)
    expected = c @ fbm2.increment(100, 900)
    assert all(v == pytest.approx(expected, abs=1e-13) for v in res.level_values)


def test_integral_matches_riemann_stieltjes():
    n = 2 ** 14
    rp = smooth_driver(n, amplitude=0.5, frequency=1.0, d=2)
    f = SmoothMap(lambda x: np.column_stack([np.cos(x[:, 1]), x[:, 0] * x[:, 1]]),
                  lambda x: np.stack([np.column_stack([0 * x[:, 0], -np.sin(x[:, 1])]),
                                      np.column_stack([x[:, 1], x[:, 0]])], axis=1))
    m = compose_smooth(f, 1.0, rp)
    res = rough_integral(m)
    x1 = lambda t: 0.5 * np.sin(2 * np.pi * t)
    x2 = lambda t: 0.5 * np.sin(4 * np.pi * t)
    dx1 = lambda t: np.pi * np.cos(2 * np.pi * t)
    dx2 = lambda t: 2 * np.pi * np.cos(4 * np.pi * t)
    oracle = quad(lambda t: np.cos(x2(t)) * dx1(t) + x1(t) * x2(t) * dx2(t), 0, 1,
                  epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    assert float(res) == pytest.approx(oracle, abs=1e-8)


def test_integral_of_x_against_x(fbm2):
    rp = fbm_rough_path(0.4, 1, 1024, seed=5)
    m = compose_smooth(SmoothMap.identity(1), 1.0, rp)
    for s, t in [(0, 1024), (100, 700), (3, 4)]:
        val = float(rough_integral(m, s_index=s, t_index=t))
        xs, xt = rp.x.values[s, 0], rp.x.values[t, 0]
        assert val == pytest.approx((xt ** 2 - xs ** 2) / 2, abs=1e-9)


def test_integral_regularity_budget(fbm2):
    cp = compose_smooth(SIN, 1.0, fbm2)
    weak = ControlledPath(cp.z, cp.zeta, 0.55, fbm2)
    with pytest.raises(RegularityBudget):
        rough_integral(weak)


def test_integral_no_convergence_with_tol(fbm2):
    m = compose_smooth(SIN, 1.0, fbm2)
    with pytest.raises(NoConvergence):
        rough_integral(m, tol=1e-16)
    assert rough_integral(m, tol=1.0).converged


def test_integral_needs_dyadic_grid():
    rp = fbm_rough_path(0.4, 1, 100, seed=0)
    with pytest.raises(ValueError):
        rough_integral(compose_smooth(SIN, 1.0, rp))


@given(st.integers(0, 1000), st.integers(1, 1023))
def test_integral_additivity(seed, u):
    rp = fbm_rough_path(0.4, 2, 1024, seed=seed)
    m = compose_smooth(SIN, 1.0, rp)
    whole = rough_integral(m)
    left = rough_integral(m, s_index=0, t_index=u)
    right = rough_integral(m, s_index=u, t_index=1024)
    # on the finest level the compensated sums are exactly additive
    assert abs(float(left) + float(right) - float(whole)) <= 2 * whole.error + 1e-12


def test_integral_error_estimate_reasonable(fbm2):
    m = compose_smooth(SIN, 1.0, fbm2)
    coarse = rough_integral(m, depth=7)
    fine = rough_integral(m)
    assert abs(float(coarse) - float(fine)) <= 4 * coarse.error


def test_integral_defect_sign(fbm2):
    m = compose_smooth(SIN, 1.0, fbm2)
    idx = probe_indices(fbm2.n, 16)
    assert integral_defect(m, idx) < 1e-12


def test_ito_linear_and_quadratic():
    rp = fbm_rough_path(0.4, 2, 1024, seed=6)
    lin = SmoothMap.scalar(lambda x: x @ np.array([1.0, -2.0]),
                           lambda x: np.tile([1.0, -2.0], (len(x), 1)),
                           lambda x: np.zeros((len(x), 2, 2)))
    for depth in (6, 8, 10):
        assert ito_stratonovich_residual(lin, rp, depth)[1] < 1e-12
    rp1 = fbm_rough_path(0.4, 1, 1024, seed=6)
    quadratic = SmoothMap.scalar(lambda x: 0.5 * x[:, 0] ** 2, lambda x: x, lambda x: np.ones((len(x), 1, 1)))
    for depth in (6, 8, 10):
        assert ito_stratonovich_residual(quadratic, rp1, depth)[1] < 1e-12


def test_ito_sin_decreases():
    rp = fbm_rough_path(0.4, 2, 4096, seed=8)
    g = SmoothMap.scalar(lambda x: np.sin(x).sum(axis=1), np.cos,
                         lambda x: np.einsum("nd,de->nde", -np.sin(x), np.eye(2)))
    sups = [ito_stratonovich_residual(g, rp, k)[1] for k in (6, 8, 10, 12)]
    assert all(b < a for a, b in zip(sups, sups[1:]))


def test_ito_depth_guard():
    rp = fbm_rough_path(0.4, 1, 64, seed=0)
    g = SmoothMap.scalar(lambda x: x[:, 0], lambda x: np.ones_like(x), lambda x: np.zeros((len(x), 1, 1)))
    with pytest.raises(ValueError):
        ito_stratonovich_residual(g, rp, 8)
