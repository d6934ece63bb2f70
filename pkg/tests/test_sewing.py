from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roughpower.errors import MuTooSmall, NotClosed, NotInC2Pi
from roughpower.increments import Inc2Grid, Inc3Grid, TimeGrid, delta1, delta2, Inc1
from roughpower.sewing import (discrete_sewing_check, k_mu, sew, sewing_constant,
                               telescoped_remainder)


def smooth_pair(seed, grid):
    """A_st = f_s (x_t - x_s) for random trigonometric f, x."""
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=4), rng.normal(size=4)
    f = lambda s: sum(a[k] * np.sin((k + 1) * np.pi * s + b[k]) for k in range(4))
    x = lambda s: sum(b[k] * np.cos((k + 1) * np.pi * s + a[k]) for k in range(4))
    return Inc2Grid.from_function(grid, lambda s, t: f(s) * (x(t) - x(s)))


def test_sewing_constant_guard():
    assert sewing_constant(2.0) == 0.5
    with pytest.raises(MuTooSmall):
        sewing_constant(1.0)
    with pytest.raises(MuTooSmall):
        sew(Inc3Grid(TimeGrid.uniform(4), np.zeros((5, 5, 5))), 0.9)


def test_sew_zero():
    r = sew(Inc3Grid(TimeGrid.uniform(8), np.zeros((9, 9, 9))), 2.0)
    assert np.all(r.lambda_h.values == 0) and r.ratio == 0.0


def test_sew_inverts_delta():
    g = TimeGrid.uniform(32)
    A = smooth_pair(1, g)
    r = sew(delta2(A), 1.5)
    assert r.closure_residual < 1e-12
    # Lambda(delta A) is A minus its telescoped consecutive sums
    assert np.allclose(r.lambda_h.values, telescoped_remainder(A).values, atol=1e-13)


def test_sew_callable_matches_grid():
    h = lambda s, u, t: 2 * (u - s) * (t - u)
    coarse = TimeGrid.uniform(4)
    r = sew(h, 2.0, refinement_depth=6, grid=coarse)
    # Lambda of delta (t-s)^2 vanishing on finest pairs of width w is (t-s)^2 - (t-s) w
    w = 0.25 / 2 ** 6
    exact = Inc2Grid.from_function(coarse, lambda s, t: (t - s) ** 2 - (t - s) * w)
    assert np.allclose(r.lambda_h.values, exact.values, atol=1e-15)


def test_sew_rejects_open_increment():
    rng = np.random.default_rng(0)
    h = Inc3Grid(TimeGrid.uniform(8), rng.normal(size=(9, 9, 9)))
    with pytest.raises(NotClosed):
        sew(h, 2.0)


def test_sewing_bound_counterexample():
    # h = delta (t-s)^2 at mu = 2: the ratio approaches 2 > 1/(2^2 - 2)
    g = TimeGrid.uniform(16)
    r = sew(delta2(Inc2Grid.from_function(g, lambda s, t: (t - s) ** 2)), 2.0)
    assert r.ratio == pytest.approx(1.875)
    assert not r.bound_holds()
    assert r.ratio <= 2 ** 2 / (2 ** 2 - 2)


@pytest.mark.parametrize("mu", [1.05, 1.2, 2.0])
def test_sewing_bound_corrected_constant(mu):
    g = TimeGrid.uniform(32)
    corrected = 2 ** mu / (2 ** mu - 2)
    for seed in range(30):
        r = sew(delta2(smooth_pair(seed, g)), mu)
        assert r.ratio <= corrected


@given(st.integers(0, 10_000), st.sampled_from([1.05, 1.5, 2.0, 3.0]))
def test_sewing_corrected_constant_property(seed, mu):
    rng = np.random.default_rng(seed)
    g = TimeGrid.uniform(16)
    gap = np.maximum(g.points[None, :] - g.points[:, None], 0.0)
    A = Inc2Grid(g, rng.normal(size=(17, 17)) * gap ** mu)
    r = sew(delta2(A), mu)
    assert r.ratio <= 2 ** mu / (2 ** mu - 2) * (1 + 1e-12)


def test_sewing_json():
    import json

    r = sew(delta2(smooth_pair(0, TimeGrid.uniform(4))), 2.0)
    d = json.loads(r.to_json())
    assert d["mu"] == 2.0 and len(d["pairs"]) == 10


@pytest.mark.parametrize("mu", [1.05, 1.2, 1.5, 2.0, 3.0, 7.5])
def test_k_mu_matches_zeta_oracle(mu):
    assert k_mu(mu) == pytest.approx(float(2 ** mu * mpmath.zeta(mu)), rel=1e-10)


def test_k_mu_examples():
    assert k_mu(2.0) == pytest.approx(4 * math.pi ** 2 / 6, rel=1e-12)
    assert k_mu(3.0) == pytest.approx(9.61646, abs=1e-5)
    assert k_mu(40.0) / 2 ** 40 == pytest.approx(1.0, abs=1e-11)
    with pytest.raises(MuTooSmall):
        k_mu(1.0)


def test_discrete_sewing_trivial_and_guard():
    g = TimeGrid.uniform(8)
    assert discrete_sewing_check(Inc2Grid(g, np.zeros((9, 9))), 2.0) == (0.0, 0.0, True)
    bad = Inc2Grid(g, np.zeros((9, 9)))
    bad.values[2, 3] = 1.0
    with pytest.raises(NotInC2Pi):
        discrete_sewing_check(bad, 2.0)


@given(st.integers(0, 10_000), st.sampled_from([1.05, 1.2, 2.0]))
def test_discrete_sewing_lemma(seed, mu):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 20))
    t = np.concatenate([[0.0], np.sort(rng.uniform(0, 1, n - 1))])
    g = TimeGrid(t, 1.0)
    A = Inc2Grid(g, rng.normal(size=(n, n)))
    A.values[np.tril_indices(n)] = 0
    lhs, rhs, ok = discrete_sewing_check(telescoped_remainder(A), mu)
    assert ok, (lhs, rhs)


def test_discrete_sewing_on_rough_area():
    from roughpower.roughpath import fbm_rough_path

    rp = fbm_rough_path(0.4, 2, 64, seed=1)
    h = Inc2Grid(rp.grid, rp.area_grid().values[..., 0, 1])
    lhs, rhs, ok = discrete_sewing_check(telescoped_remainder(h), 3 * rp.gamma, atol=1e-14)
    assert ok and lhs > 0


def test_delta_of_telescoped_equals_delta():
    rng = np.random.default_rng(4)
    g = TimeGrid.uniform(10)
    A = Inc2Grid(g, rng.normal(size=(11, 11)))
    A.values[np.tril_indices(11)] = 0
    R = telescoped_remainder(A)
    assert np.allclose(delta2(R).values, delta2(A).values, atol=1e-13)
    assert np.all(R.consecutive() == 0)
    # increments of a path telescope to nothing
    x = Inc1(g, rng.normal(size=11))
    assert np.max(np.abs(telescoped_remainder(delta1(x)).values)) < 1e-14
