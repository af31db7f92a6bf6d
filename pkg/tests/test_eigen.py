import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import eigh

from habitat_opt.acceptance import dense_lambda1, interval_errors, interval_oracle
from habitat_opt.cg import conjugate_gradient
from habitat_opt.design import bang_bang, centered_ball
from habitat_opt.eigen import (HabitatClass, classify, lambda1, mu1, rayleigh,
                               survival_threshold)
from habitat_opt.errors import CGFailure, NotIntermediateHabitat
from habitat_opt.grid import (IndicatorSet, build_grid, integrate, laplacian_apply,
                              laplacian_matrix, laplacian_symbol, translate)


def interval_weight(g, a=0.15, beta=1.0):
    return np.where(np.abs(g.axis(0)) < a, 1.0, -beta)


# ---------------------------------------------------------------- cg

def test_cg_solves_spd(rng):
    A = rng.standard_normal((40, 40))
    A = A @ A.T + 40 * np.eye(40)
    b = rng.standard_normal(40)
    x, it = conjugate_gradient(lambda v: A @ v, b, tol=1e-12)
    assert np.allclose(A @ x, b, atol=1e-9)
    assert it <= 40


def test_cg_with_fft_preconditioner(grid2d, rng):
    g = grid2d
    b = rng.standard_normal(g.shape)
    sym = 1.0 + laplacian_symbol(g)
    x, it = conjugate_gradient(lambda v: v - laplacian_apply(g, v), b, tol=1e-12,
                               precond=lambda v: np.fft.ifftn(np.fft.fftn(v) / sym).real)
    assert np.allclose(x - laplacian_apply(g, x), b, atol=1e-9)
    assert it <= 3


def test_cg_failures():
    with pytest.raises(CGFailure):
        conjugate_gradient(lambda v: -v, np.ones(5))
    A = np.diag(np.linspace(1, 1e6, 200))
    with pytest.raises(CGFailure):
        conjugate_gradient(lambda v: A @ v, np.ones(200), tol=1e-14, maxiter=3)


# ---------------------------------------------------------------- mu1

def test_mu1_trivial_cases(grid2d):
    g = grid2d
    m = bang_bang(centered_ball(g, 0.1), 1.0)
    p = mu1(g, m, 0.0)
    assert p.value == 0.0 and np.allclose(p.function, 1 / math.sqrt(g.volume))
    p = mu1(g, np.full(g.shape, 0.7), 3.0)
    assert p.value == pytest.approx(-2.1) and np.ptp(p.function) == 0


def test_mu1_dense_oracle(grid1d):
    g = grid1d
    m = interval_weight(g)
    dense = eigh(-laplacian_matrix(g).toarray() - 20 * np.diag(m), eigvals_only=True,
                 subset_by_index=[0, 0])[0]
    p = mu1(g, m, 20.0)
    assert abs(p.value - dense) <= 1e-8 * abs(dense)
    assert p.function.min() > 0
    assert integrate(g, p.function**2) == pytest.approx(1.0, rel=1e-12)


def test_mu1_concave(grid1d, rng):
    g = grid1d
    m = interval_weight(g)
    for _ in range(20):
        a, b = np.sort(rng.uniform(0, 60, 2))
        fa, fb, fm = (mu1(g, m, x).value for x in (a, b, 0.5 * (a + b)))
        assert fm >= 0.5 * (fa + fb) - 1e-9 * max(1.0, abs(fm))


def test_mu1_positive_near_zero(grid2d):
    m = bang_bang(centered_ball(grid2d, 0.1), 1.0)
    assert mu1(grid2d, m, 1e-3).value > 0


# ---------------------------------------------------------------- lambda1

def test_classify():
    g = build_grid(1, (1.0,), (16,))
    assert classify(g, -np.ones(g.shape)) is HabitatClass.HOSTILE_EVERYWHERE
    assert classify(g, np.ones(g.shape)) is HabitatClass.FAVORABLE_ON_AVERAGE
    assert classify(g, interval_weight(g)) is HabitatClass.INTERMEDIATE


def test_lambda1_requires_intermediate(grid2d):
    with pytest.raises(NotIntermediateHabitat):
        lambda1(grid2d, np.ones(grid2d.shape))
    with pytest.raises(NotIntermediateHabitat):
        lambda1(grid2d, -np.ones(grid2d.shape))


def test_lambda1_interval_oracle():
    exact, err = interval_errors(points=(256, 512, 1024))
    assert exact == pytest.approx(25.40494911545656, rel=1e-12)
    assert abs(err[-1]) < 1e-2
    assert np.all(np.diff(np.abs(err)) < 0)


def test_lambda1_node_sampled_interval():
    # the bang-bang node weight has an O(h) interface error with a sawtooth
    g = build_grid(1, (1.0,), (1024,))
    lam = lambda1(g, interval_weight(g)).lambda1
    assert abs(lam / interval_oracle(0.15, 1.0) - 1) < 1e-2


def test_lambda1_dense_oracle_2d(grid2d):
    m = bang_bang(centered_ball(grid2d, 0.12), 2.0)
    assert lambda1(grid2d, m).lambda1 == pytest.approx(dense_lambda1(grid2d, m), rel=1e-8)


def test_weighted_eigen_result(grid2d):
    g = grid2d
    m = bang_bang(centered_ball(g, 0.1), 1.0)
    res = lambda1(g, m)
    u = res.u
    assert u.min() > 0
    v = res.weighted_function(g)
    assert integrate(g, m * v * v) == pytest.approx(1.0, rel=1e-12)
    resid = -laplacian_apply(g, u) - res.lambda1 * m * u
    assert np.linalg.norm(resid) / np.linalg.norm(u) <= 1e-6 * res.lambda1
    num, den = rayleigh(g, u, m)
    assert num / den == pytest.approx(res.lambda1, rel=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.integers(-16, 16), st.integers(-16, 16))
def test_lambda1_translation_invariant(sx, sy):
    g = build_grid(2, (1.0, 1.0), (32, 32))
    m = bang_bang(centered_ball(g, 0.1), 1.0)
    a = lambda1(g, m).lambda1
    assert lambda1(g, translate(m, (sx, sy))).lambda1 == pytest.approx(a, rel=1e-10)


def test_lambda1_guess_scaling(grid2d):
    m = bang_bang(centered_ball(grid2d, 0.1), 1.0)
    u0 = np.exp(-grid2d.radius() ** 2)
    a = lambda1(grid2d, m, u_guess=u0).lambda1
    b = lambda1(grid2d, m, u_guess=2 * u0).lambda1
    assert a == pytest.approx(b, rel=1e-10)


def test_lambda1_monotone_in_weight(grid2d):
    g = grid2d
    small = centered_ball(g, 0.05)
    big = IndicatorSet(g, small.mask | (g.radius() < 0.2))
    assert lambda1(g, bang_bang(small, 1.0)).lambda1 >= lambda1(g, bang_bang(big, 1.0)).lambda1


def test_rayleigh_examples(grid2d):
    m = bang_bang(centered_ball(grid2d, 0.1), 1.0)
    num, den = rayleigh(grid2d, np.full(grid2d.shape, 2.0), m)
    assert num == 0.0 and den == pytest.approx(4 * integrate(grid2d, m))
    assert den < 0


def test_survival_threshold():
    g = build_grid(1, (1.0,), (512,))
    m = interval_weight(g)
    d = survival_threshold(g, m)
    assert d == pytest.approx(1 / lambda1(g, m).lambda1, rel=1e-15)
    assert d == pytest.approx(1 / interval_oracle(0.15, 1.0), rel=2e-2)
    assert survival_threshold(g, translate(m, (100,))) == pytest.approx(d, rel=1e-10)


def test_dirichlet_box_constant_weight():
    g = build_grid(2, (1.0, 1.0), (16, 16))
    lam = lambda1(g, np.ones(g.shape), boundary="dirichlet").lambda1
    assert lam == pytest.approx(float(np.min(laplacian_symbol(g, "dirichlet"))), rel=1e-9)
