import math

import mpmath
import numpy as np
import pytest
from scipy import integrate as quad_mod
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from habitat_opt.design import optimize
from habitat_opt.errors import BallDoesNotFit, RootNotBracketed
from habitat_opt.grid import build_grid
from habitat_opt.limit import (competitor_bound, decay_rate, limit_eigenvalue, limit_profile,
                               matching_residual, sphere_area, unit_ball_radius)


def closed_form_1d(beta):
    # r0 = 1/2 and tan(k/2) = sqrt(beta)
    return (2 * math.atan(math.sqrt(beta))) ** 2


def closed_form_3d(beta):
    # k cot(k r0) = -sqrt(beta) k
    return ((math.pi - math.atan(1 / math.sqrt(beta))) / unit_ball_radius(3)) ** 2


def bessel_root_2d(beta):
    r0, sb = unit_ball_radius(2), mpmath.sqrt(beta)
    f = lambda k: k * mpmath.besselj(1, k * r0) * mpmath.besselk(0, sb * k * r0) \
        - sb * k * mpmath.besselk(1, sb * k * r0) * mpmath.besselj(0, k * r0)
    return float(mpmath.findroot(f, 2.8) ** 2)


def radial_fv_2d(beta, n=4000):
    """Finite-volume radial solve of -(r w')'/r = Lambda m w on (0, 10 r0) with w(R) = 0."""
    r0 = unit_ball_radius(2)
    R = 10 * r0
    h = R / n
    rc = (np.arange(n) + 0.5) * h
    rf = np.arange(1, n + 1) * h
    diag = np.zeros(n)
    diag[:-1] += rf[:-1] / h**2
    diag[1:] += rf[:-1] / h**2
    diag[-1] += 2 * rf[-1] / h**2
    off = -rf[:-1] / h**2
    m = np.where(rc < r0, 1.0, -beta) * rc

    def smallest(lam):
        return eigh_tridiagonal(diag - lam * m, off, select="i", select_range=(0, 0), eigvals_only=True)[0]

    return brentq(smallest, 1.0, 20.0, xtol=1e-13)


def test_unit_ball_radius():
    assert unit_ball_radius(1) == pytest.approx(0.5)
    assert unit_ball_radius(2) == pytest.approx(math.pi**-0.5)
    for N in (1, 2, 3):
        assert sphere_area(N) * unit_ball_radius(N) ** N / N == pytest.approx(1.0)


def test_limit_1d_closed_form():
    assert abs(limit_eigenvalue(1, 1.0) - math.pi**2 / 4) <= 1e-10
    for beta in (0.1, 3.0, 1e4):
        assert limit_eigenvalue(1, beta) == pytest.approx(closed_form_1d(beta), rel=1e-12)


def test_limit_1d_dirichlet_limit():
    values = [limit_eigenvalue(1, b) for b in (1.0, 1e2, 1e4, 1e8)]
    assert np.all(np.diff(values) > 0) and values[-1] < math.pi**2
    assert values[-1] == pytest.approx(math.pi**2, rel=1e-3)


def test_limit_3d_closed_form():
    for beta in (0.5, 1.0, 10.0):
        assert limit_eigenvalue(3, beta) == pytest.approx(closed_form_3d(beta), rel=1e-12)


@pytest.mark.parametrize("beta", [0.5, 1.0, 4.0])
def test_limit_2d_bessel_oracle(beta):
    assert limit_eigenvalue(2, beta) == pytest.approx(bessel_root_2d(beta), rel=1e-12)


def test_limit_2d_radial_fv_oracle():
    assert limit_eigenvalue(2, 1.0) == pytest.approx(radial_fv_2d(1.0), rel=1e-3)


def test_limit_2d_stable_under_bisection_depth():
    assert limit_eigenvalue(2, 1.0, max_bisections=40) == pytest.approx(limit_eigenvalue(2, 1.0), rel=1e-6)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_matching_residual(N):
    assert matching_residual(N, 1.0, limit_eigenvalue(N, 1.0)) <= 1e-10


def test_limit_rejects_bad_beta():
    for beta in (0.0, -1.0, float("inf")):
        with pytest.raises(RootNotBracketed):
            limit_eigenvalue(2, beta)


def test_decay_rate():
    assert decay_rate(math.pi**2 / 4, 1.0) == pytest.approx(math.pi / 2)
    with pytest.warns(RuntimeWarning):
        assert decay_rate(2.0, 0.0) == 0.0


def _radial_quad(N, f, r0, R=np.inf):
    inner = quad_mod.quad(lambda r: f(r) * r ** (N - 1), 0, r0, epsabs=1e-14, epsrel=1e-13)[0]
    outer = quad_mod.quad(lambda r: f(r) * r ** (N - 1), r0, R, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    return sphere_area(N) * (inner + outer)


@pytest.mark.parametrize("N", [1, 2, 3])
def test_profile_properties(N):
    p = limit_profile(N, 1.0)
    r0 = p.r0
    assert float(p.dw(0.0)) == pytest.approx(0.0, abs=1e-12)
    w_in, w_out, dw_in, dw_out = p.one_sided(r0)
    assert abs(w_in - w_out) <= 1e-10 and abs(dw_in - dw_out) <= 1e-10
    r = p.radial_samples[:, 0]
    assert np.all(p.radial_samples[:, 1] > 0)
    assert np.all(np.diff(p.radial_samples[:, 1]) < 0)
    assert _radial_quad(N, lambda s: p.w(s) ** 2, r0) == pytest.approx(1.0, abs=1e-8)
    m_w2 = _radial_quad(N, lambda s: np.where(s < r0, 1.0, -1.0) * p.w(s) ** 2, r0)
    grad2 = _radial_quad(N, lambda s: p.dw(s) ** 2, r0)
    assert m_w2 == pytest.approx(grad2 / p.Lambda0, abs=1e-8)
    assert r[-1] > r0


@pytest.mark.parametrize("N", [1, 2, 3])
def test_profile_decay_slope(N):
    p = limit_profile(N, 1.0)
    r = np.linspace(3 * p.r0, 6 * p.r0, 200)
    y = np.log(p.w(r)) + 0.5 * (N - 1) * np.log(r)
    slope = np.polyfit(r, y, 1)[0]
    assert -slope == pytest.approx(p.decay_rate, rel=0.02)


def test_competitor_bound():
    g = build_grid(2, (1.0, 1.0), (64, 64))
    d = optimize(g, 0.1, 1.0)
    bound = competitor_bound(d.delta_actual, 1.0, g)
    assert bound >= d.lam
    with pytest.raises(BallDoesNotFit):
        competitor_bound(0.9, 1.0, g)
