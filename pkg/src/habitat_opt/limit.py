"""Radial limit problem on R^N: the unit-volume ball, Lambda0 and its eigenfunction.

With ``k = sqrt(Lambda)`` inside the ball and ``kappa = sqrt(Lambda*beta)``
outside, the eigenfunction is

======  =====================  =============================
N       inside (r < r0)        outside (r > r0)
======  =====================  =============================
1       cos(k r)               exp(-kappa r)
2       J0(k r)                K0(kappa r)
3       sin(k r)/(k r)         exp(-kappa r)/r
======  =====================  =============================

and Lambda0 is the smallest Lambda for which the logarithmic derivatives of the
two branches agree at r0.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import BallDoesNotFit, RootNotBracketed
from .grid import dirichlet_energy, integrate


def unit_ball_radius(N):
    """Radius r0 of the ball of volume one."""
    return (math.gamma(N / 2 + 1) / math.pi ** (N / 2)) ** (1.0 / N)


def sphere_area(N):
    """Surface measure of S^{N-1} (2 for N = 1)."""
    return 2.0 * math.pi ** (N / 2) / math.gamma(N / 2)


def _inside_pole(N, r0):
    """First k at which the inside branch vanishes at r0."""
    return {1: math.pi / 2, 2: special.jn_zeros(0, 1)[0], 3: math.pi}[N] / r0


def _matching(N, beta, r0, k):
    """Matching condition scaled to stay finite on (0, pole)."""
    kappa = k * math.sqrt(beta)
    x, y = k * r0, kappa * r0
    sb = math.sqrt(beta)
    if N == 1:
        # tan(k r0) = sqrt(beta)
        return math.sin(x) - sb * math.cos(x)
    if N == 2:
        # k J1/J0 = kappa K1/K0, multiplied through by J0 K0 / k; exponential scaling of K
        return special.j1(x) * special.k0e(y) - sb * special.k1e(y) * special.j0(x)
    # k cot(k r0) = -kappa
    return -(math.cos(x) + sb * math.sin(x))


def matching_residual(N, beta, Lambda):
    """Mismatch of logarithmic derivatives at r0, relative to sqrt(Lambda)."""
    r0 = unit_ball_radius(N)
    k = math.sqrt(Lambda)
    kappa = k * math.sqrt(beta)
    x, y = k * r0, kappa * r0
    if N == 1:
        inside, outside = -k * math.tan(x), -kappa
    elif N == 2:
        inside = -k * special.j1(x) / special.j0(x)
        outside = -kappa * special.k1e(y) / special.k0e(y)
    else:
        inside, outside = k / math.tan(x) - 1 / r0, -kappa - 1 / r0
    return abs(inside - outside) / k


def limit_eigenvalue(N, beta, max_bisections=200):
    """Lambda0 = lambda(B, R^N) for the unit-volume ball, by bisection in sqrt(Lambda)."""
    if N not in (1, 2, 3):
        raise ValueError(f"N must be 1, 2 or 3, got {N}")
    if not (np.isfinite(beta) and beta > 0):
        raise RootNotBracketed(f"beta must be positive and finite, got {beta}")
    r0 = unit_ball_radius(N)
    pole = _inside_pole(N, r0)
    lo, hi = pole * 1e-12, pole
    f_lo = _matching(N, beta, r0, lo)
    f_hi = _matching(N, beta, r0, hi)
    if not (np.isfinite(f_lo) and np.isfinite(f_hi)) or f_lo * f_hi >= 0:
        raise RootNotBracketed(f"matching condition does not change sign for beta={beta}")
    for _ in range(max_bisections):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        f_mid = _matching(N, beta, r0, mid)
        if f_mid == 0.0:
            lo = hi = mid
            break
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    k = 0.5 * (lo + hi)
    if not 0 < k * r0 < pole * r0:
        raise ArithmeticError("limit eigenvalue root left the first branch")
    return k * k


def decay_rate(Lambda0, beta):
    """Exponential decay rate sqrt(Lambda0 * beta) of the limit eigenfunction."""
    if beta <= 0:
        warnings.warn("beta -> 0: the limit eigenfunction does not decay", RuntimeWarning, stacklevel=2)
        return 0.0
    return math.sqrt(Lambda0 * beta)


@dataclass
class LimitProfile:
    dims: int
    beta: float
    Lambda0: float
    r0: float
    amplitude: float          # inside coefficient after normalization
    radial_samples: np.ndarray  # columns r, w(r), w'(r)

    @property
    def decay_rate(self):
        return decay_rate(self.Lambda0, self.beta)

    @property
    def k(self):
        return math.sqrt(self.Lambda0)

    def _parts(self, r):
        N, k, kappa, r0 = self.dims, self.k, self.decay_rate, self.r0
        r = np.asarray(r, dtype=float)
        rin = np.minimum(r, r0)
        rout = np.maximum(r, r0)
        if N == 1:
            win, dwin = np.cos(k * rin), -k * np.sin(k * rin)
            scale = math.cos(k * r0)
            wout = scale * np.exp(-kappa * (rout - r0))
            dwout = -kappa * wout
        elif N == 2:
            win, dwin = special.j0(k * rin), -k * special.j1(k * rin)
            scale = special.j0(k * r0) / special.k0e(kappa * r0)
            e = np.exp(-kappa * (rout - r0))
            wout = scale * special.k0e(kappa * rout) * e
            dwout = -kappa * scale * special.k1e(kappa * rout) * e
        else:
            x = k * rin
            win = np.sinc(x / np.pi)
            with np.errstate(invalid="ignore", divide="ignore"):
                dwin = np.where(x > 1e-8, (x * np.cos(x) - np.sin(x)) / (x * rin), -k * x / 3.0)
            scale = math.sin(k * r0) / (k * r0) * r0
            wout = scale * np.exp(-kappa * (rout - r0)) / rout
            dwout = -wout * (kappa + 1.0 / rout)
        return r < r0, win, dwin, wout, dwout

    def w(self, r):
        inside, win, _, wout, _ = self._parts(r)
        return self.amplitude * np.where(inside, win, wout)

    def dw(self, r):
        inside, _, dwin, _, dwout = self._parts(r)
        return self.amplitude * np.where(inside, dwin, dwout)

    def one_sided(self, r):
        """(w inside branch, w outside branch, w' inside, w' outside) at radius r."""
        _, win, dwin, wout, dwout = self._parts(r)
        a = self.amplitude
        return a * win, a * wout, a * dwin, a * dwout


def _simpson(f, a, b, n):
    n += n % 2
    x = np.linspace(a, b, n + 1)
    y = f(x)
    return (b - a) / (3 * n) * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def radial_integral(N, f, r0, r_max, n=4000):
    """Integral over R^N of a radial integrand f(r), split at r0 (composite Simpson)."""
    g = lambda r: f(r) * r ** (N - 1)
    return sphere_area(N) * (_simpson(g, 0.0, r0, n) + _simpson(g, r0, r_max, n))


def _tail_l2(profile, R):
    """Exact integral of w^2 over |x| > R (outside branch), unnormalized amplitude."""
    N, kappa, r0 = profile.dims, profile.decay_rate, profile.r0
    w_R = profile.w(R) / profile.amplitude
    if N == 1:
        return 2.0 * w_R**2 / (2 * kappa)
    if N == 2:
        X = kappa * R
        k0, k1 = special.k0(X), special.k1(X)
        c = w_R / k0
        return sphere_area(2) * c**2 * X**2 / (2 * kappa**2) * (k1**2 - k0**2)
    return sphere_area(3) * (w_R * R) ** 2 / (2 * kappa)


def limit_profile(N, beta, r_max=None, n_samples=2001):
    """Normalized radial eigenfunction of the limit problem sampled on [0, r_max]."""
    Lambda0 = limit_eigenvalue(N, beta)
    r0 = unit_ball_radius(N)
    kappa = decay_rate(Lambda0, beta)
    quad_max = r0 + 12.0 / kappa
    if r_max is None:
        r_max = quad_max
    prof = LimitProfile(N, float(beta), Lambda0, r0, 1.0, np.empty((0, 3)))
    norm2 = radial_integral(N, lambda r: prof.w(r) ** 2, r0, quad_max) + _tail_l2(prof, quad_max)
    prof.amplitude = 1.0 / math.sqrt(norm2)
    r = np.linspace(0.0, r_max, n_samples)
    prof.radial_samples = np.column_stack([r, prof.w(r), prof.dw(r)])
    return prof


def competitor_bound(delta, beta, grid, profile=None, volume_matched=True):
    """Rayleigh quotient of the rescaled limit eigenfunction against the rescaled ball.

    ``w_delta(x) = delta^{-1/2} w(delta^{-1/N} x)`` is sampled at the nodes. With
    ``volume_matched`` the ball is the set of the round(delta/cell) nodes closest
    to the origin, so the competitor satisfies the discrete volume constraint and
    bounds the discrete OD(delta) from above; otherwise it is the node-in-ball
    test for the radius delta^{1/N} r0, whose volume is off by lattice counting.
    """
    N = grid.dims
    if profile is None or profile.dims != N or profile.beta != beta:
        profile = limit_profile(N, beta)
    s = delta ** (1.0 / N)
    if s * profile.r0 >= min(grid.lengths) / 2:
        raise BallDoesNotFit(f"ball of volume {delta} does not fit in the cell {grid.lengths}")
    r = grid.radius()
    w = profile.w(r / s) / math.sqrt(delta)
    if volume_matched:
        k = int(round(delta / grid.cell_volume))
        order = np.argsort(r.ravel(), kind="stable")
        inside = np.zeros(grid.size, dtype=bool)
        inside[order[:k]] = True
        inside = inside.reshape(grid.shape)
    else:
        inside = r < s * profile.r0
    m = np.where(inside, 1.0, -beta)
    return dirichlet_energy(grid, w) / integrate(grid, m * w * w)
