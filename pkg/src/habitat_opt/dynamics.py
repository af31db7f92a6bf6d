"""Logistic reaction-diffusion u_t = d Lap u + m u - u^2 on the periodic cell.

Diffusion is treated implicitly and the reaction explicitly, so each step solves
``(I - dt d Lap) u+ = u + dt (m u - u^2)``. The system matrix is SPD; it is
solved by conjugate gradients preconditioned with its exact Fourier inverse.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .cg import conjugate_gradient
from .grid import integrate, laplacian_apply, laplacian_symbol

log = logging.getLogger(__name__)


class Verdict(enum.Enum):
    EXTINCTION = "Extinction"
    PERSISTENCE = "Persistence"
    UNDECIDED = "Undecided"


@dataclass
class TrajectorySummary:
    times: list = field(default_factory=list)
    sup_norm: list = field(default_factory=list)
    l2_norm: list = field(default_factory=list)
    final_state: np.ndarray | None = None
    verdict: Verdict = Verdict.UNDECIDED

    def rows(self):
        return list(zip(self.times, self.sup_norm, self.l2_norm))


def check_time_step(dt, m):
    """Explicit reaction bound dt * max(m) <= 1, which keeps the update nonnegative."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    top = float(np.max(m))
    if dt * top > 1.0:
        raise ValueError(f"dt * max(m) = {dt * top:g} exceeds 1; reduce dt to at most {1.0 / top:g}")


def step(grid, u, dt, d, m, tol=1e-12):
    """One semi-implicit step; negative round-off is clamped to zero."""
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        return np.zeros_like(u)
    rhs = u + dt * (m * u - u * u)
    denom = 1.0 + dt * d * laplacian_symbol(grid, "periodic")

    def apply_A(v):
        return v - dt * d * laplacian_apply(grid, v)

    def precond(v):
        return scipy.fft.ifftn(scipy.fft.fftn(v) / denom).real

    x, _ = conjugate_gradient(apply_A, rhs, x0=u, tol=tol, precond=precond)
    return np.maximum(x, 0.0)


def steady_state_residual(grid, p, d, m):
    """max |d Lap p + m p - p^2| for a candidate steady state."""
    return float(np.max(np.abs(d * laplacian_apply(grid, p) + m * p - p * p)))


def _sup_trend(ts, frac=0.2):
    """Recorded sup norms over the last ``frac`` of the elapsed time."""
    t = np.asarray(ts.times)
    s = np.asarray(ts.sup_norm)
    return s[t >= t[-1] - frac * (t[-1] - t[0])]


def verdict(ts, extinction_ratio=1e-6, rate_tol=1e-8, level=1e-3):
    """Classify a finished trajectory.

    Extinction: the final sup norm is below ``extinction_ratio`` times the initial
    one and decreased monotonically over the last 20% of the time. Persistence:
    the sup norm sits above ``level`` and its relative change per unit time
    between the last two records is below ``rate_tol``.
    """
    s = ts.sup_norm
    if not s or s[0] == 0.0 or s[-1] == 0.0:
        return Verdict.EXTINCTION
    if s[-1] < extinction_ratio * s[0] and np.all(np.diff(_sup_trend(ts)) <= 0.0):
        return Verdict.EXTINCTION
    if len(s) >= 2 and s[-1] > level:
        rate = abs(s[-1] - s[-2]) / (s[-1] * (ts.times[-1] - ts.times[-2]))
        if rate < rate_tol:
            return Verdict.PERSISTENCE
    return Verdict.UNDECIDED


def simulate(grid, g, d, m, T, dt, record_every=10, stop_when_decided=True):
    """Integrate from ``g`` up to time ``T``, recording sup and L2 norms.

    With ``stop_when_decided`` the run ends at the first record where the
    verdict is no longer Undecided.
    """
    g = np.asarray(g, dtype=float)
    m = np.asarray(m, dtype=float)
    if np.any(g < 0) or not np.any(g):
        raise ValueError("initial state must be nonnegative and not identically zero")
    if not d > 0:
        raise ValueError(f"diffusion rate must be positive, got {d}")
    check_time_step(dt, m)

    ts = TrajectorySummary()

    def record(t, u):
        ts.times.append(float(t))
        ts.sup_norm.append(float(u.max()))
        ts.l2_norm.append(float(np.sqrt(integrate(grid, u * u))))

    u = g.copy()
    record(0.0, u)
    n_steps = int(np.ceil(T / dt - 1e-12))
    for k in range(1, n_steps + 1):
        u = step(grid, u, dt, d, m)
        if k % record_every == 0 or k == n_steps:
            record(k * dt, u)
            if stop_when_decided and verdict(ts) is not Verdict.UNDECIDED:
                break
    ts.final_state = u
    ts.verdict = verdict(ts)
    log.debug("simulate d=%g: %s at t=%g", d, ts.verdict.value, ts.times[-1])
    return ts
