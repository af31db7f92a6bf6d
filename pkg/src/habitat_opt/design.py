"""Optimal favorable set of prescribed volume by superlevel-set rearrangement.

Each sweep solves the weighted eigenproblem for the current set and replaces
the set by the superlevel set of its eigenfunction with the same volume. By
the bathtub principle the new set raises ``int m u^2`` for the old
eigenfunction, so the principal eigenvalue cannot increase.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .eigen import lambda1
from .errors import (DegenerateLevelSet, InadmissibleVolume, MaxIterationsExceeded,
                     StallWithoutConvergence)
from .grid import (IndicatorSet, PeriodicGrid, dirichlet_energy, integrate, recenter,
                   steiner_symmetrize, symmetrize, translate)

log = logging.getLogger(__name__)


@dataclass
class OptimalDesign:
    delta: float
    beta: float
    grid: PeriodicGrid
    D: IndicatorSet
    u: np.ndarray
    t: float
    lam: float
    iterations: int
    history: list = field(default_factory=list)
    converged: bool = True
    reason: str = ""

    @property
    def delta_actual(self):
        return self.D.volume

    @property
    def weight(self):
        return bang_bang(self.D, self.beta)

    def summary(self):
        return {
            "delta": self.delta,
            "delta_actual": self.delta_actual,
            "beta": self.beta,
            "OD": self.lam,
            "survival_threshold": 1.0 / self.lam,
            "t": self.t,
            "iterations": self.iterations,
            "converged": self.converged,
            "reason": self.reason,
            "history": [[int(i), float(v)] for i, v in self.history],
            "grid": self.grid.header(),
        }


def max_volume(beta, grid):
    """Upper bound beta/(1+beta)|C| on admissible volumes."""
    return beta / (1.0 + beta) * grid.volume


def check_volume(delta, beta, grid):
    if not 0.0 < delta < max_volume(beta, grid):
        raise InadmissibleVolume(
            f"delta must satisfy 0 < delta < beta/(1+beta)|C| = {max_volume(beta, grid):g}, got {delta:g}")
    if delta < grid.cell_volume:
        raise InadmissibleVolume(f"delta={delta:g} is below one grid cell ({grid.cell_volume:g})")


def bang_bang(D, beta):
    return np.where(D.mask, 1.0, -float(beta))


def averaged_weight(fraction, beta):
    """Control-volume average of 1_D - beta 1_{C\\D} given the covered fraction per node."""
    fraction = np.asarray(fraction, dtype=float)
    return fraction - float(beta) * (1.0 - fraction)


def superlevel_set(grid, u, delta):
    """The round(delta/cell) largest nodes of ``u``; ties go to the smaller flat index.

    Returns the set and the value of the last selected node.
    """
    u = np.asarray(u, dtype=float)
    k = int(np.clip(round(delta / grid.cell_volume), 1, grid.size - 1))
    flat = u.ravel()
    order = np.argsort(-flat, kind="stable")
    t = float(flat[order[k - 1]])
    if np.count_nonzero(flat == t) > grid.size / 2:
        raise DegenerateLevelSet(f"more than half of the nodes sit at the threshold {t:g}")
    mask = np.zeros(grid.size, dtype=bool)
    mask[order[:k]] = True
    return IndicatorSet(grid, mask.reshape(grid.shape)), t


def symmetric_superlevel_set(grid, u, delta):
    """Superlevel set {u >= t} cutting only between distinct values of ``u``.

    For a reflection-even ``u`` the result is reflection-even; its node count is
    the attainable one closest to delta/cell (ties to the smaller set).
    """
    flat = np.asarray(u, dtype=float).ravel()
    target = delta / grid.cell_volume
    values, counts = np.unique(-flat, return_counts=True)
    cum = np.cumsum(counts)
    if counts.max() > grid.size / 2:
        raise DegenerateLevelSet("more than half of the nodes share one value")
    j = int(np.argmin(np.abs(cum - target)))
    if cum[j] >= grid.size:
        j -= 1
    t = -float(values[j])
    return IndicatorSet(grid, np.asarray(u) >= t), t


def centered_ball(grid, delta, symmetric=True):
    """Discrete ball of volume delta around the origin."""
    score = -grid.radius() ** 2
    if symmetric:
        return symmetric_superlevel_set(grid, score, delta)[0]
    return superlevel_set(grid, score, delta)[0]


def random_set(grid, delta, seed=None):
    rng = np.random.default_rng(seed)
    k = int(round(delta / grid.cell_volume))
    mask = np.zeros(grid.size, dtype=bool)
    mask[rng.choice(grid.size, size=k, replace=False)] = True
    return IndicatorSet(grid, mask.reshape(grid.shape))


def level_threshold(D, u):
    """Midpoint between the smallest value inside D and the largest outside."""
    return 0.5 * (float(u[D.mask].min()) + float(u[~D.mask].max()))


def fixed_point_defect(grid, D, u, tie_tol=1e-8):
    """Nodes where D differs from the equal-count superlevel set of u, ties excluded.

    A node counts as tied when its value is within ``tie_tol * max|u|`` of the
    selection threshold.
    """
    S, t = superlevel_set(grid, u, D.count * grid.cell_volume)
    differ = S.mask ^ D.mask
    tied = np.abs(u - t) <= tie_tol * np.max(np.abs(u))
    return int(np.count_nonzero(differ & ~tied))


def quarter_cell_quotient(grid, u, m):
    """Rayleigh quotient restricted to the positive orthant of the cell.

    Trapezoid weights (1/2 on the faces x_i = 0 and x_i = L_i/2) make it equal the
    full-cell quotient for reflection-even fields: the Neumann problem on the
    orthant with volume delta/2^N.
    """
    # offsets 0..n/2 along every axis; offset n/2 wraps to index 0
    idx = [(n // 2 + np.arange(n // 2 + 1)) % n for n in grid.points]
    q_u = np.asarray(u, dtype=float)[np.ix_(*idx)]
    q_m = np.asarray(m, dtype=float)[np.ix_(*idx)]

    def face_weights(shape, skip=None):
        w = np.ones(shape)
        for j in range(len(shape)):
            if j == skip:
                continue
            w1 = np.ones(shape[j])
            w1[[0, -1]] = 0.5
            w = w * w1.reshape([-1 if a == j else 1 for a in range(len(shape))])
        return w

    num = 0.0
    for i, h in enumerate(grid.spacing):
        d = np.diff(q_u, axis=i)
        num += np.sum(face_weights(d.shape, skip=i) * d * d) / h**2
    den = np.sum(face_weights(q_u.shape) * q_m * q_u * q_u)
    return float(num / den)


def optimize(grid, delta, beta, init=None, symmetrize_steps=True, rel_tol=1e-10,
             max_iter=100, eig_tol=1e-10, seed=None):
    """Minimize lambda1(1_D - beta 1_{C\\D}) over node sets D with |D| ~= delta.

    ``init`` is an :class:`IndicatorSet`, ``None`` (centred ball) or ``"random"``.
    With ``symmetrize_steps`` every candidate is recentred at the eigenfunction
    peak, built from the reflection-averaged eigenfunction and Steiner
    symmetrized; the final set is then exactly even in every coordinate.
    """
    check_volume(delta, beta, grid)
    if init is None:
        D = centered_ball(grid, delta, symmetric=symmetrize_steps)
    elif isinstance(init, str) and init == "random":
        D = random_set(grid, delta, seed)
    else:
        D = init

    res = lambda1(grid, bang_bang(D, beta), tol=eig_tol)
    lam, u = res.lambda1, res.u
    history = [(0, lam)]
    seen = {D.key()}
    reason = "max_iter"
    it = 0
    for it in range(1, max_iter + 1):
        if symmetrize_steps:
            u_c, shift = recenter(grid, u)
            cand = steiner_symmetrize(symmetric_superlevel_set(grid, symmetrize(u_c), delta)[0])
            D_shifted = IndicatorSet(grid, translate(D.mask, shift))
        else:
            shift = (0,) * grid.dims
            cand = superlevel_set(grid, u, delta)[0]
            D_shifted = D
        if cand == D_shifted:
            D, u = D_shifted, translate(u, shift)
            reason = "fixed_point"
            break
        if cand.key() in seen:
            raise StallWithoutConvergence(f"rearrangement revisited a set after {it} iterations",
                                          best=_finish(grid, delta, beta, D, u, lam, it, history,
                                                       False, "stall", symmetrize_steps))
        seen.add(cand.key())
        new = lambda1(grid, bang_bang(cand, beta), tol=eig_tol, guess=lam,
                      u_guess=translate(u, shift))
        log.debug("iteration %d: lambda %.12g -> %.12g", it, lam, new.lambda1)
        if new.lambda1 > lam + 1e-12 * abs(lam):
            reason = "no_descent"
            break
        change = lam - new.lambda1
        D, lam, u = cand, new.lambda1, new.u
        history.append((it, lam))
        if change < rel_tol * abs(lam):
            reason = "stationary"
            break
    else:
        raise MaxIterationsExceeded(f"no convergence in {max_iter} iterations",
                                    best=_finish(grid, delta, beta, D, u, lam, it, history,
                                                 False, reason, symmetrize_steps))
    return _finish(grid, delta, beta, D, u, lam, it, history, True, reason, symmetrize_steps)


def _finish(grid, delta, beta, D, u, lam, it, history, converged, reason, symmetric):
    if symmetric:
        u = symmetrize(u)
        u = u / np.sqrt(integrate(grid, u * u))
    return OptimalDesign(delta=delta, beta=beta, grid=grid, D=D, u=u, t=level_threshold(D, u),
                         lam=lam, iterations=it, history=history, converged=converged, reason=reason)


def design_quotient(design):
    """Full-cell Rayleigh quotient of the stored eigenfunction."""
    m = design.weight
    return dirichlet_energy(design.grid, design.u) / integrate(design.grid, m * design.u**2)
