"""Principal eigenvalues of the periodic Laplacian with an indefinite weight.

``mu1(m, lam)`` is the smallest eigenvalue of ``-Lap - lam*m``. It is concave in
``lam``, vanishes at ``lam = 0`` and, when ``int m < 0 < max m``, has exactly one
positive root: the weighted eigenvalue ``lambda1(m)``. That root is located by a
bracketed Newton iteration whose derivative comes for free from the
eigenfunction (``d mu1 / d lam = -<m u, u> / <u, u>``).
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, lobpcg

from .errors import BracketFailure, NonConvergence, NotIntermediateHabitat
from .grid import dirichlet_energy, integrate, laplacian_matrix, laplacian_symbol

# the second principal eigenvalue of the weighted problem (constant eigenfunction)
LAMBDA_MINUS_1 = 0.0


class HabitatClass(enum.Enum):
    HOSTILE_EVERYWHERE = "HostileEverywhere"
    FAVORABLE_ON_AVERAGE = "FavorableOnAverage"
    INTERMEDIATE = "Intermediate"


@dataclass
class EigenPair:
    value: float
    function: np.ndarray
    residual: float = 0.0
    iterations: int = 0


@dataclass
class WeightedEigenResult:
    lambda1: float
    eigenfunction: EigenPair
    weight: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def u(self):
        """Eigenfunction with unit L2 norm over the cell."""
        return self.eigenfunction.function

    def weighted_function(self, grid):
        """Eigenfunction rescaled so that int m u^2 = 1."""
        u = self.u
        return u / np.sqrt(integrate(grid, self.weight * u * u))


def classify(grid, m):
    m = np.asarray(m, dtype=float)
    if m.max() <= 0:
        return HabitatClass.HOSTILE_EVERYWHERE
    if integrate(grid, m) >= 0:
        return HabitatClass.FAVORABLE_ON_AVERAGE
    return HabitatClass.INTERMEDIATE


def rayleigh(grid, u, m):
    """Numerator and denominator of the weighted Rayleigh quotient."""
    return dirichlet_energy(grid, u), integrate(grid, m * u * u)


@lru_cache(maxsize=16)
def _neg_laplacian(grid, boundary):
    return (-laplacian_matrix(grid, boundary)).tocsr()


@lru_cache(maxsize=16)
def _symbol(grid, boundary):
    return laplacian_symbol(grid, boundary)


def _shifted_inverse(grid, boundary, tau):
    """Callable applying (-Lap + tau)^{-1} through the FFT (periodic) or DST (box)."""
    denom = _symbol(grid, boundary) + tau
    shape = grid.shape

    def solve(v):
        v = v.reshape(shape)
        if boundary == "periodic":
            return scipy.fft.ifftn(scipy.fft.fftn(v) / denom).real.ravel()
        return scipy.fft.idstn(scipy.fft.dstn(v, type=1) / denom, type=1).ravel()

    return solve


def operator_scale(grid, m, lam):
    """Rough spectral radius of -Lap - lam*m, used to make residuals relative."""
    return sum(4.0 / h**2 for h in grid.spacing) + abs(lam) * float(np.max(np.abs(m)))


def _normalize_positive(grid, v):
    v = np.asarray(v, dtype=float).reshape(grid.shape)
    if v.sum() < 0:
        v = -v
    return v / np.sqrt(integrate(grid, v * v))


def mu1(grid, m, lam, tol=1e-10, guess=None, maxiter=400, boundary="periodic"):
    """Smallest eigenvalue and positive eigenfunction of ``-Lap - lam*m``.

    Uses LOBPCG preconditioned by the exactly invertible shifted Laplacian.
    ``tol`` bounds ``||A u - mu u|| / (scale(A) ||u||)``.
    """
    m = np.asarray(m, dtype=float)
    if boundary == "periodic" and (lam == 0.0 or np.ptp(m) == 0.0):
        # constants are eigenfunctions
        u = np.full(grid.shape, 1.0 / np.sqrt(grid.volume))
        return EigenPair(-lam * float(m.flat[0]) if lam != 0.0 else 0.0, u, 0.0, 0)

    K = _neg_laplacian(grid, boundary)
    A = (K - sp.diags(lam * m.ravel())).tocsr()
    scale = operator_scale(grid, m, lam)
    tau = max(lam * float(np.max(np.abs(m))), 1.0 / min(grid.lengths) ** 2)
    inv = _shifted_inverse(grid, boundary, tau)

    def precond(R):
        R = np.asarray(R)
        if R.ndim == 1:
            return inv(R)
        return np.column_stack([inv(R[:, j]) for j in range(R.shape[1])])

    P = LinearOperator(A.shape, matvec=precond, matmat=precond, dtype=float)
    if guess is None:
        x0 = 1.0 + np.maximum(lam * m.ravel(), 0.0) / max(tau, 1e-300)
    else:
        x0 = np.abs(np.asarray(guess, dtype=float).ravel()) + 1e-12
    X = x0.reshape(-1, 1) / np.linalg.norm(x0)

    total_iter = 0
    res = np.inf
    rng = np.random.default_rng(0)
    # single-vector LOBPCG can stagnate; each restart widens the block by one vector
    for extra in range(3):
        if extra:
            X = np.column_stack([X[:, 0], rng.standard_normal((X.shape[0], extra))])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            vals, vecs, hist = lobpcg(A, X, M=P, tol=0.1 * tol * scale, maxiter=maxiter,
                                      largest=False, retResidualNormsHistory=True)
        total_iter += len(hist)
        v = vecs[:, 0]
        mu = float(v @ (A @ v) / (v @ v))
        res = float(np.linalg.norm(A @ v - mu * v) / (np.linalg.norm(v) * scale))
        if res <= tol:
            break
        X = v.reshape(-1, 1) / np.linalg.norm(v)
    else:
        raise NonConvergence(total_iter, res)
    return EigenPair(mu, _normalize_positive(grid, v), res, total_iter)


def _derivative(grid, m, u):
    # Hellmann-Feynman: d mu1 / d lam = -<m u, u>/<u, u>
    return -integrate(grid, m * u * u) / integrate(grid, u * u)


def lambda1(grid, m, tol=1e-10, rel_tol=1e-10, guess=None, u_guess=None,
            lam_max=1e6, max_evals=200, boundary="periodic"):
    """Positive principal eigenvalue of ``-Lap u = lambda m u``.

    On the periodic cell this requires an intermediate habitat. With
    ``boundary="dirichlet"`` the grid is treated as a box with zero boundary
    values and only ``max m > 0`` is needed.
    """
    m = np.asarray(m, dtype=float)
    if boundary == "periodic":
        cls = classify(grid, m)
        if cls is not HabitatClass.INTERMEDIATE:
            raise NotIntermediateHabitat(f"lambda1 needs int m < 0 < max m, habitat is {cls.value}")
    elif m.max() <= 0:
        raise NotIntermediateHabitat("lambda1 needs max m > 0")

    history = []
    evals = 0
    u = u_guess

    def evaluate(lam):
        nonlocal evals, u
        evals += 1
        if evals > max_evals:
            raise NonConvergence(evals, float("nan"), "lambda1: evaluation cap reached")
        pair = mu1(grid, m, lam, tol=tol, guess=u, boundary=boundary)
        u = pair.function
        history.append((lam, pair.value))
        return pair, _derivative(grid, m, pair.function)

    lo, mu_lo = 0.0, 0.0
    lam = float(guess) if guess else 1.0 / min(grid.lengths) ** 2
    pair, slope = evaluate(lam)
    # grow geometrically until mu1 < 0, taking Newton leaps once mu1 is decreasing
    while pair.value >= 0.0:
        lo, mu_lo = lam, pair.value
        lam = lam - pair.value / slope if slope < 0.0 else 4.0 * lam
        if lam > lam_max:
            raise BracketFailure(f"no sign change of mu1 below lambda = {lam_max:g}")
        pair, slope = evaluate(lam)
    hi, hi_pair, hi_slope = lam, pair, slope

    # Newton from the negative side descends monotonically onto the root (concavity);
    # a positive value can only come from round-off, then fall back to a secant step
    newton = True
    while hi - lo > rel_tol * hi:
        step = -hi_pair.value / hi_slope
        if newton and abs(step) <= rel_tol * hi:
            break
        if newton:
            cand = hi + step
        else:
            cand = hi - hi_pair.value * (hi - lo) / (hi_pair.value - mu_lo)
        if not lo < cand < hi:
            cand = 0.5 * (lo + hi)
        pair, slope = evaluate(cand)
        if pair.value < 0.0:
            hi, hi_pair, hi_slope = cand, pair, slope
            newton = True
        else:
            lo, mu_lo = cand, pair.value
            newton = False

    # final Newton correction; the eigenfunction belongs to the last negative-side point
    lam1 = min(max(hi - hi_pair.value / hi_slope, lo), hi)
    diagnostics = {
        "evaluations": evals,
        "bracket": [lo, hi],
        "mu_at_hi": hi_pair.value,
        "residual": hi_pair.residual,
        "history": [[float(a), float(b)] for a, b in history],
    }
    return WeightedEigenResult(float(lam1), hi_pair, m, diagnostics)


def survival_threshold(grid, m, **kwargs):
    """Diffusion rate d* = 1/lambda1(m) separating persistence from extinction."""
    return 1.0 / lambda1(grid, m, **kwargs).lambda1
