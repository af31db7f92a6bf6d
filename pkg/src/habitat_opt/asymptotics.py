"""Blow-up of optimal designs and comparison with the radial limit problem.

A design of volume delta is rescaled by delta^{-1/N} so the favorable set has
unit volume. On the rescaled grid the eigenvalue, the free boundary and the
decay of the eigenfunction can be compared against Lambda0, the ball B_{r0} and
the limit profile w.
"""

from __future__ import annotations

import concurrent.futures
import itertools
import logging
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage, stats
from scipy.spatial import ConvexHull

from .design import bang_bang, level_threshold, optimize
from .eigen import lambda1
from .errors import MultipleCrossings, NoCrossing, NormalizationDrift
from .grid import IndicatorSet, build_grid, integrate, recenter, translate
from .limit import competitor_bound, limit_profile, unit_ball_radius

log = logging.getLogger(__name__)


@dataclass
class BlowUp:
    delta: float
    beta: float
    lambda_tilde: float
    grid: object           # rescaled PeriodicGrid
    u: np.ndarray
    D: IndicatorSet
    t: float

    @property
    def dims(self):
        return self.grid.dims


@dataclass
class AsymmetryProfile:
    dims: int
    directions: np.ndarray   # unit vectors, one per row
    angles: np.ndarray       # polar angle (2D), empty otherwise
    radii: np.ndarray
    phi: np.ndarray
    r0: float
    spacing: float
    valid: bool = True


def blow_up(design, tol=1e-10):
    """Rescale a converged design to unit volume.

    The rescaling uses the realized volume |D| of the discrete set, so that
    |D~| = 1 and lambda~ = |D|^{2/N} OD hold exactly.
    """
    grid = design.grid
    N = grid.dims
    delta = design.delta_actual
    s = delta ** (1.0 / N)
    u, shift = recenter(grid, design.u)
    mask = translate(design.D.mask, shift)
    g = grid.scaled(1.0 / s)
    u_t = math.sqrt(delta) * u
    D_t = IndicatorSet(g, mask)
    norm_err = abs(integrate(g, u_t * u_t) - 1.0)
    vol_err = abs(D_t.volume - 1.0)
    if norm_err > 10 * tol or vol_err > 10 * g.cell_volume:
        raise NormalizationDrift(f"blow-up normalization off: |int u^2 - 1| = {norm_err:.2e}, "
                                 f"||D| - 1| = {vol_err:.2e}")
    return BlowUp(delta=delta, beta=design.beta, lambda_tilde=s * s * design.lam, grid=g,
                  u=u_t, D=D_t, t=level_threshold(D_t, u_t))


def rescaled_quotient(b):
    from .grid import dirichlet_energy
    m = bang_bang(b.D, b.beta)
    return dirichlet_energy(b.grid, b.u) / integrate(b.grid, m * b.u**2)


# ---------------------------------------------------------------- free boundary

def sphere_directions(dims, n_theta):
    """Sample directions closed under every coordinate reflection.

    2D: n_theta angles (rounded up to a multiple of 4) built from the first
    quadrant by sign flips. 3D: a Fibonacci set on the positive octant, reflected.
    """
    if dims == 1:
        return np.array([[1.0], [-1.0]]), np.array([0.0, math.pi])
    if dims == 2:
        q = max(1, -(-n_theta // 4))
        a = (np.arange(q) + 0.0) * (0.5 * math.pi / q)
        c, s = np.cos(a), np.sin(a)
        # quadrants in counter-clockwise order: (c, s), (-s, c), (-c, -s), (s, -c)
        dirs = np.concatenate([np.column_stack([c, s]), np.column_stack([-s, c]),
                               np.column_stack([-c, -s]), np.column_stack([s, -c])])
        angles = np.concatenate([a, a + 0.5 * math.pi, a + math.pi, a + 1.5 * math.pi])
        return dirs, angles
    q = max(1, n_theta // 8)
    i = np.arange(q) + 0.5
    z = i / q
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    rho = np.sqrt(1 - z**2)
    base = np.abs(np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z]))
    dirs = np.concatenate([base * np.array(sg) for sg in itertools.product((1.0, -1.0), repeat=3)])
    return dirs, np.empty(0)


def _interpolate(grid, f, points):
    """Periodic multilinear interpolation of a node field at physical points."""
    idx = [points[:, i] / grid.spacing[i] + grid.points[i] // 2 for i in range(grid.dims)]
    return ndimage.map_coordinates(f, idx, order=1, mode="grid-wrap")


def boundary_profile(b, n_theta=128, step=None, strict=True):
    """Radius of the level set {u~ = t~} along rays from the origin.

    Marches with step h/2 and refines each crossing linearly. Crossings closer
    than one step are merged; otherwise :class:`MultipleCrossings` is raised
    (or the profile is marked invalid when ``strict`` is false).
    """
    g = b.grid
    h = min(g.spacing)
    step = step or 0.5 * h
    r_max = 0.5 * min(g.lengths)
    dirs, angles = sphere_directions(g.dims, n_theta)
    r = np.arange(0.0, r_max, step)
    f = b.u - b.t
    radii = np.empty(len(dirs))
    valid = True
    for j, d in enumerate(dirs):
        vals = _interpolate(g, f, r[:, None] * d[None, :])
        sign = vals > 0
        cross = np.flatnonzero(sign[:-1] != sign[1:])
        if cross.size == 0:
            raise NoCrossing(f"no boundary crossing along direction {d}")
        if cross[-1] - cross[0] > 1:
            if strict:
                raise MultipleCrossings(f"{cross.size} crossings along direction {d}")
            valid = False
        k = cross[0]
        radii[j] = r[k] + step * vals[k] / (vals[k] - vals[k + 1])
    r0 = unit_ball_radius(g.dims)
    return AsymmetryProfile(g.dims, dirs, angles, radii, radii - r0, r0, h, valid)


def asymmetry_norms(p):
    """L2 (sphere measure), sup and discrete Lipschitz norms of phi."""
    phi = p.phi
    if p.dims == 1:
        l2 = math.sqrt(float(np.sum(phi**2)))
        lip = abs(phi[0] - phi[1]) / math.pi
    elif p.dims == 2:
        order = np.argsort(p.angles)
        a, ph = p.angles[order], phi[order]
        da = np.diff(np.append(a, a[0] + 2 * math.pi))
        l2 = math.sqrt(float(np.sum(ph**2 * da)))
        lip = float(np.max(np.abs(np.roll(ph, -1) - ph) / da))
    else:
        l2 = math.sqrt(4 * math.pi * float(np.mean(phi**2)))
        cosang = np.clip(p.directions @ p.directions.T, -1, 1)
        np.fill_diagonal(cosang, -2)
        nb = np.argmax(cosang, axis=1)
        ang = np.arccos(cosang[np.arange(len(phi)), nb])
        lip = float(np.max(np.abs(phi - phi[nb]) / ang))
    return {"L2": l2, "Linf": float(np.max(np.abs(phi))), "Lip": lip}


def evenness_defect(p):
    """Largest |phi(x) - phi(reflected x)| over coordinate reflections."""
    worst = 0.0
    for i in range(p.dims):
        refl = p.directions.copy()
        refl[:, i] *= -1
        match = np.argmin(((refl[:, None, :] - p.directions[None, :, :]) ** 2).sum(-1), axis=1)
        worst = max(worst, float(np.max(np.abs(p.phi - p.phi[match]))))
    return worst


@dataclass
class InclusionReport:
    margin: float
    passed: bool
    inner_radius: float      # smallest |x| of a node outside D~
    outer_radius: float      # largest |x| of a node inside D~
    minimal_margin: float


def inclusion_check(b, margin=0.1):
    """Check B_{(1-margin) r0} within D~ within B_{(1+margin) r0}, node-wise."""
    r = b.grid.radius()
    r0 = unit_ball_radius(b.dims)
    inner = float(r[~b.D.mask].min())
    outer = float(r[b.D.mask].max())
    minimal = max(1.0 - inner / r0, outer / r0 - 1.0)
    ok = inner >= (1 - margin) * r0 and outer <= (1 + margin) * r0
    return InclusionReport(margin, bool(ok), inner, outer, minimal)


def convexity_defect(p):
    """Largest distance from a boundary point of a 2D profile to its convex hull boundary.

    Zero for a convex polygon; a dent shows up as its depth below the hull.
    """
    if p.dims != 2:
        raise ValueError("convexity needs a planar profile; use plane_profile for 3D")
    pts = p.radii[:, None] * p.directions
    hull = ConvexHull(pts)
    # facet equations n.x + c <= 0 inside, |n| = 1
    dist = -(pts @ hull.equations[:, :2].T + hull.equations[:, 2])
    return float(np.max(dist.min(axis=1)))


def convexity_check(p, tol=None):
    """Convexity of the boundary polygon up to ``tol`` (default one grid spacing)."""
    if p.dims == 1:
        return True
    tol = p.spacing if tol is None else tol
    return convexity_defect(p) <= tol


def plane_profile(b, axes=(0, 1), n_theta=128):
    """Planar boundary profile of a 3D blow-up in the coordinate plane ``axes``."""
    g = b.grid
    dirs2, angles = sphere_directions(2, n_theta)
    dirs = np.zeros((len(dirs2), g.dims))
    dirs[:, axes[0]], dirs[:, axes[1]] = dirs2[:, 0], dirs2[:, 1]
    h = min(g.spacing)
    r = np.arange(0.0, 0.5 * min(g.lengths), 0.5 * h)
    f = b.u - b.t
    radii = np.empty(len(dirs))
    for j, d in enumerate(dirs):
        vals = _interpolate(g, f, r[:, None] * d[None, :])
        k = np.flatnonzero((vals[:-1] > 0) != (vals[1:] > 0))[0]
        radii[j] = r[k] + 0.5 * h * vals[k] / (vals[k] - vals[k + 1])
    r0 = unit_ball_radius(g.dims)
    return AsymmetryProfile(2, dirs2, angles, radii, radii - r0, r0, h)


# ---------------------------------------------------------------- decay

@dataclass
class DecayFit:
    C1: float
    C2: float
    residual: float
    bounds_all: bool
    envelope_C1: float
    grad_C1: float = float("nan")
    grad_C2: float = float("nan")


def _fit_exponential(r, v, N):
    # log(v r^{(N-1)/2}) = log C1 - C2 r
    y = np.log(v) + 0.5 * (N - 1) * np.log(r)
    slope, intercept, rval, *_ = stats.linregress(r, y)
    resid = float(np.sqrt(np.mean((y - (intercept + slope * r)) ** 2)))
    return math.exp(intercept), -slope, resid


def decay_envelope(b, r_min_factor=2.0):
    """Fit u~(x) <= C1 |x|^{-(N-1)/2} exp(-C2 |x|) along coordinate rays.

    Fits use nodes on the coordinate axes with 2 r0 <= |x| <= half cell width.
    ``bounds_all`` reports whether every node with |x| >= 2 r0 lies under the
    fitted envelope (10% slack for fitting scatter). The same fit is repeated
    for the finite-difference gradient magnitude.
    """
    g = b.grid
    N = g.dims
    r0 = unit_ball_radius(N)
    half = 0.5 * min(g.lengths)
    if half < 2 * r_min_factor * r0:
        raise ValueError(f"rescaled cell half-width {half:.3g} is below {2 * r_min_factor} r0")
    rr, vv, gg = [], [], []
    grad = np.sqrt(sum(((np.roll(b.u, -1, axis=i) - np.roll(b.u, 1, axis=i)) / (2 * h)) ** 2
                       for i, h in enumerate(g.spacing)))
    o = g.origin_index
    for i in range(N):
        for sgn in (1, -1):
            k = np.arange(1, g.points[i] // 2 + 1)
            idx = list(o)
            idx[i] = (o[i] + sgn * k) % g.points[i]
            sel = tuple(np.full(k.shape, o[j]) if j != i else idx[i] for j in range(N))
            rr.append(k * g.spacing[i])
            vv.append(b.u[sel])
            gg.append(grad[sel])
    r = np.concatenate(rr)
    v = np.concatenate(vv)
    gv = np.concatenate(gg)
    keep = (r >= r_min_factor * r0) & (r <= half) & (v > 0)
    if keep.sum() < 3 or np.ptp(np.log(v[keep])) == 0.0:
        return DecayFit(float("nan"), 0.0, float("inf"), False, float("nan"))
    C1, C2, resid = _fit_exponential(r[keep], v[keep], N)
    keep_g = keep & (gv > 0)
    gC1, gC2, _ = _fit_exponential(r[keep_g], gv[keep_g], N) if keep_g.sum() >= 3 else (np.nan, np.nan, 0)
    R = g.radius()
    far = R >= r_min_factor * r0
    env = b.u[far] * R[far] ** (0.5 * (N - 1)) * np.exp(C2 * R[far])
    env_C1 = float(env.max())
    if not (C2 > 0):
        return DecayFit(C1, C2, resid, False, env_C1, gC1, gC2)
    return DecayFit(C1, C2, resid, bool(env_C1 <= 1.1 * C1), env_C1, gC1, gC2)


# ---------------------------------------------------------------- free space

def free_space_lambda(D, beta, box_factor=6.0, spacing=None, tol=1e-10):
    """Principal eigenvalue of -Lap u = lambda (1_D - beta 1_{R^N \\ D}) u on a large box.

    Zero boundary values on a box of side ``box_factor`` times the diameter of
    D; the truncation error decays exponentially in the box size.
    """
    g = D.grid
    h = tuple(g.spacing) if spacing is None else tuple(np.broadcast_to(spacing, (g.dims,)))
    coords = np.array([x[D.mask] for x in g.coords()])
    extent = coords.max(axis=1) - coords.min(axis=1)
    diam = float(np.max(extent)) + max(g.spacing)
    n = [max(8, 2 * int(math.ceil(0.5 * box_factor * diam / hi))) for hi in h]
    box = build_grid(g.dims, [ni * hi for ni, hi in zip(n, h)], n)
    mask = np.zeros(box.shape, dtype=bool)
    idx = tuple(np.rint(coords[i] / h[i]).astype(int) + n[i] // 2 for i in range(g.dims))
    mask[idx] = True
    m = np.where(mask, 1.0, -float(beta))
    return lambda1(box, m, tol=tol, boundary="dirichlet").lambda1


# ---------------------------------------------------------------- sweep

@dataclass
class GridPolicy:
    """Resolution per delta: the blown-up ball spans ``cells_per_radius`` cells."""

    cells_per_radius: float = 16.0
    max_points: dict = field(default_factory=lambda: {1: 1 << 16, 2: 2048, 3: 192})

    def points(self, delta, dims, lengths):
        r = delta ** (1.0 / dims) * unit_ball_radius(dims)
        pts = []
        for L in lengths:
            n = int(math.ceil(self.cells_per_radius * L / r))
            n += n % 2
            pts.append(min(max(n, 8), self.max_points[dims]))
        return pts

    def grid(self, delta, dims, lengths):
        return build_grid(dims, lengths, self.points(delta, dims, lengths))


def fit_log_linear(x, y):
    """Least-squares fit of log(y) against x; returns slope, intercept, R^2."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = np.isfinite(y) & (y > 0)
    if ok.sum() < 2:
        return {"slope": float("nan"), "intercept": float("nan"), "r2": float("nan"), "points": int(ok.sum())}
    res = stats.linregress(x[ok], np.log(y[ok]))
    return {"slope": float(res.slope), "intercept": float(res.intercept),
            "r2": float(res.rvalue**2) if ok.sum() > 2 else 1.0, "points": int(ok.sum())}


def analyze(delta, beta, dims=2, lengths=(1.0, 1.0), policy=None, n_theta=128,
            box_factor=6.0, optimize_kwargs=None):
    """Optimize at one delta and run every blow-up check; returns a flat record."""
    policy = policy or GridPolicy()
    lengths = tuple(np.broadcast_to(lengths, (dims,)))
    grid = policy.grid(delta, dims, lengths)
    prof = limit_profile(dims, beta)
    design = optimize(grid, delta, beta, **(optimize_kwargs or {}))
    b = blow_up(design)
    row = {
        "delta": delta,
        "delta_actual": design.delta_actual,
        "n": grid.points[0],
        "iterations": design.iterations,
        "OD": design.lam,
        "lambda_tilde": b.lambda_tilde,
        "Lambda0": prof.Lambda0,
        "gap": b.lambda_tilde - prof.Lambda0,
        "t_tilde": b.t,
        "w_r0": float(prof.w(prof.r0)),
        "h_tilde": max(b.grid.spacing),
    }
    R = b.grid.radius()
    near = R < 2 * prof.r0
    row["u_minus_w_sup"] = float(np.max(np.abs(b.u[near] - prof.w(R[near]))))
    try:
        p = boundary_profile(b, n_theta=n_theta, strict=False)
        norms = asymmetry_norms(p)
        row.update({"phi_L2": norms["L2"], "phi_Linf": norms["Linf"], "phi_Lip": norms["Lip"],
                    "profile_valid": p.valid, "evenness_defect": evenness_defect(p)})
        row["convex"] = convexity_check(p) if dims == 2 else all(
            convexity_check(plane_profile(b, ax, n_theta)) for ax in ((0, 1), (0, 2), (1, 2)))
    except (MultipleCrossings, NoCrossing) as exc:
        row.update({"phi_L2": float("nan"), "phi_Linf": float("nan"), "phi_Lip": float("nan"),
                    "profile_valid": False, "profile_error": str(exc)})
    inc = inclusion_check(b, 0.1)
    row.update({"inclusion_pass": inc.passed, "inclusion_margin": inc.minimal_margin})
    try:
        fit = decay_envelope(b)
        row.update({"decay_C1": fit.C1, "decay_C2": fit.C2, "decay_bounds_all": fit.bounds_all,
                    "grad_decay_C2": fit.grad_C2})
    except ValueError:
        row.update({"decay_C1": float("nan"), "decay_C2": float("nan"), "decay_bounds_all": False,
                    "grad_decay_C2": float("nan")})
    row["free_space_lambda"] = free_space_lambda(b.D, beta, box_factor=box_factor)
    row["competitor_bound"] = competitor_bound(design.delta_actual, beta, grid, prof)
    row["competitor_bound_tilde"] = row["competitor_bound"] * design.delta_actual ** (2.0 / dims)
    return row, design, b


def _job(args):
    delta, kwargs = args
    try:
        row, _, _ = analyze(delta, **kwargs)
        row["error"] = ""
    except Exception as exc:  # per-delta failures are recorded, the sweep goes on
        log.warning("delta=%g failed: %s", delta, exc)
        row = {"delta": delta, "error": f"{type(exc).__name__}: {exc}"}
    return row


@dataclass
class SweepReport:
    rows: list
    fits: dict
    beta: float
    dims: int

    @property
    def failures(self):
        return [r for r in self.rows if r.get("error")]

    def to_dict(self):
        return asdict(self)


def sweep(delta_list, beta, dims=2, lengths=(1.0, 1.0), policy=None, workers=None, **kwargs):
    """Run :func:`analyze` over decreasing deltas and fit the exponential laws."""
    deltas = [float(d) for d in delta_list]
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ValueError("delta_list must be strictly decreasing")
    job_kwargs = dict(beta=beta, dims=dims, lengths=lengths, policy=policy, **kwargs)
    if workers is None:
        workers = int(os.environ.get("HABITAT_OPT_THREADS", "1"))
    jobs = [(d, job_kwargs) for d in deltas]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_job, jobs))
    else:
        rows = [_job(j) for j in jobs]
    good = [r for r in rows if not r.get("error")]
    x = [r["delta"] ** (-1.0 / dims) for r in good]
    fits = {
        "eigenvalue_gap": fit_log_linear(x, [abs(r["gap"]) for r in good]),
        "asymmetry_L2": fit_log_linear(x, [r.get("phi_L2", np.nan) for r in good]),
    }
    return SweepReport(rows, fits, beta, dims)
