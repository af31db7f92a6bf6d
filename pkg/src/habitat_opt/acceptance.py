"""Acceptance checks shared by ``habitat-opt verify`` and the test suite.

Each check returns a :class:`CheckResult`; expensive shared work (the default
2D sweep) is computed once per process.
"""

from __future__ import annotations

import functools
import json
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import brentq

from .asymptotics import GridPolicy, sweep
from .design import (averaged_weight, bang_bang, centered_ball, fixed_point_defect, optimize,
                     quarter_cell_quotient)
from .dynamics import Verdict, simulate
from .eigen import lambda1
from .grid import box_fraction, build_grid, laplacian_matrix
from .limit import limit_eigenvalue, sphere_area, unit_ball_radius

SWEEP_DELTAS = (0.2, 0.1, 0.05, 0.025, 0.0125)
BETA = 1.0


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.number:2d} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(number, name):
    def wrap(fn):
        @functools.wraps(fn)
        def run():
            t0 = time.perf_counter()
            passed, detail = fn()
            return CheckResult(number, name, bool(passed), detail, time.perf_counter() - t0)
        run.number = number
        run.check_name = name
        return run
    return wrap


@functools.lru_cache(maxsize=1)
def default_sweep():
    return sweep(SWEEP_DELTAS, BETA, dims=2)


def _rows():
    rep = default_sweep()
    if rep.failures:
        raise RuntimeError(f"sweep failures: {[r['error'] for r in rep.failures]}")
    return rep.rows


# ---------------------------------------------------------------- 1-4

@_timed(1, "limit anchor 1D")
def check_limit_anchor():
    from .cli import main
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        code = main(["limit", "--dims", "1", "--beta", "1", "--out", tmp, "--quiet"])
        summary = json.loads(next(Path(tmp).glob("*/summary.json")).read_text())
    elapsed = time.perf_counter() - t0
    err = abs(summary["Lambda0"] - math.pi**2 / 4)
    return code == 0 and err <= 1e-10 and elapsed < 1.0, f"|Lambda0 - pi^2/4| = {err:.1e}, {elapsed:.2f}s"


def interval_oracle(a, beta, L=1.0):
    """Root of sqrt(lam) tan(sqrt(lam) a) = sqrt(lam beta) tanh(sqrt(lam beta)(L/2 - a))."""
    sb = math.sqrt(beta)
    f = lambda k: math.tan(k * a) - sb * math.tanh(sb * k * (0.5 * L - a))
    k = brentq(f, 1e-9, 0.5 * math.pi / a * (1 - 1e-12), xtol=1e-15, rtol=1e-15)
    return k * k


def interval_errors(points=(256, 512, 1024, 2048), a=0.15, beta=BETA):
    """Relative errors of lambda1 for D = (-a, a) on the unit periodic interval."""
    exact = interval_oracle(a, beta)
    out = []
    for n in points:
        g = build_grid(1, (1.0,), (n,))
        m = averaged_weight(box_fraction(g, (a,)), beta)
        out.append(lambda1(g, m).lambda1 / exact - 1.0)
    return exact, np.array(out)


@_timed(2, "1D transcendental oracle")
def check_interval_oracle():
    points = (256, 512, 1024, 2048)
    _, err = interval_errors(points)
    orders = np.log2(np.abs(err[:-1] / err[1:]))
    ok = abs(err[2]) < 0.01 and np.all(orders >= 1.0)
    return ok, f"rel err at n=1024 {err[2]:.2e}, observed orders {np.round(orders, 2).tolist()}"


def dense_lambda1(grid, m):
    """lambda1 from dense symmetric eigensolves of -Lap - lam m and a bracketing root search."""
    K = -laplacian_matrix(grid).toarray()
    M = np.diag(np.asarray(m, float).ravel())
    f = lambda lam: eigh(K - lam * M, eigvals_only=True, subset_by_index=[0, 0])[0]
    lo, hi = 0.0, 1.0
    while f(hi) >= 0:
        lo, hi = hi, 2 * hi
    return brentq(f, max(lo, 1e-12), hi, xtol=1e-14, rtol=1e-15)


@_timed(3, "dense-matrix oracle")
def check_dense_oracle():
    worst = 0.0
    for g in (build_grid(1, (1.0,), (256,)), build_grid(2, (1.0, 1.0), (32, 32))):
        m = bang_bang(centered_ball(g, 0.1 * g.volume), BETA)
        worst = max(worst, abs(lambda1(g, m).lambda1 / dense_lambda1(g, m) - 1))
    return worst <= 1e-8, f"max relative difference {worst:.1e} (1D n=256, 2D 32x32)"


@_timed(4, "optimizer monotonicity and fixed point")
def check_optimizer(seeds=range(20)):
    g = build_grid(2, (1.0, 1.0), (256, 256))
    bad = []
    for s in seeds:
        d = optimize(g, 0.05, BETA, init="random", symmetrize_steps=False, seed=s)
        h = [v for _, v in d.history]
        mono = all(b <= a * (1 + 1e-12) for a, b in zip(h, h[1:]))
        if not (mono and fixed_point_defect(g, d.D, d.u) == 0):
            bad.append(s)
    return not bad, f"{len(seeds)} random starts, failing seeds {bad}"


# ---------------------------------------------------------------- 5-10 on the sweep

@_timed(5, "eigenvalue expansion")
def check_eigenvalue_expansion():
    rows = _rows()
    L0 = rows[0]["Lambda0"]
    gaps = np.array([abs(r["gap"]) for r in rows])
    fit = default_sweep().fits["eigenvalue_gap"]
    decreasing = bool(np.all(np.diff(gaps) < 0))
    ok = decreasing and gaps[-1] <= 0.05 * L0 and fit["slope"] < 0 and fit["r2"] >= 0.9
    return ok, (f"|gap| {[f'{g:.2e}' for g in gaps]}; strictly decreasing {decreasing}; "
                f"log-fit slope {fit['slope']:.3g}, R^2 {fit['r2']:.3f}")


@_timed(6, "asymmetry decay")
def check_asymmetry_decay():
    rows = _rows()
    h = max(r["h_tilde"] for r in rows)
    r0 = unit_ball_radius(2)
    quantum = {"phi_L2": h * math.sqrt(sphere_area(2)), "phi_Linf": h, "phi_Lip": h / r0}
    mono = {k: bool(np.all(np.diff([r[k] for r in rows]) <= q)) for k, q in quantum.items()}
    fit = default_sweep().fits["asymmetry_L2"]
    ok = all(mono.values()) and fit["slope"] < 0 and fit["r2"] >= 0.9
    return ok, f"non-increasing within jitter {mono}; log-fit slope {fit['slope']:.3g}, R^2 {fit['r2']:.3f}"


@_timed(7, "geometry at smallest delta")
def check_geometry():
    r = _rows()[-1]
    ok = r["inclusion_pass"] and r["convex"] and r["evenness_defect"] <= 1e-12
    return ok, (f"inclusion {r['inclusion_pass']} (margin used {r['inclusion_margin']:.3f}), "
                f"convex {r['convex']}, evenness defect {r['evenness_defect']:g}")


@_timed(8, "free-space sandwich")
def check_sandwich():
    rows = _rows()
    bad = []
    for r in rows:
        eps = 10 * r["h_tilde"]
        if not (r["Lambda0"] - eps <= r["free_space_lambda"] <= r["lambda_tilde"] + eps):
            bad.append(r["delta"])
    return not bad, f"violations at delta {bad}"


@_timed(9, "competitor upper bound")
def check_competitor():
    rows = _rows()
    above = all(r["competitor_bound"] >= r["OD"] for r in rows)
    below = all(r["competitor_bound_tilde"] < r["Lambda0"] for r in rows[-2:])
    return above and below, f"bound >= OD everywhere {above}; scaled bound < Lambda0 at two smallest {below}"


@_timed(10, "uniform exponential decay")
def check_decay():
    rows = [r for r in _rows() if np.isfinite(r["decay_C2"])]
    if not rows:
        return False, "no delta admits a decay fit"
    c2 = np.array([r["decay_C2"] for r in rows])
    target = math.sqrt(rows[-1]["Lambda0"] * BETA)
    spread = float(np.ptp(c2) / np.mean(c2))
    match = abs(c2[-1] / target - 1)
    return spread <= 0.1 and match <= 0.1, (
        f"C2 {np.round(c2, 3).tolist()} over {len(c2)} deltas, spread {spread:.1%}, "
        f"vs sqrt(Lambda0 beta) {match:.1%}")


# ---------------------------------------------------------------- 11-12

@functools.lru_cache(maxsize=1)
def _design_005():
    g = GridPolicy().grid(0.05, 2, (1.0, 1.0))
    return optimize(g, 0.05, BETA)


@_timed(11, "persistence dichotomy")
def check_dichotomy():
    d = _design_005()
    g, m = d.grid, d.weight
    d_star = 1.0 / d.lam
    out = {}
    for factor in (0.5, 2.0):
        t0 = time.perf_counter()
        ts = simulate(g, np.full(g.shape, 0.1), factor * d_star, m, T=5000.0, dt=0.5)
        out[factor] = (ts.verdict, time.perf_counter() - t0)
    ok = out[0.5][0] is Verdict.PERSISTENCE and out[2.0][0] is Verdict.EXTINCTION \
        and max(t for _, t in out.values()) < 120
    return ok, ", ".join(f"d = {f} d*: {v.value} ({t:.1f}s)" for f, (v, t) in out.items())


@_timed(12, "quarter-cell identity")
def check_quarter_cell():
    d = _design_005()
    q = quarter_cell_quotient(d.grid, d.u, d.weight)
    rel = abs(q / d.lam - 1)
    return rel <= 1e-10, f"relative difference {rel:.1e}"


CHECKS = [check_limit_anchor, check_interval_oracle, check_dense_oracle, check_optimizer,
          check_eigenvalue_expansion, check_asymmetry_decay, check_geometry, check_sandwich,
          check_competitor, check_decay, check_dichotomy, check_quarter_cell]


def run_all(selected=None, echo=print):
    results = []
    for check in CHECKS:
        if selected and check.number not in selected:
            continue
        try:
            res = check()
        except Exception as exc:
            res = CheckResult(check.number, check.check_name, False, f"error {type(exc).__name__}: {exc}")
        if echo:
            echo(res.line())
        results.append(res)
    return results
