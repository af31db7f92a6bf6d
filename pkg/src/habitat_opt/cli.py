"""Command line front end: ``habitat-opt {limit,solve,sweep,dynamics,verify}``.

Values come from built-in defaults, then an optional JSON config file, then
flags. The resolved configuration is hashed to name the run directory, where
``config.json``, ``summary.json`` and CSV tables are written.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, HabitatOptError

log = logging.getLogger(__name__)

COMMANDS = ("limit", "solve", "sweep", "dynamics", "verify")
DEFAULT_DELTAS = [0.2, 0.1, 0.05, 0.025, 0.0125]


@dataclass
class RunConfig:
    command: str
    dims: int = 2
    lengths: list = None
    beta: float = 1.0
    delta: float = None
    delta_list: list = None
    n: int = None
    cells_per_radius: float = 16.0
    eig_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_iter: int = 100
    init: str = "ball"
    symmetric: bool = True
    seed: int = None
    d_factors: list = field(default_factory=lambda: [0.5, 2.0])
    T: float = 5000.0
    dt: float = 0.5
    record_every: int = 10
    checks: list = None
    out: str = "runs"

    # fields that do not change results and stay out of the run hash
    _volatile = ("out",)

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        d = {k: v for k, v in self.to_dict().items() if k not in self._volatile}
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def _fail(msg):
    raise ConfigError(msg)


def validate(cfg):
    """Check every field against the preconditions of the modules it feeds."""
    from .design import check_volume
    from .grid import build_grid

    if cfg.command not in COMMANDS:
        _fail(f"command must be one of {COMMANDS}, got {cfg.command!r}")
    if cfg.dims not in (1, 2, 3):
        _fail(f"dims must be 1, 2 or 3, got {cfg.dims}")
    lengths = [1.0] if cfg.lengths is None else [float(x) for x in np.atleast_1d(cfg.lengths)]
    if len(lengths) == 1:
        lengths = lengths * cfg.dims
    if len(lengths) != cfg.dims:
        _fail(f"lengths needs {cfg.dims} entries, got {len(lengths)}")
    if any(not (math.isfinite(L) and L > 0) for L in lengths):
        _fail(f"lengths must be positive, got {lengths}")
    cfg.lengths = lengths
    if not (math.isfinite(cfg.beta) and cfg.beta > 0):
        _fail(f"beta must be positive and finite, got {cfg.beta}")
    if cfg.init not in ("ball", "random"):
        _fail(f"init must be 'ball' or 'random', got {cfg.init!r}")
    if cfg.n is not None:
        build_grid(cfg.dims, lengths, [cfg.n] * cfg.dims)
    if cfg.cells_per_radius <= 0:
        _fail("cells_per_radius must be positive")
    if not (cfg.eig_tol > 0 and cfg.rel_tol > 0 and cfg.max_iter >= 1):
        _fail("tolerances must be positive and max_iter at least 1")
    if cfg.command in ("solve", "dynamics"):
        if cfg.delta is None:
            _fail(f"{cfg.command} needs --delta")
        check_volume(cfg.delta, cfg.beta, _grid(cfg))
    if cfg.command == "sweep":
        if cfg.delta_list is None:
            cfg.delta_list = list(DEFAULT_DELTAS)
        cfg.delta_list = [float(d) for d in cfg.delta_list]
        if any(b >= a for a, b in zip(cfg.delta_list, cfg.delta_list[1:])):
            _fail("delta_list must be strictly decreasing")
    if cfg.command == "dynamics":
        if not (cfg.dt > 0 and cfg.T > 0 and cfg.record_every >= 1):
            _fail("dt and T must be positive, record_every at least 1")
        if cfg.dt > 1.0:
            _fail(f"dt * max(m) = {cfg.dt:g} exceeds 1")
        if any(f <= 0 for f in cfg.d_factors):
            _fail("d_factors must be positive")
    return cfg


def _policy(cfg):
    from .asymptotics import GridPolicy
    return GridPolicy(cells_per_radius=cfg.cells_per_radius)


def _grid(cfg):
    from .grid import build_grid
    if cfg.n is not None:
        return build_grid(cfg.dims, cfg.lengths, [cfg.n] * cfg.dims)
    return _policy(cfg).grid(cfg.delta, cfg.dims, cfg.lengths)


def build_parser():
    p = argparse.ArgumentParser(prog="habitat-opt", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    S = argparse.SUPPRESS
    p.add_argument("--config", default=None, help="JSON file with RunConfig fields")
    p.add_argument("--dims", type=int, default=S)
    p.add_argument("--lengths", type=float, nargs="+", default=S)
    p.add_argument("--beta", type=float, default=S)
    p.add_argument("--delta", type=float, default=S)
    p.add_argument("--delta-list", dest="delta_list", type=float, nargs="+", default=S)
    p.add_argument("--n", type=int, default=S, help="points per axis (default: grid policy)")
    p.add_argument("--cells-per-radius", dest="cells_per_radius", type=float, default=S)
    p.add_argument("--eig-tol", dest="eig_tol", type=float, default=S)
    p.add_argument("--rel-tol", dest="rel_tol", type=float, default=S)
    p.add_argument("--max-iter", dest="max_iter", type=int, default=S)
    p.add_argument("--init", choices=("ball", "random"), default=S)
    p.add_argument("--no-symmetric", dest="symmetric", action="store_false", default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--d-factors", dest="d_factors", type=float, nargs="+", default=S)
    p.add_argument("--T", dest="T", type=float, default=S)
    p.add_argument("--dt", type=float, default=S)
    p.add_argument("--record-every", dest="record_every", type=int, default=S)
    p.add_argument("--checks", type=int, nargs="+", default=S, help="acceptance criteria to run")
    p.add_argument("--out", default=S, help="parent directory of run directories")
    p.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    p.add_argument("--quiet", action="store_true")
    return p


def parse_config(argv):
    """Resolve defaults, config file and flags into a validated :class:`RunConfig`."""
    ns = vars(build_parser().parse_args(argv))
    meta = {k: ns.pop(k) for k in ("config", "force", "quiet")}
    values = {}
    if meta["config"]:
        values = json.loads(Path(meta["config"]).read_text())
        unknown = sorted(set(values) - FIELDS)
        if unknown:
            _fail(f"unknown config keys: {', '.join(unknown)}")
        if values.get("command", ns["command"]) != ns["command"]:
            _fail(f"config file is for {values['command']!r}, command line asks for {ns['command']!r}")
    values.update(ns)
    return validate(RunConfig.from_dict(values)), meta


# ---------------------------------------------------------------- outputs

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n")


def write_csv(path, rows, columns=None):
    if columns is None:
        columns = []
        for r in rows:
            columns += [k for k in r if k not in columns]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.bool_):
        return str(bool(v))
    return v


def run_directory(cfg, force):
    d = Path(cfg.out) / f"{cfg.command}-{cfg.digest()}"
    if d.exists():
        if not force:
            _fail(f"run directory {d} exists; pass --force to overwrite")
        shutil.rmtree(d)
    d.mkdir(parents=True)
    return d


# ---------------------------------------------------------------- commands

def cmd_limit(cfg, out):
    from .limit import limit_profile, matching_residual
    prof = limit_profile(cfg.dims, cfg.beta)
    write_json(out / "summary.json", {
        "dims": cfg.dims, "beta": cfg.beta, "Lambda0": prof.Lambda0, "r0": prof.r0,
        "decay_rate": prof.decay_rate, "matching_residual": matching_residual(cfg.dims, cfg.beta, prof.Lambda0),
    })
    r, w, dw = prof.radial_samples.T
    write_csv(out / "profile.csv", [{"r": a, "w": b, "dw": c} for a, b, c in zip(r, w, dw)])
    return 0, f"Lambda0 = {prof.Lambda0!r}"


def _solve(cfg):
    from .design import optimize
    from .errors import MaxIterationsExceeded, StallWithoutConvergence
    grid = _grid(cfg)
    init = "random" if cfg.init == "random" else None
    try:
        design = optimize(grid, cfg.delta, cfg.beta, init=init, symmetrize_steps=cfg.symmetric,
                          rel_tol=cfg.rel_tol, max_iter=cfg.max_iter, eig_tol=cfg.eig_tol, seed=cfg.seed)
        return design, 0
    except (MaxIterationsExceeded, StallWithoutConvergence) as exc:
        log.warning("%s; keeping best iterate", exc)
        return exc.best, 2


def cmd_solve(cfg, out):
    from .grid import save_field
    design, code = _solve(cfg)
    write_json(out / "summary.json", design.summary())
    write_csv(out / "history.csv", [{"iteration": i, "lambda": v} for i, v in design.history])
    save_field(out / "D.csv", design.grid, design.D.mask.astype(float))
    save_field(out / "u.csv", design.grid, design.u)
    return code, f"OD = {design.lam!r} after {design.iterations} iterations ({design.reason})"


def plot_fits(path, report):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    matplotlib.rcParams["svg.hashsalt"] = "habitat-opt"

    good = [r for r in report.rows if not r.get("error")]
    x = np.array([r["delta"] ** (-1.0 / report.dims) for r in good])
    panels = [("eigenvalue_gap", [abs(r["gap"]) for r in good], "|lambda~ - Lambda0|"),
              ("asymmetry_L2", [r.get("phi_L2", np.nan) for r in good], "||phi||_L2")]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    for ax, (key, y, label) in zip(axes, panels):
        fit = report.fits[key]
        ax.semilogy(x, y, "o", label="sweep")
        if np.isfinite(fit["slope"]):
            xs = np.linspace(x.min(), x.max(), 50)
            ax.semilogy(xs, np.exp(fit["intercept"] + fit["slope"] * xs), "-",
                        label=f"slope {fit['slope']:.3g}, R2 {fit['r2']:.2f}")
        ax.set_xlabel(f"delta^(-1/{report.dims})")
        ax.set_ylabel(label)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_sweep(cfg, out):
    from .asymptotics import sweep
    report = sweep(cfg.delta_list, cfg.beta, dims=cfg.dims, lengths=tuple(cfg.lengths), policy=_policy(cfg),
                   optimize_kwargs=dict(rel_tol=cfg.rel_tol, max_iter=cfg.max_iter, eig_tol=cfg.eig_tol,
                                        symmetrize_steps=cfg.symmetric))
    write_csv(out / "sweep.csv", report.rows)
    write_json(out / "summary.json", {"dims": cfg.dims, "beta": cfg.beta, "fits": report.fits,
                                      "failures": report.failures, "rows": len(report.rows)})
    plot_fits(out / "fits.svg", report)
    code = 2 if report.failures else 0
    return code, f"{len(report.rows) - len(report.failures)}/{len(report.rows)} deltas analysed"


def cmd_dynamics(cfg, out):
    from .dynamics import simulate
    from .grid import save_field
    design, code = _solve(cfg)
    grid, m = design.grid, design.weight
    d_star = 1.0 / design.lam
    runs = []
    for f in cfg.d_factors:
        ts = simulate(grid, np.full(grid.shape, 0.1), f * d_star, m, T=cfg.T, dt=cfg.dt,
                      record_every=cfg.record_every)
        tag = f"{f:g}"
        write_csv(out / f"trajectory_{tag}.csv",
                  [{"t": t, "sup": s, "l2": l} for t, s, l in ts.rows()])
        save_field(out / f"final_{tag}.csv", grid, ts.final_state)
        runs.append({"d_factor": f, "d": f * d_star, "verdict": ts.verdict.value, "t_end": ts.times[-1]})
    write_json(out / "summary.json", {"OD": design.lam, "d_star": d_star, "runs": runs})
    return code, ", ".join(f"{r['d_factor']:g} d*: {r['verdict']}" for r in runs)


def cmd_verify(cfg, out):
    from .acceptance import run_all
    results = run_all(set(cfg.checks) if cfg.checks else None)
    write_json(out / "summary.json", {"results": [
        {"criterion": r.number, "name": r.name, "passed": r.passed, "detail": r.detail} for r in results]})
    passed = sum(r.passed for r in results)
    return (0 if passed == len(results) else 2), f"{passed}/{len(results)} criteria pass"


DISPATCH = {"limit": cmd_limit, "solve": cmd_solve, "sweep": cmd_sweep,
            "dynamics": cmd_dynamics, "verify": cmd_verify}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg, meta = parse_config(argv)
    except (HabitatOptError, ValueError, OSError) as exc:
        print(f"habitat-opt: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.WARNING if meta["quiet"] else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        out = run_directory(cfg, meta["force"])
        write_json(out / "config.json", cfg.to_dict())
        code, message = DISPATCH[cfg.command](cfg, out)
    except HabitatOptError as exc:
        print(f"habitat-opt: error: {exc}", file=sys.stderr)
        return 1
    if not meta["quiet"]:
        print(f"{message}\nresults in {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
