"""Command line: simulate, analytics, semigroup, pde, diagnose.

Exit codes: 0 when every gate passes, 1 on a gate failure, 2 on a
configuration error.  ``--format json`` prints a machine-readable summary
with one pass/fail entry per gate.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analytics as an
from . import pde_fd
from . import semigroups as sg
from .harness import Campaign, run_campaign
from .harness import diagnostics as dg
from .harness.campaign import default_workers
from .lattice_kmc.config import ConfigError, SimulationConfig, _parse_beta, load_config
from .observables import FULL_LINE, gaussian_bump, interface_bump, regime_class

EXIT_OK, EXIT_GATE, EXIT_CONFIG = 0, 1, 2

_REGIME_BETA = {an.SUBCRITICAL: 0.0, an.CRITICAL: 1.0, an.SUPERCRITICAL: math.inf}
_DEFAULTS = {"n": 100, "alpha": 1.0, "beta": 0.0, "rho": 0.5, "horizon_t": 1.0,
             "lattice_half_width": None, "seed": 0, "replicas": 640}


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _sim_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("simulation configuration")
    g.add_argument("--config", help="key = value file; flags given explicitly override it")
    g.add_argument("--n", type=int)
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=_parse_beta, help="a number or inf")
    g.add_argument("--rho", type=float)
    g.add_argument("--horizon-t", dest="horizon_t", type=float)
    g.add_argument("--lattice-half-width", dest="lattice_half_width", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--replicas", type=int)
    g.add_argument("--regime", choices=an.REGIMES, help="sets beta to 0, 1 or inf")
    g.add_argument("--u", type=_floats, default=[0.0], help="macroscopic points, comma separated")
    g.add_argument("--t-grid", dest="t_grid", type=_floats, help="macroscopic times, comma separated")
    g.add_argument("--out", help="output directory")
    g.add_argument("--format", choices=("csv", "json"), default="json")
    g.add_argument("--workers", type=int, default=1, help="0 means one per available core")
    g.add_argument("--log-events", dest="log_events", action="store_true")
    return p


def build_config(args) -> SimulationConfig:
    values = dict(_DEFAULTS)
    if args.config:
        base = load_config(args.config)
        values.update({k: getattr(base, k) for k in _DEFAULTS})
    explicit = {k: getattr(args, k) for k in _DEFAULTS if getattr(args, k, None) is not None}
    if args.regime is not None:
        beta = _REGIME_BETA[args.regime]
        if "beta" in explicit and an.RegimeParams.from_beta(explicit["beta"], 0.5, 1.0).regime != args.regime:
            raise ConfigError([f"--beta {explicit['beta']} contradicts --regime {args.regime}"])
        values["beta"] = beta
    values.update(explicit)
    return SimulationConfig(**values).validate()


def _time_grid(args, cfg) -> tuple:
    return tuple(args.t_grid) if args.t_grid else (cfg.horizon_t,)


def _bump(center: float, width: float, cfg: SimulationConfig, name: str):
    cls = regime_class(cfg.beta)
    if cls == FULL_LINE:
        return gaussian_bump(center, width, name=name)
    return interface_bump(cls, alpha=cfg.alpha, center=center, width=width, name=name)


def _emit(summary: dict, rows, header, args) -> int:
    """Print the summary (json) or the table (csv); return the exit code."""
    if args.format == "json":
        json.dump(summary, sys.stdout, indent=2, default=_jsonable)
        sys.stdout.write("\n")
    else:
        w = csv.writer(sys.stdout)
        w.writerow(header)
        w.writerows(rows)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(json.dumps(summary, indent=2, default=_jsonable))
    gates = summary.get("gates", [])
    return EXIT_OK if all(g["passed"] for g in gates) else EXIT_GATE


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(type(x).__name__)


def _clean(x):
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    if isinstance(x, float) and math.isnan(x):
        return None
    return x


# --------------------------------------------------------------------------
# subcommands

def cmd_simulate(args) -> int:
    cfg = build_config(args)
    fields = [(f"bump{i}", _bump(c, w, cfg, f"bump{i}")) for i, (c, w) in enumerate(args.bump or [])]
    camp = Campaign(cfg, currents=tuple(args.u), tagged=args.tagged, fields=tuple(fields),
                    time_grid=_time_grid(args, cfg), out_dir=args.out)
    camp.validate()
    workers = args.workers or default_workers()
    res = run_campaign(camp, workers=workers)
    summary = res.summary()
    rows = [[obs] + [_clean(getattr(e, k)) for k in an.CSV_HEADER]
            for obs, tab in res.tables.items() for e in tab.entries]
    return _emit(summary, rows, ["observable"] + an.CSV_HEADER, args)


def cmd_analytics(args) -> int:
    cfg = build_config(args)
    reg = an.RegimeParams.from_beta(cfg.beta, cfg.rho, cfg.alpha)
    grid = _time_grid(args, cfg)
    rows = []
    for u in args.u:
        for t in grid:
            for s in grid:
                if s > t:
                    continue
                cov = an.current_cov(reg, t, s, u)
                rows.append([reg.regime, _clean(reg.alpha), reg.rho, u, t, s, cov,
                             an.tagged_covariance(t, s, u, reg.rho, reg) if reg.rho > 0 else None])
    header = ["regime", "alpha", "rho", "u", "t", "s", "current_cov", "tagged_cov"]
    summary = {"regime": reg.regime, "rows": [dict(zip(header, r)) for r in rows], "gates": []}
    return _emit(summary, rows, header, args)


def cmd_semigroup(args) -> int:
    alpha = 1.0 if args.alpha is None else args.alpha
    g = gaussian_bump(args.center, args.width, name="g")
    spec = sg.SemigroupSpec(args.kind, alpha if args.kind == "robin" else None,
                            quad_rel_tol=args.tol)
    xs = np.asarray(args.x, dtype=float)
    gates = []
    if args.kind == "dirichlet" and np.any(xs <= 0):
        raise ConfigError(["dirichlet semigroup is defined for x > 0 only"])
    vals = np.atleast_1d(spec.apply(g, args.t, xs))
    rows = [[args.kind, args.t, float(x), float(v)] for x, v in zip(xs, vals)]
    if args.kind == "robin":
        other = np.atleast_1d(sg.apply_robin_via_ode(g, args.t, xs, alpha, spec))
        rel = float(np.max(np.abs(vals - other) / np.maximum(np.abs(vals), 1e-300)))
        gates.append({"name": "robin formula vs ode", "passed": rel <= 1e-6,
                      "detail": f"max relative difference {rel:.3g}"})
    summary = {"kind": args.kind, "t": args.t, "alpha": alpha,
               "values": [dict(zip(["x", "value"], r[2:])) for r in rows], "gates": gates}
    return _emit(summary, rows, ["kind", "t", "x", "value"], args)


def cmd_pde(args) -> int:
    cfg = build_config(args)
    T = cfg.horizon_t
    if args.step is not None:
        g = pde_fd.step_profile(*args.step)
        reach = 1.0
    else:
        g = _bump(args.center, args.width, cfg, "g")
        reach = g.reach
    grid = pde_fd.FdGrid.for_problem(args.h, T, reach=reach, scheme=args.scheme)
    times = sorted(set(_time_grid(args, cfg)) | {T})
    if cfg.beta < 1:
        profs = pde_fd.solve_heat(g, T, grid, output_times=times)
    else:
        alpha = cfg.alpha if cfg.beta == 1 else 0.0
        profs = pde_fd.solve_robin_interface(g, T, alpha, grid, output_times=times)
    m0 = profs[0].mass()
    gates = [{"name": "mass conservation", "passed": all(abs(p.mass() - m0) <= 1e-8 * max(1, abs(m0))
                                                        for p in profs),
              "detail": f"mass={m0:.12g}"}]
    summary = {"scheme": grid.scheme, "h": grid.h, "k": grid.k, "X": grid.X,
               "profiles": [{"t": p.t, "mass": p.mass(), "jump": p.jump(),
                             "slopes": list(p.one_sided_slopes())} for p in profs]}
    if args.hydro:
        rep = pde_fd.hydrodynamic_check(cfg, g, T, blocks=args.blocks)
        summary["hydrodynamic"] = {"l1": rep["l1"], "lanes": rep["lanes"], "n": rep["n"]}
    summary["gates"] = gates
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        pde_fd.write_profiles(profs, Path(args.out) / "profiles.csv")
    rows = [row for p in profs for row in p.rows()]
    return _emit(summary, rows, ["t", "x", "u"], args)


def cmd_diagnose(args) -> int:
    cfg = build_config(args)
    t = args.t if args.t is not None else cfg.horizon_t
    if args.suite == "local":
        reports = [dg.local_replacement_diagnostic(cfg.with_(horizon_t=max(t, cfg.horizon_t)),
                                                   ell, t, x=args.x, blocks=args.blocks)
                   for ell in args.ell]
        gates = [{"name": f"local replacement ell={r['ell']} x={r['x']}", "passed": r["passed"],
                  "detail": f"estimate={r['estimate']:.4g} bound={r['bound']:.4g} ci={r['ci']:.3g}"}
                 for r in reports]
        rows = [[r["n"], _clean(r["beta"]), r["ell"], r["x"], r["t"], r["estimate"], r["ci"], r["bound"]]
                for r in reports]
        header = ["n", "beta", "ell", "x", "t", "estimate", "ci", "bound"]
        summary = {"suite": "local", "reports": [{k: _clean(v) for k, v in r.items()} for r in reports],
                   "gates": gates}
    elif args.suite == "martingale":
        H = _bump(args.center, args.width, cfg, "H")
        rep = dg.martingale_diagnostic(cfg, H, t, ns=tuple(args.ns), blocks=args.blocks,
                                       log_events=args.log_events)
        header = list(rep["rows"][0])
        rows = [[r[k] for k in header] for r in rep["rows"]]
        summary = {"suite": "martingale", **rep}
    else:
        rep = dg.current_field_diagnostic(cfg, args.u[0], args.j_grid, t, blocks=args.blocks)
        header = ["j", "estimate", "ci"]
        rows = list(zip(rep["j"], rep["estimate"], rep["ci"]))
        summary = {"suite": "current", **rep}
        summary["ratios"] = {str(k): v for k, v in rep["ratios"].items()}
    return _emit(summary, rows, header, args)


# --------------------------------------------------------------------------

def make_parser() -> argparse.ArgumentParser:
    parent = _sim_parent()
    ap = argparse.ArgumentParser(prog="slowbond", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[parent], help="replica campaign with covariance tables")
    p.add_argument("--tagged", type=float, help="tag the particle at floor(u n)")
    p.add_argument("--bump", type=_floats, action="append",
                   help="CENTER,WIDTH of a test function for the density field (repeatable)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analytics", parents=[parent], help="limit covariances on the time grid")
    p.set_defaults(func=cmd_analytics)

    p = sub.add_parser("semigroup", parents=[parent], help="apply a semigroup to a bump")
    p.add_argument("--kind", choices=sg.KINDS, default="robin")
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--x", type=_floats, default=[1.0])
    p.add_argument("--center", type=float, default=0.5)
    p.add_argument("--width", type=float, default=0.4)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(func=cmd_semigroup)

    p = sub.add_parser("pde", parents=[parent], help="finite-difference interface problem")
    p.add_argument("--h", type=float, default=1e-2)
    p.add_argument("--scheme", choices=pde_fd.SCHEMES, default="crank-nicolson")
    p.add_argument("--center", type=float, default=0.5)
    p.add_argument("--width", type=float, default=0.4)
    p.add_argument("--step", type=_floats, help="LEFT,RIGHT densities of a step initial profile")
    p.add_argument("--hydro", action="store_true", help="compare with the particle system")
    p.add_argument("--blocks", type=int, default=4)
    p.set_defaults(func=cmd_pde)

    p = sub.add_parser("diagnose", parents=[parent], help="diagnostic suites")
    p.add_argument("--suite", choices=("local", "martingale", "current"), required=True)
    p.add_argument("--t", type=float)
    p.add_argument("--ell", type=lambda s: [int(v) for v in _floats(s)], default=[5, 10, 20])
    p.add_argument("--x", type=int, default=-1, choices=(-1, 0))
    p.add_argument("--ns", type=lambda s: [int(v) for v in _floats(s)], default=[50, 100, 200])
    p.add_argument("--j-grid", dest="j_grid", type=lambda s: [int(v) for v in _floats(s)],
                   default=[4, 8, 16, 32, 64])
    p.add_argument("--center", type=float, default=0.5)
    p.add_argument("--width", type=float, default=0.4)
    p.add_argument("--blocks", type=int, default=30)
    p.set_defaults(func=cmd_diagnose)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
