"""Command-line front end.

Subcommands: ``solve``, ``nash-sweep``, ``vintage`` and ``simulate``.  All
outputs are plain CSV/JSON and are byte-identical across runs for the same
model file and seed.  Exit codes: 0 success, 1 invalid input, 2 solver
failure.  ``LQMFG_THREADS`` sets the worker count for sweeps and Monte Carlo.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .master_nash import convergence_sweep, eval_value, value_function
from .model import ModelError, load_model
from .problem import ProblemValidationError, master_params, nash_params
from .riccati import SolverError, solve_coefficients
from .simulate import mean_flow, simulate_paths
from .vintage import compatible_grid, oracle_check, price_monitor, profile_from_orthonormal

log = logging.getLogger("lqmfg")

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x):
    return format(float(x), ".17g")


def _plain(obj):
    """JSON-ready copy: dataclasses and arrays unpacked, non-finite floats as strings."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj) if not f.name.startswith("_")}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def write_json(path, obj):
    text = json.dumps(_plain(obj), sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _threads():
    try:
        return max(1, int(os.environ.get("LQMFG_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# commands


def _params(sel):
    sel = (sel or "master").strip().lower()
    if sel == "master":
        return master_params(), None
    if sel.startswith("nash:"):
        try:
            N = int(sel.split(":", 1)[1])
            return nash_params(N), N
        except ValueError as exc:
            raise UsageError(f"bad --params {sel!r}: {exc}") from None
    raise UsageError(f"--params must be 'master' or 'nash:N', got {sel!r}")


def _overrides(args):
    return {
        "grid": getattr(args, "grid", None),
        "tol": getattr(args, "tol", None),
        "faithful": True if getattr(args, "faithful", False) else None,
        "strict": True if getattr(args, "strict", False) else None,
    }


def _config_record(model, args, extra=None):
    rec = {
        "model": model.raw,
        "solver": dataclasses.asdict(model.solver),
        "command": args.command,
        "params": getattr(args, "params", None),
    }
    rec.update(extra or {})
    return rec


def _coeff_rows(sol):
    xi, pp, mu = sol.xi, sol.psiphi, sol.mu
    n = xi.P.shape[1]
    header = ["t"]
    for name in ("P", "Upsilon", "Gamma"):
        header += [f"{name}_{i}_{j}" for i in range(n) for j in range(n)]
    header += [f"psi_{i}" for i in range(n)] + [f"phi_{i}" for i in range(n)] + ["mu"]
    rows = []
    for k, t in enumerate(sol.grid):
        rows.append(
            [t, *xi.P[k].ravel(), *xi.Upsilon[k].ravel(), *xi.Gamma[k].ravel(), *pp.psi[k], *pp.phi[k], mu.mu[k]]
        )
    return header, rows


def _value_rows(model, vf):
    n = model.pd.dim
    T = model.pd.horizon_T
    spec = model.values
    times = spec.get("times", list(np.linspace(0.0, T, 11)))
    ones = np.ones(n)
    points = spec.get("points") or [
        {"x": 0.0, "y": 0.0},
        {"x": 1.0, "y": 0.0},
        {"x": 0.0, "y": 1.0},
        {"x": 1.0, "y": 1.0},
    ]
    header = ["t", "point"] + [f"x_{i}" for i in range(n)] + [f"y_{i}" for i in range(n)] + ["value"]
    rows = []
    for t in times:
        if not 0.0 <= t <= T:
            raise ModelError(f"values.times entry {t} outside [0, {T}]")
        for j, p in enumerate(points):
            x = np.asarray(p["x"], dtype=float) * (ones if np.ndim(p["x"]) == 0 else 1.0)
            y = np.asarray(p["y"], dtype=float) * (ones if np.ndim(p["y"]) == 0 else 1.0)
            rows.append([t, str(j), *x, *y, eval_value(vf, float(t), x, y)])
    return header, rows


def cmd_solve(args):
    model = load_model(args.model, _overrides(args))
    params, N = _params(args.params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sol = solve_coefficients(model.pd, params, model.solver)
    vf = value_function(model.pd, sol, N)
    write_csv(out / "coefficients.csv", *_coeff_rows(sol))
    write_csv(out / "values.csv", *_value_rows(model, vf))
    write_json(
        out / "report.json",
        {
            "config": _config_record(model, args),
            "params": dict(zip("abc", params)),
            "solve": sol.report,
            "warnings": sorted({str(w.message) for w in caught}),
        },
    )
    return EXIT_OK


def cmd_nash_sweep(args):
    model = load_model(args.model, _overrides(args))
    try:
        Ns = [int(v) for v in args.Ns.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--Ns must be a comma-separated list of integers, got {args.Ns!r}") from None
    if not Ns or min(Ns) < 2:
        raise UsageError("--Ns needs integers >= 2")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rep = convergence_sweep(model.pd, Ns, model.solver, threads=_threads())
    header = ["N", "a", "b", "c", "ok", "d_xi", "d_P", "d_Upsilon", "d_Gamma", "d_psiphi", "d_mu", "d_value", "slope"]
    rows = [
        [str(r.N), *r.params, str(r.ok).lower(), r.d_xi, r.d_P, r.d_Upsilon, r.d_Gamma, r.d_psiphi, r.d_mu, r.d_value, rep.slope]
        for r in rep.rows
    ]
    write_csv(out / "sweep.csv", header, rows)
    rdir = out / "reports"
    rdir.mkdir(exist_ok=True)
    write_json(rdir / "master.json", rep.master_report)
    for N, r in sorted(rep.reports.items()):
        write_json(rdir / f"nash_{N}.json", r)
    write_json(
        out / "report.json",
        {
            "config": _config_record(model, args, {"Ns": Ns}),
            "rows": rep.rows,
            "slope": rep.slope,
            "intercept": rep.intercept,
        },
    )
    return EXIT_OK if all(r.ok for r in rep.rows) else EXIT_SOLVER


def cmd_vintage(args):
    if args.params and args.params.strip().lower() != "master":
        raise UsageError(
            "the vintage model is only solved for the Master equation: the Nash system needs "
            "uniformly coercive running costs Q and S, and here Q = 0; add a Q regularisation "
            "in a matrix model to study the Nash variant"
        )
    raw_over = _overrides(args)
    model = load_model(args.model, raw_over)
    if not model.is_vintage:
        raise UsageError("the vintage command needs a model with dynamics.kind = \"vintage\"")
    vm, pd = model.vintage, model.pd
    n = pd.dim
    cfg = model.solver
    if args.grid is None and "grid" not in model.raw.get("solver", {}):
        M = compatible_grid(vm, n, max_steps=4000)
        if M is not None:
            cfg = dataclasses.replace(cfg, grid=M)
    h_age = vm.sbar / n
    ratio = vm.horizon_T / cfg.grid / h_age
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        log.warning("time step is not a multiple of the age step; falling back to direct quadrature (slow)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sol = solve_coefficients(pd, master_params(), cfg)
    vf = value_function(pd, sol)

    ages = np.linspace(0.0, vm.sbar, 2 * n + 1)
    stride = max(1, int(model.vintage_opts.get("profile_steps", 1)))
    ks = list(range(0, sol.grid.size, stride))
    if ks[-1] != sol.grid.size - 1:
        ks.append(sol.grid.size - 1)
    header = ["t"] + [f"s={_fmt(s)}" for s in ages]
    write_csv(
        out / "psi_profiles.csv",
        header,
        [[sol.grid[k], *profile_from_orthonormal(pd, sol.psiphi.psi[k], ages)] for k in ks],
    )

    sim = model.sim_config(threads=1)
    times, ybar = mean_flow(pd, vf, sim.t0, sim.x0 if sim.ybar0 is None else sim.ybar0, dt=pd.horizon_T / cfg.grid)
    means = [profile_from_orthonormal(pd, y, ages) for y in ybar]
    write_csv(out / "mean_profiles.csv", header, [[t, *m] for t, m in zip(times, means)])
    price_min = price_monitor(vm, times, means, ages)

    ns = model.vintage_opts.get("oracle_ns", [16, 32, 64, 128])
    orc = oracle_check(vm, ns)
    write_csv(out / "oracle.csv", ["n", "l2_gap", "min_value"], [[str(a), b, c] for a, b, c in zip(orc.ns, orc.gaps, orc.min_values)])

    psi_T_gap = float(np.abs(sol.psiphi.psi[-1] - pd.eta_T).max())
    write_json(
        out / "report.json",
        {
            "config": _config_record(model, args, {"grid": cfg.grid}),
            "solve": sol.report,
            "sup_Upsilon": float(np.abs(sol.xi.Upsilon).max()),
            "sup_P": float(np.abs(sol.xi.P).max()),
            "psi_T_gap": psi_T_gap,
            "price_min": price_min,
            "price_nonnegative": bool(price_min >= 0),
            "oracle": {"ns": orc.ns, "gaps": orc.gaps, "min_values": orc.min_values, "monotone": orc.monotone},
        },
    )
    return EXIT_OK


def cmd_simulate(args):
    model = load_model(args.model, _overrides(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sol = solve_coefficients(model.pd, master_params(), model.solver)
    vf = value_function(model.pd, sol)
    cfg = model.sim_config(seed=args.seed, threads=_threads())
    bundle = simulate_paths(model.pd, vf, cfg)
    n = model.pd.dim
    n_store = int(model.sim.get("store_paths", 0))
    header = ["t"] + [f"mean_{i}" for i in range(n)]
    header += [f"path{p}_{i}" for p in range(min(n_store, cfg.n_paths)) for i in range(n)]
    rows = []
    for k, t in enumerate(bundle.times):
        row = [t, *bundle.mean_path[k]]
        if bundle.sample_paths is not None:
            row += list(bundle.sample_paths[: min(n_store, cfg.n_paths), k].ravel())
        rows.append(row)
    write_csv(out / "trajectories.csv", header, rows)
    write_csv(out / "costs.csv", ["path", "cost"], [[str(i), c] for i, c in enumerate(bundle.realized_costs)])
    y0 = cfg.x0 if cfg.ybar0 is None else cfg.ybar0
    U = eval_value(vf, cfg.t0, np.asarray(cfg.x0, dtype=float), np.asarray(y0, dtype=float))
    gap = bundle.mean_cost - U
    se = bundle.cost_se
    write_json(
        out / "summary.json",
        {
            "config": _config_record(model, args, {"seed": cfg.seed, "dt": cfg.dt, "paths": cfg.n_paths}),
            "mean_cost": bundle.mean_cost,
            "standard_error": se,
            "value": U,
            "gap": gap,
            "gap_over_se": gap / se if se > 0 else ("0" if gap == 0 else "inf"),
            "consistent": bool(abs(gap) <= 3 * se) if se > 0 else bool(abs(gap) <= 1e-6 * max(1.0, abs(U))),
            "solve_mild_residual": sol.report.mild_residual,
        },
    )
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="lqmfg", description="LQ mean-field games in Hilbert spaces: coefficient solver and experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, params=True):
        sp.add_argument("--model", required=True, help="model file (TOML)")
        sp.add_argument("--out", required=True, help="output directory")
        if params:
            sp.add_argument("--params", default="master", help="master or nash:N")
        sp.add_argument("--faithful", action="store_true", help="use the a priori interval schedule")
        sp.add_argument("--strict", action="store_true", help="treat a priori bound violations as errors")
        sp.add_argument("--grid", type=int, help="number of time steps")
        sp.add_argument("--tol", type=float, help="Picard tolerance")

    common(sub.add_parser("solve", help="solve the coefficient system"))
    sp = sub.add_parser("nash-sweep", help="Nash to Master convergence sweep")
    common(sp, params=False)
    sp.add_argument("--Ns", default="2,4,8,16,32,64")
    common(sub.add_parser("vintage", help="vintage capital model (Master equation only)"))
    sp = sub.add_parser("simulate", help="Monte Carlo under the Master feedback")
    common(sp, params=False)
    sp.add_argument("--seed", type=int)
    return p


_COMMANDS = {"solve": cmd_solve, "nash-sweep": cmd_nash_sweep, "vintage": cmd_vintage, "simulate": cmd_simulate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ModelError, UsageError, ProblemValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        msg = f"solver failure: {exc}"
        if exc.interval is not None:
            msg += f" (interval {exc.interval[0]:.6g}..{exc.interval[1]:.6g})"
        print(msg, file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
