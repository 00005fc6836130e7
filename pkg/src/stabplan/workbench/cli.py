"""Command line entry point ``stabplan``.

Verbs write CSV or JSON into ``--out`` (default ``out/``).  Exit codes: 0 on
success, 1 on a domain error (bad data, infeasible model, failed fit),
2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from ..linearize import FitInfeasibleError, PlannerFailure, system_metrics
from ..network import NetworkError, OperatingPoint, PowerSystem
from ..planning import (CostConfig, PlanningError, PlanningInfeasible, PlanOptions, ScenarioTree,
                        build_planning_model, plan_with_sampling, solve_planning, validate_solution)
from ..shortcircuit import SccConvergenceError, build_scc_state, scc_iterative
from ..solver import BACKEND_ENV, ModelError
from ..strength import gscr
from . import experiments
from .fixtures import FIXTURES
from .io import (FormatError, parse_case, read_coefficients, read_solution, read_tree,
                 write_coefficients, write_solution)

logger = logging.getLogger("stabplan")

DOMAIN_ERRORS = (FormatError, NetworkError, PlanningError, PlanningInfeasible, FitInfeasibleError,
                 PlannerFailure, SccConvergenceError, ModelError)

# Stable CSV headers; docs/formats.md lists them.
HEADERS = {
    "scc": ["bus", "hour", "node", "magnitude_pu", "iterations", "converged", "method"],
    "scc_trace": ["bus", "iteration", "current_pu", "min_dv", "max_dv"],
    "gscr": ["hour", "node", "gscr", "limit", "margin"],
    "iterations": ["m", "metric", "n_samples", "n_added", "n_mc", "n_mc_lsq", "nu", "objective", "plan_cost"],
    "investments": ["unit", "kind", "bus", "capacity", "overload_capacity"],
    "schedule": ["node", "hour", "unit", "committed", "power_mw"],
    "costs": ["investment_cost", "operation_cost_per_h", "total_cost", "gap", "status", "wall_time"],
    "violations": ["node", "hour", "probability", "metric", "value", "limit", "margin"],
    "violation_summary": ["metric", "violation_rate", "worst_margin"],
    "investment_cases": ["case", "description", "sc_mva", "gfm_mw", "investment_cost", "operation_cost",
               "total_cost", "curtailment_mwh", "scc_violation_rate", "gscr_violation_rate", "gap"],
    "ablation": ["case", "scc_constraint", "gscr_constraint", "scc_violation_rate",
               "gscr_violation_rate", "iterations", "converged", "total_cost", "wall_time"],
    "scc_traces": ["bus", "iteration", "current_pu", "min_dv", "max_dv", "method"],
    "sampling": ["method", "iteration", "n_mc", "converged"],
}


def write_csv(path: Path, kind: str, rows: Sequence[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    header = HEADERS[kind]
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k, "")) for k in header})
    return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


# -- argument handling ------------------------------------------------------------

def load_case(args) -> PowerSystem:
    if args.case in FIXTURES:
        if args.case == "2bus":
            return FIXTURES[args.case]()
        return FIXTURES[args.case](hours=args.hours, seed=args.seed)
    return parse_case(args.case)


def load_tree(args, system: PowerSystem) -> ScenarioTree:
    if getattr(args, "tree", None):
        return read_tree(args.tree, system)
    return ScenarioTree.from_system(system)


def _costs(args) -> CostConfig:
    return CostConfig(gap=args.gap, time_limit=args.time_limit)


def _nu_grid(text):
    if text is None:
        return None
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad nu grid {text!r}") from None


def _point(system: PowerSystem, args, hour: int, node: int = 0) -> OperatingPoint:
    """Operating point from a plan, or all SGs on with no candidates built."""
    if getattr(args, "solution", None):
        sol = read_solution(args.solution)
        for pp in sol.operating_points():
            if pp.hour == hour and pp.node == node:
                return pp.point
        raise PlanningError(f"solution has no hour {hour} at node {node}")
    if not 0 <= hour < max(system.horizon, 1):
        raise PlanningError(f"hour {hour} outside the horizon of {system.horizon}")
    power = [system.gfl_availability(u)[hour] * u.capacity if system.horizon else u.capacity
             for u in system.gfls]
    return OperatingPoint.for_system(system, gfl_power=power)


def _hours(args, system) -> list[int]:
    if args.hour == "all":
        return list(range(max(system.horizon, 1)))
    try:
        return [int(args.hour)]
    except ValueError:
        raise PlanningError(f"--hour must be an integer or 'all', got {args.hour!r}") from None


# -- verbs ------------------------------------------------------------------------

def cmd_scc(args) -> int:
    system = load_case(args)
    buses = [system.bus_index(b) for b in args.bus] if args.bus else list(system.monitored_buses)
    rows, trace = [], []
    for hour in _hours(args, system):
        point = _point(system, args, hour)
        state = build_scc_state(system, point)
        for bus in buses:
            res = scc_iterative(state, bus, eps=args.eps, k_max=args.k_max)
            rows.append({"bus": bus, "hour": hour, "node": 0, "magnitude_pu": res.magnitude,
                         "iterations": res.iterations, "converged": res.converged,
                         "method": res.method})
            for k, (dv, cur) in enumerate(zip(res.dv_trace, res.current_trace)):
                trace.append({"bus": bus, "iteration": k, "current_pu": cur,
                              "min_dv": float(np.min(dv)) if len(dv) else 0.0,
                              "max_dv": float(np.max(dv)) if len(dv) else 0.0})
    write_csv(args.out / "scc.csv", "scc", rows)
    write_csv(args.out / "scc_trace.csv", "scc_trace", trace)
    for r in rows:
        print(f"bus {r['bus']} hour {r['hour']}: |I_F| = {r['magnitude_pu']:.6f} pu "
              f"({r['iterations']} iterations, {r['method']})")
    return 0


def cmd_gscr(args) -> int:
    system = load_case(args)
    rows = []
    for hour in _hours(args, system):
        p = _point(system, args, hour)
        value = gscr(system, p.commitments, p.sc_capacity, p.gfm_capacity, p.gfl_power)
        rows.append({"hour": hour, "node": 0, "gscr": value, "limit": system.gscr_limit,
                     "margin": value - system.gscr_limit})
    write_csv(args.out / "gscr.csv", "gscr", rows)
    for r in rows:
        print(f"hour {r['hour']}: gSCR = {r['gscr']:.6f} (limit {r['limit']:g})")
    return 0


def cmd_linearize(args) -> int:
    system = load_case(args)
    tree = load_tree(args, system)
    run = plan_with_sampling(system, tree, _costs(args), PlanOptions(), scc=not args.no_scc,
                             strength=not args.no_gscr, m_max=args.m_max, nu_grid=args.nu_grid,
                             fit=args.fit, explore=args.explore, seed=args.seed,
                             backend=args.backend, validate=False, sampling=args.sampling)
    write_coefficients(run.sampling.coefficients, args.out / "coefficients.json")
    write_csv(args.out / "iterations.csv", "iterations", [vars(r) for r in run.sampling.log])
    if args.sampling == "random":
        print(f"random-sample fit; N_mc of the resulting plan: {run.sampling.n_mc()[0]}")
    else:
        state = "converged" if run.sampling.converged else f"stopped at m_max={args.m_max}"
        print(f"active sampling {state}; N_mc per iteration: {run.sampling.n_mc()}")
    return 0


def cmd_plan(args) -> int:
    system = load_case(args)
    tree = load_tree(args, system)
    coeffs = read_coefficients(args.coefficients) if args.coefficients else {}
    k_scc = {int(n[4:]): k for n, k in coeffs.items() if n.startswith("scc@")}
    options = PlanOptions(allow_sc=not args.no_sc, allow_gfm=not args.no_gfm)
    model = build_planning_model(system, tree, k_scc, coeffs.get("gscr"), _costs(args), options)
    sol = solve_planning(model, args.backend)
    write_solution(sol, args.out / "solution.json")
    inv = []
    for u, cap in zip(system.scs, sol.investments.sc):
        inv.append({"unit": u.id, "kind": "SC", "bus": u.bus, "capacity": cap, "overload_capacity": cap})
    for u, cap, over in zip(system.gfms, sol.investments.gfm, sol.investments.gfm_overload):
        inv.append({"unit": u.id, "kind": "GFM", "bus": u.bus, "capacity": cap, "overload_capacity": over})
    write_csv(args.out / "investments.csv", "investments", inv)
    sched = []
    for n in range(sol.y.shape[0]):
        for t in range(sol.y.shape[1]):
            for g_i, g in enumerate(system.sgs):
                sched.append({"node": n, "hour": t, "unit": g.id, "committed": int(sol.y[n, t, g_i]),
                              "power_mw": sol.p[n, t, g_i]})
            for c_i, c in enumerate(system.gfls):
                sched.append({"node": n, "hour": t, "unit": c.id, "committed": 1,
                              "power_mw": sol.p_gfl[n, t, c_i]})
            for c_i, c in enumerate(system.gfms):
                sched.append({"node": n, "hour": t, "unit": c.id, "committed": 1,
                              "power_mw": sol.p_dch[n, t, c_i] - sol.p_ch[n, t, c_i]})
    write_csv(args.out / "schedule.csv", "schedule", sched)
    write_csv(args.out / "costs.csv", "costs", [{
        "investment_cost": sol.investment_cost, "operation_cost_per_h": sol.operation_cost,
        "total_cost": sol.total_cost, "gap": sol.gap, "status": sol.status, "wall_time": sol.wall_time}])
    print(f"plan {sol.status}: total {sol.total_cost:,.0f} £/yr (investment {sol.investment_cost:,.0f}), "
          f"gap {sol.gap:.4%}")
    return 0


def cmd_validate(args) -> int:
    system = load_case(args)
    sol = read_solution(args.solution)
    metrics = system_metrics(system, scc=not args.no_scc, strength=not args.no_gscr)
    report = validate_solution(sol, system, metrics)
    rows = []
    for r in report.rows:
        for mt in metrics:
            rows.append({"node": r["node"], "hour": r["hour"], "probability": r["probability"],
                         "metric": mt.name, "value": r[mt.name], "limit": mt.limit,
                         "margin": r[f"{mt.name}_margin"]})
    write_csv(args.out / "violations.csv", "violations", rows)
    summary = [{"metric": k, "violation_rate": v, "worst_margin": report.worst_margin[k]}
               for k, v in report.rates.items()]
    write_csv(args.out / "violation_summary.csv", "violation_summary", summary)
    for s in summary:
        print(f"{s['metric']}: {s['violation_rate']:.2%} of hours violate "
              f"(worst margin {s['worst_margin']:+.4f})")
    if args.strict and any(s["violation_rate"] > 0 for s in summary):
        return 1
    return 0


def cmd_report(args) -> int:
    system = load_case(args)
    tree = load_tree(args, system)
    settings = experiments.SamplingSettings(m_max=args.m_max, explore=args.explore, seed=args.seed,
                                            nu_grid=args.nu_grid, backend=args.backend)
    costs = _costs(args)
    wanted = set(args.what)
    if "scc_traces" in wanted:
        write_csv(args.out / "scc_traces.csv", "scc_traces", experiments.scc_traces(system, eps=args.eps))
    if "sampling" in wanted:
        write_csv(args.out / "sampling.csv", "sampling",
                  experiments.sampling_comparison(system, tree, costs, settings=settings))
    if "ablation" in wanted:
        write_csv(args.out / "ablation.csv", "ablation",
                  experiments.constraint_ablation(system, tree, costs, settings))
    if "investment_cases" in wanted:
        write_csv(args.out / "investment_cases.csv", "investment_cases",
                  experiments.investment_cases(system, tree, costs, settings))
    print(f"wrote {', '.join(sorted(w + '.csv' for w in wanted))} to {args.out}")
    return 0


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--case", default="5bus",
                        help=f"bundled fixture ({', '.join(FIXTURES)}) or case JSON path")
    common.add_argument("--hours", type=int, default=24, help="horizon of bundled fixtures")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", type=Path, default=Path("out"))
    common.add_argument("--backend", default=None,
                        help=f"MILP backend (highs or reference); default from ${BACKEND_ENV}")
    common.add_argument("-v", "--verbose", action="store_true")

    sampling = argparse.ArgumentParser(add_help=False)
    sampling.add_argument("--tree", help="scenario tree JSON (default: single node from the case)")
    sampling.add_argument("--gap", type=float, default=0.005)
    sampling.add_argument("--time-limit", type=float, default=600.0)
    sampling.add_argument("--m-max", type=int, default=10)
    sampling.add_argument("--nu-grid", type=_nu_grid, default=None,
                          help="comma-separated ascending nu values")
    sampling.add_argument("--explore", type=int, default=None,
                          help="exploration samples added at the first iteration")

    p = argparse.ArgumentParser(prog="stabplan", description="Stability-constrained SC and BESS planning.")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("scc", parents=[common], help="fault current at buses")
    s.add_argument("--bus", action="append", help="bus id or name (repeatable; default monitored)")
    s.add_argument("--hour", default="0", help="hour index or 'all'")
    s.add_argument("--solution", help="take the operating point from a plan")
    s.add_argument("--eps", type=float, default=1e-6)
    s.add_argument("--k-max", type=int, default=50)
    s.set_defaults(func=cmd_scc)

    s = sub.add_parser("gscr", parents=[common], help="system strength")
    s.add_argument("--hour", default="0", help="hour index or 'all'")
    s.add_argument("--solution", help="take the operating point from a plan")
    s.set_defaults(func=cmd_gscr)

    s = sub.add_parser("linearize", parents=[common, sampling], help="fit stability surrogates")
    s.add_argument("--fit", choices=("boundary", "lsq"), default="boundary")
    s.add_argument("--sampling", choices=("active", "random"), default="active",
                   help="refine against the planner, or fit once on random draws")
    s.add_argument("--no-scc", action="store_true")
    s.add_argument("--no-gscr", action="store_true")
    s.set_defaults(func=cmd_linearize)

    s = sub.add_parser("plan", parents=[common, sampling], help="solve the planning MILP")
    s.add_argument("--coefficients", help="surrogates from 'linearize' (default: none)")
    s.add_argument("--no-sc", action="store_true", help="forbid condenser investment")
    s.add_argument("--no-gfm", action="store_true", help="forbid battery investment")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("validate", parents=[common], help="audit a plan with exact metrics")
    s.add_argument("--solution", required=True)
    s.add_argument("--no-scc", action="store_true")
    s.add_argument("--no-gscr", action="store_true")
    s.add_argument("--strict", action="store_true", help="exit 1 if any hour violates")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("report", parents=[common, sampling], help="case-study tables and traces")
    s.add_argument("--what", nargs="+", choices=("investment_cases", "ablation", "scc_traces", "sampling"),
                   default=["investment_cases", "ablation", "scc_traces", "sampling"])
    s.add_argument("--eps", type=float, default=1e-6)
    s.set_defaults(func=cmd_report)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DOMAIN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
