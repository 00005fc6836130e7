"""Case-study drivers shared by the CLI ``report`` verb, demos and acceptance tests.

Each driver returns plain rows (lists of dicts) so callers can print them,
write CSV or assert on them.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..linearize import system_metrics
from ..network import OperatingPoint, PowerSystem
from ..planning import (CostConfig, Investments, PlanOptions, ScenarioTree, StabilizedPlan,
                        plan, plan_with_sampling, validate_solution)
from ..shortcircuit import build_scc_state, scc_iterative

#: Constraint families of the ablation study: (label, SCC on, gSCR on).
ABLATION = (("both", True, True), ("no-scc", False, True), ("no-gscr", True, False))


@dataclass(frozen=True)
class SamplingSettings:
    m_max: int = 10
    explore: int | None = None
    seed: int = 0
    nu_grid: tuple[float, ...] | None = None
    backend: str | None = None


#: Sampling comparison methods: (label, fit, sampling scheme).
METHODS = (("active-boundary", "boundary", "active"), ("random-lsq", "lsq", "random"),
           ("random-boundary", "boundary", "random"))


def _run(system, tree, costs, options, scc, strength, settings: SamplingSettings,
         fit="boundary", sampling="active") -> StabilizedPlan:
    return plan_with_sampling(system, tree, costs, options, scc=scc, strength=strength,
                              m_max=settings.m_max, nu_grid=settings.nu_grid, fit=fit,
                              explore=settings.explore, seed=settings.seed,
                              backend=settings.backend, validate=False, sampling=sampling)


def constraint_ablation(system: PowerSystem, tree: ScenarioTree | None = None,
                        costs: CostConfig = CostConfig(),
                        settings: SamplingSettings = SamplingSettings()) -> list[dict]:
    """Exact violation rates of plans built with each stability family switched off.

    Every plan is audited against all monitored SCC buses and gSCR,
    whichever constraints it was built with.
    """
    metrics = system_metrics(system)
    rows = []
    for label, scc, strength in ABLATION:
        t0 = time.perf_counter()
        run = _run(system, tree, costs, PlanOptions(), scc, strength, settings)
        report = validate_solution(run.solution, system, metrics)
        rows.append({
            "case": label, "scc_constraint": int(scc), "gscr_constraint": int(strength),
            "scc_violation_rate": report.scc_rate, "gscr_violation_rate": report.gscr_rate,
            "iterations": len(run.sampling.n_mc()), "converged": int(run.sampling.converged),
            "total_cost": run.solution.total_cost, "wall_time": time.perf_counter() - t0,
        })
    return rows


def investment_cases(system: PowerSystem, tree: ScenarioTree | None = None,
                     costs: CostConfig = CostConfig(),
                     settings: SamplingSettings = SamplingSettings()) -> list[dict]:
    """Costs of coordinated, BESS-only, SC-only and decoupled two-stage planning.

    The decoupled scheme sizes the battery without stability constraints,
    then schedules operation with those batteries fixed, no condensers and
    both stability families enforced.
    """
    tree = ScenarioTree.from_system(system) if tree is None else tree
    metrics = system_metrics(system)
    cases = {
        "I": PlanOptions(allow_sc=True, allow_gfm=True),
        "II": PlanOptions(allow_sc=False, allow_gfm=True),
        "III": PlanOptions(allow_sc=True, allow_gfm=False),
    }
    runs = {name: _run(system, tree, costs, opts, True, True, settings) for name, opts in cases.items()}
    first = plan(system, tree, costs=costs, options=PlanOptions(allow_sc=False),
                 backend=settings.backend)
    fixed = Investments(np.zeros(len(system.scs)), first.investments.gfm, first.investments.gfm_overload)
    runs["Base"] = _run(system, tree, costs, PlanOptions(allow_sc=False, fixed=fixed), True, True,
                        settings)
    labels = {"I": "coordinated SC+BESS", "II": "BESS only", "III": "SC only",
              "Base": "decoupled two-stage"}
    rows = []
    for name, run in runs.items():
        sol = run.solution
        report = validate_solution(sol, system, metrics)
        rows.append({
            "case": name, "description": labels[name],
            "sc_mva": float(sol.investments.sc.sum()), "gfm_mw": float(sol.investments.gfm.sum()),
            "investment_cost": sol.investment_cost,
            "operation_cost": sol.operation_cost * 8760.0, "total_cost": sol.total_cost,
            "curtailment_mwh": curtailment(sol, system, tree),
            "scc_violation_rate": report.scc_rate, "gscr_violation_rate": report.gscr_rate,
            "gap": sol.gap,
        })
    return rows


def curtailment(solution, system: PowerSystem, tree: ScenarioTree) -> float:
    """Expected curtailed GFL energy over the modelled horizon (MWh)."""
    total = 0.0
    for n, node in enumerate(tree.nodes):
        avail = np.column_stack([
            (np.asarray(node.availability[u.profile]) if u.profile else np.ones(tree.horizon)) * u.capacity
            for u in system.gfls]) if system.gfls else np.zeros((tree.horizon, 0))
        total += node.probability * float((avail - solution.p_gfl[n]).clip(min=0).sum()) * tree.dt
    return total


def sampling_comparison(system: PowerSystem, tree: ScenarioTree | None = None,
                        costs: CostConfig = CostConfig(), scc: bool = True, strength: bool = True,
                        settings: SamplingSettings = SamplingSettings()) -> list[dict]:
    """Misclassification counts per iteration of active sampling against alternatives.

    ``same-data-lsq`` is plain least squares refitted on the active data set
    and audited on the same planned points.  The random-sample methods do
    not iterate; their single count is repeated over the iterations of the
    active run so the curves line up.
    """
    runs = {label: _run(system, tree, costs, PlanOptions(), scc, strength, settings,
                        fit=fit, sampling=scheme) for label, fit, scheme in METHODS}
    active = runs[METHODS[0][0]].sampling
    steps = len(active.n_mc())
    rows = [{"method": "same-data-lsq", "iteration": m, "n_mc": n_mc, "converged": int(active.converged)}
            for m, n_mc in enumerate(active.n_mc(baseline=True))]
    for label, fit, scheme in METHODS:
        counts = runs[label].sampling.n_mc()
        if scheme == "random":
            counts = counts * steps
        for m, n_mc in enumerate(counts):
            rows.append({"method": label, "iteration": m, "n_mc": n_mc,
                         "converged": int(runs[label].sampling.converged)})
    return rows


def scc_traces(system: PowerSystem, point: OperatingPoint | None = None, buses=None,
               eps: float = 1e-6, k_max: int = 50) -> list[dict]:
    """Per-iteration ``|I_F|`` and worst voltage change for each monitored bus."""
    point = OperatingPoint.for_system(system) if point is None else point
    state = build_scc_state(system, point)
    rows = []
    for bus in (system.monitored_buses if buses is None else buses):
        res = scc_iterative(state, bus, eps=eps, k_max=k_max)
        for k, (dv, cur) in enumerate(zip(res.dv_trace, res.current_trace)):
            rows.append({"bus": bus, "iteration": k, "current_pu": cur,
                         "min_dv": float(np.min(dv)) if len(dv) else 0.0,
                         "max_dv": float(np.max(dv)) if len(dv) else 0.0, "method": res.method})
    return rows
