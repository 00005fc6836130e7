"""Acceptance criteria 1 to 10, one test each.

The terminal summary prints one PASS/FAIL line per criterion (see conftest).
"""
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from stabplan.linearize import fit_auto, violations_of_fit, partition_samples, evaluate_linear
from stabplan.network import OperatingPoint
from stabplan.planning import CostConfig, plan_with_sampling
from stabplan.shortcircuit import SccState, build_scc_state, scc_explicit, scc_iterative, \
    scc_superposition_oracle
from stabplan.network import scc_admittance
from stabplan.strength import gscr, min_eigenvalue
from stabplan.workbench import experiments
from stabplan.workbench.fixtures import FIVE_BUS_ABLATION, five_bus, ieee39, two_bus

import oracles

FIXTURES = {"2bus": two_bus, "5bus": five_bus, "39bus": ieee39}


def detail(record_property, text):
    record_property("detail", text)
    print(text)


def busy_point(system):
    return OperatingPoint.for_system(
        system, gfl_power=[u.capacity * system.gfl_availability(u)[0] for u in system.gfls],
        gfm_capacity=[u.s_max / 2 for u in system.gfms], sc_capacity=[s.s_max / 2 for s in system.scs])


def test_criterion_01_explicit_reduces_to_conventional(record_property):
    worst = 0.0
    for make in FIXTURES.values():
        system = make()
        state = build_scc_state(system, busy_point(system))
        flat = SccState(state.z, state.ibr_buses, np.zeros_like(state.droops), state.i_max)
        for bus in range(system.n_bus):
            ref = 1.0 / abs(state.z[bus, bus])
            worst = max(worst, abs(scc_explicit(flat, bus).magnitude - ref) / max(1.0, ref))
    detail(record_property, f"max deviation {worst:.2e} (tol 1e-10)")
    assert worst <= 1e-10


def test_criterion_02_iterative_convergence_39bus(record_property):
    system = ieee39()
    state = build_scc_state(system, busy_point(system))
    worst_iter, worst_time = 0, 0.0
    for bus in system.monitored_buses:
        t0 = time.perf_counter()
        res = scc_iterative(state, bus, eps=1e-6)
        worst_time = max(worst_time, time.perf_counter() - t0)
        worst_iter = max(worst_iter, res.iterations)
        trace = np.array(res.dv_trace)
        assert res.converged
        assert np.all(np.diff(trace, axis=0) >= -1e-12), f"bus {bus}: trace not monotone"
        assert trace.min() >= -1.0 and trace.max() <= 0.0, f"bus {bus}: trace out of [-1, 0]"
    detail(record_property, f"max iterations {worst_iter}, slowest bus {worst_time * 1e3:.1f} ms")
    assert worst_iter <= 10 and worst_time < 1.0


def test_criterion_03_superposition_parity(record_property):
    worst = 0.0
    for make in FIXTURES.values():
        system = make()
        point = busy_point(system)
        state = build_scc_state(system, point)
        y = scc_admittance(system, point)
        for bus in range(system.n_bus):
            res = scc_iterative(state, bus)
            replay = scc_superposition_oracle(y, bus, state.ibr_buses, -1j * res.per_ibr_injections)
            worst = max(worst, abs(replay - res.magnitude))
    detail(record_property, f"max |I_F| mismatch {worst:.2e} pu (tol 1e-8)")
    assert worst <= 1e-8


def test_criterion_04_gscr_eigenvalue_and_scale_law(record_property):
    rng = np.random.default_rng(4)
    worst = 0.0
    for trial in range(50):
        n = 1 + trial % 8
        s = rng.standard_normal((n, n))
        s = s + s.T + 2 * n * np.eye(n) * rng.uniform(-0.5, 1.0)
        m = np.diag(rng.uniform(0.2, 5.0, n)) @ s
        worst = max(worst, abs(min_eigenvalue(m) - oracles.charpoly_min_eig(m)))
    system = ieee39()
    pt = dict(commitments=np.ones(len(system.sgs)), sc_capacities=np.full(4, 200.0),
              gfm_capacities=np.full(4, 100.0),
              gfl_powers=np.array([0.6 * u.capacity for u in system.gfls]))
    g1 = gscr(system, **pt)
    law = 0.0
    for alpha in (0.1, 0.5, 2.0, 7.0):
        g = gscr(system, **{**pt, "gfl_powers": alpha * pt["gfl_powers"]})
        law = max(law, abs(g - g1 / alpha) / (g1 / alpha))
    detail(record_property, f"eigenvalue error {worst:.1e} (tol 1e-8), scale law rel error {law:.1e} (tol 1e-9)")
    assert worst <= 1e-8 and law <= 1e-9


@pytest.fixture(scope="module")
def active_168h():
    return plan_with_sampling(five_bus(hours=168, simple_uc=True), validate=False)


def test_criterion_05_fit_conservativeness(record_property, active_168h):
    """Refit every final surrogate on its training data and count side-constraint breaches."""
    checked = breaches = 0
    for name, k in active_168h.sampling.coefficients.items():
        samples = active_168h.sampling.samples[name]
        refit = fit_auto(samples, k.layout, k.limit)
        for coeffs in (k, refit):
            part = partition_samples(samples, coeffs.limit, coeffs.nu)
            bad1 = sum(evaluate_linear(coeffs, r.features) >= coeffs.limit for r in part.omega1)
            bad3 = sum(evaluate_linear(coeffs, r.features) < coeffs.limit * (1 - 1e-9) for r in part.omega3)
            breaches += bad1 + bad3 + len(violations_of_fit(coeffs, samples))
            checked += len(samples)
    detail(record_property, f"{breaches} breaches over {checked} training samples")
    assert breaches == 0


def test_criterion_06_active_sampling_beats_least_squares(record_property, active_168h):
    res = active_168h.sampling
    boundary, lsq = res.n_mc(), res.n_mc(baseline=True)
    detail(record_property, f"N_mc boundary {boundary}, least squares on the same data {lsq}")
    assert res.converged and len(boundary) <= 11 and boundary[-1] == 0
    assert all(b > a for a, b in zip(boundary[1:], lsq[1:]))


def test_criterion_07_milp_matches_enumeration(record_property):
    system = five_bus(hours=24, storage=False, simple_uc=True)
    costs = CostConfig()
    run = plan_with_sampling(system, costs=costs, validate=False)
    ng, ns = len(system.sgs), len(system.scs)
    rows = [(k.k[:ng], k.k[ng], k.k[ng + ns:], k.k0, k.limit)
            for k in run.sampling.coefficients.values()]
    s_milp = float(run.solution.investments.sc[0])
    grid = np.unique(np.r_[0.0, np.linspace(20.0, 300.0, 50), s_milp])
    best, s_best = oracles.enumerate_plan_cost(system, rows, grid, costs.sc_cost, costs.voll)
    rel = run.solution.total_cost / best - 1
    detail(record_property, f"MILP {run.solution.total_cost:,.0f} vs enumeration {best:,.0f} "
                            f"(SC {s_milp:.1f} vs {s_best:.1f} MVA), rel {rel:+.2e} (tol 5e-3)")
    assert rel <= 5e-3


def test_criterion_08_constraint_ablation(record_property):
    rows = {r["case"]: r for r in experiments.constraint_ablation(five_bus(**FIVE_BUS_ABLATION))}
    both, no_scc, no_gscr = rows["both"], rows["no-scc"], rows["no-gscr"]
    detail(record_property,
           f"both {both['scc_violation_rate']:.1%}/{both['gscr_violation_rate']:.1%}, "
           f"no-SCC SCC {no_scc['scc_violation_rate']:.1%}, no-gSCR gSCR {no_gscr['gscr_violation_rate']:.1%}")
    assert both["scc_violation_rate"] == 0 and both["gscr_violation_rate"] == 0
    assert no_scc["scc_violation_rate"] > 0 and no_gscr["gscr_violation_rate"] > 0


def test_criterion_09_cost_ordering(record_property):
    system = five_bus()
    rows = {r["case"]: r for r in experiments.investment_cases(system)}
    gap = CostConfig().gap
    tot = {k: r["total_cost"] for k, r in rows.items()}
    detail(record_property, "total cost M£: " + ", ".join(f"{k} {v / 1e6:.2f}" for k, v in tot.items())
           + f"; curtailment I {rows['I']['curtailment_mwh']:.0f} MWh, "
             f"III {rows['III']['curtailment_mwh']:.0f} MWh")
    assert tot["I"] <= tot["II"] * (1 + gap) and tot["II"] <= tot["Base"] * (1 + gap)
    assert rows["III"]["curtailment_mwh"] > 0
    assert rows["III"]["operation_cost"] > rows["I"]["operation_cost"]


def test_criterion_10_invariant_suites_under_five_minutes(record_property):
    root = Path(__file__).resolve().parents[1]
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "tests", "-q", "-p", "no:cacheprovider",
                           "--ignore=tests/test_acceptance.py"], cwd=root, capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    detail(record_property, f"suite: {summary}; wall time {elapsed:.0f} s (limit 300 s)")
    assert proc.returncode == 0, proc.stdout[-2000:]
    assert elapsed < 300
