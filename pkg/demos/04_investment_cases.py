"""Coordinated condenser and battery planning against narrower alternatives.

Case I may build both, case II only batteries, case III only condensers.
The base case sizes batteries for energy alone, then has to run the system
stably with what it built.  Constraint ablation then shows what goes wrong
when either stability family is left out of the plan.

Run:  python demos/04_investment_cases.py   (under a minute)
"""
from stabplan.workbench import experiments
from stabplan.workbench.fixtures import FIVE_BUS_ABLATION, five_bus

print("investment cases, five-bus, 24 h")
print(f"{'case':>5} {'SC MVA':>7} {'GFM MW':>7} {'invest':>8} {'operate':>8} {'total':>8} {'curtail MWh':>12}")
for r in experiments.investment_cases(five_bus()):
    print(f"{r['case']:>5} {r['sc_mva']:7.1f} {r['gfm_mw']:7.1f} {r['investment_cost'] / 1e6:8.2f} "
          f"{r['operation_cost'] / 1e6:8.2f} {r['total_cost'] / 1e6:8.2f} {r['curtailment_mwh']:12.0f}")

print("\nconstraint ablation (costs in M£/yr)")
for r in experiments.constraint_ablation(five_bus(**FIVE_BUS_ABLATION)):
    print(f"{r['case']:>8}: SCC violations {r['scc_violation_rate']:6.1%}, "
          f"gSCR violations {r['gscr_violation_rate']:6.1%}, total {r['total_cost'] / 1e6:.2f}")
