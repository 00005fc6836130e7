"""How condensers and grid-forming batteries strengthen a weak wind bus.

The strength metric is the smallest eigenvalue of the grid admittance seen
by the grid-following plants, weighted by their output.  Doubling wind
output halves it; adding synchronous or grid-forming sources raises it.

Run:  python demos/02_system_strength.py
"""
import numpy as np

from stabplan.strength import gscr
from stabplan.workbench.fixtures import five_bus

system = five_bus()
wind = [u.capacity for u in system.gfls]
on = np.ones(len(system.sgs))
print(f"strength limit: {system.gscr_limit}")
print(f"{'SC MVA':>7} {'GFM MW':>7} {'gSCR':>8}")
for sc in (0.0, 100.0, 200.0, 300.0):
    for gfm in (0.0, 150.0):
        value = gscr(system, on, [sc], [gfm], wind)
        flag = "" if value >= system.gscr_limit else "  below limit"
        print(f"{sc:7.0f} {gfm:7.0f} {value:8.3f}{flag}")

value = gscr(system, on, [0.0], [0.0], wind)
half = gscr(system, on, [0.0], [0.0], [w / 2 for w in wind])
print(f"\nhalving wind output: {value:.3f} -> {half:.3f}")
