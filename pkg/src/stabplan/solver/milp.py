"""MILP backends.

``highs`` hands the model to HiGHS through :func:`scipy.optimize.milp`.
``reference`` is a self-contained branch-and-bound: LP relaxations by
:func:`scipy.optimize.linprog`, best-bound node selection and
most-fractional branching with lowest-index tie-breaks.  It is meant for
desk-scale fixtures and for cross-checking the external backend.

The backend is chosen per call or through the ``STABPLAN_MILP_BACKEND``
environment variable (default ``highs``).
"""

from __future__ import annotations

import heapq
import logging
import os
import time

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import MilpModel, ModelError, SolveRequest, SolveResult

logger = logging.getLogger(__name__)

BACKEND_ENV = "STABPLAN_MILP_BACKEND"
INT_TOL = 1e-6


def default_backend() -> str:
    return os.environ.get(BACKEND_ENV, "highs").lower()


def solve_milp(req: SolveRequest, backend: str | None = None) -> SolveResult:
    """Solve a :class:`MilpModel` to the requested relative gap."""
    model = req.problem
    if not isinstance(model, MilpModel):
        raise ModelError("solve_milp needs a MilpModel")
    model.validate()
    backend = (backend or default_backend()).lower()
    if np.any(model.lb > model.ub + 1e-12):
        return SolveResult("infeasible", None, float("inf"), message="crossing variable bounds")
    t0 = time.perf_counter()
    if backend == "highs":
        res = _solve_highs(model, req)
    elif backend == "reference":
        res = _branch_and_bound(model, req)
    else:
        raise ValueError(f"unknown MILP backend {backend!r}")
    res.wall_time = time.perf_counter() - t0
    return res


def _solve_highs(model: MilpModel, req: SolveRequest) -> SolveResult:
    lo, hi = model.row_bounds()
    constraints = [LinearConstraint(model.a, lo, hi)] if model.n_rows else []
    res = milp(model.c, integrality=model.integer.astype(int),
               bounds=Bounds(model.lb, model.ub), constraints=constraints,
               options={"mip_rel_gap": req.gap, "time_limit": req.time_limit,
                        "disp": False, "presolve": True})
    if res.status == 2:
        return SolveResult("infeasible", None, float("inf"), message=res.message)
    if res.status == 3:
        return SolveResult("unbounded", None, float("-inf"), message=res.message)
    if res.x is None:
        return SolveResult("timeout", None, float("inf"), message=res.message)
    x = np.asarray(res.x, dtype=float)
    x[model.integer] = np.round(x[model.integer])
    obj = float(model.c @ x + model.obj_offset)
    gap = float(getattr(res, "mip_gap", 0.0) or 0.0)
    if not model.integer.any():
        gap = 0.0
    bound = getattr(res, "mip_dual_bound", None)
    status = "optimal" if res.status == 0 else "timeout"
    if status == "optimal" and gap > 1e-9:
        status = "gap-feasible"
    return SolveResult(status, x, obj, gap=gap, message=res.message,
                       bound=float(bound) + model.obj_offset if bound is not None else obj)


class _Relaxation:
    """LP relaxation with per-node variable bounds."""

    def __init__(self, model: MilpModel):
        a = model.a.tocsr()
        le = model.sense == "L"
        ge = model.sense == "G"
        eq = model.sense == "E"
        ub_rows = []
        ub_rhs = []
        if le.any():
            ub_rows.append(a[le])
            ub_rhs.append(model.rhs[le])
        if ge.any():
            ub_rows.append(-a[ge])
            ub_rhs.append(-model.rhs[ge])
        self.a_ub = sp.vstack(ub_rows).tocsr() if ub_rows else None
        self.b_ub = np.concatenate(ub_rhs) if ub_rhs else None
        self.a_eq = a[eq] if eq.any() else None
        self.b_eq = model.rhs[eq] if eq.any() else None
        self.c = model.c

    def solve(self, lb, ub):
        res = linprog(self.c, A_ub=self.a_ub, b_ub=self.b_ub, A_eq=self.a_eq,
                      b_eq=self.b_eq, bounds=np.column_stack([lb, ub]), method="highs")
        if res.status == 0:
            return float(res.fun), np.asarray(res.x)
        if res.status == 3:
            return float("-inf"), None
        return None, None


def _branch_and_bound(model: MilpModel, req: SolveRequest, node_limit: int = 200_000) -> SolveResult:
    t0 = time.perf_counter()
    lp = _Relaxation(model)
    ints = np.nonzero(model.integer)[0]
    lb0 = model.lb.copy()
    ub0 = model.ub.copy()
    lb0[ints] = np.ceil(lb0[ints] - INT_TOL)
    ub0[ints] = np.floor(ub0[ints] + INT_TOL)
    incumbent = None
    best = np.inf
    counter = 0
    heap = [(-np.inf, counter, lb0, ub0)]
    nodes = 0
    global_bound = -np.inf
    timed_out = False
    while heap:
        bound, _, lb, ub = heapq.heappop(heap)
        global_bound = bound
        if incumbent is not None and _rel_gap(best, bound) <= req.gap:
            break
        if time.perf_counter() - t0 > req.time_limit or nodes >= node_limit:
            timed_out = True
            heapq.heappush(heap, (bound, counter, lb, ub))
            break
        obj, x = lp.solve(lb, ub)
        nodes += 1
        if obj is None or obj >= best - 1e-12:
            continue
        if x is None:
            return SolveResult("unbounded", None, float("-inf"), nodes=nodes)
        frac = np.abs(x[ints] - np.round(x[ints]))
        if frac.size == 0 or frac.max() <= INT_TOL:
            x = x.copy()
            x[ints] = np.round(x[ints])
            best, incumbent = obj, x
            continue
        # Most fractional variable; argmax picks the lowest index on ties.
        dist = np.minimum(x[ints] - np.floor(x[ints]), np.ceil(x[ints]) - x[ints])
        j = ints[int(np.argmax(np.round(dist, 12)))]
        down_ub = ub.copy()
        down_ub[j] = np.floor(x[j])
        up_lb = lb.copy()
        up_lb[j] = np.ceil(x[j])
        counter += 1
        heapq.heappush(heap, (obj, counter, lb, down_ub))
        counter += 1
        heapq.heappush(heap, (obj, counter, up_lb, ub))
    if incumbent is None:
        if timed_out:
            return SolveResult("timeout", None, float("inf"), nodes=nodes)
        return SolveResult("infeasible", None, float("inf"), nodes=nodes, message="no integer-feasible node")
    if not heap:
        global_bound = best
    else:
        global_bound = min(global_bound, min(h[0] for h in heap))
    gap = max(0.0, _rel_gap(best, global_bound))
    status = "optimal" if gap <= 1e-9 else "gap-feasible"
    if timed_out and gap > req.gap:
        status = "timeout"
    logger.debug("branch-and-bound: %d nodes, gap %.3g", nodes, gap)
    return SolveResult(status, incumbent, float(best + model.obj_offset), gap=gap,
                       bound=float(global_bound + model.obj_offset), nodes=nodes)


def _rel_gap(obj: float, bound: float) -> float:
    if not np.isfinite(bound):
        return np.inf
    return (obj - bound) / max(abs(obj), 1e-10)
