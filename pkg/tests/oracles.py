"""Independent reference computations used by the test suite.

Nothing here imports the package's solvers or model builders; each oracle
is written from the underlying definitions with numpy/scipy only.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog


def inverse_2x2(m: np.ndarray) -> np.ndarray:
    a, b, c, d = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
    return np.array([[d, -b], [-c, a]]) / (a * d - b * c)


def kron_reduce(y: np.ndarray, keep) -> np.ndarray:
    """Schur complement eliminating every bus not in ``keep``."""
    keep = list(keep)
    drop = [i for i in range(len(y)) if i not in keep]
    if not drop:
        return y[np.ix_(keep, keep)]
    ykk, ykd = y[np.ix_(keep, keep)], y[np.ix_(keep, drop)]
    ydk, ydd = y[np.ix_(drop, keep)], y[np.ix_(drop, drop)]
    return ykk - ykd @ np.linalg.solve(ydd, ydk)


def charpoly_min_eig(a: np.ndarray, tol: float = 1e-13) -> float:
    """Smallest eigenvalue of a symmetric matrix by bisection on det(A - x I).

    Sturm-free: the Gershgorin interval is scanned for sign changes of the
    characteristic determinant (via LU), then the lowest bracket is bisected.
    """
    a = np.asarray(a, float)
    n = len(a)
    radius = np.abs(a).sum(axis=1) - np.abs(np.diag(a))
    lo, hi = float(np.min(np.diag(a) - radius)) - 1.0, float(np.max(np.diag(a) + radius)) + 1.0

    def count_below(x):
        # Sylvester inertia: negative pivots of LDL^T of A - xI
        m = a - x * np.eye(n)
        d = np.empty(n)
        w = m.copy()
        for k in range(n):
            d[k] = w[k, k] if abs(w[k, k]) > 1e-300 else 1e-300
            if k + 1 < n:
                col = w[k + 1:, k] / d[k]
                w[k + 1:, k + 1:] -= np.outer(col, w[k, k + 1:])
        return int(np.sum(d < 0))

    while hi - lo > tol * max(1.0, abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if count_below(mid) >= 1:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def knapsack_enumeration(values, weights, capacity) -> float:
    best = 0.0
    for pick in itertools.product((0, 1), repeat=len(values)):
        if np.dot(pick, weights) <= capacity + 1e-12:
            best = max(best, float(np.dot(pick, values)))
    return best


def hourly_dispatch_cost(system, hour: int, on, sc_size: float, rows, voll: float) -> float:
    """Cheapest dispatch of one hour for a fixed commitment and condenser size.

    ``rows`` are linear stability requirements ``(k_sg, k_sc, k_gfl, k0, limit)``
    over SG status, SC size and GFL output.  Returns ``inf`` if infeasible.
    Variables: SG output, GFL output, shedding per load bus, bus angles.
    """
    sgs, gfls = system.sgs, system.gfls
    on = np.asarray(on, float)
    k_sg_all = np.array([g.c_noload for g in sgs]) @ on
    nb = system.n_bus
    load_buses = sorted(system.loads)
    n_g, n_w, n_l = len(sgs), len(gfls), len(load_buses)
    nv = n_g + n_w + n_l + nb
    c = np.zeros(nv)
    c[:n_g] = [g.c_marginal for g in sgs]
    c[n_g + n_w:n_g + n_w + n_l] = voll
    bounds = [(g.p_min * o, g.p_max * o) for g, o in zip(sgs, on)]
    for u in gfls:
        avail = system.profiles[u.profile][hour] if u.profile else 1.0
        bounds.append((0.0, avail * u.capacity))
    demand = np.array([system.loads[b][hour] for b in load_buses])
    bounds += [(0.0, d) for d in demand]
    slack = next((g.bus for g in sgs if not g.committable), sgs[0].bus)
    bounds += [(0.0, 0.0) if b == slack else (None, None) for b in range(nb)]
    # nodal balance: injections - B theta = load
    bmat = np.zeros((nb, nb))
    for br in system.branches:
        w = system.s_base / br.reactance
        i, j = br.from_bus, br.to_bus
        bmat[i, i] += w
        bmat[j, j] += w
        bmat[i, j] -= w
        bmat[j, i] -= w
    a_eq = np.zeros((nb, nv))
    for g_i, g in enumerate(sgs):
        a_eq[g.bus, g_i] += 1
    for w_i, u in enumerate(gfls):
        a_eq[u.bus, n_g + w_i] += 1
    for l_i, b in enumerate(load_buses):
        a_eq[b, n_g + n_w + l_i] += 1
    a_eq[:, n_g + n_w + n_l:] = -bmat
    b_eq = np.zeros(nb)
    for l_i, b in enumerate(load_buses):
        b_eq[b] += demand[l_i]
    a_ub, b_ub = [], []
    for br in system.branches:
        w = system.s_base / br.reactance
        row = np.zeros(nv)
        row[n_g + n_w + n_l + br.from_bus] = w
        row[n_g + n_w + n_l + br.to_bus] = -w
        a_ub += [row, -row]
        b_ub += [br.rating, br.rating]
    for k_sg, k_sc, k_gfl, k0, limit in rows:
        fixed = float(np.dot(k_sg, on) + k_sc * sc_size + k0)
        row = np.zeros(nv)
        row[n_g:n_g + n_w] = -np.asarray(k_gfl, float)
        a_ub.append(row)
        b_ub.append(fixed - limit)
    res = linprog(c, A_ub=np.array(a_ub), b_ub=np.array(b_ub), A_eq=a_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    return float(res.fun + k_sg_all) if res.status == 0 else float("inf")


def enumerate_plan_cost(system, rows, sc_sizes, sc_cost: float, voll: float) -> tuple[float, float]:
    """Minimum annualised cost over condenser sizes and every hourly commitment.

    Requires hour-decoupled units (no startup cost or timing) and no storage.
    Returns ``(total cost £/yr, best SC size)``.
    """
    sgs = system.sgs
    hours = len(next(iter(system.loads.values())))
    scale = 8760.0 / hours
    choices = [(0, 1) if g.committable else (1,) for g in sgs]
    combos = list(itertools.product(*choices))
    best = (float("inf"), 0.0)
    for s in sc_sizes:
        total = sc_cost * s
        for t in range(hours):
            total += scale * min(hourly_dispatch_cost(system, t, on, s, rows, voll) for on in combos)
            if total >= best[0]:
                break
        if total < best[0]:
            best = (total, float(s))
    return best


def fault_kcl(y: np.ndarray, fault_bus: int, ibr_buses, currents):
    """Bus voltage changes and fault current for fixed complex IBR currents.

    Solves ``Y dV = injections - e_F I_F`` with ``dV_F = -1`` by bordering.
    """
    n = len(y)
    kkt = np.zeros((n + 1, n + 1), complex)
    kkt[:n, :n] = y
    kkt[fault_bus, n] = 1.0
    kkt[n, fault_bus] = 1.0
    rhs = np.zeros(n + 1, complex)
    np.add.at(rhs, np.asarray(ibr_buses, int), currents)
    rhs[n] = -1.0
    sol = np.linalg.solve(kkt, rhs)
    return sol[:n], sol[n]


def damped_fixed_point(y, fault_bus, ibr_buses, droops, caps, alpha=0.3, tol=1e-13, k_max=20000):
    """SCC with saturating droop by damped substitution; returns ``(|I_F|, dv)``."""
    ibr_buses = np.asarray(ibr_buses, int)
    dv = -np.ones(len(ibr_buses))
    for _ in range(k_max):
        inj = np.minimum(caps, droops * np.maximum(-dv, 0.0))
        v, i_f = fault_kcl(y, fault_bus, ibr_buses, -1j * inj)
        new = np.real(v[ibr_buses])
        if np.max(np.abs(new - dv), initial=0.0) < tol:
            dv = new
            break
        dv = (1 - alpha) * dv + alpha * new
    inj = np.minimum(caps, droops * np.maximum(-dv, 0.0))
    _, i_f = fault_kcl(y, fault_bus, ibr_buses, -1j * inj)
    return abs(i_f), dv


def qp_by_enumeration(p, q, a_ub, b_ub, a_eq=None, b_eq=None):
    """Convex QP ``min 1/2 x'Px + q'x`` by trying every active set (small problems only).

    Returns the best feasible KKT point found, or ``None`` if none is feasible.
    """
    n = len(q)
    a_eq = np.zeros((0, n)) if a_eq is None else np.atleast_2d(a_eq)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq)
    best, best_val = None, np.inf
    m = len(b_ub)
    for k in range(0, min(m, n) + 1):
        for active in itertools.combinations(range(m), k):
            a = np.vstack([a_eq, a_ub[list(active)]]) if k else a_eq
            b = np.concatenate([b_eq, b_ub[list(active)]]) if k else b_eq
            kkt = np.block([[p, a.T], [a, np.zeros((len(a), len(a)))]])
            rhs = np.concatenate([-q, b])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
                if np.linalg.norm(kkt @ sol - rhs) > 1e-9:
                    continue
            x = sol[:n]
            if np.any(a_ub @ x > b_ub + 1e-9) or np.any(np.abs(a_eq @ x - b_eq) > 1e-9):
                continue
            val = 0.5 * x @ p @ x + q @ x
            if val < best_val - 1e-12:
                best, best_val = x, val
    return best
