"""Dense convex QP by the Goldfarb-Idnani dual active-set method.

The method starts from the unconstrained minimizer and adds the most
violated constraint at each major step, dropping active inequalities whose
multipliers would turn negative.  Primal infeasibility is detected when a
violated constraint is linearly dependent on the active set and no active
multiplier can absorb the step.

Projections are recomputed from scratch at every step rather than updated
with Givens rotations.  That costs O(n^3) per step, which is irrelevant for
the coefficient fits (a dozen variables, a few thousand rows) and keeps the
code short.
"""

from __future__ import annotations

import time

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model import ModelError, QpProblem, SolveRequest, SolveResult


def solve_qp(req: SolveRequest, max_iter: int | None = None) -> SolveResult:
    """Solve ``min 1/2 x'Px + q'x`` subject to linear equalities and inequalities.

    A positive semidefinite ``P`` is regularized by a ridge of
    ``1e-12 * max(1, max diag P)`` so that the dual method has a strictly
    convex model to work with.

    Returns
    -------
    SolveResult
        ``status`` is ``"optimal"`` or ``"infeasible"``; ``duals`` holds
        the multipliers of the equality rows followed by the inequality rows.
    """
    prob = req.problem
    if not isinstance(prob, QpProblem):
        raise ModelError("solve_qp needs a QpProblem")
    t0 = time.perf_counter()
    n = len(prob.q)
    meq = len(prob.b_eq)
    # Internal form: c_i . x >= b_i, equalities first.
    cmat = np.vstack([prob.a_eq, -prob.a_ub])
    bvec = np.concatenate([prob.b_eq, -prob.b_ub])
    m = len(bvec)
    max_iter = max_iter or 10 * (m + n) + 50
    norms = np.linalg.norm(cmat, axis=1) if m else np.zeros(0)
    zero_rows = norms == 0
    if np.any(zero_rows & ((np.arange(m) < meq) & (np.abs(bvec) > req.tolerance)
                           | (np.arange(m) >= meq) & (bvec > req.tolerance))):
        return _infeasible(t0, "constraint with zero row cannot hold")
    scale = np.where(zero_rows, 1.0, norms)

    p = prob.p.copy()
    ridge = 1e-12 * max(1.0, float(np.max(np.diag(p), initial=0.0)))
    try:
        chol = cho_factor(p, lower=True)
    except np.linalg.LinAlgError:
        p = p + ridge * np.eye(n)
        chol = cho_factor(p, lower=True)

    def ginv(v):
        return cho_solve(chol, v)

    x = -ginv(prob.q)
    active: list[int] = []
    signs = np.ones(m)
    u = np.zeros(0)
    tol = req.tolerance
    for _ in range(max_iter):
        s = (cmat @ x - bvec) / scale if m else np.zeros(0)
        viol = np.where(np.arange(m) < meq, np.abs(s), np.maximum(-s, 0.0))
        viol[zero_rows] = 0.0
        viol[active] = 0.0
        if m == 0 or viol.max() <= tol:
            break
        k = int(np.argmax(viol))
        if k < meq and s[k] > 0:
            signs[k] = -1.0
        npl = signs[k] * cmat[k]
        bpl = signs[k] * bvec[k]
        u_new = 0.0
        while True:
            z, r = _directions(ginv, cmat, signs, active, npl)
            t1, drop = np.inf, None
            for j, idx in enumerate(active):
                if idx >= meq and r[j] > 1e-14 and u[j] / r[j] < t1:
                    t1, drop = u[j] / r[j], j
            zn = float(z @ npl)
            slack = float(npl @ x - bpl)
            ref = float(npl @ ginv(npl))
            t2 = -slack / zn if zn > 1e-13 * max(ref, 1e-300) else np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                return _infeasible(t0, "constraints are inconsistent")
            if np.isfinite(t2):
                x = x + t * z
            u = u - t * r
            u_new += t
            if t2 <= t1:
                active.append(k)
                u = np.append(u, u_new)
                break
            del active[drop]
            u = np.delete(u, drop)
    else:
        return SolveResult("timeout", x, prob.objective(x), wall_time=time.perf_counter() - t0,
                           message="iteration limit")

    if active:
        # Accumulated rank-one updates drift off the working set; snap back.
        nmat = (cmat[active] * signs[active, None]).T
        gn = ginv(nmat)
        for _ in range(2):
            gap = signs[active] * bvec[active] - nmat.T @ x
            x = x + gn @ np.linalg.lstsq(nmat.T @ gn, gap, rcond=None)[0]

    duals = np.zeros(m)
    for idx, mult in zip(active, u):
        duals[idx] = mult * signs[idx]
    res = SolveResult("optimal", x, prob.objective(x), wall_time=time.perf_counter() - t0)
    res.duals = np.concatenate([duals[:meq], duals[meq:]])
    res.kkt_residual = kkt_residual(prob, x, res.duals)
    return res


def _directions(ginv, cmat, signs, active, npl):
    """Primal step ``z = H n+`` and dual step ``r = N* n+`` for the active set."""
    if not active:
        return ginv(npl), np.zeros(0)
    nmat = (cmat[active] * signs[active, None]).T
    gn = ginv(nmat)
    gram = nmat.T @ gn
    nstar = np.linalg.lstsq(gram, gn.T, rcond=None)[0]
    r = nstar @ npl
    z = ginv(npl) - gn @ r
    return z, r


def _infeasible(t0, msg):
    return SolveResult("infeasible", None, float("inf"), wall_time=time.perf_counter() - t0, message=msg)


def kkt_residual(prob: QpProblem, x, duals) -> float:
    """Max of stationarity, primal feasibility, dual sign and complementarity violations.

    ``duals`` follows :func:`solve_qp`: equality rows then inequality rows,
    with inequality multipliers ``>= 0`` for ``a_ub x <= b_ub`` written as
    ``-a_ub x >= -b_ub``.
    """
    meq = len(prob.b_eq)
    lam_eq = duals[:meq]
    lam_in = duals[meq:]
    grad = prob.p @ x + prob.q
    stat = grad - prob.a_eq.T @ lam_eq + prob.a_ub.T @ lam_in
    slack = prob.b_ub - prob.a_ub @ x
    parts = [np.abs(stat).max(initial=0.0),
             np.abs(prob.a_eq @ x - prob.b_eq).max(initial=0.0),
             np.maximum(-slack, 0).max(initial=0.0),
             np.maximum(-lam_in, 0).max(initial=0.0),
             np.abs(lam_in * slack).max(initial=0.0)]
    return float(max(parts))
