"""Three-phase fault current with voltage-dependent IBR injection.

Conventions
-----------
Pre-fault voltages are flat (real, angle 0).  An IBR whose terminal
voltage magnitude drops by ``|dv|`` injects the reactive (``-j``) current
``min(i_max, d * |dv|)``, which supports the network voltage.  Voltage
changes ``dv`` are stored as real, non-positive magnitude changes.  All
quantities are per unit on the system base.

Iteration
---------
The substitution map ``dv -> network(injection(dv))`` is antitone: larger
voltage drops produce more injection, which in turn raises every terminal
voltage.  Plain substitution therefore alternates around the fixed point.
Composing the map twice gives an isotone map, so :func:`scc_iterative`
advances two substitutions per iteration.  Starting from ``dv = -1`` the
recorded iterates rise monotonically towards the fixed point, and the
intermediate substitution bounds it from above.  The reported error is the
gap between the two.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear

from .network import (NetworkError, OperatingPoint, PowerSystem,
                      invert_to_impedance, scc_admittance)


class SccConvergenceError(RuntimeError):
    """Iteration limit reached; ``trace`` holds the recorded voltage iterates."""

    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class SccState:
    """Everything a fault calculation needs at one operating point.

    Parameters
    ----------
    z : complex ndarray
        Bus impedance matrix of the fault network (SGs and SCs included,
        GFM converters excluded).
    ibr_buses : int ndarray
        Terminal bus of each IBR.
    droops : ndarray
        Droop gains on the system base.
    i_max : ndarray
        Current caps on the system base.
    prefault_v : ndarray, optional
        Per-bus pre-fault voltage magnitudes; defaults to 1.0.
    load_currents : complex ndarray, optional
        Pre-fault IBR currents; default zero.
    """

    z: np.ndarray
    ibr_buses: np.ndarray
    droops: np.ndarray
    i_max: np.ndarray
    prefault_v: np.ndarray | None = None
    load_currents: np.ndarray | None = None

    def __post_init__(self):
        n_c = len(self.ibr_buses)
        if np.shape(self.droops) != (n_c,) or np.shape(self.i_max) != (n_c,):
            raise ValueError("droops and i_max must have one entry per IBR")
        if np.any(np.asarray(self.droops) < 0) or np.any(np.asarray(self.i_max) < 0):
            raise ValueError("droops and i_max must be non-negative")
        if self.prefault_v is not None:
            v = np.asarray(self.prefault_v)
            if np.any(v <= 0.8) or np.any(v >= 1.2):
                raise ValueError("pre-fault voltages must lie in (0.8, 1.2)")

    @property
    def v0(self) -> np.ndarray:
        if self.prefault_v is None:
            return np.ones(self.z.shape[0])
        return np.asarray(self.prefault_v, dtype=float)

    @property
    def i_load(self) -> np.ndarray:
        if self.load_currents is None:
            return np.zeros(len(self.ibr_buses), dtype=complex)
        return np.asarray(self.load_currents, dtype=complex)


@dataclass
class SccResult:
    fault_bus: int
    magnitude: float
    iterations: int = 0
    converged: bool = True
    per_ibr_injections: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dv: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dv_trace: list = field(default_factory=list)
    current_trace: list = field(default_factory=list)
    error_trace: list = field(default_factory=list)
    method: str = "conventional"


def build_scc_state(system: PowerSystem, point: OperatingPoint,
                    z: np.ndarray | None = None, prefault_v=None) -> SccState:
    """SCC state for ``point``: GFL droop scales with installed capacity,
    GFM droop with the temporary overloading capacity."""
    if z is None:
        z = invert_to_impedance(scc_admittance(system, point))
    sb = system.s_base
    buses, droops, caps = [], [], []
    for unit in system.gfls:
        buses.append(unit.bus)
        droops.append(unit.droop * unit.capacity / sb)
        caps.append(unit.capacity / sb)
    for unit, s_over in zip(system.gfms, point.overload):
        buses.append(unit.bus)
        droops.append(unit.droop * s_over / sb)
        caps.append(s_over / sb)
    return SccState(z=z, ibr_buses=np.asarray(buses, dtype=int),
                    droops=np.asarray(droops, dtype=float),
                    i_max=np.asarray(caps, dtype=float), prefault_v=prefault_v)


def ibr_injection(dv, droop, i_max):
    """Saturating droop current ``min(i_max, d * |dv|)`` for a voltage drop ``dv <= 0``."""
    drop = np.maximum(-np.asarray(dv, dtype=float), 0.0)
    return np.minimum(i_max, np.asarray(droop) * drop)


def scc_conventional(state: SccState, fault_bus: int) -> SccResult:
    """``|V_F(0)| / |Z_FF|``, i.e. IBR contribution ignored."""
    z_ff = state.z[fault_bus, fault_bus]
    if z_ff == 0:
        raise NetworkError(f"Z_FF is zero at bus {fault_bus}")
    mag = abs(state.v0[fault_bus]) / abs(z_ff)
    return SccResult(fault_bus, float(mag), iterations=0, converged=True,
                     per_ibr_injections=np.zeros(len(state.ibr_buses)),
                     dv=np.zeros(len(state.ibr_buses)))


def scc_explicit(state: SccState, fault_bus: int) -> SccResult:
    """Closed-form SCC with unsaturated droop injection.

    Valid only while no IBR reaches its current cap; pre-fault load
    currents are ignored.  The droop coupling matrix is
    ``A = I - j * Z_CC^T diag(d)`` and the SCC reads
    ``|V_F(0)| / |Z_FF + j Z_FC^T diag(d) A^-1 Z_FC|``.
    """
    c = state.ibr_buses
    d = np.asarray(state.droops, dtype=float)
    z = state.z
    z_fc = z[fault_bus, c]
    a = np.eye(len(c)) - 1j * z[np.ix_(c, c)].T * d[None, :]
    if len(c) and np.linalg.cond(a) > 1e12:
        raise NetworkError("droop matrix singular")
    w = np.linalg.solve(a, z[c, fault_bus]) if len(c) else np.zeros(0, dtype=complex)
    denom = z[fault_bus, fault_bus] + 1j * np.sum(z_fc * d * w)
    if denom == 0:
        raise NetworkError(f"Z_FF is zero at bus {fault_bus}")
    v_f = state.v0[fault_bus]
    i_f = -v_f / denom
    dv = np.real(w * i_f)
    return SccResult(fault_bus, float(abs(i_f)), iterations=0, converged=True,
                     per_ibr_injections=d * np.maximum(-dv, 0.0), dv=dv,
                     method="explicit")


class _FaultNetwork:
    """Pure-fault network relations at one fault bus, affine in the injections."""

    def __init__(self, state: SccState, fault_bus: int):
        z = state.z
        c = state.ibr_buses
        self.z_ff = z[fault_bus, fault_bus]
        if self.z_ff == 0:
            raise NetworkError(f"Z_FF is zero at bus {fault_bus}")
        self.z_fc = z[fault_bus, c]
        self.z_cf = z[c, fault_bus]
        self.z_cc = z[np.ix_(c, c)]
        self.v_f = state.v0[fault_bus]
        self.i_load = state.i_load

    def step(self, injection):
        """Fault current and terminal voltage changes for fixed injection magnitudes."""
        net = -1j * injection - self.i_load
        i_f = (-self.v_f - self.z_fc @ net) / self.z_ff
        dv = np.real(self.z_cc.T @ net + self.z_cf * i_f)
        return i_f, dv

    def affine(self):
        """``dv = base + gain @ injection``."""
        _, base = self.step(np.zeros(len(self.z_fc)))
        gain = np.empty((len(base), len(base)))
        for j in range(len(base)):
            e = np.zeros(len(base))
            e[j] = 1.0
            gain[:, j] = self.step(e)[1] - base
        return base, gain


def _exact_fixed_point(net: _FaultNetwork, d, cap, start):
    """Solve ``dv = base + gain @ injection(dv)`` directly.

    In the injection ``u`` the fixed point is the box problem
    ``u = clip(-D (base + G u), 0, cap)``.  With a symmetric ``G`` (lossless
    network) it is the optimality condition of the strictly convex QP
    ``min 1/2 u'(D^-1 + G)u + base'u`` over ``0 <= u <= cap``, solved by
    bounded least squares.  Otherwise active-set Newton steps are used.
    """
    base, gain = net.affine()
    live = (d > 0) & (cap > 0)
    if np.allclose(gain, gain.T, rtol=0, atol=1e-12 * max(1.0, np.abs(gain).max(initial=0.0))):
        u = np.zeros(len(d))
        if live.any():
            g = 0.5 * (gain + gain.T)[np.ix_(live, live)]
            h = np.diag(1.0 / d[live]) + g
            chol = np.linalg.cholesky(h)
            rhs = -np.linalg.solve(chol, base[live])
            fit = lsq_linear(chol.T, rhs, bounds=(np.zeros(live.sum()), cap[live]),
                             method="bvls", tol=1e-14)
            u[live] = fit.x
        x = base + gain @ u
    else:
        x = _active_set(base, gain, d, cap, np.array(start, dtype=float))
    residual = x - (base + gain @ ibr_injection(x, d, cap))
    if np.max(np.abs(residual), initial=0.0) > 1e-9:
        raise SccConvergenceError("direct solve did not reach the fixed point", [x])
    return x


def _active_set(base, gain, d, cap, x):
    n = len(x)
    seen = set()
    for _ in range(4 * n + 8):
        drop = -x
        sat = d * drop >= cap
        off = drop <= 0
        lin = ~(sat | off)
        key = (sat.tobytes(), off.tobytes())
        if key in seen:
            break
        seen.add(key)
        lhs = np.eye(n)
        lhs[:, lin] += gain[:, lin] * d[lin]
        rhs = base + gain[:, sat] @ cap[sat]
        x_new = np.linalg.solve(lhs, rhs)
        if np.allclose(x_new, x, rtol=0, atol=1e-14):
            return x_new
        x = x_new
    return x


def scc_iterative(state: SccState, fault_bus: int, eps: float = 1e-6,
                  k_max: int = 50) -> SccResult:
    """Fault current with saturating IBR injection by monotone fixed-point iteration.

    Each iteration applies two network substitutions starting from the
    current lower iterate ``dv`` (initially -1 at every IBR).  The first
    substitution gives an upper bound on the fixed point, the second the
    next lower iterate.  The error follows the successive-difference rule
    ``|I_F' - I_F| + max|dv' - dv|`` between the two substitutions, which
    brackets the exact answer.

    The recorded ``dv_trace`` is elementwise non-decreasing and stays in
    ``[-1, 0]``; ``current_trace`` (``|I_F|`` per iteration, starting with
    the all-saturated value) is non-increasing.  If the coupling is strong
    enough for plain substitution to lock into a two-cycle, the bracket
    stops shrinking; the fixed point inside it is then solved directly and
    appended (``method="active-set"``), which keeps both traces monotone.
    The same direct solve is tried when the iterates contract by less than
    a factor of four per iteration, and kept only if it lies inside the
    bracket.

    Raises
    ------
    SccConvergenceError
        If ``k_max`` iterations pass without meeting ``eps``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    net = _FaultNetwork(state, fault_bus)
    d = np.asarray(state.droops, dtype=float)
    cap = np.asarray(state.i_max, dtype=float)
    n_c = len(d)
    if n_c == 0:
        i_f, dv = net.step(np.zeros(0))
        return SccResult(fault_bus, float(abs(i_f)), iterations=1, converged=True,
                         per_ibr_injections=np.zeros(0), dv=dv, dv_trace=[dv],
                         current_trace=[float(abs(i_f))], error_trace=[0.0],
                         method="iterative")

    lower = -np.ones(n_c)
    dv_trace = [lower.copy()]
    current_trace: list[float] = []
    error_trace: list[float] = []
    method = "iterative"
    prev_step = np.inf
    for k in range(1, k_max + 1):
        i_hi, upper = net.step(ibr_injection(lower, d, cap))
        i_lo, new_lower = net.step(ibr_injection(upper, d, cap))
        current_trace.append(float(abs(i_hi)))
        err = abs(abs(i_hi) - abs(i_lo)) + float(np.max(np.abs(upper - new_lower)))
        error_trace.append(err)
        # The lower sequence is monotone in exact arithmetic; clip round-off.
        new_lower = np.clip(np.maximum(new_lower, lower), -1.0, 0.0)
        step = float(np.max(np.abs(new_lower - lower)))
        lower = new_lower
        dv_trace.append(lower.copy())
        if err <= eps:
            break
        stalled = step <= 1e-3 * err and prev_step <= 1e-3 * err
        slow = step > 0.25 * prev_step
        if k >= 3 and (stalled or slow):
            # Two-cycle or slow linear rate: solve the fixed point inside the
            # bracket directly, keeping it only if it lies in the bracket.
            try:
                exact = _exact_fixed_point(net, d, cap, lower)
            except (SccConvergenceError, np.linalg.LinAlgError):
                exact = None
            tol = 1e-9
            if exact is not None and np.all(exact >= lower - tol) and np.all(exact <= upper + tol):
                lower = np.clip(np.maximum(exact, lower), -1.0, 0.0)
                dv_trace.append(lower.copy())
                method = "active-set"
                break
        prev_step = step
    else:
        raise SccConvergenceError(
            f"no convergence at bus {fault_bus} within {k_max} iterations", dv_trace)

    injection = ibr_injection(lower, d, cap)
    i_f, _ = net.step(injection)
    current_trace.append(float(abs(i_f)))
    return SccResult(fault_bus, float(abs(i_f)), iterations=k, converged=True,
                     per_ibr_injections=injection, dv=lower, dv_trace=dv_trace,
                     current_trace=current_trace, error_trace=error_trace,
                     method=method)


def scc_superposition_oracle(y: np.ndarray, fault_bus: int, ibr_buses, injections,
                             prefault_v: float = 1.0, load_currents=None) -> float:
    """Fault current from a direct KCL solve of the pure-fault network.

    Independent of the impedance matrix: the unknowns are all bus voltage
    changes and the fault-bus source current, with the fault bus voltage
    change pinned to ``-prefault_v``.  ``injections`` are complex IBR
    current phasors; ``load_currents`` their pre-fault values.
    """
    y = np.asarray(y, dtype=complex)
    n = y.shape[0]
    if np.linalg.cond(y) > 1e12:
        raise NetworkError("admittance matrix is singular: no synchronous source grounds the network")
    injections = np.asarray(injections, dtype=complex)
    loads = np.zeros_like(injections) if load_currents is None else np.asarray(load_currents, dtype=complex)
    rhs = np.zeros(n + 1, dtype=complex)
    np.add.at(rhs, np.asarray(ibr_buses, dtype=int), injections - loads)
    rhs[n] = -prefault_v
    kkt = np.zeros((n + 1, n + 1), dtype=complex)
    kkt[:n, :n] = y
    kkt[fault_bus, n] = -1.0
    kkt[n, fault_bus] = 1.0
    sol = np.linalg.solve(kkt, rhs)
    return float(abs(sol[n]))
