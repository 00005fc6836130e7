import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stabplan.network import (Branch, Bus, IbrUnit, NetworkError, OperatingPoint, PowerSystem,
                              SyncUnit, invert_to_impedance, scc_admittance)
from stabplan.shortcircuit import (SccConvergenceError, SccState, build_scc_state, ibr_injection,
                                   scc_conventional, scc_explicit, scc_iterative,
                                   scc_superposition_oracle)
from stabplan.workbench.fixtures import five_bus, ieee39, two_bus

import oracles


def sg_line(x_line=0.1, droop=0.0, i_max=10.0, ibr_bus=1):
    """SG (X = 0.2 on 100 MVA) at bus 0, one line, optional IBR at ``ibr_bus``."""
    b = 1 / (1j * x_line)
    y = np.array([[1 / (0.2j) + b, -b], [-b, b]])
    state = SccState(invert_to_impedance(y), np.array([ibr_bus]), np.array([droop]), np.array([i_max]))
    return y, state


def states(system, point=None):
    point = OperatingPoint.for_system(system) if point is None else point
    return build_scc_state(system, point), scc_admittance(system, point)


FIXTURES = {"2bus": two_bus(), "5bus": five_bus(), "39bus": ieee39()}
_STATE39 = states(FIXTURES["39bus"])


def test_conventional_two_bus():
    _, state = sg_line()
    assert scc_conventional(state, 1).magnitude == pytest.approx(1 / 0.3, rel=1e-12)


def test_zero_prefault_voltage_gives_zero():
    # SccState keeps v0 in (0.8, 1.2); the KCL oracle accepts any value
    y, _ = sg_line()
    assert scc_superposition_oracle(y, 1, [], [], prefault_v=0.0) == 0.0


@pytest.mark.parametrize("name", FIXTURES)
def test_explicit_without_droop_is_conventional(name):
    system = FIXTURES[name]
    state, _ = states(system)
    flat = SccState(state.z, state.ibr_buses, np.zeros_like(state.droops), state.i_max)
    for bus in range(system.n_bus):
        a = scc_explicit(flat, bus).magnitude
        b = scc_conventional(flat, bus).magnitude
        assert abs(a - b) <= 1e-10 * max(1.0, b)


def test_colocated_ibr_hand_solve():
    # IBR at the faulted bus sees the full 1 pu drop: |I_F| = 1/|Z_FF| + d
    y, state = sg_line(droop=0.7, ibr_bus=1)
    assert scc_explicit(state, 1).magnitude == pytest.approx(1 / 0.3 + 0.7, rel=1e-12)


@pytest.mark.parametrize("name", FIXTURES)
def test_droop_adds_current(name):
    system = FIXTURES[name]
    state, _ = states(system, OperatingPoint.for_system(system, gfl_power=None))
    flat = SccState(state.z, state.ibr_buses, np.zeros_like(state.droops), state.i_max)
    for bus in range(system.n_bus):
        assert scc_explicit(state, bus).magnitude >= scc_explicit(flat, bus).magnitude - 1e-12


@pytest.mark.parametrize("dv, d, cap, expect", [(-0.4, 2, 1.2, 0.8), (-1.0, 2, 1.2, 1.2), (0.0, 2, 1.2, 0.0)])
def test_ibr_injection(dv, d, cap, expect):
    assert ibr_injection(dv, d, cap) == pytest.approx(expect)


def test_no_ibr_converges_in_one_iteration():
    y, _ = sg_line()
    state = SccState(invert_to_impedance(y), np.zeros(0, int), np.zeros(0), np.zeros(0))
    res = scc_iterative(state, 1)
    assert res.iterations == 1
    assert res.magnitude == pytest.approx(scc_conventional(state, 1).magnitude, rel=1e-12)


@pytest.mark.parametrize("droop, cap", [(2.0, 0.5), (2.0, 5.0), (6.0, 1.0), (0.5, 0.1)])
def test_two_bus_iteration_matches_damped_oracle(droop, cap):
    y, state = sg_line(droop=droop, i_max=cap, ibr_bus=1)
    res = scc_iterative(state, 0, eps=1e-12)
    ref, _ = oracles.damped_fixed_point(y, 0, [1], np.array([droop]), np.array([cap]))
    assert res.magnitude == pytest.approx(ref, abs=1e-8)
    assert np.all(np.diff(res.current_trace) <= 1e-12)


def test_hand_kcl_one_sg_one_ibr():
    # Fault at the SG bus (dV0 = -1).  KCL at bus 1 with line susceptance b:
    # -jb(dV1 - dV0) = -j i_c  ->  dV1 = -1 + i_c / b.
    # KCL at bus 0 then gives |I_F| = 1/X_sg + i_c.
    y, _ = sg_line(x_line=0.1)
    i_c, b = 0.3, 10.0
    dv1 = -1.0 + i_c / b
    i_f_hand = 1 / 0.2 + i_c
    got = scc_superposition_oracle(y, 0, [1], [-1j * i_c])
    assert got == pytest.approx(i_f_hand, rel=1e-12)
    v, _ = oracles.fault_kcl(y, 0, [1], [-1j * i_c])
    assert v[1].real == pytest.approx(dv1, rel=1e-12)


@pytest.mark.parametrize("name", FIXTURES)
def test_superposition_parity(name):
    system = FIXTURES[name]
    hour = 0
    point = OperatingPoint.for_system(
        system, gfl_power=[u.capacity * system.gfl_availability(u)[hour] for u in system.gfls],
        gfm_capacity=[u.s_max / 2 for u in system.gfms], sc_capacity=[s.s_max / 2 for s in system.scs])
    state, y = states(system, point)
    for bus in range(system.n_bus):
        res = scc_iterative(state, bus)
        replay = scc_superposition_oracle(y, bus, state.ibr_buses, -1j * res.per_ibr_injections)
        assert replay == pytest.approx(res.magnitude, abs=1e-8)


def test_39_bus_fast_monotone_convergence():
    system = FIXTURES["39bus"]
    state, _ = states(system)
    for bus in range(system.n_bus):
        t0 = time.perf_counter()
        res = scc_iterative(state, bus, eps=1e-6)
        assert time.perf_counter() - t0 < 1.0
        assert res.converged and res.iterations <= 10
        trace = np.array(res.dv_trace)
        assert np.all(np.diff(trace, axis=0) >= -1e-12)
        assert trace.min() >= -1.0 and trace.max() <= 0.0


@pytest.mark.parametrize("name", FIXTURES)
def test_saturation_consistency(name):
    system = FIXTURES[name]
    state, _ = states(system)
    for bus in system.monitored_buses:
        res = scc_iterative(state, bus)
        np.testing.assert_array_equal(res.per_ibr_injections,
                                      ibr_injection(res.dv, state.droops, state.i_max))


def test_explicit_and_iterative_agree_without_caps():
    system = FIXTURES["39bus"]
    state, _ = states(system)
    loose = SccState(state.z, state.ibr_buses, state.droops, np.full_like(state.i_max, 1e6))
    for bus in system.monitored_buses:
        ex = scc_explicit(loose, bus)
        it = scc_iterative(loose, bus, eps=1e-10)
        assert it.magnitude == pytest.approx(ex.magnitude, abs=1e-6)


@given(st.integers(0, 3), st.floats(1.05, 4.0), st.integers(0, 38))
def test_droop_monotonicity(unit, factor, bus):
    state, _ = _STATE39
    d = state.droops.copy()
    d[unit] *= factor
    raised = SccState(state.z, state.ibr_buses, d, state.i_max)
    assert scc_iterative(raised, bus).magnitude >= scc_iterative(state, bus).magnitude - 1e-6


def test_k_max_exceeded_carries_trace():
    system = FIXTURES["39bus"]
    state, _ = _STATE39
    with pytest.raises(SccConvergenceError) as err:
        scc_iterative(state, system.monitored_buses[0], eps=1e-15, k_max=1)
    assert len(err.value.trace) >= 1


def test_invalid_inputs():
    with pytest.raises(ValueError):
        SccState(np.eye(2), np.array([0]), np.array([-1.0]), np.array([1.0]))
    with pytest.raises(ValueError):
        scc_iterative(sg_line()[1], 0, eps=0.0)
    with pytest.raises(NetworkError):
        scc_conventional(SccState(np.zeros((1, 1)), np.zeros(0, int), np.zeros(0), np.zeros(0)), 0)
