import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from stabplan.network import NetworkError, OperatingPoint, strength_admittance
from stabplan.strength import StrengthPoint, build_equivalent_admittance, gscr, min_eigenvalue
from stabplan.workbench.fixtures import five_bus, ieee39

import oracles

SYS5 = five_bus()
SYS39 = ieee39()
# pinned from the first run, cross-checked against the bisection oracle below
GSCR39_BASE = 5.176802471259366


def base39():
    """All SGs on, 200 MVA SC and 100 MW GFM per wind bus, wind at 60 % of capacity."""
    return dict(commitments=np.ones(len(SYS39.sgs)), sc_capacities=np.full(4, 200.0),
                gfm_capacities=np.full(4, 100.0),
                gfl_powers=np.array([0.6 * u.capacity for u in SYS39.gfls]))


def test_scalar_equivalent_admittance():
    sp = StrengthPoint(np.array([0.5]), np.array([[-5j]]))
    np.testing.assert_allclose(build_equivalent_admittance(sp, [0]), [[10.0]])


def test_doubling_power_halves_rows():
    y = strength_admittance(SYS39, OperatingPoint.for_system(SYS39, sc_capacity=np.full(4, 100.0)))
    p = np.array([3.0, 4.0, 2.0, 5.0])
    buses = [31, 32, 33, 34]
    a = build_equivalent_admittance(StrengthPoint(p, y), buses)
    b = build_equivalent_admittance(StrengthPoint(2 * p, y), buses)
    np.testing.assert_allclose(b, a / 2, rtol=1e-14)


def test_39_bus_equivalent_matches_dense_oracle():
    point = OperatingPoint.for_system(SYS39, sc_capacity=np.full(4, 150.0),
                                      gfm_capacity=np.full(4, 80.0))
    y = strength_admittance(SYS39, point)
    p = np.array([6.0, 5.0, 4.0, 7.0])
    got = build_equivalent_admittance(StrengthPoint(p, y), [31, 32, 33, 34])
    expect = np.diag(1 / p) @ (-np.imag(oracles.kron_reduce(y, [31, 32, 33, 34])))
    assert got.shape == (4, 4)
    np.testing.assert_allclose(got, expect, rtol=1e-10)


def test_nonpositive_power_rejected():
    with pytest.raises(ValueError):
        build_equivalent_admittance(StrengthPoint(np.array([0.0]), np.array([[-5j]])), [0])


@pytest.mark.parametrize("m, expect", [(np.eye(3), 1.0), (np.diag([2.0, 5.0]), 2.0)])
def test_min_eigenvalue_simple(m, expect):
    assert min_eigenvalue(m) == pytest.approx(expect)


def random_ds(rng, n):
    s = rng.standard_normal((n, n))
    s = s + s.T + 2 * n * np.eye(n) * rng.uniform(-0.5, 1.0)
    return np.diag(rng.uniform(0.2, 5.0, n)) @ s


def test_min_eigenvalue_matches_bisection(rng):
    for trial in range(50):
        m = random_ds(rng, 2 + trial % 7)
        assert min_eigenvalue(m) == pytest.approx(oracles.charpoly_min_eig(m), abs=1e-8)


def test_min_eigenvalue_rejects_nonfinite():
    with pytest.raises(ValueError):
        min_eigenvalue(np.array([[1.0, np.nan], [np.nan, 1.0]]))


def test_min_eigenvalue_is_real_for_gscr_structure(rng):
    m = random_ds(rng, 6)
    lam = np.linalg.eigvals(m)
    assert np.max(np.abs(lam.imag)) < 1e-10
    assert min_eigenvalue(m) == pytest.approx(lam.real.min(), abs=1e-9)


def test_39_bus_regression_pin():
    values = {gscr(SYS39, **base39()) for _ in range(3)}
    assert len(values) == 1
    value = values.pop()
    assert value == pytest.approx(GSCR39_BASE, rel=1e-12)
    pt = base39()
    point = OperatingPoint.for_system(SYS39, pt["commitments"], pt["sc_capacities"],
                                      pt["gfm_capacities"], pt["gfl_powers"])
    y = strength_admittance(SYS39, point)
    eq = np.diag(100.0 / pt["gfl_powers"]) @ -np.imag(oracles.kron_reduce(y, [31, 32, 33, 34]))
    assert value == pytest.approx(oracles.charpoly_min_eig(eq), abs=1e-8)


def test_commitment_sweep_is_monotone():
    p = np.array([300.0])
    values = {}
    for on in itertools.product((0, 1), repeat=len(SYS5.sgs)):
        if any(on):
            values[on] = gscr(SYS5, np.array(on, float), [50.0], [40.0], p)
    for on, v in values.items():
        for g in range(len(on)):
            if on[g] == 0:
                more = list(on)
                more[g] = 1
                assert values[tuple(more)] >= v - 1e-12


@given(st.floats(50.0, 440.0), st.floats(1.01, 3.0))
def test_more_gfl_output_weakens(p, factor):
    on = np.ones(4)
    assert gscr(SYS5, on, [0.0], [0.0], [min(p * factor, 1e4)]) < gscr(SYS5, on, [0.0], [0.0], [p])


@given(st.floats(0.0, 300.0), st.floats(0.0, 300.0))
def test_sc_capacity_monotone(a, b):
    lo, hi = sorted((a, b))
    pt = base39()
    va = gscr(SYS39, pt["commitments"], np.full(4, lo), pt["gfm_capacities"], pt["gfl_powers"])
    vb = gscr(SYS39, pt["commitments"], np.full(4, hi), pt["gfm_capacities"], pt["gfl_powers"])
    assert vb >= va - 1e-12


@given(st.floats(0.05, 20.0))
def test_scale_law(alpha):
    pt = base39()
    g1 = gscr(SYS39, **pt)
    pt["gfl_powers"] = alpha * pt["gfl_powers"]
    assert gscr(SYS39, **pt) == pytest.approx(g1 / alpha, rel=1e-9)


def test_zero_gfm_equals_system_without_gfm():
    no_gfm = dataclasses.replace(SYS39, ibr_units=SYS39.gfls, max_gfm=0)
    pt = base39()
    a = gscr(SYS39, pt["commitments"], pt["sc_capacities"], np.zeros(4), pt["gfl_powers"])
    b = gscr(no_gfm, pt["commitments"], pt["sc_capacities"], np.zeros(0), pt["gfl_powers"])
    assert a == pytest.approx(b, rel=1e-14)


def test_no_source_is_an_error():
    with pytest.raises(NetworkError):
        gscr(SYS5, np.zeros(4), [0.0], [0.0], [100.0])


def test_idle_gfl_gives_infinity():
    assert gscr(SYS5, np.ones(4), [0.0], [0.0], [0.0]) == float("inf")
