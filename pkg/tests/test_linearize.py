import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

from stabplan.linearize import (STRICT_MARGIN, FeatureLayout, FitInfeasibleError, LinearCoefficients,
                                Metric, PlannedPoint, PlannerFailure, SampleRecord, active_sampling,
                                choose_nu, evaluate_linear, explore_points, fit_auto, fit_coefficients,
                                fit_least_squares, initial_coefficients, misclassification_count,
                                partition_samples, random_sampling, violations_of_fit)
from stabplan.network import OperatingPoint
from stabplan.planning import plan_with_sampling
from stabplan.workbench.fixtures import five_bus

# one SG, one SC, one GFL: features (x, S_sc, P_gfl)
LAYOUT = FeatureLayout(("G",), ("S",), (), ("W",))


def rec(features, label):
    return SampleRecord(np.asarray(features, float), float(label))


def synthetic(rng, n, limit=3.0, noise=0.0):
    """Labels from a known plane, optionally with noise."""
    x = rng.integers(0, 2, n)
    s = rng.uniform(0, 300, n)
    p = rng.uniform(0, 400, n)
    y = 1.0 + 1.5 * x + 0.01 * s - 0.004 * p + noise * rng.standard_normal(n)
    return [rec([a, b, c], lab) for a, b, c, lab in zip(x, s, p, y)]


def sides_hold(k, samples, limit, nu):
    part = partition_samples(samples, limit, nu)
    f1 = [evaluate_linear(k, r.features) for r in part.omega1]
    f3 = [evaluate_linear(k, r.features) for r in part.omega3]
    return all(v < limit for v in f1) and all(v >= limit - 1e-9 * limit for v in f3)


def test_partition_example():
    samples = [rec([0, 0, 0], v) for v in (2.4, 2.6, 2.9)]
    part = partition_samples(samples, 2.5, 0.3)
    assert [r.label for r in part.omega1] == [2.4]
    assert [r.label for r in part.omega2] == [2.6]
    assert [r.label for r in part.omega3] == [2.9]


def test_partition_edges():
    samples = [rec([0, 0, 0], v) for v in (2.4, 2.5, 2.9)]
    assert partition_samples(samples, 2.5, 0.0).omega2 == ()
    assert [r.label for r in partition_samples(samples, 2.5, 0.1).omega2] == [2.5]
    with pytest.raises(ValueError):
        partition_samples(samples, 2.5, -1.0)


def test_separable_pair_is_classified():
    lay = FeatureLayout((), (), (), ("W",))
    samples = [rec([100.0], 4.0), rec([300.0], 2.0)]
    k = fit_coefficients(partition_samples(samples, 3.0, 0.0), lay, 3.0)
    assert evaluate_linear(k, [100.0]) >= 3.0
    assert evaluate_linear(k, [300.0]) < 3.0


def test_degenerate_all_safe_identical():
    samples = [rec([1, 50, 20], 5.0)] * 6
    k = fit_coefficients(partition_samples(samples, 3.0, 0.5), LAYOUT, 3.0)
    assert k.k0 == pytest.approx(3.0, abs=1e-9)
    np.testing.assert_allclose(k.k, 0, atol=1e-9)


def test_fit_objective_matches_independent_qp(rng):
    samples = synthetic(rng, 50, noise=0.2)
    limit, nu = 3.0, 0.8
    part = partition_samples(samples, limit, nu)
    k = fit_coefficients(part, LAYOUT, limit, nu)
    delta = STRICT_MARGIN * limit
    f2 = np.array([r.features for r in part.omega2])
    y2 = np.array([r.label for r in part.omega2])
    f1 = np.array([r.features for r in part.omega1])
    f3 = np.array([r.features for r in part.omega3])
    sc = np.array([1.0, 1e-3, 1e-3])

    def pred(theta, f):
        return f @ (theta[:3] * sc) + theta[3]

    cons = [{"type": "ineq", "fun": lambda t: limit - delta - pred(t, f1)},
            {"type": "ineq", "fun": lambda t: pred(t, f3) - limit}]
    start = np.r_[k.k / sc, k.k0] + 0.05
    ref = minimize(lambda t: np.sum((pred(t, f2) - y2) ** 2), start, constraints=cons,
                   method="SLSQP", options={"ftol": 1e-14, "maxiter": 1000})
    assert ref.success
    assert k.objective == pytest.approx(ref.fun, rel=1e-6, abs=1e-9)


def test_infeasible_fit_asks_for_larger_nu():
    samples = [rec([1, 0, 0], 2.0), rec([1, 0, 0], 4.0)]
    with pytest.raises(FitInfeasibleError, match="increase nu"):
        fit_coefficients(partition_samples(samples, 3.0, 0.1), LAYOUT, 3.0)


def test_choose_nu_cases(rng):
    grid = [0.01, 0.1, 0.5, 1.0]
    assert choose_nu(synthetic(rng, 40), LAYOUT, 3.0, grid) == 0.01
    assert choose_nu([], LAYOUT, 3.0, grid) == 0.01
    # identical features labelled 2.9 (violating) and 3.4 (safe): only nu > 0.4 helps
    overlap = [rec([1, 10, 10], 2.9), rec([1, 10, 10], 3.4), rec([0, 0, 0], 1.0)]
    assert choose_nu(overlap, LAYOUT, 3.0, grid) == 0.5
    with pytest.raises(FitInfeasibleError):
        choose_nu(overlap, LAYOUT, 3.0, [0.01, 0.1])
    with pytest.raises(ValueError):
        choose_nu(overlap, LAYOUT, 3.0, [0.5, 0.1])


def test_evaluate_linear():
    k = LinearCoefficients(LAYOUT, np.array([1.0, 2.0, 3.0]), 0.5, 3.0)
    assert evaluate_linear(k, np.zeros(3)) == 0.5
    assert evaluate_linear(k, np.ones(3)) == 6.5
    assert evaluate_linear(k, [1.0, 10.0, 100.0]) == pytest.approx(1 + 20 + 300 + 0.5)
    with pytest.raises(ValueError):
        evaluate_linear(k, np.ones(4))


def test_misclassification_count(rng):
    samples = synthetic(rng, 60)
    k_true = LinearCoefficients(LAYOUT, np.array([1.5, 0.01, -0.004]), 1.0, 3.0)
    assert misclassification_count(k_true, samples) == 0
    k0 = initial_coefficients(LAYOUT, 3.0)
    assert misclassification_count(k0, samples) == sum(r.label < 3.0 for r in samples)


@given(st.integers(0, 10_000), st.floats(0.0, 0.6))
def test_conservativeness(seed, noise):
    rng = np.random.default_rng(seed)
    samples = synthetic(rng, 40, noise=noise)
    k = fit_auto(samples, LAYOUT, 3.0, nu_grid=np.geomspace(1e-3, 3.0, 25))
    assert sides_hold(k, samples, 3.0, k.nu)
    assert violations_of_fit(k, samples) == []


@given(st.integers(0, 10_000))
def test_refit_dominance(seed):
    rng = np.random.default_rng(seed)
    samples = synthetic(rng, 60, noise=0.3)
    nu = 1.5
    old = fit_coefficients(partition_samples(samples[:30], 3.0, nu), LAYOUT, 3.0, nu)
    try:
        new = fit_coefficients(partition_samples(samples, 3.0, nu), LAYOUT, 3.0, nu)
    except FitInfeasibleError:
        return
    if sides_hold(old, samples, 3.0, nu):
        band = partition_samples(samples, 3.0, nu).omega2
        old_obj = sum((evaluate_linear(old, r.features) - r.label) ** 2 for r in band)
        assert new.objective <= old_obj * (1 + 1e-9) + 1e-12


def test_determinism(rng):
    samples = synthetic(rng, 50, noise=0.3)
    a = fit_auto(samples, LAYOUT, 3.0)
    b = fit_auto(list(samples), LAYOUT, 3.0)
    np.testing.assert_array_equal(a.k, b.k)
    assert a.k0 == b.k0


def test_least_squares_recovers_plane(rng):
    k = fit_least_squares(synthetic(rng, 40), LAYOUT, 3.0)
    np.testing.assert_allclose(k.k, [1.5, 0.01, -0.004], atol=1e-9)
    assert k.k0 == pytest.approx(1.0)


# -- active sampling on a toy planner ------------------------------------------

def toy_metric(offset=0.0):
    def evaluate(point):
        return 1.0 + 1.5 * point.commitments[0] + 0.01 * point.sc_capacity[0] \
            - 0.004 * point.gfl_power[0] + offset
    return Metric("toy", 3.0, LAYOUT, evaluate)


def toy_points(k=None, n=12):
    pts = []
    for h in range(n):
        p = 40.0 * h
        pts.append(PlannedPoint(h, 0, OperatingPoint(np.array([1.0]), np.array([50.0]),
                                                     np.zeros(0), np.array([p]))))
    return pts


def test_never_binding_terminates_after_first_iteration():
    res = active_sampling(lambda k: toy_points(), [toy_metric(offset=10.0)], m_max=5)
    assert res.converged
    assert [r.m for r in res.log] == [0, 1]
    assert res.log[-1].n_added == 0 and res.n_mc() == [0, 0]


def test_planner_failure_carries_log():
    calls = []

    def planner(k):
        calls.append(1)
        if len(calls) > 1:
            raise RuntimeError("solver down")
        return toy_points()

    with pytest.raises(PlannerFailure) as err:
        active_sampling(planner, [toy_metric()], m_max=3)
    assert len(err.value.log) == 1


def test_m_max_validated():
    with pytest.raises(ValueError):
        active_sampling(lambda k: [], [toy_metric()], m_max=0)


def test_random_sampling_is_single_shot():
    calls = []

    def planner(k):
        calls.append(k["toy"])
        return toy_points()

    res = random_sampling(planner, [toy_metric()], lambda pts: pts * 2, fit="lsq")
    assert len(calls) == 2 and res.converged
    assert len(res.n_mc()) == 1


@pytest.fixture(scope="module")
def sampled_5bus():
    return plan_with_sampling(five_bus(), validate=True)


def test_five_bus_active_sampling_converges(sampled_5bus):
    n_mc = sampled_5bus.sampling.n_mc()
    assert sampled_5bus.sampling.converged
    assert len(n_mc) <= 11 and n_mc[-1] == 0
    assert all(b <= a for a, b in zip(n_mc[1:], n_mc[2:]))
    assert sampled_5bus.report.scc_rate == 0 and sampled_5bus.report.gscr_rate == 0


def test_least_squares_on_same_data_misclassifies_more(sampled_5bus):
    boundary = sampled_5bus.sampling.n_mc()
    lsq = sampled_5bus.sampling.n_mc(baseline=True)
    assert boundary[0] == lsq[0]
    assert all(b > a for a, b in zip(boundary[1:], lsq[1:]))


def test_explore_points_respect_bounds():
    system = five_bus()
    base = toy_points(n=3)
    base = [PlannedPoint(p.hour, 0, OperatingPoint.for_system(system)) for p in base]
    pts = explore_points(base, system, 200, seed=3)
    again = explore_points(base, system, 200, seed=3)
    assert len(pts) == 200
    for a, b in zip(pts, again):
        np.testing.assert_array_equal(a.point.gfl_power, b.point.gfl_power)
    must_run = [i for i, g in enumerate(system.sgs) if not g.committable]
    for pp in pts:
        pt = pp.point
        assert set(np.unique(pt.commitments)) <= {0.0, 1.0}
        assert np.all(pt.commitments[must_run] == 1)
        assert np.all((0 <= pt.sc_capacity) & (pt.sc_capacity <= 300))
        assert np.all((pt.gfm_capacity <= pt.overload) & (pt.overload <= 1.2 * pt.gfm_capacity + 1e-9))
        assert 0 <= pt.gfl_power[0] <= 450
    assert explore_points([], system, 10) == []
