"""Boundary-aware linear surrogates for SCC and gSCR, and active sampling.

A surrogate reads

    g_hat = sum k_g x_g + sum k_s S_s + sum k_cm S_cm + sum k_cl P_cl + k_0

with commitments ``x_g`` in {0, 1}, capacities in MVA and powers in MW.
Fitting splits the samples by their exact metric into a violating set, a
boundary band of width ``nu`` and a safe set.  Least squares is taken over
the band only; violating samples must be predicted strictly below the limit
and safe samples at or above it.  The fit is therefore conservative on its
training data by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from .network import (NetworkError, OperatingPoint, PowerSystem, build_base_admittance,
                      invert_to_impedance, scc_admittance)
from .shortcircuit import build_scc_state, scc_iterative
from .solver import QpProblem, SolveRequest, solve_qp
from .strength import gscr

logger = logging.getLogger(__name__)

#: Relative margin that turns the strict "below the limit" side into ``<= limit - delta``.
STRICT_MARGIN = 1e-3
#: Capacities and powers are handed to the QP in GW.
FIT_SCALE = 1e-3
#: Weight of the pull toward ``K0`` that pins degenerate fits.
TIE_BREAK = 1e-10
#: Relative slack when reading a prediction as "at or above the limit";
#: absorbs rounding in fitted coefficients, far below ``STRICT_MARGIN``.
SIDE_TOL = 1e-9


class FitInfeasibleError(ValueError):
    """No linear surrogate separates the violating and safe samples."""


@dataclass(frozen=True)
class FeatureLayout:
    """Names of the surrogate inputs, grouped by kind, in evaluation order.

    ``gfm_feature`` selects the GFM quantity: ``"capacity"`` (normal rating,
    used for gSCR) or ``"overload"`` (temporary overloading capacity, used
    for SCC because the droop scales with it).
    """

    sgs: tuple[str, ...]
    scs: tuple[str, ...]
    gfms: tuple[str, ...]
    gfls: tuple[str, ...]
    gfm_feature: str = "capacity"

    @classmethod
    def for_system(cls, system: PowerSystem, gfm_feature: str = "capacity") -> "FeatureLayout":
        if gfm_feature not in ("capacity", "overload"):
            raise ValueError("gfm_feature must be 'capacity' or 'overload'")
        return cls(tuple(u.id for u in system.sgs), tuple(u.id for u in system.scs),
                   tuple(u.id for u in system.gfms), tuple(u.id for u in system.gfls), gfm_feature)

    @property
    def size(self) -> int:
        return len(self.sgs) + len(self.scs) + len(self.gfms) + len(self.gfls)

    @property
    def names(self) -> tuple[str, ...]:
        return self.sgs + self.scs + self.gfms + self.gfls

    @property
    def units(self) -> tuple[str, ...]:
        return (("1",) * len(self.sgs) + ("MVA",) * len(self.scs)
                + ("MW",) * (len(self.gfms) + len(self.gfls)))

    @property
    def scale(self) -> np.ndarray:
        """Multiplier from stored units to fitting units (binary 1, capacities to GW)."""
        return np.array([1.0] * len(self.sgs) + [FIT_SCALE] * (self.size - len(self.sgs)))

    def featurize(self, point: OperatingPoint) -> np.ndarray:
        gfm = point.overload if self.gfm_feature == "overload" else point.gfm_capacity
        return np.concatenate([point.commitments, point.sc_capacity, gfm, point.gfl_power]).astype(float)


@dataclass(frozen=True)
class SampleRecord:
    features: np.ndarray
    label: float
    hour: int = -1
    node: int = -1
    iteration: int = 0


@dataclass(frozen=True)
class LinearCoefficients:
    """Surrogate coefficients in stored units (per unit of metric per feature unit)."""

    layout: FeatureLayout
    k: np.ndarray
    k0: float
    limit: float
    nu: float = 0.0
    objective: float = 0.0

    def __post_init__(self):
        if len(self.k) != self.layout.size:
            raise ValueError("coefficient vector does not match the layout")

    def by_group(self) -> dict[str, np.ndarray]:
        lay = self.layout
        a = len(lay.sgs)
        b = a + len(lay.scs)
        c = b + len(lay.gfms)
        return {"sg": self.k[:a], "sc": self.k[a:b], "gfm": self.k[b:c], "gfl": self.k[c:]}


@dataclass(frozen=True)
class Partition:
    omega1: tuple[SampleRecord, ...]
    omega2: tuple[SampleRecord, ...]
    omega3: tuple[SampleRecord, ...]


def initial_coefficients(layout: FeatureLayout, limit: float) -> LinearCoefficients:
    """``K0``: all slopes zero and intercept at the limit, so the constraint is redundant."""
    return LinearCoefficients(layout, np.zeros(layout.size), float(limit), float(limit))


def partition_samples(samples: Sequence[SampleRecord], limit: float, nu: float) -> Partition:
    if nu < 0:
        raise ValueError("nu must be >= 0")
    o1, o2, o3 = [], [], []
    for s in samples:
        if s.label < limit:
            o1.append(s)
        elif s.label < limit + nu:
            o2.append(s)
        else:
            o3.append(s)
    return Partition(tuple(o1), tuple(o2), tuple(o3))


def evaluate_linear(k: LinearCoefficients, features) -> float | np.ndarray:
    """``k . features + k0``; ``features`` may be one vector or a row-stacked matrix."""
    f = np.asarray(features, dtype=float)
    if f.shape[-1] != len(k.k):
        raise ValueError(f"expected {len(k.k)} features, got {f.shape[-1]}")
    out = f @ k.k + k.k0
    return float(out) if np.ndim(out) == 0 else out


def _matrix(records: Sequence[SampleRecord], n: int) -> tuple[np.ndarray, np.ndarray]:
    if not records:
        return np.zeros((0, n)), np.zeros(0)
    return (np.vstack([r.features for r in records]).astype(float),
            np.array([r.label for r in records], dtype=float))


def _fit_qp(partition: Partition, layout: FeatureLayout, limit: float):
    """QP in scaled coordinates ``theta = (k / scale, k0)``."""
    n = layout.size
    scale = layout.scale
    delta = STRICT_MARGIN * abs(limit)
    f2, y2 = _matrix(partition.omega2, n)
    f1, _ = _matrix(partition.omega1, n)
    f3, _ = _matrix(partition.omega3, n)

    def design(f):
        return np.hstack([f * scale, np.ones((len(f), 1))])

    a2 = design(f2)
    theta0 = np.zeros(n + 1)
    theta0[-1] = limit
    gram = a2.T @ a2
    mu = TIE_BREAK * max(1.0, np.trace(gram) / (n + 1))
    p = 2.0 * (gram + mu * np.eye(n + 1))
    q = -2.0 * (a2.T @ y2 + mu * theta0)
    offset = float(y2 @ y2 + mu * theta0 @ theta0)
    a_ub = np.vstack([design(f1), -design(f3)])
    b_ub = np.concatenate([np.full(len(f1), limit - delta), np.full(len(f3), -limit)])
    return QpProblem(p, q, a_ub=a_ub, b_ub=b_ub, offset=offset), a2, y2


def _unscale(theta: np.ndarray, layout: FeatureLayout) -> tuple[np.ndarray, float]:
    return theta[:-1] * layout.scale, float(theta[-1])


def fit_coefficients(partition: Partition, layout: FeatureLayout, limit: float,
                     nu: float = 0.0, tolerance: float = 1e-10) -> LinearCoefficients:
    """Boundary-aware least squares.

    Minimizes the squared error over the boundary band subject to
    ``g_hat <= limit - delta`` on violating samples and ``g_hat >= limit``
    on safe samples.  Ties between equally good fits are broken toward
    ``K0`` by a vanishing quadratic pull.

    Raises
    ------
    FitInfeasibleError
        If the constraints cannot all hold; a larger ``nu`` moves safe
        samples into the band and relaxes them.
    """
    qp, a2, y2 = _fit_qp(partition, layout, limit)
    res = solve_qp(SolveRequest(qp, tolerance=tolerance))
    if res.status != "optimal":
        raise FitInfeasibleError(
            f"no separating surrogate with nu={nu:g} "
            f"({len(partition.omega1)} violating, {len(partition.omega3)} safe samples); increase nu")
    k, k0 = _unscale(res.x, layout)
    resid = a2 @ res.x - y2
    return LinearCoefficients(layout, k, k0, float(limit), float(nu), float(resid @ resid))


def fit_least_squares(samples: Sequence[SampleRecord], layout: FeatureLayout,
                      limit: float) -> LinearCoefficients:
    """Plain least squares over all samples (comparison baseline, no side constraints)."""
    f, y = _matrix(samples, layout.size)
    a = np.hstack([f * layout.scale, np.ones((len(f), 1))])
    theta = np.linalg.lstsq(a, y, rcond=None)[0] if len(y) else np.r_[np.zeros(layout.size), limit]
    k, k0 = _unscale(theta, layout)
    resid = a @ theta - y
    return LinearCoefficients(layout, k, k0, float(limit), 0.0, float(resid @ resid))


def default_nu_grid(limit: float, points: int = 21) -> np.ndarray:
    return np.geomspace(1e-3 * limit, 0.5 * limit, points)


def _separable(partition: Partition, layout: FeatureLayout, limit: float) -> bool:
    """LP feasibility of the side constraints alone."""
    f1, _ = _matrix(partition.omega1, layout.size)
    f3, _ = _matrix(partition.omega3, layout.size)
    if len(f1) == 0 or len(f3) == 0:
        return True
    delta = STRICT_MARGIN * abs(limit)
    a = np.vstack([np.hstack([f1 * layout.scale, np.ones((len(f1), 1))]),
                   -np.hstack([f3 * layout.scale, np.ones((len(f3), 1))])])
    b = np.concatenate([np.full(len(f1), limit - delta), np.full(len(f3), -limit)])
    res = linprog(np.zeros(layout.size + 1), A_ub=a, b_ub=b,
                  bounds=[(None, None)] * (layout.size + 1), method="highs")
    return res.status == 0


def choose_nu(samples: Sequence[SampleRecord], layout: FeatureLayout, limit: float,
              nu_grid: Sequence[float] | None = None) -> float:
    """Smallest grid value of ``nu`` for which the fit is feasible.

    Raising ``nu`` only moves samples from the safe set into the band, so
    feasibility is monotone along the grid and bisection finds the first
    feasible entry.
    """
    grid = default_nu_grid(limit) if nu_grid is None else np.asarray(nu_grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("nu_grid must be strictly ascending")

    def ok(i):
        return _separable(partition_samples(samples, limit, grid[i]), layout, limit)

    if ok(0):
        return float(grid[0])
    if not ok(len(grid) - 1):
        n1 = sum(s.label < limit for s in samples)
        raise FitInfeasibleError(
            f"no nu up to {grid[-1]:g} separates the data ({n1} of {len(samples)} samples violate)")
    lo, hi = 0, len(grid) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return float(grid[hi])


def fit_auto(samples: Sequence[SampleRecord], layout: FeatureLayout, limit: float,
             nu_grid: Sequence[float] | None = None) -> LinearCoefficients:
    """:func:`choose_nu` followed by :func:`fit_coefficients`."""
    nu = choose_nu(samples, layout, limit, nu_grid)
    return fit_coefficients(partition_samples(samples, limit, nu), layout, limit, nu)


def misclassification_count(k: LinearCoefficients, samples: Sequence[SampleRecord],
                            limit: float | None = None) -> int:
    """Samples whose prediction falls on the other side of the limit than the exact value.

    A value exactly at the limit counts as satisfied on either side.
    """
    limit = k.limit if limit is None else limit
    if not samples:
        return 0
    f, y = _matrix(samples, k.layout.size)
    pred = evaluate_linear(k, f)
    return int(np.sum((y >= limit) != (pred >= limit - SIDE_TOL * abs(limit))))


def violations_of_fit(k: LinearCoefficients, samples: Sequence[SampleRecord]) -> list[int]:
    """Indices breaking the side constraints of ``k``: violating samples not
    predicted strictly below the limit, or safe samples (beyond the band)
    predicted below it. Both checks allow ``SIDE_TOL`` relative slack for
    solver rounding."""
    limit = k.limit
    delta = STRICT_MARGIN * abs(limit)
    out = []
    for i, s in enumerate(samples):
        pred = evaluate_linear(k, s.features)
        if s.label < limit and pred > limit - delta + SIDE_TOL * abs(limit):
            out.append(i)
        elif s.label >= limit + k.nu and pred < limit - SIDE_TOL * abs(limit):
            out.append(i)
    return out


# -- exact metric evaluators -------------------------------------------------

@dataclass
class Metric:
    """Exact metric paired with the layout of its surrogate."""

    name: str
    limit: float
    layout: FeatureLayout
    evaluate: Callable[[OperatingPoint], float]

    def sample(self, point: OperatingPoint, hour=-1, node=-1, iteration=0) -> SampleRecord:
        return SampleRecord(self.layout.featurize(point), float(self.evaluate(point)),
                            hour, node, iteration)


def scc_metric(system: PowerSystem, bus: int, limit: float | None = None,
               eps: float = 1e-6, k_max: int = 50) -> Metric:
    """SCC magnitude (per unit) at ``bus``; an ungrounded network scores 0."""
    y0 = build_base_admittance(system)
    limit = system.scc_limits[bus] if limit is None else limit

    def evaluate(point: OperatingPoint) -> float:
        try:
            z = invert_to_impedance(scc_admittance(system, point, y0=y0))
        except NetworkError:
            return 0.0
        return scc_iterative(build_scc_state(system, point, z=z), bus, eps=eps, k_max=k_max).magnitude

    layout = FeatureLayout.for_system(system, gfm_feature="overload")
    return Metric(f"scc@{bus}", float(limit), layout, evaluate)


def gscr_metric(system: PowerSystem, limit: float | None = None, cap_factor: float = 10.0) -> Metric:
    """System gSCR; infinite values (no GFL output) are capped at ``cap_factor * limit``
    and an ungrounded network scores 0."""
    y0 = build_base_admittance(system)
    limit = system.gscr_limit if limit is None else limit
    cap = cap_factor * limit

    def evaluate(point: OperatingPoint) -> float:
        try:
            value = gscr(system, point.commitments, point.sc_capacity, point.gfm_capacity,
                         point.gfl_power, y0=y0)
        except NetworkError:
            return 0.0
        return float(min(value, cap))

    return Metric("gscr", float(limit), FeatureLayout.for_system(system), evaluate)


def system_metrics(system: PowerSystem, scc: bool = True, strength: bool = True) -> list[Metric]:
    out = []
    if scc:
        out.extend(scc_metric(system, b) for b in system.monitored_buses)
    if strength and system.gfls:
        out.append(gscr_metric(system))
    return out


# -- active sampling ----------------------------------------------------------

@dataclass(frozen=True)
class PlannedPoint:
    hour: int
    node: int
    point: OperatingPoint


@dataclass
class IterationLog:
    m: int
    metric: str
    n_samples: int
    n_added: int
    n_mc: int
    objective: float
    nu: float
    plan_cost: float = float("nan")
    n_mc_lsq: int = -1


@dataclass
class SamplingResult:
    coefficients: dict[str, LinearCoefficients]
    log: list[IterationLog] = field(default_factory=list)
    samples: dict[str, list[SampleRecord]] = field(default_factory=dict)
    converged: bool = False

    def n_mc(self, metric: str | None = None, baseline: bool = False) -> list[int]:
        """Per-iteration misclassification counts, summed over metrics unless one is named.

        ``baseline=True`` gives the counts of the least-squares shadow fit
        (same data, same planned points); -1 where it was not tracked.
        """
        by_m: dict[int, int] = {}
        for row in self.log:
            if metric is None or row.metric == metric:
                val = row.n_mc_lsq if baseline else row.n_mc
                prev = by_m.get(row.m, 0)
                by_m[row.m] = -1 if min(val, prev) < 0 else prev + val
        return [by_m[m] for m in sorted(by_m)]


class PlannerFailure(RuntimeError):
    def __init__(self, message, log):
        super().__init__(message)
        self.log = log


def explore_points(points: Sequence[PlannedPoint], system: PowerSystem, count: int,
                   seed: int = 0) -> list[PlannedPoint]:
    """Copies of planned points with every surrogate input redrawn.

    Investments are drawn uniformly in their bounds, committable SGs are
    switched on with probability one half and GFL output is uniform up to
    installed capacity.  Planned investments are constant over the horizon
    and planned hours hug the limit, so hourly samples alone say little
    about the slope of the metric away from the current plan.
    """
    rng = np.random.default_rng(seed)
    if not points or count <= 0:
        return []
    sc_hi = np.array([u.s_max for u in system.scs])
    gfm_hi = np.array([u.s_max for u in system.gfms])
    beta = np.array([u.overload for u in system.gfms])
    free = np.array([u.committable for u in system.sgs], dtype=bool)
    gfl_cap = np.array([u.capacity for u in system.gfls])
    out = []
    for i in rng.choice(len(points), size=count, replace=count > len(points)):
        base = points[int(i)]
        x = np.where(free, rng.integers(0, 2, len(free)), 1.0).astype(float)
        sc = rng.uniform(0, 1, len(sc_hi)) * sc_hi
        gfm = rng.uniform(0, 1, len(gfm_hi)) * gfm_hi
        over = gfm * (1 + rng.uniform(0, 1, len(gfm)) * (beta - 1))
        p = rng.uniform(0, 1, len(gfl_cap)) * gfl_cap
        out.append(PlannedPoint(base.hour, base.node, OperatingPoint(x, sc, gfm, p, over)))
    return out


def active_sampling(planner: Callable[[Mapping[str, LinearCoefficients]], Sequence[PlannedPoint]],
                    metrics: Sequence[Metric], m_max: int = 10, nu_grid=None,
                    fit: str = "boundary", exploration: Sequence[PlannedPoint] | Callable | None = None,
                    planner_cost: Callable[[], float] | None = None) -> SamplingResult:
    """Alternate planning and exact auditing until no sample is misclassified.

    Parameters
    ----------
    planner : maps a coefficient set per metric name to the planned hourly
        operating points.  It may raise; the error is re-raised as
        :class:`PlannerFailure` carrying the iteration log.
    metrics : exact evaluators with their limits and layouts.
    m_max : last refit iteration.
    fit : ``"boundary"`` for the conservative fit, ``"lsq"`` for the plain
        least-squares baseline.
    exploration : extra points added to the initial data set (or a callable
        receiving the initial planned points and returning them).

    Notes
    -----
    A plain least-squares fit of the same data set is kept alongside the
    working coefficients and audited on the same planned points, giving
    ``IterationLog.n_mc_lsq``.  It never steers the planner.
    """
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    if fit not in ("boundary", "lsq"):
        raise ValueError("fit must be 'boundary' or 'lsq'")
    coeffs = {mt.name: initial_coefficients(mt.layout, mt.limit) for mt in metrics}
    shadow = dict(coeffs)
    data: dict[str, list[SampleRecord]] = {mt.name: [] for mt in metrics}
    result = SamplingResult(coeffs, samples=data)
    for m in range(m_max + 1):
        try:
            points = list(planner(coeffs))
        except Exception as exc:
            raise PlannerFailure(f"planner failed at iteration {m}: {exc}", result.log) from exc
        cost = planner_cost() if planner_cost else float("nan")
        extra = []
        if m == 0 and exploration is not None:
            extra = list(exploration(points) if callable(exploration) else exploration)
        any_added = False
        for mt in metrics:
            k = coeffs[mt.name]
            samples = [mt.sample(p.point, p.hour, p.node, m) for p in points]
            n_mc = misclassification_count(k, samples)
            n_mc_lsq = misclassification_count(shadow[mt.name], samples)
            if m == 0:
                added = samples + [mt.sample(p.point, p.hour, p.node, m) for p in extra]
            else:
                added = [samples[i] for i in violations_of_fit(k, samples)]
            any_added |= bool(added) and m > 0
            data[mt.name].extend(added)
            if m == 0 or added:
                if fit == "boundary":
                    coeffs[mt.name] = fit_auto(data[mt.name], mt.layout, mt.limit, nu_grid)
                else:
                    coeffs[mt.name] = fit_least_squares(data[mt.name], mt.layout, mt.limit)
                shadow[mt.name] = fit_least_squares(data[mt.name], mt.layout, mt.limit)
            result.log.append(IterationLog(m, mt.name, len(data[mt.name]), len(added), n_mc,
                                           coeffs[mt.name].objective, coeffs[mt.name].nu, cost,
                                           n_mc_lsq))
            logger.info("iteration %d %s: |Omega|=%d added=%d N_mc=%d", m, mt.name,
                        len(data[mt.name]), len(added), n_mc)
        if m > 0 and not any_added:
            result.converged = True
            break
    result.coefficients = coeffs
    return result


def random_sampling(planner: Callable[[Mapping[str, LinearCoefficients]], Sequence[PlannedPoint]],
                    metrics: Sequence[Metric], exploration: Callable, fit: str = "lsq",
                    nu_grid=None,
                    planner_cost: Callable[[], float] | None = None) -> SamplingResult:
    """Single fit on randomly drawn points, then one audited plan.

    The comparison baseline without feedback from the planner.  A first plan
    with the redundant initial coefficients only supplies hours and scenario
    nodes as templates for ``exploration``; its own points are not used for
    fitting.  The log holds one row per metric with ``m = 0``, the
    misclassification count of the plan built with the fitted surrogate.
    """
    if fit not in ("boundary", "lsq"):
        raise ValueError("fit must be 'boundary' or 'lsq'")
    coeffs = {mt.name: initial_coefficients(mt.layout, mt.limit) for mt in metrics}
    try:
        templates = list(planner(coeffs))
    except Exception as exc:
        raise PlannerFailure(f"template plan failed: {exc}", []) from exc
    drawn = list(exploration(templates))
    data = {mt.name: [mt.sample(p.point, p.hour, p.node, 0) for p in drawn] for mt in metrics}
    for mt in metrics:
        coeffs[mt.name] = (fit_auto(data[mt.name], mt.layout, mt.limit, nu_grid) if fit == "boundary"
                           else fit_least_squares(data[mt.name], mt.layout, mt.limit))
    result = SamplingResult(dict(coeffs), samples=data, converged=True)
    try:
        points = list(planner(coeffs))
    except Exception as exc:
        raise PlannerFailure(f"planner failed with the random-sample fit: {exc}", result.log) from exc
    cost = planner_cost() if planner_cost else float("nan")
    for mt in metrics:
        k = coeffs[mt.name]
        n_mc = misclassification_count(k, [mt.sample(p.point, p.hour, p.node, 0) for p in points])
        result.log.append(IterationLog(0, mt.name, len(data[mt.name]), 0, n_mc, k.objective, k.nu, cost))
    return result
