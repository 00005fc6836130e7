"""Scenario-tree planning MILP with linearized stability constraints.

Investment decisions (SC and GFM sizes, GFM temporary overload) are shared
by all scenario nodes; each node carries a full-horizon operating problem
with unit commitment, DC power flow, battery dispatch, curtailment and load
shedding.  Linearized SCC and gSCR constraints tie the two stages together
hour by hour.

Units: powers MW, energies MWh, capacities MVA/MW, costs £.  The objective
is annual: investment £/yr plus the expected operating cost of the modelled
horizon scaled to 8760 h.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .linearize import FeatureLayout, LinearCoefficients, Metric, PlannedPoint, system_metrics
from .network import OperatingPoint, PowerSystem
from .solver import MilpModel, ModelBuilder, SolveRequest, solve_milp

logger = logging.getLogger(__name__)

HOURS_PER_YEAR = 8760.0
#: Floor on the number of exploration samples drawn by :func:`plan_with_sampling`.
DEFAULT_EXPLORE = 1000


class PlanningError(ValueError):
    """Inconsistent planning inputs."""


class PlanningInfeasible(RuntimeError):
    """The planning model has no feasible point."""


@dataclass(frozen=True)
class ScenarioNode:
    """One scenario path over the full horizon.

    ``loads`` maps bus id to MW per step; ``availability`` maps GFL profile
    names to per-unit availability per step.
    """

    probability: float
    loads: Mapping[int, np.ndarray]
    availability: Mapping[str, np.ndarray]
    name: str = ""


@dataclass(frozen=True)
class ScenarioTree:
    nodes: tuple[ScenarioNode, ...]
    dt: float = 1.0

    def __post_init__(self):
        if not self.nodes:
            raise PlanningError("scenario tree has no nodes")
        probs = np.array([n.probability for n in self.nodes])
        if np.any(probs <= 0):
            raise PlanningError("node probabilities must be > 0")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise PlanningError(f"node probabilities sum to {probs.sum():.12g}, not 1")
        if self.dt <= 0:
            raise PlanningError("dt must be > 0")
        lengths = {len(v) for n in self.nodes for v in list(n.loads.values()) + list(n.availability.values())}
        if len(lengths) > 1:
            raise PlanningError(f"profile lengths disagree: {sorted(lengths)}")

    @property
    def horizon(self) -> int:
        node = self.nodes[0]
        for v in list(node.loads.values()) + list(node.availability.values()):
            return len(v)
        return 0

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([n.probability for n in self.nodes])

    @classmethod
    def from_system(cls, system: PowerSystem, dt: float = 1.0) -> "ScenarioTree":
        """Deterministic single-node tree built from the system's base profiles."""
        return cls((ScenarioNode(1.0, {b: np.asarray(v, float) for b, v in system.loads.items()},
                                 {k: np.asarray(v, float) for k, v in system.profiles.items()},
                                 "base"),), dt)


def quantile_tree(system: PowerSystem, quantiles: Sequence[float] = (0.1, 0.5, 0.9),
                  spread: float = 0.2, seed: int = 0, dt: float = 1.0) -> ScenarioTree:
    """Test helper: one node per quantile of a multiplicative wind forecast error.

    The error is normal with standard deviation ``spread``; each node scales
    all availability profiles by ``1 + spread * z_q`` and takes the
    probability mass of the quantile's cell.  This is a convenience for
    exercising multi-node models, not a scenario-generation method.
    """
    from scipy.stats import norm

    q = np.sort(np.asarray(quantiles, dtype=float))
    if np.any((q <= 0) | (q >= 1)):
        raise PlanningError("quantiles must lie in (0, 1)")
    edges = np.concatenate([[0.0], (q[1:] + q[:-1]) / 2, [1.0]])
    probs = np.diff(edges)
    rng = np.random.default_rng(seed)
    jitter = 1 + 0.01 * rng.standard_normal(system.horizon)
    nodes = []
    for qi, pi in zip(q, probs):
        factor = 1 + spread * norm.ppf(qi)
        avail = {k: np.clip(np.asarray(v) * factor * jitter, 0, 1) for k, v in system.profiles.items()}
        nodes.append(ScenarioNode(float(pi), dict(system.loads), avail, f"q{qi:g}"))
    return ScenarioTree(tuple(nodes), dt)


@dataclass(frozen=True)
class CostConfig:
    """Investment prices (£/MVA·yr, £/MW·yr), overload cost ratio, VOLL (£/MWh) and MIP gap."""

    sc_cost: float = 1840.0
    gfm_cost: float = 19880.0
    overload_ratio: float = 0.1
    voll: float = 30000.0
    gap: float = 0.005
    allow_shedding: bool = True
    time_limit: float = 600.0

    def __post_init__(self):
        if min(self.sc_cost, self.gfm_cost, self.overload_ratio, self.voll) < 0:
            raise PlanningError("costs must be >= 0")
        if not 0 < self.gap < 1:
            raise PlanningError("gap must lie in (0, 1)")


@dataclass(frozen=True)
class Investments:
    """SC sizes (MVA) and GFM normal/overload ratings (MW) in system order."""

    sc: np.ndarray
    gfm: np.ndarray
    gfm_overload: np.ndarray

    @classmethod
    def zero(cls, system: PowerSystem) -> "Investments":
        return cls(np.zeros(len(system.scs)), np.zeros(len(system.gfms)), np.zeros(len(system.gfms)))


@dataclass(frozen=True)
class PlanOptions:
    """Which investments are open, and optional fixed investments (operation-only runs)."""

    allow_sc: bool = True
    allow_gfm: bool = True
    fixed: Investments | None = None


@dataclass
class PlanningModel:
    milp: MilpModel
    system: PowerSystem
    tree: ScenarioTree
    costs: CostConfig
    index: dict
    annual_scale: float
    stability: dict = field(default_factory=dict)


def _slack_bus(system: PowerSystem) -> int:
    """Bus of the first must-run SG, else of the first SG, else bus 0."""
    for g in system.sgs:
        if not g.committable:
            return g.bus
    return system.sgs[0].bus if system.sgs else 0


def _check_coefficients(system: PowerSystem, k: LinearCoefficients, what: str):
    layout = FeatureLayout.for_system(system, k.layout.gfm_feature)
    if k.layout.names != layout.names:
        raise PlanningError(f"{what}: coefficient layout does not match the system")


def build_planning_model(system: PowerSystem, tree: ScenarioTree,
                         k_scc: Mapping[int, LinearCoefficients] | None = None,
                         k_gscr: LinearCoefficients | None = None,
                         costs: CostConfig = CostConfig(),
                         options: PlanOptions = PlanOptions()) -> PlanningModel:
    """Assemble the planning MILP.

    ``k_scc`` maps monitored bus ids to SCC surrogates; ``k_gscr`` is the
    gSCR surrogate.  Omitting either drops that family of constraints.
    """
    k_scc = dict(k_scc or {})
    for bus, k in k_scc.items():
        system.bus_index(bus)
        _check_coefficients(system, k, f"SCC bus {bus}")
    if k_gscr is not None:
        _check_coefficients(system, k_gscr, "gSCR")
    horizon = tree.horizon
    for node in tree.nodes:
        for bus in node.loads:
            system.bus_index(bus)
        for u in system.gfls:
            if u.profile and u.profile not in node.availability:
                raise PlanningError(f"node {node.name!r} lacks availability profile {u.profile!r}")

    sb = system.s_base
    dt = tree.dt
    scale = HOURS_PER_YEAR / (horizon * dt) if horizon else 0.0
    mb = ModelBuilder()
    sgs, scs, gfms, gfls = system.sgs, system.scs, system.gfms, system.gfls
    idx: dict = {"sc_x": [], "sc_s": [], "gfm_x": [], "gfm_s": [], "gfm_o": []}

    # -- investment --------------------------------------------------------
    fixed = options.fixed
    for i, s in enumerate(scs):
        open_ = options.allow_sc and fixed is None
        x = mb.binary(f"x_sc[{s.id}]")
        cap = mb.var(f"S_sc[{s.id}]", 0.0, s.s_max, cost=costs.sc_cost)
        if fixed is not None:
            val = float(fixed.sc[i])
            mb.lb[cap] = mb.ub[cap] = val
            mb.lb[x] = mb.ub[x] = float(val > 0)
        elif not open_:
            mb.ub[x] = mb.ub[cap] = 0.0
        mb.row([(cap, 1.0), (x, -s.s_max)], "L", 0.0, f"sc_up[{s.id}]")
        if fixed is None:
            mb.row([(cap, 1.0), (x, -s.s_min)], "G", 0.0, f"sc_lo[{s.id}]")
        idx["sc_x"].append(x)
        idx["sc_s"].append(cap)
    if scs and fixed is None:
        mb.row([(x, 1.0) for x in idx["sc_x"]], "L", system.max_sc, "sc_count")
    for i, c in enumerate(gfms):
        x = mb.binary(f"x_gfm[{c.id}]")
        cap = mb.var(f"S_gfm[{c.id}]", 0.0, c.s_max,
                     cost=costs.gfm_cost * (1 - costs.overload_ratio))
        over = mb.var(f"S'_gfm[{c.id}]", 0.0, c.overload * c.s_max,
                      cost=costs.overload_ratio * costs.gfm_cost)
        if fixed is not None:
            mb.lb[cap] = mb.ub[cap] = float(fixed.gfm[i])
            mb.lb[over] = mb.ub[over] = float(fixed.gfm_overload[i])
            mb.lb[x] = mb.ub[x] = float(fixed.gfm[i] > 0)
        elif not options.allow_gfm:
            mb.ub[x] = mb.ub[cap] = mb.ub[over] = 0.0
        mb.row([(cap, 1.0), (x, -c.s_max)], "L", 0.0, f"gfm_up[{c.id}]")
        if fixed is None:
            mb.row([(cap, 1.0), (x, -c.s_min)], "G", 0.0, f"gfm_lo[{c.id}]")
        mb.row([(over, 1.0), (cap, -1.0)], "G", 0.0, f"ovl_lo[{c.id}]")
        mb.row([(over, 1.0), (cap, -c.overload)], "L", 0.0, f"ovl_up[{c.id}]")
        idx["gfm_x"].append(x)
        idx["gfm_s"].append(cap)
        idx["gfm_o"].append(over)
    if gfms and fixed is None:
        mb.row([(x, 1.0) for x in idx["gfm_x"]], "L", system.max_gfm, "gfm_count")

    # -- operation per node ------------------------------------------------
    n_nodes = len(tree.nodes)
    shape = (n_nodes, horizon)
    y = np.full(shape + (len(sgs),), -1, dtype=int)
    ysg, ysd, yst, pg = (np.full_like(y, -1) for _ in range(4))
    pcl = np.full(shape + (len(gfls),), -1, dtype=int)
    load_buses = sorted(b for b in system.loads)
    shed = np.full(shape + (len(load_buses),), -1, dtype=int)
    pch, pdch, vb = (np.full(shape + (len(gfms),), -1, dtype=int) for _ in range(3))
    energy = np.full((n_nodes, horizon + 1, len(gfms)), -1, dtype=int)
    theta = np.full(shape + (system.n_bus,), -1, dtype=int)
    flow = np.full(shape + (len(system.branches),), -1, dtype=int)
    slack = _slack_bus(system)

    for n, node in enumerate(tree.nodes):
        w = node.probability * scale
        for t in range(horizon):
            tag = f"{n},{t}"
            for g_i, g in enumerate(sgs):
                if g.committable:
                    y[n, t, g_i] = mb.binary(f"y[{g.id},{tag}]", cost=w * g.c_noload * dt)
                    ysg[n, t, g_i] = mb.binary(f"ysg[{g.id},{tag}]", cost=w * g.c_startup)
                    ysd[n, t, g_i] = mb.binary(f"ysd[{g.id},{tag}]")
                    yst[n, t, g_i] = mb.binary(f"yst[{g.id},{tag}]")
                else:
                    y[n, t, g_i] = mb.var(f"y[{g.id},{tag}]", 1.0, 1.0, cost=w * g.c_noload * dt)
                pg[n, t, g_i] = mb.var(f"p[{g.id},{tag}]", 0.0, g.p_max, cost=w * g.c_marginal * dt)
            for c_i, c in enumerate(gfls):
                avail = np.asarray(node.availability[c.profile])[t] if c.profile else 1.0
                pcl[n, t, c_i] = mb.var(f"p[{c.id},{tag}]", 0.0, max(avail, 0.0) * c.capacity)
            for l_i, bus in enumerate(load_buses):
                demand = float(np.asarray(node.loads.get(bus, np.zeros(horizon)))[t])
                ub = demand if costs.allow_shedding else 0.0
                shed[n, t, l_i] = mb.var(f"shed[{bus},{tag}]", 0.0, max(ub, 0.0), cost=w * costs.voll * dt)
            for c_i, c in enumerate(gfms):
                pch[n, t, c_i] = mb.var(f"pch[{c.id},{tag}]", 0.0)
                pdch[n, t, c_i] = mb.var(f"pdch[{c.id},{tag}]", 0.0)
                vb[n, t, c_i] = mb.binary(f"v[{c.id},{tag}]")
            for b in range(system.n_bus):
                lim = 0.0 if b == slack else np.inf
                theta[n, t, b] = mb.var(f"theta[{b},{tag}]", -lim, lim)
            for r, br in enumerate(system.branches):
                flow[n, t, r] = mb.var(f"f[{r},{tag}]", -br.rating, br.rating)
        for c_i, c in enumerate(gfms):
            for t in range(horizon + 1):
                energy[n, t, c_i] = mb.var(f"e[{c.id},{n},{t}]", 0.0)

        # unit commitment logic
        for g_i, g in enumerate(sgs):
            for t in range(horizon):
                tag = f"{g.id},{n},{t}"
                if g.committable:
                    prev = [(y[n, t - 1, g_i], -1.0)] if t > 0 else []
                    rhs = float(g.initial_on) if t == 0 else 0.0
                    mb.row([(y[n, t, g_i], 1.0), (ysg[n, t, g_i], -1.0), (ysd[n, t, g_i], 1.0)] + prev,
                           "E", rhs, f"uc_state[{tag}]")
                    src = t - g.t_startup
                    terms = [(ysg[n, t, g_i], 1.0)]
                    if src >= 0:
                        terms.append((yst[n, src, g_i], -1.0))
                    mb.row(terms, "E", 0.0, f"uc_start[{tag}]")
                    prev_on = [(y[n, t - 1, g_i], 1.0)] if t > 0 else []
                    rhs = 1.0 - (float(g.initial_on) if t == 0 else 0.0)
                    terms = [(yst[n, t, g_i], 1.0)] + prev_on
                    # Shutdowns in the previous T_mdt - 1 steps block a start decision;
                    # summing through the current step would forbid every shutdown.
                    terms += [(ysd[n, j, g_i], 1.0) for j in range(max(0, t - g.t_min_down + 1), t)]
                    mb.row(terms, "L", rhs, f"uc_mdt[{tag}]")
                    prev_on = [(y[n, t - 1, g_i], -1.0)] if t > 0 else []
                    rhs = float(g.initial_on) if t == 0 else 0.0
                    terms = [(ysd[n, t, g_i], 1.0)] + prev_on
                    terms += [(ysg[n, j, g_i], 1.0) for j in range(max(0, t - g.t_min_up + 1), t)]
                    mb.row(terms, "L", rhs, f"uc_mut[{tag}]")
                mb.row([(pg[n, t, g_i], 1.0), (y[n, t, g_i], -g.p_min)], "G", 0.0, f"pmin[{tag}]")
                mb.row([(pg[n, t, g_i], 1.0), (y[n, t, g_i], -g.p_max)], "L", 0.0, f"pmax[{tag}]")
                if t > 0 and np.isfinite(g.ramp_up):
                    mb.row([(pg[n, t, g_i], 1.0), (pg[n, t - 1, g_i], -1.0)], "L", g.ramp_up, f"ramp_up[{tag}]")
                if t > 0 and np.isfinite(g.ramp_down):
                    mb.row([(pg[n, t, g_i], 1.0), (pg[n, t - 1, g_i], -1.0)], "G", -g.ramp_down,
                           f"ramp_dn[{tag}]")

        # battery
        for c_i, c in enumerate(gfms):
            cap = idx["gfm_s"][c_i]
            for t in range(horizon):
                tag = f"{c.id},{n},{t}"
                big_d = c.discharge_rate * c.s_max
                big_c = c.charge_rate * c.s_max
                mb.row([(pdch[n, t, c_i], 1.0), (cap, -c.discharge_rate)], "L", 0.0, f"dch_cap[{tag}]")
                mb.row([(pdch[n, t, c_i], 1.0), (vb[n, t, c_i], -big_d)], "L", 0.0, f"dch_mode[{tag}]")
                mb.row([(pch[n, t, c_i], 1.0), (cap, -c.charge_rate)], "L", 0.0, f"ch_cap[{tag}]")
                mb.row([(pch[n, t, c_i], 1.0), (vb[n, t, c_i], big_c)], "L", big_c, f"ch_mode[{tag}]")
                mb.row([(energy[n, t + 1, c_i], 1.0), (energy[n, t, c_i], -1.0),
                        (pdch[n, t, c_i], dt / c.efficiency), (pch[n, t, c_i], -dt * c.efficiency)],
                       "E", 0.0, f"soc[{tag}]")
            for t in range(horizon + 1):
                tag = f"{c.id},{n},{t}"
                mb.row([(energy[n, t, c_i], 1.0), (cap, -c.soc_min * c.duration)], "G", 0.0, f"e_lo[{tag}]")
                mb.row([(energy[n, t, c_i], 1.0), (cap, -c.soc_max * c.duration)], "L", 0.0, f"e_up[{tag}]")
            mb.row([(energy[n, horizon, c_i], 1.0), (energy[n, 0, c_i], -1.0)], "E", 0.0, f"e_end[{c.id},{n}]")

        # network
        for t in range(horizon):
            for r, br in enumerate(system.branches):
                b = sb / br.reactance
                mb.row([(flow[n, t, r], 1.0), (theta[n, t, br.from_bus], -b), (theta[n, t, br.to_bus], b)],
                       "E", 0.0, f"dc[{r},{n},{t}]")
            terms: dict[int, list] = {b: [] for b in range(system.n_bus)}
            rhs = np.zeros(system.n_bus)
            for g_i, g in enumerate(sgs):
                terms[g.bus].append((pg[n, t, g_i], 1.0))
            for c_i, c in enumerate(gfls):
                terms[c.bus].append((pcl[n, t, c_i], 1.0))
            for c_i, c in enumerate(gfms):
                terms[c.bus] += [(pdch[n, t, c_i], 1.0), (pch[n, t, c_i], -1.0)]
            for l_i, bus in enumerate(load_buses):
                rhs[bus] += float(np.asarray(node.loads.get(bus, np.zeros(horizon)))[t])
                terms[bus].append((shed[n, t, l_i], 1.0))
            for r, br in enumerate(system.branches):
                terms[br.from_bus].append((flow[n, t, r], -1.0))
                terms[br.to_bus].append((flow[n, t, r], 1.0))
            for b in range(system.n_bus):
                mb.row(terms[b], "E", rhs[b], f"balance[{b},{n},{t}]")

    # -- linearized stability constraints ---------------------------------
    def feature_vars(n, t, gfm_feature):
        gfm_vars = idx["gfm_o"] if gfm_feature == "overload" else idx["gfm_s"]
        return list(y[n, t]) + idx["sc_s"] + gfm_vars + list(pcl[n, t])

    stability = {}
    families = [(f"scc[{bus}]", k) for bus, k in sorted(k_scc.items())]
    if k_gscr is not None:
        families.append(("gscr", k_gscr))
    for name, k in families:
        rows = []
        for n in range(n_nodes):
            for t in range(horizon):
                terms = list(zip(feature_vars(n, t, k.layout.gfm_feature), k.k))
                rows.append(mb.row(terms, "G", k.limit - k.k0, f"{name}[{n},{t}]"))
        stability[name] = rows

    milp = mb.build()
    idx.update(y=y, ysg=ysg, ysd=ysd, yst=yst, p=pg, pcl=pcl, shed=shed, load_buses=load_buses,
               pch=pch, pdch=pdch, v=vb, e=energy, theta=theta, flow=flow, slack=slack)
    return PlanningModel(milp, system, tree, costs, idx, scale, stability)


@dataclass
class PlanningSolution:
    """Investments, schedules ``[node, step, unit]`` and cost breakdown."""

    investments: Investments
    sc_built: np.ndarray
    gfm_built: np.ndarray
    y: np.ndarray
    ysg: np.ndarray
    ysd: np.ndarray
    yst: np.ndarray
    p: np.ndarray
    p_gfl: np.ndarray
    shed: np.ndarray
    load_buses: list
    p_ch: np.ndarray
    p_dch: np.ndarray
    v: np.ndarray
    energy: np.ndarray
    theta: np.ndarray
    flow: np.ndarray
    investment_cost: float
    operation_cost: float
    total_cost: float
    objective: float
    gap: float
    wall_time: float
    status: str
    probabilities: np.ndarray
    dt: float = 1.0
    gap_reached: bool = True

    @property
    def soc(self) -> np.ndarray:
        """State of charge per unit of stored-energy capacity (NaN where nothing is built)."""
        cap = self.energy_capacity
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(cap > 0, self.energy / np.where(cap > 0, cap, 1.0), np.nan)

    energy_capacity: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def operating_points(self) -> list[PlannedPoint]:
        out = []
        n_nodes, horizon = self.y.shape[:2]
        inv = self.investments
        for n in range(n_nodes):
            for t in range(horizon):
                out.append(PlannedPoint(t, n, OperatingPoint(
                    commitments=self.y[n, t].astype(float), sc_capacity=inv.sc.copy(),
                    gfm_capacity=inv.gfm.copy(), gfl_power=self.p_gfl[n, t].copy(),
                    gfm_overload=inv.gfm_overload.copy())))
        return out


def _values(x, arr):
    out = np.zeros(arr.shape)
    mask = arr >= 0
    out[mask] = x[arr[mask]]
    return out


def solve_planning(model: PlanningModel, backend: str | None = None, gap: float | None = None,
                   time_limit: float | None = None) -> PlanningSolution:
    """Solve the model and unpack schedules and costs.

    Raises
    ------
    PlanningInfeasible
        When the backend proves infeasibility (no irreducible-set analysis
        is available from the bundled backends) or finds no solution in time.
    """
    gap = model.costs.gap if gap is None else gap
    req = SolveRequest(model.milp, gap=gap, time_limit=time_limit or model.costs.time_limit)
    res = solve_milp(req, backend)
    if res.status == "infeasible":
        raise PlanningInfeasible("planning model is infeasible (irreducible-set analysis not "
                                 f"supported by this backend): {res.message}")
    if res.x is None:
        raise PlanningInfeasible(f"no feasible plan found within the time limit: {res.status}")
    return unpack_solution(model, res.x, res)


def unpack_solution(model: PlanningModel, x: np.ndarray, res=None) -> PlanningSolution:
    idx = model.index
    system = model.system
    x = np.clip(x, model.milp.lb, model.milp.ub)
    x = np.where(model.milp.integer, np.round(x), x)
    sc = x[idx["sc_s"]] if idx["sc_s"] else np.zeros(0)
    gfm = x[idx["gfm_s"]] if idx["gfm_s"] else np.zeros(0)
    over = x[idx["gfm_o"]] if idx["gfm_o"] else np.zeros(0)
    inv = Investments(np.asarray(sc, float), np.asarray(gfm, float), np.asarray(over, float))
    inv_cost = float(model.costs.sc_cost * sc.sum()
                     + model.costs.gfm_cost * gfm.sum()
                     + model.costs.overload_ratio * model.costs.gfm_cost * (over - gfm).sum())
    sol = PlanningSolution(
        investments=inv,
        sc_built=x[idx["sc_x"]].astype(bool) if idx["sc_x"] else np.zeros(0, bool),
        gfm_built=x[idx["gfm_x"]].astype(bool) if idx["gfm_x"] else np.zeros(0, bool),
        y=_values(x, idx["y"]), ysg=_values(x, idx["ysg"]), ysd=_values(x, idx["ysd"]),
        yst=_values(x, idx["yst"]), p=_values(x, idx["p"]), p_gfl=_values(x, idx["pcl"]),
        shed=_values(x, idx["shed"]), load_buses=list(idx["load_buses"]),
        p_ch=_values(x, idx["pch"]), p_dch=_values(x, idx["pdch"]), v=_values(x, idx["v"]),
        energy=_values(x, idx["e"]), theta=_values(x, idx["theta"]), flow=_values(x, idx["flow"]),
        investment_cost=inv_cost, operation_cost=0.0, total_cost=0.0,
        objective=float(model.milp.c @ x + model.milp.obj_offset),
        gap=float(res.gap) if res is not None else 0.0,
        wall_time=float(res.wall_time) if res is not None else 0.0,
        status=res.status if res is not None else "given",
        probabilities=model.tree.probabilities, dt=model.tree.dt,
        gap_reached=res is None or res.status in ("optimal", "gap-feasible"),
        energy_capacity=np.array([c.duration for c in system.gfms]) * gfm)
    sol.operation_cost = evaluate_operation_cost(sol, model.tree, model.costs, system)
    sol.total_cost = sol.investment_cost + HOURS_PER_YEAR * sol.operation_cost
    return sol


def evaluate_operation_cost(solution: PlanningSolution, tree: ScenarioTree, costs: CostConfig,
                            system: PowerSystem) -> float:
    """Expected operating cost in £/h recomputed from the schedules."""
    sgs = system.sgs
    horizon = tree.horizon
    if horizon == 0:
        return 0.0
    c_st = np.array([g.c_startup for g in sgs])
    c_nl = np.array([g.c_noload for g in sgs])
    c_m = np.array([g.c_marginal for g in sgs])
    dt = tree.dt
    total = 0.0
    for n, node in enumerate(tree.nodes):
        per_node = (solution.ysg[n] @ c_st).sum() + dt * (solution.y[n] @ c_nl).sum() \
            + dt * (solution.p[n] @ c_m).sum() + dt * costs.voll * solution.shed[n].sum()
        total += node.probability * per_node
    return float(total / (horizon * dt))


# -- audit against exact engines ----------------------------------------------

@dataclass
class ViolationReport:
    """Exact-metric audit of a plan: per-metric violation rates and per-hour rows."""

    rates: dict[str, float]
    worst_margin: dict[str, float]
    rows: list[dict]

    @property
    def scc_rate(self) -> float:
        """Share of hours with at least one monitored bus below its SCC limit."""
        return self._any_rate("scc")

    @property
    def gscr_rate(self) -> float:
        return self.rates.get("gscr", 0.0)

    def _any_rate(self, prefix):
        keys = [k for k in self.rates if k.startswith(prefix)]
        if not keys or not self.rows:
            return 0.0
        bad = [any(r[f"{k}_margin"] < 0 for k in keys) for r in self.rows]
        weights = np.array([r["probability"] for r in self.rows])
        return float(np.dot(bad, weights) / weights.sum())


def validate_solution(solution: PlanningSolution, system: PowerSystem,
                      metrics: Sequence[Metric] | None = None) -> ViolationReport:
    """Recompute exact SCC and gSCR at every planned hour.

    Rates are probability-weighted fractions of hours whose exact value is
    below the limit.
    """
    metrics = system_metrics(system) if metrics is None else list(metrics)
    rows = []
    for pp in solution.operating_points():
        row = {"node": pp.node, "hour": pp.hour,
               "probability": float(solution.probabilities[pp.node])}
        for mt in metrics:
            value = float(mt.evaluate(pp.point))
            row[mt.name] = value
            row[f"{mt.name}_margin"] = value - mt.limit
        rows.append(row)
    weights = np.array([r["probability"] for r in rows]) if rows else np.zeros(0)
    rates, worst = {}, {}
    for mt in metrics:
        margins = np.array([r[f"{mt.name}_margin"] for r in rows])
        rates[mt.name] = float(np.dot(margins < 0, weights) / weights.sum()) if rows else 0.0
        worst[mt.name] = float(margins.min()) if rows else float("inf")
    return ViolationReport(rates, worst, rows)


def plan(system: PowerSystem, tree: ScenarioTree | None = None, k_scc=None, k_gscr=None,
         costs: CostConfig = CostConfig(), options: PlanOptions = PlanOptions(),
         backend: str | None = None) -> PlanningSolution:
    """Build and solve in one call."""
    tree = ScenarioTree.from_system(system) if tree is None else tree
    model = build_planning_model(system, tree, k_scc, k_gscr, costs, options)
    return solve_planning(model, backend)


@dataclass
class StabilizedPlan:
    solution: PlanningSolution
    sampling: "SamplingResult"
    report: ViolationReport | None = None


def plan_with_sampling(system: PowerSystem, tree: ScenarioTree | None = None,
                       costs: CostConfig = CostConfig(), options: PlanOptions = PlanOptions(),
                       scc: bool = True, strength: bool = True, m_max: int = 10, nu_grid=None,
                       fit: str = "boundary", explore: int | None = None, seed: int = 0,
                       backend: str | None = None, validate: bool = True,
                       sampling: str = "active") -> StabilizedPlan:
    """Active sampling around the planner, returning the final plan and its audit.

    ``explore`` extra samples (default: ``max(1000, 2 * planned points)``)
    with every surrogate input redrawn are added to the first data set so
    that the surrogates see capacity the first plan did not build.  With
    ``sampling="random"`` the surrogates are fitted once on those samples
    alone and the planner runs a single time with them (no refinement).
    """
    from .linearize import active_sampling, explore_points, random_sampling

    if sampling not in ("active", "random"):
        raise ValueError("sampling must be 'active' or 'random'")

    tree = ScenarioTree.from_system(system) if tree is None else tree
    metrics = system_metrics(system, scc=scc, strength=strength)
    state: dict = {}

    def planner(coeffs):
        k_scc = {int(name[4:]): k for name, k in coeffs.items() if name.startswith("scc@")}
        model = build_planning_model(system, tree, k_scc, coeffs.get("gscr"), costs, options)
        sol = solve_planning(model, backend)
        state["solution"] = sol
        return sol.operating_points()

    n_explore = max(DEFAULT_EXPLORE, 2 * tree.horizon * len(tree.nodes)) if explore is None else explore
    exploration = lambda pts: explore_points(pts, system, n_explore, seed)  # noqa: E731
    cost = lambda: state["solution"].total_cost  # noqa: E731
    if sampling == "active":
        result = active_sampling(planner, metrics, m_max=m_max, nu_grid=nu_grid, fit=fit,
                                 exploration=exploration, planner_cost=cost)
    else:
        result = random_sampling(planner, metrics, exploration, fit=fit, nu_grid=nu_grid,
                                 planner_cost=cost)
    sol = state["solution"]
    report = validate_solution(sol, system, metrics) if validate else None
    return StabilizedPlan(sol, result, report)
