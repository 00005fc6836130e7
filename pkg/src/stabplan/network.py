"""Grid data model and per-unit admittance/impedance algebra.

All matrices are dense complex ``numpy`` arrays.  The network is lossless:
branches and machines contribute pure reactances, so every matrix built here
is purely imaginary, but nothing downstream relies on that beyond the
susceptance extraction in :mod:`stabplan.strength`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

#: Condition-number ceiling above which a matrix is treated as singular.
SINGULAR_COND = 1e12


class NetworkError(ValueError):
    """Raised for inconsistent grid data or singular network matrices."""


@dataclass(frozen=True)
class Bus:
    id: int
    name: str = ""
    base_kv: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    reactance: float
    rating: float

    def __post_init__(self):
        if self.reactance <= 0:
            raise NetworkError(f"branch {self.from_bus}-{self.to_bus}: reactance must be > 0")
        if self.from_bus == self.to_bus:
            raise NetworkError(f"branch {self.from_bus}-{self.to_bus}: self loop")
        if self.rating <= 0:
            raise NetworkError(f"branch {self.from_bus}-{self.to_bus}: rating must be > 0")


@dataclass(frozen=True)
class SyncUnit:
    """Synchronous generator (``kind="SG"``) or candidate condenser (``kind="SC"``).

    ``reactance`` is the fault-calculation reactance on the unit's own MVA
    base.  SGs have a fixed ``capacity``; SCs are sized within
    ``[s_min, s_max]`` by the planner.  Powers are MW, times are steps.
    ``committable=False`` marks a must-run unit that carries no
    commitment binaries.
    """

    id: str
    bus: int
    kind: str
    reactance: float
    emf: float = 1.0
    capacity: float = 0.0
    s_min: float = 0.0
    s_max: float = 0.0
    c_startup: float = 0.0
    c_noload: float = 0.0
    c_marginal: float = 0.0
    p_min: float = 0.0
    p_max: float = 0.0
    ramp_up: float = float("inf")
    ramp_down: float = float("inf")
    t_startup: int = 0
    t_min_up: int = 0
    t_min_down: int = 0
    committable: bool = True
    initial_on: bool = False

    def __post_init__(self):
        if self.kind not in ("SG", "SC"):
            raise NetworkError(f"sync unit {self.id}: unknown kind {self.kind!r}")
        if self.reactance <= 0:
            raise NetworkError(f"sync unit {self.id}: reactance must be > 0")
        if self.p_min > self.p_max:
            raise NetworkError(f"sync unit {self.id}: p_min > p_max")
        if self.s_min > self.s_max:
            raise NetworkError(f"sync unit {self.id}: s_min > s_max")
        if min(self.t_startup, self.t_min_up, self.t_min_down) < 0:
            raise NetworkError(f"sync unit {self.id}: negative time parameter")


@dataclass(frozen=True)
class IbrUnit:
    """Inverter-based resource.

    GFL units (``kind="GFL"``) have a fixed installed ``capacity`` and an
    hourly availability ``profile`` (per unit of capacity).  GFM units
    (``kind="GFM"``) are battery candidates sized within ``[s_min, s_max]``;
    ``overload`` is the temporary overloading factor, ``reactance`` the
    voltage-source reactance used for strength assessment, and the battery
    fields describe the storage behind the converter.  ``droop`` is the
    reactive-current droop gain on the unit's own base.
    """

    id: str
    bus: int
    kind: str
    droop: float = 1.0
    capacity: float = 0.0
    profile: str = ""
    s_min: float = 0.0
    s_max: float = 0.0
    overload: float = 1.0
    reactance: float = 0.15
    efficiency: float = 0.9
    charge_rate: float = 1.0
    discharge_rate: float = 1.0
    soc_min: float = 0.1
    soc_max: float = 0.9
    duration: float = 2.0

    def __post_init__(self):
        if self.kind not in ("GFL", "GFM"):
            raise NetworkError(f"IBR {self.id}: unknown kind {self.kind!r}")
        if self.overload < 1:
            raise NetworkError(f"IBR {self.id}: overload factor must be >= 1")
        if not 0 <= self.soc_min < self.soc_max <= 1:
            raise NetworkError(f"IBR {self.id}: need 0 <= soc_min < soc_max <= 1")
        if not 0 < self.efficiency <= 1:
            raise NetworkError(f"IBR {self.id}: efficiency must lie in (0, 1]")
        if self.s_min > self.s_max:
            raise NetworkError(f"IBR {self.id}: s_min > s_max")
        if self.droop < 0 or self.reactance <= 0:
            raise NetworkError(f"IBR {self.id}: droop must be >= 0 and reactance > 0")


@dataclass(frozen=True)
class PowerSystem:
    """Static grid description plus hourly base profiles and stability limits.

    ``loads`` maps bus id to an hourly MW array; ``profiles`` maps a profile
    name to an hourly availability array in per unit of installed capacity.
    ``scc_limits`` maps each monitored bus to its short-circuit current
    limit in per unit; ``gscr_limit`` is the system-strength limit.
    """

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    sync_units: tuple[SyncUnit, ...] = ()
    ibr_units: tuple[IbrUnit, ...] = ()
    s_base: float = 100.0
    loads: Mapping[int, np.ndarray] = field(default_factory=dict)
    profiles: Mapping[str, np.ndarray] = field(default_factory=dict)
    max_sc: int = 0
    max_gfm: int = 0
    scc_limits: Mapping[int, float] = field(default_factory=dict)
    gscr_limit: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.s_base <= 0:
            raise NetworkError("s_base must be > 0")
        ids = [b.id for b in self.buses]
        if ids != list(range(len(ids))):
            raise NetworkError("bus ids must be dense 0..N-1 in order")
        n = len(ids)

        def check(bus, what):
            if not 0 <= bus < n:
                raise NetworkError(f"{what}: bus {bus} does not exist")

        for br in self.branches:
            check(br.from_bus, "branch from_bus")
            check(br.to_bus, "branch to_bus")
        for u in self.sync_units:
            check(u.bus, f"sync unit {u.id}")
        for u in self.ibr_units:
            check(u.bus, f"IBR {u.id}")
            if u.kind == "GFL" and u.profile and u.profile not in self.profiles:
                raise NetworkError(f"IBR {u.id}: unknown profile {u.profile!r}")
        for bus in self.loads:
            check(bus, "load")
        for bus in self.scc_limits:
            check(bus, "scc limit")
        names = [u.id for u in self.sync_units] + [u.id for u in self.ibr_units]
        if len(set(names)) != len(names):
            raise NetworkError("unit ids must be unique")

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def sgs(self) -> tuple[SyncUnit, ...]:
        return tuple(u for u in self.sync_units if u.kind == "SG")

    @property
    def scs(self) -> tuple[SyncUnit, ...]:
        return tuple(u for u in self.sync_units if u.kind == "SC")

    @property
    def gfls(self) -> tuple[IbrUnit, ...]:
        return tuple(u for u in self.ibr_units if u.kind == "GFL")

    @property
    def gfms(self) -> tuple[IbrUnit, ...]:
        return tuple(u for u in self.ibr_units if u.kind == "GFM")

    @property
    def horizon(self) -> int:
        lengths = {len(v) for v in self.loads.values()} | {len(v) for v in self.profiles.values()}
        if len(lengths) > 1:
            raise NetworkError(f"profile lengths disagree: {sorted(lengths)}")
        return lengths.pop() if lengths else 0

    @property
    def monitored_buses(self) -> tuple[int, ...]:
        return tuple(sorted(self.scc_limits))

    def bus_index(self, key: int | str) -> int:
        """Resolve a bus id or bus name."""
        if isinstance(key, str) and not key.lstrip("-").isdigit():
            for b in self.buses:
                if b.name == key:
                    return b.id
            raise NetworkError(f"unknown bus name {key!r}")
        idx = int(key)
        if not 0 <= idx < self.n_bus:
            raise NetworkError(f"bus {idx} does not exist")
        return idx

    def gfl_availability(self, unit: IbrUnit) -> np.ndarray:
        if not unit.profile:
            return np.ones(self.horizon)
        return np.asarray(self.profiles[unit.profile], dtype=float)


@dataclass(frozen=True)
class OperatingPoint:
    """Commitment, investment and GFL dispatch at one hour.

    Arrays follow the order of ``system.sgs``, ``system.scs``,
    ``system.gfms`` and ``system.gfls``.  Capacities are MVA, powers MW.
    ``gfm_overload`` defaults to ``gfm_capacity`` (no temporary overload).
    """

    commitments: np.ndarray
    sc_capacity: np.ndarray
    gfm_capacity: np.ndarray
    gfl_power: np.ndarray
    gfm_overload: np.ndarray | None = None

    @property
    def overload(self) -> np.ndarray:
        return self.gfm_capacity if self.gfm_overload is None else self.gfm_overload

    @classmethod
    def for_system(cls, system: PowerSystem, commitments=None, sc_capacity=None,
                   gfm_capacity=None, gfl_power=None, gfm_overload=None) -> "OperatingPoint":
        """Build a point with zeros (or all-on commitments) for omitted fields."""

        def arr(value, n, default):
            if value is None:
                return np.full(n, default, dtype=float)
            value = np.asarray(value, dtype=float)
            if value.shape != (n,):
                raise NetworkError(f"expected {n} entries, got shape {value.shape}")
            return value

        gfms = len(system.gfms)
        return cls(
            commitments=arr(commitments, len(system.sgs), 1.0),
            sc_capacity=arr(sc_capacity, len(system.scs), 0.0),
            gfm_capacity=arr(gfm_capacity, gfms, 0.0),
            gfl_power=arr(gfl_power, len(system.gfls), 0.0),
            gfm_overload=None if gfm_overload is None else arr(gfm_overload, gfms, 0.0),
        )


def build_base_admittance(system: PowerSystem) -> np.ndarray:
    """Line-only nodal admittance matrix ``Y0`` (resistance neglected)."""
    n = system.n_bus
    if not system.branches:
        raise NetworkError("network is disconnected: no branches")
    y0 = np.zeros((n, n), dtype=complex)
    for br in system.branches:
        y = 1.0 / (1j * br.reactance)
        i, j = br.from_bus, br.to_bus
        y0[i, i] += y
        y0[j, j] += y
        y0[i, j] -= y
        y0[j, i] -= y
    if not _is_connected(n, [(b.from_bus, b.to_bus) for b in system.branches]):
        raise NetworkError("network is disconnected")
    return y0


def _is_connected(n: int, edges: Sequence[tuple[int, int]]) -> bool:
    adj = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {0}
    stack = [0]
    while stack:
        for j in adj[stack.pop()]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == n


def apply_unit_increments(y0: np.ndarray, system: PowerSystem, commitments,
                          sc_capacities, gfm_capacities=None,
                          include_gfm: bool = False) -> np.ndarray:
    """Add machine shunt admittances ``S / (j X S_base)`` to the diagonal.

    SGs contribute scaled by their commitment, SCs by their installed
    capacity.  GFM converters are voltage sources only for strength
    assessment, so they are added only when ``include_gfm`` is set.
    """
    commitments = np.asarray(commitments, dtype=float)
    sc_capacities = np.asarray(sc_capacities, dtype=float)
    sgs, scs, gfms = system.sgs, system.scs, system.gfms
    if commitments.shape != (len(sgs),) or sc_capacities.shape != (len(scs),):
        raise NetworkError("commitment/SC vectors do not match the system")
    if np.any(sc_capacities < 0):
        raise NetworkError("negative SC capacity")
    y = np.array(y0, dtype=complex, copy=True)
    sb = system.s_base
    for g, x in zip(sgs, commitments):
        y[g.bus, g.bus] += x * g.capacity / (1j * g.reactance * sb)
    for s, cap in zip(scs, sc_capacities):
        y[s.bus, s.bus] += cap / (1j * s.reactance * sb)
    if include_gfm:
        gfm_capacities = np.zeros(len(gfms)) if gfm_capacities is None else np.asarray(gfm_capacities, dtype=float)
        if gfm_capacities.shape != (len(gfms),):
            raise NetworkError("GFM vector does not match the system")
        if np.any(gfm_capacities < 0):
            raise NetworkError("negative GFM capacity")
        for c, cap in zip(gfms, gfm_capacities):
            y[c.bus, c.bus] += cap / (1j * c.reactance * sb)
    return y


def invert_to_impedance(y: np.ndarray) -> np.ndarray:
    """Bus impedance matrix ``Z = Y^-1``.

    Raises
    ------
    NetworkError
        If ``Y`` is singular or its condition number exceeds
        :data:`SINGULAR_COND`, which happens when no synchronous unit
        grounds the network.
    """
    y = np.asarray(y, dtype=complex)
    if not np.all(np.isfinite(y)):
        raise NetworkError("admittance matrix has non-finite entries")
    if np.linalg.cond(y) > SINGULAR_COND:
        raise NetworkError("admittance matrix is singular: no synchronous source grounds the network")
    return np.linalg.inv(y)


def kron_reduce(y: np.ndarray, retained: Sequence[int]) -> np.ndarray:
    """Eliminate all buses not in ``retained`` by Schur complement.

    The result is ordered like ``retained``.
    """
    y = np.asarray(y, dtype=complex)
    keep = np.asarray(list(retained), dtype=int)
    if len(set(keep.tolist())) != len(keep):
        raise NetworkError("retained bus set contains duplicates")
    drop = np.setdiff1d(np.arange(y.shape[0]), keep)
    y_rr = y[np.ix_(keep, keep)]
    if drop.size == 0:
        return y_rr.copy()
    y_ee = y[np.ix_(drop, drop)]
    if np.linalg.cond(y_ee) > SINGULAR_COND:
        raise NetworkError("eliminated block is singular")
    y_re = y[np.ix_(keep, drop)]
    y_er = y[np.ix_(drop, keep)]
    return y_rr - y_re @ np.linalg.solve(y_ee, y_er)


def scc_admittance(system: PowerSystem, point: OperatingPoint, y0: np.ndarray | None = None) -> np.ndarray:
    """Admittance for fault studies: lines plus committed SGs and installed SCs."""
    y0 = build_base_admittance(system) if y0 is None else y0
    return apply_unit_increments(y0, system, point.commitments, point.sc_capacity)


def strength_admittance(system: PowerSystem, point: OperatingPoint, y0: np.ndarray | None = None) -> np.ndarray:
    """Admittance for strength studies: as :func:`scc_admittance` plus GFM sources."""
    y0 = build_base_admittance(system) if y0 is None else y0
    return apply_unit_increments(y0, system, point.commitments, point.sc_capacity,
                                 point.gfm_capacity, include_gfm=True)
