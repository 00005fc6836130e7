"""Bundled test systems.

Network data for the 39-bus system is the public New England test case
(reactances in per unit on 100 MVA, ratings in MW).  Synchronous machines
keep their original buses 30, 31 and 36 to 39; the machines at buses 32 to
35 are replaced by grid-following wind plants.  Load and wind shapes are
synthetic and seeded, so only qualitative behaviour is meaningful.

Bus ids are zero-based; bus names carry the one-based numbering of the
original case ("Bus 1" ... "Bus 39").
"""

from __future__ import annotations

import numpy as np

from ..network import Branch, Bus, IbrUnit, PowerSystem, SyncUnit

# Thermal unit classes: no-load £/h, marginal £/MWh, startup £, startup
# time h, min up h, min down h.
UNIT_TYPES = {
    "I": dict(c_noload=4500.0, c_marginal=47.0, c_startup=10_000.0,
              t_startup=4, t_min_up=4, t_min_down=1, committable=True),
    "II": dict(c_noload=3000.0, c_marginal=200.0, c_startup=0.0,
               t_startup=0, t_min_up=0, t_min_down=0, committable=True),
    "III": dict(c_noload=0.0, c_marginal=10.0, c_startup=0.0,
                t_startup=0, t_min_up=0, t_min_down=0, committable=False),
}

SG_REACTANCE = 0.2
SC_REACTANCE = 0.2
GFM_REACTANCE = 0.15
DROOP = 2.0          # rated reactive current at a 0.5 pu voltage dip
OVERLOAD = 1.2


def daily_load_shape(hours: int, seed: int = 0) -> np.ndarray:
    """Normalized load in [0, 1]: two daily peaks, weekend dip, small noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(hours)
    h = t % 24
    shape = (0.55 + 0.25 * np.exp(-((h - 9.0) / 3.0) ** 2)
             + 0.45 * np.exp(-((h - 18.5) / 3.0) ** 2))
    weekend = np.where((t // 24) % 7 >= 5, 0.9, 1.0)
    shape = shape * weekend * (1 + 0.02 * rng.standard_normal(hours))
    lo, hi = shape.min(), shape.max()
    return (shape - lo) / (hi - lo) if hi > lo else np.zeros(hours)


def wind_shape(hours: int, seed: int = 1, mean: float = 0.45) -> np.ndarray:
    """Availability in [0, 1] from a seeded AR(1) process with a night bias."""
    rng = np.random.default_rng(seed)
    x = np.empty(hours)
    level = 0.0
    for k in range(hours):
        level = 0.9 * level + 0.35 * rng.standard_normal()
        x[k] = level
    night = 0.15 * np.cos(2 * np.pi * (np.arange(hours) % 24) / 24)
    return np.clip(mean + 0.25 * x + night, 0.0, 1.0)


def _sg(uid, bus, pmax, kind, pmin_frac=0.3, ramp=None):
    ramp = float("inf") if ramp is None else ramp
    return SyncUnit(id=uid, bus=bus, kind="SG", reactance=SG_REACTANCE, capacity=pmax,
                    p_min=pmin_frac * pmax, p_max=pmax, ramp_up=ramp, ramp_down=ramp,
                    initial_on=True, **UNIT_TYPES[kind])


#: Five-bus limits under which each stability family needs its own remedy: the
#: SCC limit at G1's bus is met by commitment and condensers, gSCR at the wind
#: bus by condensers and batteries, so dropping either family shows violations.
FIVE_BUS_ABLATION = dict(gscr_limit=5.5, scc_limit=14.0, scc_bus=0)


def two_bus() -> PowerSystem:
    """One SG behind a line feeding a wind plant and a load (single hour)."""
    buses = (Bus(0, "Bus 1"), Bus(1, "Bus 2"))
    branches = (Branch(0, 1, 0.1, 300.0),)
    sg = _sg("G1", 0, 200.0, "II", pmin_frac=0.0)
    sc = SyncUnit(id="SC1", bus=1, kind="SC", reactance=SC_REACTANCE, s_min=0.0, s_max=200.0)
    gfl = IbrUnit(id="W1", bus=1, kind="GFL", droop=DROOP, capacity=100.0, profile="wind")
    gfm = IbrUnit(id="B1", bus=1, kind="GFM", droop=DROOP, s_min=0.0, s_max=100.0,
                  overload=OVERLOAD, reactance=GFM_REACTANCE)
    return PowerSystem(buses=buses, branches=branches, sync_units=(sg, sc), ibr_units=(gfl, gfm),
                       loads={1: np.array([120.0])}, profiles={"wind": np.array([0.8])},
                       max_sc=1, max_gfm=1, scc_limits={1: 5.0}, gscr_limit=2.0, name="2-bus")


def five_bus(hours: int = 24, storage: bool = True, seed: int = 0, simple_uc: bool = False,
             gscr_limit: float = 3.0, scc_limit: float = 12.0, sc_bus: int = 3,
             scc_bus: int = 3) -> PowerSystem:
    """Five-bus ring with a large wind plant on a weak bus.

    Parameters
    ----------
    hours : horizon length.
    storage : include the grid-forming battery candidate.
    simple_uc : give every SG Type II timing (no startup delay, no minimum
        up/down time) so hours decouple; used by enumeration oracles.
    gscr_limit, scc_limit : stability requirements (SCC limit at bus 4, per unit).
    """
    buses = tuple(Bus(i, f"Bus {i + 1}") for i in range(5))
    branches = (
        Branch(0, 1, 0.06, 500.0),
        Branch(1, 2, 0.08, 400.0),
        Branch(2, 3, 0.12, 400.0),
        Branch(3, 4, 0.10, 400.0),
        Branch(4, 0, 0.08, 500.0),
        Branch(1, 3, 0.15, 300.0),
    )
    base_type = "II" if simple_uc else "I"
    sgs = (
        _sg("G1", 0, 300.0, base_type, pmin_frac=0.3),
        _sg("G2", 1, 200.0, "II", pmin_frac=0.2),
        _sg("G3", 2, 150.0, "II", pmin_frac=0.2),
        _sg("G4", 4, 80.0, "III", pmin_frac=0.5),
    )
    sc = SyncUnit(id="SC1", bus=sc_bus, kind="SC", reactance=SC_REACTANCE, s_min=20.0, s_max=300.0)
    ibrs = [IbrUnit(id="W1", bus=3, kind="GFL", droop=DROOP, capacity=450.0, profile="wind")]
    if storage:
        ibrs.append(IbrUnit(id="B1", bus=2, kind="GFM", droop=DROOP, s_min=10.0, s_max=300.0,
                            overload=OVERLOAD, reactance=GFM_REACTANCE, efficiency=0.95,
                            duration=4.0))
    shape = daily_load_shape(hours, seed)
    total = 260.0 + 200.0 * shape
    loads = {1: 0.35 * total, 2: 0.25 * total, 4: 0.40 * total}
    wind = wind_shape(hours, seed + 1, mean=0.5)
    return PowerSystem(buses=buses, branches=branches, sync_units=sgs + (sc,),
                       ibr_units=tuple(ibrs), loads=loads, profiles={"wind": wind},
                       max_sc=1, max_gfm=1 if storage else 0,
                       scc_limits={scc_bus: scc_limit}, gscr_limit=gscr_limit, name="5-bus")


# (from, to, x, rating MW), one-based bus numbers as in the public case.
IEEE39_BRANCHES = (
    (1, 2, 0.0411, 600), (1, 39, 0.025, 1000), (2, 3, 0.0151, 500), (2, 25, 0.0086, 500),
    (2, 30, 0.0181, 900), (3, 4, 0.0213, 500), (3, 18, 0.0133, 500), (4, 5, 0.0128, 600),
    (4, 14, 0.0129, 500), (5, 6, 0.0026, 1200), (5, 8, 0.0112, 900), (6, 7, 0.0092, 900),
    (6, 11, 0.0082, 480), (6, 31, 0.025, 1800), (7, 8, 0.0046, 900), (8, 9, 0.0363, 900),
    (9, 39, 0.025, 900), (10, 11, 0.0043, 600), (10, 13, 0.0043, 600), (10, 32, 0.02, 900),
    (12, 11, 0.0435, 500), (12, 13, 0.0435, 500), (13, 14, 0.0101, 600), (14, 15, 0.0217, 600),
    (15, 16, 0.0094, 600), (16, 17, 0.0089, 600), (16, 19, 0.0195, 600), (16, 21, 0.0135, 600),
    (16, 24, 0.0059, 600), (17, 18, 0.0082, 600), (17, 27, 0.0173, 600), (19, 20, 0.0138, 900),
    (19, 33, 0.0142, 900), (20, 34, 0.018, 900), (21, 22, 0.014, 900), (22, 23, 0.0096, 600),
    (22, 35, 0.0143, 900), (23, 24, 0.035, 600), (23, 36, 0.0272, 900), (25, 26, 0.0323, 600),
    (25, 37, 0.0232, 900), (26, 27, 0.0147, 600), (26, 28, 0.0474, 600), (26, 29, 0.0625, 600),
    (28, 29, 0.0151, 600), (29, 38, 0.0156, 1200),
)

IEEE39_LOADS = {
    3: 322.0, 4: 500.0, 7: 233.8, 8: 522.0, 12: 7.5, 15: 320.0, 16: 329.0, 18: 158.0,
    20: 628.0, 21: 274.0, 23: 247.5, 24: 308.6, 25: 224.0, 26: 139.0, 27: 281.0,
    28: 206.0, 29: 283.5, 31: 9.2, 39: 1104.0,
}

# one-based bus: (Pmax MW, type)
IEEE39_SGS = {30: (1040.0, "I"), 37: (564.0, "I"), 31: (646.0, "II"), 36: (580.0, "II"),
              38: (865.0, "II"), 39: (1100.0, "III")}

IEEE39_WIND = {32: 900.0, 33: 900.0, 34: 700.0, 35: 900.0}

DEMAND_BAND = (5160.0, 6240.0)


def ieee39(hours: int = 24, seed: int = 0, gscr_limit: float = 2.5,
           scc_limit: float = 10.0) -> PowerSystem:
    """Modified 39-bus system with wind at buses 32 to 35 and candidate SC/GFM there."""
    buses = tuple(Bus(i, f"Bus {i + 1}", base_kv=345.0) for i in range(39))
    branches = tuple(Branch(f - 1, t - 1, x, float(r)) for f, t, x, r in IEEE39_BRANCHES)
    sgs = []
    for bus, (pmax, kind) in sorted(IEEE39_SGS.items()):
        frac = {"I": 0.4, "II": 0.2, "III": 0.5}[kind]
        sgs.append(_sg(f"G{bus}", bus - 1, pmax, kind, pmin_frac=frac))
    scs = [SyncUnit(id=f"SC{bus}", bus=bus - 1, kind="SC", reactance=SC_REACTANCE,
                    s_min=50.0, s_max=600.0) for bus in sorted(IEEE39_WIND)]
    gfls = [IbrUnit(id=f"W{bus}", bus=bus - 1, kind="GFL", droop=DROOP, capacity=cap,
                    profile=f"wind{bus}") for bus, cap in sorted(IEEE39_WIND.items())]
    gfms = [IbrUnit(id=f"B{bus}", bus=bus - 1, kind="GFM", droop=DROOP, s_min=50.0,
                    s_max=1000.0, overload=OVERLOAD, reactance=GFM_REACTANCE)
            for bus in sorted(IEEE39_WIND)]
    shape = daily_load_shape(hours, seed)
    base_total = sum(IEEE39_LOADS.values())
    total = DEMAND_BAND[0] + (DEMAND_BAND[1] - DEMAND_BAND[0]) * shape
    loads = {bus - 1: p / base_total * total for bus, p in IEEE39_LOADS.items()}
    profiles = {f"wind{bus}": wind_shape(hours, seed + k + 1)
                for k, bus in enumerate(sorted(IEEE39_WIND))}
    largest = max(IEEE39_LOADS, key=IEEE39_LOADS.get) - 1
    monitored = sorted({bus - 1 for bus in IEEE39_WIND} | {largest})
    return PowerSystem(buses=buses, branches=branches, sync_units=tuple(sgs + scs),
                       ibr_units=tuple(gfls + gfms), loads=loads, profiles=profiles,
                       max_sc=4, max_gfm=4, scc_limits={b: scc_limit for b in monitored},
                       gscr_limit=gscr_limit, name="IEEE-39")


FIXTURES = {"2bus": two_bus, "5bus": five_bus, "39bus": ieee39}
