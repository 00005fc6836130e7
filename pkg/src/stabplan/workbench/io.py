"""Versioned JSON/CSV file formats for cases, trees, coefficients and plans.

Every JSON document carries ``{"format": <kind>, "version": 1}``.  Hourly
series of a case live in a CSV next to the JSON (``profiles_file``), one
column per load bus (``load_<bus id>``) and per availability profile.
Infinite ramp limits are written as ``null``.  The layouts are described
in ``docs/formats.md``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import MISSING, asdict, fields
from pathlib import Path
from typing import Any

import numpy as np

from ..linearize import FeatureLayout, LinearCoefficients
from ..network import Branch, Bus, IbrUnit, NetworkError, PowerSystem, SyncUnit
from ..planning import Investments, PlanningSolution, ScenarioNode, ScenarioTree

VERSION = 1


class FormatError(ValueError):
    """A file could not be parsed; the message names the file and the field."""


# -- helpers -------------------------------------------------------------------

def _load_json(path: Path, kind: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise FormatError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(doc, dict) or doc.get("format") != kind:
        raise FormatError(f"{path}: format: expected {kind!r}")
    if doc.get("version") != VERSION:
        raise FormatError(f"{path}: version: unsupported version {doc.get('version')!r}")
    return doc


def _dump_json(path: Path, kind: str, body: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"format": kind, "version": VERSION, **body}, indent=1) + "\n")
    return path


def _field(obj: dict, key: str, where: str, cast=None, default: Any = ...):
    if key not in obj:
        if default is ...:
            raise FormatError(f"{where}.{key}: missing")
        return default
    value = obj[key]
    if cast is None:
        return value
    try:
        return cast(value)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{where}.{key}: {exc}") from None


def _finite_or_none(v: float):
    return None if v is None or not np.isfinite(v) else float(v)


def _inf_if_none(v):
    return float("inf") if v is None else float(v)


def _build(cls, raw: dict, where: str, converters: dict):
    if not isinstance(raw, dict):
        raise FormatError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    extra = set(raw) - known
    if extra:
        raise FormatError(f"{where}.{sorted(extra)[0]}: unknown field")
    kwargs = {}
    for key, value in raw.items():
        conv = converters.get(key)
        try:
            kwargs[key] = conv(value) if conv else value
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{where}.{key}: {exc}") from None
    try:
        return cls(**kwargs)
    except NetworkError as exc:
        raise FormatError(f"{where}: {exc}") from None
    except TypeError as exc:
        raise FormatError(f"{where}: {exc}") from None


# -- CSV series ----------------------------------------------------------------

def write_series(path: Path, columns: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    length = len(next(iter(columns.values()))) if columns else 0
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step"] + names)
        for t in range(length):
            w.writerow([t] + [repr(float(columns[c][t])) for c in names])
    return path


def read_series(path: Path) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise FormatError(f"{path}: file not found") from None
    if not rows or not rows[0] or rows[0][0] != "step":
        raise FormatError(f"{path}: line 1: header must start with 'step'")
    header = rows[0][1:]
    data = {c: [] for c in header}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header) + 1:
            raise FormatError(f"{path}: line {lineno}: expected {len(header) + 1} fields")
        for c, v in zip(header, row[1:]):
            try:
                data[c].append(float(v))
            except ValueError:
                raise FormatError(f"{path}: line {lineno}: column {c}: not a number") from None
    return {c: np.array(v) for c, v in data.items()}


# -- cases -----------------------------------------------------------------------

CASE = "stabplan-case"

_SYNC_CONV = {"ramp_up": _inf_if_none, "ramp_down": _inf_if_none, "bus": int,
              "t_startup": int, "t_min_up": int, "t_min_down": int}


def write_case(system: PowerSystem, path, profiles_file: str | None = None) -> Path:
    """Write ``system`` as JSON plus a profiles CSV beside it."""
    path = Path(path)
    profiles_file = profiles_file or path.with_suffix(".csv").name
    columns = {f"load_{b}": np.asarray(v, float) for b, v in sorted(system.loads.items())}
    columns.update({k: np.asarray(v, float) for k, v in system.profiles.items()})
    write_series(path.parent / profiles_file, columns)

    def sync(u: SyncUnit):
        d = asdict(u)
        d["ramp_up"], d["ramp_down"] = _finite_or_none(u.ramp_up), _finite_or_none(u.ramp_down)
        return d

    body = {
        "name": system.name, "s_base": system.s_base,
        "buses": [asdict(b) for b in system.buses],
        "branches": [asdict(b) for b in system.branches],
        "sync_units": [sync(u) for u in system.sync_units],
        "ibr_units": [asdict(u) for u in system.ibr_units],
        "max_sc": system.max_sc, "max_gfm": system.max_gfm,
        "scc_limits": {str(b): v for b, v in sorted(system.scc_limits.items())},
        "gscr_limit": system.gscr_limit,
        "profiles_file": profiles_file,
    }
    return _dump_json(path, CASE, body)


def parse_case(path) -> PowerSystem:
    """Read and validate a case file.

    Raises
    ------
    FormatError
        Naming the file and the offending field (``branches[3].to_bus``).
    """
    path = Path(path)
    doc = _load_json(path, CASE)
    where = str(path)
    buses = tuple(_build(Bus, b, f"{where}: buses[{i}]", {"id": int})
                  for i, b in enumerate(_field(doc, "buses", where)))
    branches = tuple(_build(Branch, b, f"{where}: branches[{i}]",
                            {"from_bus": int, "to_bus": int, "reactance": float, "rating": float})
                     for i, b in enumerate(_field(doc, "branches", where)))
    sync = tuple(_build(SyncUnit, u, f"{where}: sync_units[{i}]", _SYNC_CONV)
                 for i, u in enumerate(_field(doc, "sync_units", where, default=[])))
    ibr = tuple(_build(IbrUnit, u, f"{where}: ibr_units[{i}]", {"bus": int})
                for i, u in enumerate(_field(doc, "ibr_units", where, default=[])))
    n = len(buses)
    for i, br in enumerate(branches):
        for end in ("from_bus", "to_bus"):
            if not 0 <= getattr(br, end) < n:
                raise FormatError(f"{where}: branches[{i}].{end}: bus {getattr(br, end)} does not exist")
    for group, units in (("sync_units", sync), ("ibr_units", ibr)):
        for i, u in enumerate(units):
            if not 0 <= u.bus < n:
                raise FormatError(f"{where}: {group}[{i}].bus: bus {u.bus} does not exist")

    series_name = _field(doc, "profiles_file", where, str, default=None)
    loads, profiles = {}, {}
    if series_name:
        series = read_series(path.parent / series_name)
        for col, values in series.items():
            if col.startswith("load_"):
                try:
                    loads[int(col[5:])] = values
                except ValueError:
                    raise FormatError(f"{path.parent / series_name}: column {col}: bad bus id") from None
            else:
                profiles[col] = values
    for i, u in enumerate(ibr):
        if u.kind == "GFL" and u.profile and u.profile not in profiles:
            raise FormatError(f"{where}: ibr_units[{i}].profile: no column {u.profile!r} in profiles")
    try:
        scc_limits = {int(b): float(v) for b, v in _field(doc, "scc_limits", where, default={}).items()}
    except (TypeError, ValueError, AttributeError) as exc:
        raise FormatError(f"{where}.scc_limits: {exc}") from None
    try:
        return PowerSystem(
            buses=buses, branches=branches, sync_units=sync, ibr_units=ibr,
            s_base=_field(doc, "s_base", where, float, 100.0), loads=loads, profiles=profiles,
            max_sc=_field(doc, "max_sc", where, int, 0), max_gfm=_field(doc, "max_gfm", where, int, 0),
            scc_limits=scc_limits, gscr_limit=_field(doc, "gscr_limit", where, float, 0.0),
            name=_field(doc, "name", where, str, ""))
    except NetworkError as exc:
        raise FormatError(f"{where}: {exc}") from None


def systems_equal(a: PowerSystem, b: PowerSystem) -> bool:
    """Structural equality including hourly arrays."""
    def same_map(x, y):
        return set(x) == set(y) and all(np.array_equal(np.asarray(x[k]), np.asarray(y[k])) for k in x)

    return (a.buses == b.buses and a.branches == b.branches and a.sync_units == b.sync_units
            and a.ibr_units == b.ibr_units and a.s_base == b.s_base and a.max_sc == b.max_sc
            and a.max_gfm == b.max_gfm and dict(a.scc_limits) == dict(b.scc_limits)
            and a.gscr_limit == b.gscr_limit and a.name == b.name
            and same_map(a.loads, b.loads) and same_map(a.profiles, b.profiles))


# -- scenario trees --------------------------------------------------------------

TREE = "stabplan-tree"


def write_tree(tree: ScenarioTree, path) -> Path:
    nodes = [{"name": n.name, "probability": n.probability,
              "loads": {str(b): np.asarray(v, float).tolist() for b, v in sorted(n.loads.items())},
              "availability": {k: np.asarray(v, float).tolist() for k, v in n.availability.items()}}
             for n in tree.nodes]
    return _dump_json(path, TREE, {"dt": tree.dt, "nodes": nodes})


def read_tree(path, system: PowerSystem | None = None) -> ScenarioTree:
    """Read a tree; with ``system`` given, check it covers every load bus and profile."""
    doc = _load_json(Path(path), TREE)
    where = str(path)
    nodes = []
    for i, raw in enumerate(_field(doc, "nodes", where)):
        w = f"{where}: nodes[{i}]"
        try:
            loads = {int(b): np.asarray(v, float) for b, v in _field(raw, "loads", w).items()}
            avail = {str(k): np.asarray(v, float) for k, v in _field(raw, "availability", w).items()}
        except (TypeError, ValueError, AttributeError) as exc:
            raise FormatError(f"{w}: {exc}") from None
        nodes.append(ScenarioNode(_field(raw, "probability", w, float), loads, avail,
                                  _field(raw, "name", w, str, "")))
        if system is not None:
            missing = set(system.loads) - set(loads)
            if missing:
                raise FormatError(f"{w}.loads: no series for bus {min(missing)}")
            missing_p = {u.profile for u in system.gfls if u.profile} - set(avail)
            if missing_p:
                raise FormatError(f"{w}.availability: no series {sorted(missing_p)[0]!r}")
    try:
        return ScenarioTree(tuple(nodes), _field(doc, "dt", where, float, 1.0))
    except ValueError as exc:
        raise FormatError(f"{where}: {exc}") from None


# -- coefficients ---------------------------------------------------------------

COEFFS = "stabplan-coefficients"


def write_coefficients(coeffs: dict[str, LinearCoefficients], path) -> Path:
    body = {}
    for name, k in coeffs.items():
        lay = k.layout
        body[name] = {
            "limit": k.limit, "nu": k.nu, "k0": k.k0, "objective": k.objective,
            "layout": {"sg": list(lay.sgs), "sc": list(lay.scs), "gfm": list(lay.gfms),
                       "gfl": list(lay.gfls), "gfm_feature": lay.gfm_feature},
            "k": dict(zip(lay.names, map(float, k.k))),
        }
    return _dump_json(path, COEFFS, {"metrics": body})


def read_coefficients(path) -> dict[str, LinearCoefficients]:
    doc = _load_json(Path(path), COEFFS)
    out = {}
    for name, raw in _field(doc, "metrics", str(path)).items():
        w = f"{path}: metrics.{name}"
        lay_raw = _field(raw, "layout", w)
        lay = FeatureLayout(tuple(_field(lay_raw, "sg", w + ".layout")),
                            tuple(_field(lay_raw, "sc", w + ".layout")),
                            tuple(_field(lay_raw, "gfm", w + ".layout")),
                            tuple(_field(lay_raw, "gfl", w + ".layout")),
                            _field(lay_raw, "gfm_feature", w + ".layout", str, "capacity"))
        k_raw = _field(raw, "k", w)
        missing = [n for n in lay.names if n not in k_raw]
        if missing:
            raise FormatError(f"{w}.k.{missing[0]}: missing")
        out[name] = LinearCoefficients(
            lay, np.array([float(k_raw[n]) for n in lay.names]), _field(raw, "k0", w, float),
            _field(raw, "limit", w, float), _field(raw, "nu", w, float, 0.0),
            _field(raw, "objective", w, float, 0.0))
    return out


# -- planning solutions -----------------------------------------------------------

SOLUTION = "stabplan-solution"


def write_solution(solution: PlanningSolution, path) -> Path:
    body = {}
    for f in fields(PlanningSolution):
        value = getattr(solution, f.name)
        if isinstance(value, Investments):
            value = {k: np.asarray(v, float).tolist() for k, v in asdict(value).items()}
        elif isinstance(value, np.ndarray):
            value = value.tolist()
        elif isinstance(value, (np.floating, np.integer)):
            value = value.item()
        body[f.name] = value
    return _dump_json(path, SOLUTION, body)


def read_solution(path) -> PlanningSolution:
    doc = _load_json(Path(path), SOLUTION)
    where = str(path)
    kwargs = {}
    for f in fields(PlanningSolution):
        if f.name not in doc:
            if f.default is MISSING and f.default_factory is MISSING:
                raise FormatError(f"{where}.{f.name}: missing")
            continue
        raw = doc[f.name]
        if f.name == "investments":
            raw = Investments(*(np.asarray(_field(raw, k, f"{where}.investments"), float)
                                for k in ("sc", "gfm", "gfm_overload")))
        elif f.name in ("sc_built", "gfm_built"):
            raw = np.asarray(raw, bool)
        elif isinstance(raw, list) and f.name != "load_buses":
            raw = np.asarray(raw, float)
        kwargs[f.name] = raw
    try:
        return PlanningSolution(**kwargs)
    except TypeError as exc:
        raise FormatError(f"{where}: {exc}") from None
