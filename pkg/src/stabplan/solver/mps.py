"""Fixed-layout MPS dump of a :class:`MilpModel`.

Layout (1-based columns, see ``docs/formats.md``)::

    field  1: 2-3    field 2: 5-12    field 3: 15-22
    field  4: 25-36  field 5: 40-47   field 6: 50-61

Names are generated so they always fit eight characters: ``COST`` for the
objective, ``R`` plus seven digits for rows, ``C`` plus seven digits for
columns.  The mapping back to model names is the row/column order itself.
Numbers use the shortest ``%g`` form that fits twelve characters, so values
survive a round trip to roughly eleven significant digits.  A non-zero
objective offset is written as the objective RHS with flipped sign.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .model import MilpModel, ModelError

OBJ = "COST"
MAX_ITEMS = 9_999_999


def col_name(j: int) -> str:
    return f"C{j:07d}"


def row_name(i: int) -> str:
    return f"R{i:07d}"


def _num(v: float) -> str:
    for prec in range(12, 0, -1):
        s = f"{v:.{prec}g}"
        if len(s) <= 12:
            return s
    raise ModelError(f"cannot fit {v!r} into twelve characters")


def _line(f1="", f2="", f3="", f4="", f5="", f6="") -> str:
    text = f" {f1:<2} {f2:<8}  {f3:<8}  {f4:>12}"
    if f5:
        text += f"   {f5:<8}  {f6:>12}"
    return text.rstrip()


def write_mps(model: MilpModel, path, name: str = "STABPLAN") -> Path:
    """Write ``model`` to ``path`` and return the path."""
    model.validate()
    if model.n_vars > MAX_ITEMS or model.n_rows > MAX_ITEMS:
        raise ModelError("model too large for eight-character names")
    lines = [f"NAME          {name[:8]}", "ROWS", _line("N", OBJ)]
    for i, s in enumerate(model.sense):
        lines.append(_line(s, row_name(i)))
    lines.append("COLUMNS")
    csc = sp.csc_matrix(model.a)
    in_int = False
    marker = 0
    for j in range(model.n_vars):
        if model.integer[j] != in_int:
            kind = "'INTORG'" if model.integer[j] else "'INTEND'"
            lines.append(_line("", f"MARKER{marker:02d}"[:8], "'MARKER'", "", kind))
            marker += 1
            in_int = bool(model.integer[j])
        entries = []
        if model.c[j] != 0:
            entries.append((OBJ, model.c[j]))
        lo, hi = csc.indptr[j], csc.indptr[j + 1]
        for i, v in zip(csc.indices[lo:hi], csc.data[lo:hi]):
            entries.append((row_name(int(i)), v))
        if not entries:
            entries.append((OBJ, 0.0))
        for a in range(0, len(entries), 2):
            r1, v1 = entries[a]
            if a + 1 < len(entries):
                r2, v2 = entries[a + 1]
                lines.append(_line("", col_name(j), r1, _num(v1), r2, _num(v2)))
            else:
                lines.append(_line("", col_name(j), r1, _num(v1)))
    if in_int:
        lines.append(_line("", f"MARKER{marker:02d}"[:8], "'MARKER'", "", "'INTEND'"))
    lines.append("RHS")
    if model.obj_offset != 0:
        lines.append(_line("", "RHS", OBJ, _num(-model.obj_offset)))
    for i, v in enumerate(model.rhs):
        if v != 0:
            lines.append(_line("", "RHS", row_name(i), _num(v)))
    lines.append("BOUNDS")
    for j in range(model.n_vars):
        lines.extend(_bound_lines(j, model.lb[j], model.ub[j], bool(model.integer[j])))
    lines.append("ENDATA")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def _bound_lines(j, lb, ub, integer):
    c = col_name(j)
    if integer and lb == 0 and ub == 1:
        return [_line("BV", "BND", c, "1")]
    if lb == ub:
        return [_line("FX", "BND", c, _num(lb))]
    if lb == -np.inf and ub == np.inf:
        return [_line("FR", "BND", c)]
    out = []
    if lb == -np.inf:
        out.append(_line("MI", "BND", c))
    elif lb != 0:
        out.append(_line("LO", "BND", c, _num(lb)))
    if ub != np.inf:
        out.append(_line("UP", "BND", c, _num(ub)))
    elif integer:
        out.append(_line("PL", "BND", c))
    return out


def read_mps(path) -> MilpModel:
    """Parse a file produced by :func:`write_mps`.

    Only the subset of MPS emitted by the writer is understood.
    """
    section = None
    rows: dict[str, int] = {}
    sense: list[str] = []
    cols: dict[str, int] = {}
    integer: list[bool] = []
    entries: list[tuple[int, int, float]] = []
    cost: dict[int, float] = {}
    rhs: dict[int, float] = {}
    offset = 0.0
    bounds: list[tuple[str, str, float]] = []
    in_int = False
    for raw in Path(path).read_text().splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw.startswith(" "):
            section = raw.split()[0]
            continue
        tok = raw.split()
        if section == "ROWS":
            if tok[0] != "N":
                rows[tok[1]] = len(sense)
                sense.append(tok[0])
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1] == "'MARKER'":
                in_int = tok[2] == "'INTORG'"
                continue
            if tok[0] not in cols:
                cols[tok[0]] = len(integer)
                integer.append(in_int)
            j = cols[tok[0]]
            for r, v in zip(tok[1::2], tok[2::2]):
                if r == OBJ:
                    cost[j] = cost.get(j, 0.0) + float(v)
                else:
                    entries.append((rows[r], j, float(v)))
        elif section == "RHS":
            for r, v in zip(tok[1::2], tok[2::2]):
                if r == OBJ:
                    offset = -float(v)
                else:
                    rhs[rows[r]] = float(v)
        elif section == "BOUNDS":
            bounds.append((tok[0], tok[2], float(tok[3]) if len(tok) > 3 else 0.0))
    n = len(integer)
    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    for kind, c, v in bounds:
        j = cols[c]
        if kind == "BV":
            lb[j], ub[j] = 0.0, 1.0
        elif kind == "FX":
            lb[j] = ub[j] = v
        elif kind == "FR":
            lb[j], ub[j] = -np.inf, np.inf
        elif kind == "MI":
            lb[j] = -np.inf
        elif kind == "LO":
            lb[j] = v
        elif kind == "UP":
            ub[j] = v
        elif kind == "PL":
            ub[j] = np.inf
        else:
            raise ModelError(f"unsupported bound type {kind}")
    r_idx, c_idx, vals = zip(*entries) if entries else ((), (), ())
    a = sp.csr_matrix((vals, (r_idx, c_idx)), shape=(len(sense), n))
    order = sorted(cols, key=cols.get)
    return MilpModel(
        names=order, integer=np.array(integer, dtype=bool), lb=lb, ub=ub, a=a,
        sense=np.array(sense, dtype="<U1"),
        rhs=np.array([rhs.get(i, 0.0) for i in range(len(sense))]),
        c=np.array([cost.get(j, 0.0) for j in range(n)]),
        row_names=sorted(rows, key=rows.get), obj_offset=offset)
