"""Problem containers for the solver interface."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class ModelError(ValueError):
    """Malformed optimization problem."""


@dataclass
class MilpModel:
    """Linear program with optional integer variables.

    Rows read ``a[i] @ x  (sense[i])  rhs[i]`` with sense one of
    ``"L"`` (<=), ``"G"`` (>=) or ``"E"`` (=).  The objective is minimized:
    ``c @ x + obj_offset``.
    """

    names: list[str]
    integer: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    a: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    c: np.ndarray
    row_names: list[str] = field(default_factory=list)
    obj_offset: float = 0.0

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return self.a.shape[0]

    def validate(self) -> None:
        n = self.n_vars
        if self.a.shape[1] != n:
            raise ModelError("constraint matrix references undeclared variables")
        for arr, label in ((self.integer, "integer"), (self.lb, "lb"), (self.ub, "ub"), (self.c, "c")):
            if len(arr) != n:
                raise ModelError(f"{label} has wrong length")
        if len(self.sense) != self.n_rows or len(self.rhs) != self.n_rows:
            raise ModelError("sense/rhs length mismatch")
        if not set(np.unique(self.sense)) <= {"L", "G", "E"}:
            raise ModelError("unknown constraint sense")
        if not (np.all(np.isfinite(self.a.data)) and np.all(np.isfinite(self.c))
                and np.all(np.isfinite(self.rhs))):
            raise ModelError("non-finite coefficient")
        if np.any(np.isnan(self.lb)) or np.any(np.isnan(self.ub)):
            raise ModelError("NaN bound")

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.where(self.sense == "L", -np.inf, self.rhs)
        hi = np.where(self.sense == "G", np.inf, self.rhs)
        return lo.astype(float), hi.astype(float)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except AttributeError:
            self._index = {nm: i for i, nm in enumerate(self.names)}
            return self._index[name]


class ModelBuilder:
    """Incremental assembly of a :class:`MilpModel`."""

    def __init__(self):
        self.names: list[str] = []
        self.integer: list[bool] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.c: list[float] = []
        self._rows: list[int] = []
        self._cols: list[int] = []
        self._vals: list[float] = []
        self.sense: list[str] = []
        self.rhs: list[float] = []
        self.row_names: list[str] = []
        self.obj_offset = 0.0

    def var(self, name: str, lb: float = 0.0, ub: float = np.inf,
            integer: bool = False, cost: float = 0.0) -> int:
        self.names.append(name)
        self.integer.append(integer)
        self.lb.append(lb)
        self.ub.append(ub)
        self.c.append(cost)
        return len(self.names) - 1

    def binary(self, name: str, cost: float = 0.0) -> int:
        return self.var(name, 0.0, 1.0, integer=True, cost=cost)

    def add_cost(self, idx: int, value: float) -> None:
        self.c[idx] += value

    def row(self, terms, sense: str, rhs: float, name: str = "") -> int:
        """Add ``sum(coef * x[idx] for idx, coef in terms) sense rhs``."""
        r = len(self.sense)
        for idx, coef in terms:
            if coef != 0:
                self._rows.append(r)
                self._cols.append(idx)
                self._vals.append(float(coef))
        self.sense.append(sense)
        self.rhs.append(float(rhs))
        self.row_names.append(name or f"r{r}")
        return r

    def build(self) -> MilpModel:
        n = len(self.names)
        a = sp.csr_matrix((self._vals, (self._rows, self._cols)), shape=(len(self.sense), n))
        a.sum_duplicates()
        model = MilpModel(
            names=list(self.names), integer=np.array(self.integer, dtype=bool),
            lb=np.array(self.lb, dtype=float), ub=np.array(self.ub, dtype=float),
            a=a, sense=np.array(self.sense, dtype="<U1"), rhs=np.array(self.rhs, dtype=float),
            c=np.array(self.c, dtype=float), row_names=list(self.row_names),
            obj_offset=self.obj_offset)
        model.validate()
        return model


@dataclass
class QpProblem:
    """``min 1/2 x'Px + q'x`` s.t. ``a_eq x = b_eq`` and ``a_ub x <= b_ub``."""

    p: np.ndarray
    q: np.ndarray
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    offset: float = 0.0

    def __post_init__(self):
        n = len(self.q)
        self.p = np.asarray(self.p, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        if self.p.shape != (n, n):
            raise ModelError("P must be square and match q")
        self.a_ub = np.zeros((0, n)) if self.a_ub is None else np.atleast_2d(np.asarray(self.a_ub, dtype=float))
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, dtype=float)
        self.a_eq = np.zeros((0, n)) if self.a_eq is None else np.atleast_2d(np.asarray(self.a_eq, dtype=float))
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float)
        if self.a_ub.shape != (len(self.b_ub), n) or self.a_eq.shape != (len(self.b_eq), n):
            raise ModelError("constraint shapes do not match")
        sym = 0.5 * (self.p + self.p.T)
        if np.min(np.linalg.eigvalsh(sym), initial=0.0) < -1e-9 * max(1.0, np.abs(sym).max(initial=0.0)):
            raise ModelError("P must be positive semidefinite")
        self.p = sym

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.p @ x + self.q @ x + self.offset)


@dataclass(frozen=True)
class SolveRequest:
    problem: MilpModel | QpProblem
    gap: float = 5e-3
    tolerance: float = 1e-9
    time_limit: float = 600.0
    seed: int = 0


@dataclass
class SolveResult:
    status: str
    x: np.ndarray | None
    objective: float
    gap: float = 0.0
    wall_time: float = 0.0
    message: str = ""
    bound: float = float("nan")
    nodes: int = 0
    duals: np.ndarray | None = None
    kkt_residual: float = float("nan")

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "gap-feasible")
