"""Uniform MILP and convex-QP interface with bundled reference solvers."""

from .milp import BACKEND_ENV, default_backend, solve_milp
from .model import MilpModel, ModelBuilder, ModelError, QpProblem, SolveRequest, SolveResult
from .mps import read_mps, write_mps
from .qp import kkt_residual, solve_qp

__all__ = [
    "BACKEND_ENV", "MilpModel", "ModelBuilder", "ModelError", "QpProblem",
    "SolveRequest", "SolveResult", "default_backend", "kkt_residual",
    "read_mps", "solve_milp", "solve_qp", "write_mps",
]
