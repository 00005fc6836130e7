"""Generalized short-circuit ratio (gSCR).

gSCR is the smallest eigenvalue of ``diag(V^2 / P) @ B_red`` where ``B_red``
is the susceptance of the strength-mode admittance matrix Kron-reduced to
the GFL terminal buses.  Under the lossless model ``Y = -j B`` with ``B``
a grounded Laplacian, so ``B_red`` is symmetric positive definite and the
eigenvalues are real and positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import (NetworkError, OperatingPoint, PowerSystem,
                      build_base_admittance, kron_reduce, strength_admittance)


@dataclass(frozen=True)
class StrengthPoint:
    """GFL powers (per unit, system base), terminal voltages and the strength-mode ``Y``."""

    gfl_powers: np.ndarray
    y: np.ndarray
    gfl_voltages: np.ndarray | None = None

    def __post_init__(self):
        if self.gfl_voltages is not None:
            v = np.asarray(self.gfl_voltages)
            if np.any(v <= 0.8) or np.any(v >= 1.2):
                raise ValueError("GFL voltages must lie in (0.8, 1.2)")

    @property
    def voltages(self) -> np.ndarray:
        if self.gfl_voltages is None:
            return np.ones(len(self.gfl_powers))
        return np.asarray(self.gfl_voltages, dtype=float)


def build_equivalent_admittance(point: StrengthPoint, retained) -> np.ndarray:
    """Real matrix ``diag(V^2/P) @ B_red`` on the ``retained`` GFL buses."""
    p = np.asarray(point.gfl_powers, dtype=float)
    if np.any(p <= 0):
        raise ValueError("every retained GFL must have positive output")
    if len(p) != len(retained):
        raise ValueError("one power per retained bus required")
    b_red = -np.imag(kron_reduce(point.y, retained))
    return (point.voltages ** 2 / p)[:, None] * b_red


def min_eigenvalue(m: np.ndarray) -> float:
    """Smallest eigenvalue of ``m = D @ S`` (``D`` positive diagonal, ``S`` symmetric).

    The spectrum is computed on the similar symmetric matrix
    ``D^1/2 S D^1/2``, so the result is real.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("square matrix required")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    if m.size == 0:
        raise ValueError("empty matrix")
    # m_ij / m_ji = D_i / D_j fixes D up to a per-component scale, which
    # cancels in D^1/2 (D^-1 m) D^1/2.
    diag = _row_scaling(m)
    root = np.sqrt(diag)
    sym = (m / diag[:, None]) * root[:, None] * root[None, :]
    sym = 0.5 * (sym + sym.T)
    return float(np.linalg.eigvalsh(sym)[0])


def _row_scaling(m: np.ndarray) -> np.ndarray:
    """Positive diagonal ``D`` with ``D^-1 m`` symmetric (``D`` fixed up to scale)."""
    n = m.shape[0]
    d = np.ones(n)
    # Walk a spanning tree of the nonzero pattern and fix ratios D_j / D_i = m_ji / m_ij.
    seen = np.zeros(n, dtype=bool)
    for root in range(n):
        if seen[root]:
            continue
        seen[root] = True
        stack = [root]
        while stack:
            i = stack.pop()
            for j in np.nonzero((m[i] != 0) & ~seen)[0]:
                if m[i, j] == 0 or m[j, i] == 0 or m[i, j] * m[j, i] < 0:
                    raise ValueError("matrix is not a positive row scaling of a symmetric matrix")
                d[j] = d[i] * m[j, i] / m[i, j]
                seen[j] = True
                stack.append(j)
    return d


def gscr(system: PowerSystem, commitments, sc_capacities, gfm_capacities, gfl_powers,
         gfl_voltages=None, y0: np.ndarray | None = None) -> float:
    """System gSCR at one operating point.

    ``gfl_powers`` are MW in ``system.gfls`` order; GFLs at zero output are
    left out of the reduction.  Several GFLs on one bus are aggregated.
    Returns ``inf`` when no GFL produces power.
    """
    point = OperatingPoint.for_system(system, commitments, sc_capacities,
                                      gfm_capacities, gfl_powers)
    sources = (np.any(point.commitments > 0) or np.any(point.sc_capacity > 0)
               or np.any(point.gfm_capacity > 0))
    if not sources:
        raise NetworkError("gSCR needs at least one committed or installed voltage source")
    y = strength_admittance(system, point, y0=y0)
    per_bus: dict[int, float] = {}
    volts: dict[int, float] = {}
    v = np.ones(len(system.gfls)) if gfl_voltages is None else np.asarray(gfl_voltages, dtype=float)
    for unit, p, vi in zip(system.gfls, point.gfl_power, v):
        if p > 0:
            per_bus[unit.bus] = per_bus.get(unit.bus, 0.0) + p / system.s_base
            volts[unit.bus] = vi
    if not per_bus:
        return float("inf")
    buses = sorted(per_bus)
    sp = StrengthPoint(gfl_powers=np.array([per_bus[b] for b in buses]), y=y,
                       gfl_voltages=np.array([volts[b] for b in buses]))
    return min_eigenvalue(build_equivalent_admittance(sp, buses))
