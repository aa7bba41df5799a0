"""Maps between physical concentrations/potential and the weighted variables.

Cell-average convention: ``c_n = w_cells * u`` and ``c_p = winv_cells * v``,
so the discrete masses of ``u`` and ``v`` are exactly the physical ion
counts.  On cells away from the charges this agrees with the pointwise
transform up to O(h^2).
"""
import logging
from dataclasses import dataclass

import numpy as np

from .diagnostics import weighted_norm
from .elliptic import solve_psi
from .errors import NegativeInitialData

logger = logging.getLogger(__name__)


@dataclass
class PhysicalState:
    c_n: np.ndarray
    c_p: np.ndarray
    phi: np.ndarray
    t: float = 0.0


@dataclass
class State:
    u: np.ndarray
    v: np.ndarray
    psi: np.ndarray
    t: float = 0.0

    def copy(self):
        return State(self.u.copy(), self.v.copy(), self.psi.copy(), self.t)


@dataclass
class InitialReport:
    l2w_u0: float
    l2winv_v0: float
    H0: float
    budget: float
    within_budget: bool


def physical_to_weighted(p, weights):
    return State(np.asarray(p.c_n, dtype=float) / weights.w_cells,
                 np.asarray(p.c_p, dtype=float) / weights.winv_cells,
                 np.asarray(p.phi, dtype=float) - weights.G_cells, p.t)


def weighted_to_physical(s, weights):
    return PhysicalState(weights.w_cells * np.asarray(s.u, dtype=float),
                         weights.winv_cells * np.asarray(s.v, dtype=float),
                         np.asarray(s.psi, dtype=float) + weights.G_cells, s.t)


def prepare_initial(c_n0, c_p0, weights, budget=None, return_report=False):
    """Weighted initial state with the potential solved from the densities.

    ``budget`` is the smallness level for ``|u0|^2 + |v0|^2``; the comparison is
    logged and, with ``return_report``, returned alongside the state.
    """
    grid = weights.grid
    c_n0 = np.broadcast_to(np.asarray(c_n0, dtype=float), grid.shape).copy()
    c_p0 = np.broadcast_to(np.asarray(c_p0, dtype=float), grid.shape).copy()
    if c_n0.min() < 0 or c_p0.min() < 0:
        raise NegativeInitialData("initial concentrations must be non-negative")
    u0 = c_n0 / weights.w_cells
    v0 = c_p0 / weights.winv_cells
    psi0 = solve_psi(grid, weights, u0, v0)
    state = State(u0, v0, psi0, 0.0)
    nu = weighted_norm(u0, weights.w_cells, 2, grid)
    nv = weighted_norm(v0, weights.winv_cells, 2, grid)
    H0 = nu ** 2 + nv ** 2
    within = budget is None or H0 < budget
    if budget is not None:
        logger.info("initial |u0|^2 + |v0|^2 = %.6e (budget %.3e: %s)", H0, budget,
                    "satisfied" if within else "exceeded")
    if return_report:
        return state, InitialReport(nu, nv, H0, budget if budget is not None else np.inf, within)
    return state
