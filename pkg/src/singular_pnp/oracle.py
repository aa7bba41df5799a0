"""Reference solver in the original variables with mollified point charges.

Each point charge of strength ``alpha`` is replaced by the fixed density
``2 pi alpha eta_rho`` with the C^1 bump
``eta_rho(r) = 3 (1 - (r/rho)^2)^2 / (pi rho^2)`` for ``r < rho``.  The
factor 3 makes the bump integrate to 1 (with 2 it would integrate to 2/3).
The resulting smooth problem is marched with the same finite-volume
machinery using ``w = 1``, and its ``c_n``/``c_p`` are compared with those of
the weighted solver away from the charges.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy import integrate

from .elliptic import edge_values, solve_psi
from .evolution import run
from .transform import State, prepare_initial
from .weights import WeightField, prepare_weights

logger = logging.getLogger(__name__)


def bump(rho):
    """``eta_rho`` as a callable of ``(x, y)`` centered at the origin."""
    c = 3.0 / (np.pi * rho ** 2)

    def eta(x, y):
        s = (np.asarray(x) ** 2 + np.asarray(y) ** 2) / rho ** 2
        return np.where(s < 1.0, c * (1.0 - s) ** 2, 0.0)

    return eta


def bump_cell_integral(rect, rho, tol=1e-13):
    """Integral of ``eta_rho`` (centered at the origin) over ``[xa, xb] x [ya, yb]``.

    The y-integral is done in closed form (the bump is a polynomial in ``y``
    on the chord), the x-integral adaptively with the chord-crossing points
    as breakpoints.  Generic adaptive cubature misses cells whose overlap
    with the disk falls between its nodes.
    """
    xa, xb, ya, yb = (float(t) for t in rect)
    r2 = rho * rho

    def inner(x):
        a = 1.0 - x * x / r2
        if a <= 0.0:
            return 0.0
        s = math.sqrt(a) * rho
        lo, hi = max(ya, -s), min(yb, s)
        if hi <= lo:
            return 0.0
        F = lambda y: a * a * y - 2.0 * a * y ** 3 / (3.0 * r2) + y ** 5 / (5.0 * r2 * r2)
        return F(hi) - F(lo)

    lo, hi = max(xa, -rho), min(xb, rho)
    if hi <= lo or ya >= rho or yb <= -rho:
        return 0.0
    cuts = {lo, hi}
    for y in (ya, yb):
        if abs(y) < rho:
            c = math.sqrt(r2 - y * y)
            cuts.update(x for x in (-c, c) if lo < x < hi)
    cuts = sorted(cuts)
    total = 0.0
    for p, q in zip(cuts, cuts[1:]):
        val, _ = integrate.quad(inner, p, q, epsabs=tol * rho * rho, epsrel=tol, limit=200)
        total += val
    return 3.0 / (np.pi * r2) * total


def mollified_source(charges, grid, rho, tol=1e-13):
    """Cell averages of ``2 pi sum_j alpha_j eta_rho(x - x_j)``.

    Also returns the integral of each bump over the domain (1 when the ball
    lies inside), as a build-time check of the normalization.
    """
    rects = grid.cell_rects()
    total = np.zeros(grid.size)
    integrals = []
    for c in charges:
        px, py = c.position
        near = np.flatnonzero((rects[:, 1] > px - rho) & (rects[:, 0] < px + rho)
                              & (rects[:, 3] > py - rho) & (rects[:, 2] < py + rho))
        vals = np.array([bump_cell_integral(rects[k] - [px, px, py, py], rho, tol) for k in near])
        integrals.append(float(vals.sum()))
        total[near] += 2.0 * np.pi * c.alpha * vals / grid.cell_area
    return total.reshape(grid.shape), integrals


def exclusion_mask(grid, charges, radius):
    X, Y = grid.centers
    mask = np.ones(grid.shape, dtype=bool)
    for c in charges:
        mask &= (X - c.position[0]) ** 2 + (Y - c.position[1]) ** 2 > radius ** 2
    return mask


def relative_l2(a, b, mask):
    den = float(np.sqrt(np.sum(b[mask] ** 2)))
    num = float(np.sqrt(np.sum((a[mask] - b[mask]) ** 2)))
    return num / den if den > 0 else num


def run_physical(c_n0, c_p0, charges, g, grid, scheme, rho, snapshot_every=10**9):
    """March the mollified problem; returns ``(final State, Trajectory, bump integrals)``.

    In the returned states ``u``, ``v``, ``psi`` are ``c_n``, ``c_p``, ``phi``.
    """
    unit = WeightField.unit(grid)
    source, integrals = mollified_source(charges, grid, rho)
    gf = g if callable(g) else (lambda x, y, _g=float(g): np.full(np.shape(x), _g))
    boundary = edge_values(grid, gf)
    phi0 = solve_psi(grid, unit, c_n0, c_p0, source, boundary)
    init = State(np.array(c_n0, float), np.array(c_p0, float), phi0, 0.0)
    traj = run(init, scheme, unit, snapshot_every=snapshot_every, source=source,
               boundary=boundary, psi_boundary=boundary)
    return traj.snapshots[-1], traj, integrals


@dataclass
class OracleRow:
    nx: int
    rho: float
    mismatch_c_n: float
    mismatch_c_p: float
    bump_integrals: list


@dataclass
class OracleReport:
    exclusion: float
    rows: List[OracleRow] = field(default_factory=list)

    def by_grid(self):
        out = {}
        for r in self.rows:
            out.setdefault(r.nx, []).append(r)
        return out

    def monotone(self):
        """Per grid: mismatch of ``c_n`` strictly decreasing as ``rho`` shrinks."""
        res = {}
        for nx, rows in self.by_grid().items():
            rows = sorted(rows, key=lambda r: -r.rho)
            m = [r.mismatch_c_n for r in rows]
            res[nx] = all(b < a for a, b in zip(m, m[1:]))
        return res

    def lines(self):
        out = [f"exclusion radius {self.exclusion:g}",
               f"{'grid':>6} {'rho':>8} {'c_n mismatch':>14} {'c_p mismatch':>14}"]
        for r in self.rows:
            out.append(f"{r.nx:>6d} {r.rho:>8.4g} {r.mismatch_c_n:>14.6e} {r.mismatch_c_p:>14.6e}")
        for nx, ok in self.monotone().items():
            out.append(f"grid {nx}: c_n mismatch {'decreasing' if ok else 'NOT monotone'} in rho")
        return out


def run_oracle_comparison(cfg, grids=None):
    """Compare weighted and mollified solvers for every configured ``rho`` and grid."""
    from .grid import Grid

    grids = grids or cfg.oracle_grids or (cfg.grid[0],)
    x0, y0, x1, y1 = cfg.domain
    scheme = cfg.scheme()
    report = OracleReport(cfg.oracle_exclusion)
    for n in grids:
        ny = int(round(n * cfg.grid[1] / cfg.grid[0]))
        grid = Grid(int(n), ny, x0, y0, x1, y1)
        g = cfg.boundary_function(grid)
        weights = prepare_weights(cfg.charges, g, grid, snap=cfg.snap_charges,
                                  tol=cfg.quadrature_tol)
        c_n0, c_p0 = cfg.initial_fields(grid)
        init = prepare_initial(c_n0, c_p0, weights)
        traj = run(init, scheme, weights, snapshot_every=10**9)
        final = traj.snapshots[-1]
        cn_ref = weights.w_cells * final.u
        cp_ref = weights.winv_cells * final.v
        mask = exclusion_mask(grid, weights.charges, cfg.oracle_exclusion)
        for rho in cfg.oracle_radii:
            phys, _, integrals = run_physical(c_n0, c_p0, weights.charges, g, grid, scheme, rho)
            row = OracleRow(grid.nx, float(rho), relative_l2(cn_ref, phys.u, mask),
                            relative_l2(cp_ref, phys.v, mask), integrals)
            logger.info("oracle grid=%d rho=%g mismatch c_n=%.6e c_p=%.6e", grid.nx, rho,
                        row.mismatch_c_n, row.mismatch_c_p)
            report.rows.append(row)
    return report
