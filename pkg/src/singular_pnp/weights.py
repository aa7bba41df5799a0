"""Point charges, the Green function split, and the singular weight fields.

For charges ``(x_j, alpha_j)`` the weight is ``w = prod |x - x_j|**alpha_j * exp(H)``
where ``H`` is the harmonic function whose boundary values cancel the
logarithms against the applied boundary potential ``g``.  Note ``w = exp(G)``
with ``G = sum alpha_j log|x - x_j| + H``.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import RectBivariateSpline, RegularGridInterpolator

from . import quadrature
from .elliptic import edge_values, solve_poisson_dirichlet
from .errors import (AdmissibilityWarning, ChargeOutsideDomain, DuplicateChargePosition,
                     EvaluationAtSingularity, ZeroStrength)

logger = logging.getLogger(__name__)

ALPHA_THRESHOLD = 2 * math.sqrt(2) - 2


@dataclass(frozen=True)
class Charge:
    position: tuple
    alpha: float

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        object.__setattr__(self, "alpha", float(self.alpha))


@dataclass(frozen=True)
class ChargeSet:
    charges: tuple = ()
    admissible: bool = True

    def __len__(self):
        return len(self.charges)

    def __iter__(self):
        return iter(self.charges)

    @property
    def positions(self):
        return np.array([c.position for c in self.charges], dtype=float).reshape(-1, 2)

    @property
    def alphas(self):
        return np.array([c.alpha for c in self.charges], dtype=float)


def _as_charge(c):
    if isinstance(c, Charge):
        return c
    if len(c) == 3:
        return Charge((c[0], c[1]), c[2])
    return Charge(c[0], c[1])


def validate_charges(charges, domain):
    """Check charges against the domain rectangle ``(x0, y0, x1, y1)``.

    Accepts :class:`Charge` objects, ``(x, y, alpha)`` or ``((x, y), alpha)``.
    Strengths at or beyond ``2*sqrt(2) - 2`` only clear the ``admissible`` flag.
    """
    x0, y0, x1, y1 = domain
    out = []
    seen = set()
    for c in map(_as_charge, charges):
        x, y = c.position
        if c.alpha == 0.0:
            raise ZeroStrength(f"charge at {c.position} has zero strength")
        if not (x0 < x < x1 and y0 < y < y1):
            raise ChargeOutsideDomain(f"charge at {c.position} is not strictly inside {domain}")
        if c.position in seen:
            raise DuplicateChargePosition(f"two charges at {c.position}")
        seen.add(c.position)
        out.append(c)
    admissible = all(abs(c.alpha) < ALPHA_THRESHOLD for c in out)
    if not admissible:
        bad = [c.alpha for c in out if abs(c.alpha) >= ALPHA_THRESHOLD]
        msg = (f"charge strengths {bad} outside |alpha| < {ALPHA_THRESHOLD:.4f}; "
               "well-posedness is not guaranteed")
        logger.warning(msg)
        warnings.warn(msg, AdmissibilityWarning, stacklevel=2)
    return ChargeSet(tuple(out), admissible)


def _snap_index(coord, lo, h, n, mid):
    t = (coord - lo) / h
    k = int(np.floor(t))
    if t == k and 0 < k < n:
        # on a grid line: take the cell on the side of the domain center so
        # that mirror-symmetric charge sets stay symmetric
        return k - 1 if coord > mid else k
    return int(np.clip(k, 0, n - 1))


def snap_to_cells(charges, grid):
    """Move every charge to the center of the cell containing it.

    A charge on a grid line moves into the neighbouring cell closer to the
    domain center (the lower one when equidistant).
    """
    moved = []
    xmid = 0.5 * (grid.x0 + grid.x1)
    ymid = 0.5 * (grid.y0 + grid.y1)
    for c in charges:
        i = _snap_index(c.position[0], grid.x0, grid.hx, grid.nx, xmid)
        j = _snap_index(c.position[1], grid.y0, grid.hy, grid.ny, ymid)
        p = grid.cell_center(i, j)
        if p != c.position:
            logger.info("charge at %s snapped to cell center %s", c.position, p)
        moved.append(Charge(p, c.alpha))
    if len({c.position for c in moved}) != len(moved):
        raise DuplicateChargePosition("two charges share a cell after snapping")
    return ChargeSet(tuple(moved), charges.admissible)


def log_sum(charges, x, y):
    """``sum_j alpha_j log|x - x_j|`` evaluated on arrays."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y).shape)
    for c in charges:
        out = out + 0.5 * c.alpha * np.log((x - c.position[0]) ** 2 + (y - c.position[1]) ** 2)
    return out


def _as_boundary_function(g):
    if g is None:
        return lambda x, y: np.zeros(np.broadcast(x, y).shape)
    if callable(g):
        return g
    value = float(g)
    return lambda x, y: np.full(np.broadcast(x, y).shape, value)


def harmonic_boundary_data(charges, g, grid):
    gf = _as_boundary_function(g)
    return edge_values(grid, lambda x, y: gf(x, y) - log_sum(charges, x, y))


def solve_harmonic_extension(charges, g, grid, tol=1e-10):
    """Cell values of the harmonic ``H`` with ``H = g - sum alpha log|x - x_j|`` on the boundary.

    ``g`` is a callable of ``(x, y)``, a constant, or None for zero.
    """
    data = harmonic_boundary_data(charges, g, grid)
    return solve_poisson_dirichlet(grid, np.zeros(grid.shape), boundary=data, tol=tol)


def bilinear(grid, cell_values):
    """Bilinear interpolant through cell centers, linearly extrapolated near the boundary."""
    return RegularGridInterpolator((grid.xc, grid.yc), cell_values, method="linear",
                                   bounds_error=False, fill_value=None)


def eval_green(charges, H_cells, point, grid):
    """``G(point) = sum alpha_j log|point - x_j| + H(point)`` with bilinear ``H``."""
    x, y = point
    scale = max(grid.x1 - grid.x0, grid.y1 - grid.y0)
    for c in charges:
        if math.hypot(x - c.position[0], y - c.position[1]) <= 1e-14 * scale:
            raise EvaluationAtSingularity(f"G is singular at {c.position}")
    return float(log_sum(charges, x, y)) + float(bilinear(grid, H_cells)([[x, y]])[0])


class SmoothInterpolant:
    """C2 interpolant of a cell field (bicubic spline on centers plus extrapolated edges)."""

    def __init__(self, grid, cell_values):
        V = np.asarray(cell_values, dtype=float)
        xs = np.concatenate([[grid.x0], grid.xc, [grid.x1]])
        ys = np.concatenate([[grid.y0], grid.yc, [grid.y1]])
        P = np.empty((grid.nx + 2, grid.ny + 2))
        P[1:-1, 1:-1] = V
        P[0, 1:-1] = 1.5 * V[0] - 0.5 * V[1]
        P[-1, 1:-1] = 1.5 * V[-1] - 0.5 * V[-2]
        P[:, 0] = 1.5 * P[:, 1] - 0.5 * P[:, 2]
        P[:, -1] = 1.5 * P[:, -2] - 0.5 * P[:, -3]
        self._spline = RectBivariateSpline(xs, ys, P, kx=3, ky=3, s=0)

    def __call__(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return self._spline.ev(x.ravel(), y.ravel()).reshape(x.shape)


@dataclass
class PowerWeight:
    """Pointwise weight ``prod |x - p_j|**e_j * exp(log_factor(x, y))``.

    Outside ``domain`` (when given) the weight equals 1.
    """
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    exponents: np.ndarray = field(default_factory=lambda: np.zeros(0))
    log_factor: Optional[Callable] = None
    domain: Optional[Sequence[float]] = None
    sign: float = 1.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        self.exponents = np.asarray(self.exponents, dtype=float).reshape(-1)

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        logw = np.zeros(np.broadcast(x, y).shape)
        for (px, py), e in zip(self.points, self.exponents):
            logw = logw + 0.5 * e * np.log((x - px) ** 2 + (y - py) ** 2)
        if self.log_factor is not None:
            logw = logw + self.sign * self.log_factor(x, y)
        val = np.exp(logw)
        if self.domain is not None:
            x0, y0, x1, y1 = self.domain
            inside = (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
            val = np.where(inside, val, 1.0)
        return val

    def power(self, q):
        return PowerWeight(self.points, q * self.exponents, self.log_factor, self.domain,
                           q * self.sign)


@dataclass
class WeightField:
    grid: object
    charges: ChargeSet
    G_cells: np.ndarray
    H_cells: np.ndarray
    w_cells: np.ndarray
    winv_cells: np.ndarray
    w_faces: tuple
    winv_faces: tuple

    @classmethod
    def unit(cls, grid):
        """The weight of a charge-free problem with zero boundary potential (w = 1)."""
        one = np.ones(grid.shape)
        faces = (np.ones((grid.nx + 1, grid.ny)), np.ones((grid.nx, grid.ny + 1)))
        return cls(grid, ChargeSet(), np.zeros(grid.shape), np.zeros(grid.shape), one, one.copy(),
                   faces, tuple(f.copy() for f in faces))

    def pointwise(self):
        """The continuous weight ``w`` (H smoothly interpolated), equal to 1 off the domain."""
        return PowerWeight(self.charges.positions, self.charges.alphas,
                           SmoothInterpolant(self.grid, self.H_cells), self.grid.domain)

    def singular_cells(self):
        """Flat indices of cells whose closure contains a charge."""
        rects = self.grid.cell_rects()
        mask = np.zeros(len(rects), dtype=bool)
        slack = 1e-12 * max(self.grid.hx, self.grid.hy)
        for px, py in self.charges.positions:
            mask |= ((px >= rects[:, 0] - slack) & (px <= rects[:, 1] + slack)
                     & (py >= rects[:, 2] - slack) & (py <= rects[:, 3] + slack))
        return np.flatnonzero(mask)


def _face_values(grid, weight, points, exponents, singular):
    """Midpoint face values, replaced by 5-point Gauss averages around singular cells."""
    Xx, Yx = grid.xface_midpoints()
    Xy, Yy = grid.yface_midpoints()
    fx = weight(Xx, Yx)
    fy = weight(Xy, Yy)
    if len(singular):
        I, J = np.unravel_index(singular, grid.shape)
        xi = np.concatenate([I, I + 1])
        xj = np.concatenate([J, J])
        yi = np.concatenate([I, I])
        yj = np.concatenate([J, J + 1])
        a = np.column_stack([grid.xn[xi], grid.yn[xj]])
        b = np.column_stack([grid.xn[xi], grid.yn[xj + 1]])
        fx[xi, xj] = quadrature.segment_averages(weight, a, b, points, exponents, npts=5)
        a = np.column_stack([grid.xn[yi], grid.yn[yj]])
        b = np.column_stack([grid.xn[yi + 1], grid.yn[yj]])
        fy[yi, yj] = quadrature.segment_averages(weight, a, b, points, exponents, npts=5)
    return fx, fy


def build_weight_field(charges, H_cells, grid, tol=quadrature.DEFAULT_TOL,
                       max_level=quadrature.DEFAULT_MAX_LEVEL):
    """Cell averages and face values of ``w`` and ``1/w``.

    Raises :class:`QuadratureNonconvergence` if the adaptive quadrature hits
    its subdivision cap.
    """
    H_cells = np.asarray(H_cells, dtype=float).reshape(grid.shape)
    pts = charges.positions
    alphas = charges.alphas
    Hs = SmoothInterpolant(grid, H_cells)
    w = PowerWeight(pts, alphas, Hs)
    winv = w.power(-1.0)
    rects = grid.cell_rects()
    w_cells = quadrature.rect_averages(w, rects, pts, alphas, tol, max_level).reshape(grid.shape)
    winv_cells = quadrature.rect_averages(winv, rects, pts, -alphas, tol,
                                          max_level).reshape(grid.shape)
    partial = WeightField(grid, charges, None, H_cells, w_cells, winv_cells, None, None)
    singular = partial.singular_cells()
    w_faces = _face_values(grid, w, pts, alphas, singular)
    winv_faces = _face_values(grid, winv, pts, -alphas, singular)

    X, Y = grid.centers
    with np.errstate(divide="ignore"):
        G = log_sum(charges, X, Y) + H_cells
    # cells holding a charge: G is infinite at the center, use log of the cell average
    G.ravel()[singular] = np.log(w_cells.ravel()[singular])

    for name, arr in [("w_cells", w_cells), ("winv_cells", winv_cells),
                      ("w_faces", np.concatenate([f.ravel() for f in w_faces])),
                      ("winv_faces", np.concatenate([f.ravel() for f in winv_faces]))]:
        if not (np.all(np.isfinite(arr)) and np.all(arr > 0)):
            raise ValueError(f"{name} has non-positive or non-finite entries")
    return WeightField(grid, charges, G, H_cells, w_cells, winv_cells, w_faces, winv_faces)


def prepare_weights(charges, g, grid, snap=True, tol=quadrature.DEFAULT_TOL):
    """Validate-snap-solve-build pipeline used by the drivers.

    With ``snap=False`` charges stay where given; the quadrature copes with
    charges on faces or nodes, but face weights through a charge are then
    quadrature averages of a singular function.
    """
    if not isinstance(charges, ChargeSet):
        charges = validate_charges(charges, grid.domain)
    if snap:
        charges = snap_to_cells(charges, grid)
    H = solve_harmonic_extension(charges, g, grid)
    return build_weight_field(charges, H, grid, tol=tol)


def muckenhoupt_constant(weight, p, balls, tol=1e-8):
    """Largest ``A_p`` quantity over a family of balls.

    ``weight`` is a :class:`PowerWeight` (use ``WeightField.pointwise()`` for a
    computed field; it is extended by 1 outside the domain).  ``balls`` is a
    list of ``(center, radius)``.
    """
    if p <= 1:
        raise ValueError("p must exceed 1")
    if isinstance(weight, WeightField):
        weight = weight.pointwise()
    dual = weight.power(-1.0 / (p - 1))
    best = -math.inf
    for center, radius in balls:
        area = math.pi * radius ** 2
        a = quadrature.ball_integral(weight, center, radius, weight.points, weight.exponents,
                                     weight.domain, 1.0, tol) / area
        b = quadrature.ball_integral(dual, center, radius, dual.points, dual.exponents,
                                     dual.domain, 1.0, tol) / area
        best = max(best, a * b ** (p - 1))
    return best
