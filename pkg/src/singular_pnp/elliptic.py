"""Five-point finite-volume elliptic operators and the potential solve."""
import math
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import DivisionByZeroSample
from .linalg import SPDSolver

CRITICAL_EXPONENT = 2 * math.sqrt(2)


class EdgeValues(NamedTuple):
    """Dirichlet data at boundary-face midpoints, one array per side."""
    left: np.ndarray
    right: np.ndarray
    bottom: np.ndarray
    top: np.ndarray


def edge_values(grid, func):
    """Sample ``func(x, y)`` at the boundary-face midpoints of ``grid``."""
    mids = grid.boundary_midpoints()
    return EdgeValues(*(np.asarray(func(*mids[k]), dtype=float) * np.ones(len(mids[k][0]))
                        for k in ("left", "right", "bottom", "top")))


def face_transmissibilities(grid, face_coeff=None):
    """``coeff * |face| / distance`` for every x- and y-face (boundary faces use h/2)."""
    tx = grid.hy / grid.xface_distance()
    ty = grid.hx / grid.yface_distance()
    if face_coeff is not None:
        cx, cy = face_coeff
        tx = tx * cx
        ty = ty * cy
    return tx, ty


def _pairs(grid):
    idx = np.arange(grid.size).reshape(grid.shape)
    return (idx[:-1, :].ravel(), idx[1:, :].ravel()), (idx[:, :-1].ravel(), idx[:, 1:].ravel())


def assemble_divgrad(grid, face_coeff=None, bc="dirichlet_zero"):
    """Assemble ``-div(c grad .)`` integrated over cells (5-point FV stencil).

    Off-diagonal entries are ``-c_f |f| / d_f``.  With ``bc="no_flux"`` boundary
    faces carry no flux, so every row sums to zero; with ``"dirichlet_zero"`` a
    boundary face adds ``c_f |f| / (h/2)`` to the diagonal (ghost value 0).
    """
    if bc not in ("dirichlet_zero", "no_flux"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    tx, ty = face_transmissibilities(grid, face_coeff)
    (kx, lx), (ky, ly) = _pairs(grid)
    t_int = np.concatenate([tx[1:-1, :].ravel(), ty[:, 1:-1].ravel()])
    K = np.concatenate([kx, ky])
    L = np.concatenate([lx, ly])
    diag = np.zeros(grid.size)
    np.add.at(diag, K, t_int)
    np.add.at(diag, L, t_int)
    if bc == "dirichlet_zero":
        diag += boundary_diagonal(grid, (tx, ty))
    rows = np.concatenate([K, L, np.arange(grid.size)])
    cols = np.concatenate([L, K, np.arange(grid.size)])
    vals = np.concatenate([-t_int, -t_int, diag])
    return sp.csr_matrix((vals, (rows, cols)), shape=(grid.size, grid.size))


def boundary_diagonal(grid, trans):
    tx, ty = trans
    d = np.zeros(grid.shape)
    d[0, :] += tx[0, :]
    d[-1, :] += tx[-1, :]
    d[:, 0] += ty[:, 0]
    d[:, -1] += ty[:, -1]
    return d.ravel()


def boundary_source(grid, boundary, trans=None):
    """Right-hand-side contribution of Dirichlet data ``boundary``."""
    tx, ty = trans if trans is not None else face_transmissibilities(grid)
    s = np.zeros(grid.shape)
    s[0, :] += tx[0, :] * boundary.left
    s[-1, :] += tx[-1, :] * boundary.right
    s[:, 0] += ty[:, 0] * boundary.bottom
    s[:, -1] += ty[:, -1] * boundary.top
    return s.ravel()


@lru_cache(maxsize=8)
def laplacian_solver(grid):
    return SPDSolver(assemble_divgrad(grid))


def discrete_laplacian(grid, field, boundary=None):
    """Cell-averaged discrete Laplacian of ``field`` with Dirichlet data (default 0)."""
    A = laplacian_solver(grid).A
    flux = A @ np.ravel(field)
    if boundary is not None:
        flux = flux - boundary_source(grid, boundary)
    return (-flux / grid.cell_area).reshape(grid.shape)


def solve_poisson_dirichlet(grid, rhs, boundary=None, tol=1e-10):
    """Solve ``Laplace(psi) = rhs`` in the domain with ``psi = boundary`` (default 0)."""
    rhs = np.asarray(rhs, dtype=float)
    if not np.all(np.isfinite(rhs)):
        raise ValueError("non-finite right-hand side")
    b = -grid.cell_area * np.broadcast_to(rhs, grid.shape).ravel()
    if boundary is not None:
        b = b + boundary_source(grid, boundary)
    return laplacian_solver(grid).solve(b, tol).reshape(grid.shape)


def psi_rhs(weights, u, v, source=None):
    rhs = weights.w_cells * u - weights.winv_cells * v
    if source is not None:
        rhs = rhs + source
    return rhs


def solve_psi(grid, weights, u, v, source=None, boundary=None, tol=1e-10):
    """Potential from ``Laplace(psi) = w u - v / w`` with zero Dirichlet data.

    ``source`` adds a fixed charge density and ``boundary`` non-zero Dirichlet
    data; both exist for the physical-variable reference solver.
    """
    return solve_poisson_dirichlet(grid, psi_rhs(weights, u, v, source), boundary, tol)


def elliptic_estimate_probe(weights, samples, p=CRITICAL_EXPONENT):
    """Ratios of potential-gradient norms to density norms for each ``(u, v)`` sample.

    Returns ``(|grad psi|_{L^p_w} + |grad psi|_{L^p_{1/w}}) /
    (|u|_{L^2_w} + |v|_{L^2_{1/w}})`` with ``psi`` from :func:`solve_psi`.
    """
    from .diagnostics import face_gradients, face_norm, weighted_norm

    grid = weights.grid
    out = []
    for u, v in samples:
        denom = (weighted_norm(u, weights.w_cells, 2, grid)
                 + weighted_norm(v, weights.winv_cells, 2, grid))
        if denom == 0.0:
            raise DivisionByZeroSample("sample (u, v) has zero weighted norm")
        psi = solve_psi(grid, weights, u, v)
        grads = face_gradients(grid, psi, dirichlet=True)
        num = (face_norm(grid, grads, weights.w_faces, p, boundary=True)
               + face_norm(grid, grads, weights.winv_faces, p, boundary=True))
        out.append(num / denom)
    return out
