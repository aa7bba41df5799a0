"""Weighted norms, conserved quantities, energy monitors and stability bookkeeping."""
import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy import optimize

from .errors import ConstantFieldInPoincareProbe, NegativeDensityInEnergy, ThetaOutOfRange

LOG_FLOOR = 1e-300
SOBOLEV_EXPONENT = 2 * math.sqrt(2) / (math.sqrt(2) - 1)

CSV_COLUMNS = ("t", "mass_u", "mass_v", "l2w_u", "l2winv_v", "h1w_u", "h1winv_v", "H", "E", "D",
               "picard_iters", "stability_flag")


@dataclass
class DiagnosticsRecord:
    t: float
    mass_u: float
    mass_v: float
    l2w_u: float
    l2winv_v: float
    h1w_u: float
    h1winv_v: float
    H_func: float
    free_energy: float
    dissipation: float
    picard_iters: int = 0
    stability_flag: str = "ok"
    # monitored extras, not part of the CSV contract
    min_u: float = 0.0
    min_v: float = 0.0
    psi_residual: float = 0.0

    def csv_row(self):
        vals = [self.t, self.mass_u, self.mass_v, self.l2w_u, self.l2winv_v, self.h1w_u,
                self.h1winv_v, self.H_func, self.free_energy, self.dissipation]
        return [repr(float(v)) for v in vals] + [str(int(self.picard_iters)), self.stability_flag]


@dataclass(frozen=True)
class ThetaParams:
    sigma: float
    theta: float


@dataclass
class StabilityAssessment:
    eps2: float
    gamma: np.ndarray
    flagged: List[int] = field(default_factory=list)
    bound: float = 0.0

    @property
    def ok(self):
        return not self.flagged


def _area(grid):
    return grid.cell_area if grid is not None else 1.0


def weighted_norm(f, weight_cells, p=2.0, grid=None, mask=None):
    """``(sum |f|**p * weight * cell_area)**(1/p)`` over the (masked) cells."""
    if p < 1:
        raise ValueError("p must be >= 1")
    vals = np.abs(np.asarray(f, dtype=float)) ** p * np.asarray(weight_cells, dtype=float)
    if mask is not None:
        vals = np.where(mask, vals, 0.0)
    return float(np.sum(vals) * _area(grid)) ** (1.0 / p)


def face_gradients(grid, field, dirichlet=False):
    """Difference quotients on all x- and y-faces.

    Boundary faces get ``(ghost - inside) / (h/2)`` with ghost values from
    ``dirichlet`` (True for zero data, or an ``EdgeValues``); without Dirichlet
    data they are set to zero (no-flux).
    """
    f = np.asarray(field, dtype=float).reshape(grid.shape)
    gx = np.zeros((grid.nx + 1, grid.ny))
    gy = np.zeros((grid.nx, grid.ny + 1))
    gx[1:-1] = (f[1:] - f[:-1]) / grid.hx
    gy[:, 1:-1] = (f[:, 1:] - f[:, :-1]) / grid.hy
    if dirichlet is not False and dirichlet is not None:
        if dirichlet is True:
            left = right = np.zeros(grid.ny)
            bottom = top = np.zeros(grid.nx)
        else:
            left, right, bottom, top = dirichlet
        gx[0] = (f[0] - left) / (grid.hx / 2)
        gx[-1] = (right - f[-1]) / (grid.hx / 2)
        gy[:, 0] = (f[:, 0] - bottom) / (grid.hy / 2)
        gy[:, -1] = (top - f[:, -1]) / (grid.hy / 2)
    return gx, gy


def face_measures(grid):
    """Diamond areas ``|face| * distance`` (halved on boundary faces)."""
    return grid.hy * grid.xface_distance(), grid.hx * grid.yface_distance()


def face_norm(grid, grads, face_weights, p=2.0, boundary=False):
    """Weighted face-gradient norm ``(sum mu_f |g_f|**p |f| d_f)**(1/p)``."""
    gx, gy = grads
    mx, my = face_measures(grid)
    wx, wy = face_weights if face_weights is not None else (1.0, 1.0)
    tx = np.abs(gx) ** p * wx * mx
    ty = np.abs(gy) ** p * wy * my
    if boundary:
        total = tx.sum() + ty.sum()
    else:
        total = tx[1:-1].sum() + ty[:, 1:-1].sum()
    return float(total) ** (1.0 / p)


def species_weights(weights, species):
    if species == "u_weight":
        return weights.w_cells, weights.w_faces
    if species == "v_weight":
        return weights.winv_cells, weights.winv_faces
    raise ValueError(f"unknown species weight {species!r}")


def weighted_h1_norm(f, weights, species="u_weight", p=2.0):
    """Weighted W^{1,p} norm: cell part plus interior face-gradient part."""
    cells, faces = species_weights(weights, species)
    grid = weights.grid
    lp = weighted_norm(f, cells, p, grid) ** p
    gp = face_norm(grid, face_gradients(grid, f), faces, p) ** p
    return (lp + gp) ** (1.0 / p)


def masses(state, weights):
    a = weights.grid.cell_area
    return (float(np.sum(weights.w_cells * state.u) * a),
            float(np.sum(weights.winv_cells * state.v) * a))


def _entropy(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x * (np.log(np.maximum(x, LOG_FLOOR)) - 1.0), 0.0)


def log_mean(a, b):
    """Logarithmic mean, zero when either argument vanishes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    la = np.log(np.maximum(a, LOG_FLOOR))
    lb = np.log(np.maximum(b, LOG_FLOOR))
    d = la - lb
    with np.errstate(invalid="ignore", divide="ignore"):
        m = np.where(np.abs(d) > 1e-8, (a - b) / np.where(d == 0, 1.0, d), 0.5 * (a + b))
    return np.where((a > 0) & (b > 0), m, 0.0)


def free_energy_and_dissipation(state, weights, psi_boundary=None):
    """Discrete free energy ``E`` and its dissipation rate ``D``.

    ``E = sum [w u (log u - 1) + v/w (log v - 1)] |K| + 1/2 sum_f |grad_f psi|^2 |f| d_f``
    and ``D = sum_f [w_f um_f |grad_f(log u - psi)|^2 + winv_f vm_f |grad_f(log v + psi)|^2] |f| d_f``
    over interior faces, ``um``/``vm`` being logarithmic face means.  See
    docs/ENERGY.md for why ``dE/dt = -D`` in the continuum.
    """
    grid = weights.grid
    u = np.asarray(state.u, dtype=float)
    v = np.asarray(state.v, dtype=float)
    if u.min() < -1e-12 or v.min() < -1e-12:
        raise NegativeDensityInEnergy(f"min u = {u.min():.3e}, min v = {v.min():.3e}")
    u = np.maximum(u, 0.0)
    v = np.maximum(v, 0.0)
    a = grid.cell_area
    bulk = float(np.sum(weights.w_cells * _entropy(u) + weights.winv_cells * _entropy(v)) * a)
    dirichlet = True if psi_boundary is None else psi_boundary
    field_part = 0.5 * face_norm(grid, face_gradients(grid, state.psi, dirichlet), None, 2.0,
                                 boundary=True) ** 2
    E = bulk + field_part

    mx, my = face_measures(grid)
    lu = np.log(np.maximum(u, LOG_FLOOR))
    lv = np.log(np.maximum(v, LOG_FLOOR))
    psi = np.asarray(state.psi, dtype=float)
    D = 0.0
    for cells, faces, chem in ((u, weights.w_faces, lu - psi), (v, weights.winv_faces, lv + psi)):
        wx, wy = faces
        mean_x = log_mean(cells[:-1], cells[1:])
        mean_y = log_mean(cells[:, :-1], cells[:, 1:])
        gx = np.diff(chem, axis=0) / grid.hx
        gy = np.diff(chem, axis=1) / grid.hy
        D += float(np.sum(wx[1:-1] * mean_x * gx ** 2 * mx[1:-1]))
        D += float(np.sum(wy[:, 1:-1] * mean_y * gy ** 2 * my[:, 1:-1]))
    return E, D


def theta_from_sigma(sigma):
    """Interpolation exponent between L^2 and the Sobolev exponent ``K + sigma``.

    Solves ``1/K = (1 - theta)/(K + sigma) + theta/2`` with ``K = 2 sqrt2/(sqrt2 - 1)``.
    """
    if not sigma > 0:
        raise ThetaOutOfRange(f"sigma must be positive, got {sigma}")
    a = (math.sqrt(2) - 1) / (2 * math.sqrt(2))
    q = 1.0 / (SOBOLEV_EXPONENT + sigma)
    theta = (a - q) / (0.5 - q)
    if not 0.0 < theta < 1.0:
        raise ThetaOutOfRange(f"theta = {theta} for sigma = {sigma}")
    return ThetaParams(float(sigma), float(theta))


def theta_residual(params):
    a = (math.sqrt(2) - 1) / (2 * math.sqrt(2))
    return abs(a - ((1 - params.theta) / (SOBOLEV_EXPONENT + params.sigma) + params.theta / 2))


def gamma_poly(s, C, theta, eps1):
    """``-s/C + C (s**(1 + 1/theta) + s**2 + eps1)``."""
    s = np.asarray(s, dtype=float)
    return -s / C + C * (s ** (1.0 + 1.0 / theta) + s ** 2 + eps1)


def gamma_threshold(C, theta, eps1):
    """``sup{s > 0 : Gamma(s) < 0}``, or 0 when Gamma never goes negative.

    Gamma is convex on ``s > 0``: locate its minimum, then bracket the upper root.
    """
    g = lambda s: float(gamma_poly(s, C, theta, eps1))
    hi = 1.0
    while g(hi) < 0:
        hi *= 2
    res = optimize.minimize_scalar(g, bounds=(0.0, hi), method="bounded",
                                   options={"xatol": 1e-14})
    s_min = float(res.x)
    if g(s_min) >= 0:
        return 0.0
    while g(hi) <= 0:
        hi *= 2
    return float(optimize.brentq(g, s_min, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))


def stability_monitor(records, eps1, C=1.0, sigma=1.0, slack=1e-9):
    """Evaluate ``Gamma(H)`` along a trajectory and flag excursions of ``H``.

    A record is flagged when ``H > max(H(0), eps2) + slack``.
    """
    theta = theta_from_sigma(sigma).theta
    eps2 = gamma_threshold(C, theta, eps1)
    H = np.array([r.H_func for r in records], dtype=float)
    if len(H) == 0:
        return StabilityAssessment(eps2, np.zeros(0), [], eps2)
    bound = max(H[0], eps2)
    flagged = [i for i, h in enumerate(H) if h > bound + slack]
    return StabilityAssessment(eps2, gamma_poly(H, C, theta, eps1), flagged, bound)


def sobolev_k(p=2.0, q=1.5, d=2):
    """Gain exponent ``k = d / (d - p/q)`` (requires ``q < p < d q``)."""
    if not (q < p < d * q):
        raise ValueError(f"need q < p < d*q, got p={p}, q={q}, d={d}")
    return d / (d - p / q)


def embedding_probe(weights, p, fields, q=1.5, k=None, species="u_weight"):
    """Sobolev and Poincare ratios for each field.

    Returns a list of ``(sobolev_ratio, poincare_ratio)`` with
    ``|h|_{L^{kp}} / |h|_{W^{1,p}}`` and ``|h - h_E|_{L^{kp}} / |grad h|_{L^p}``.
    """
    grid = weights.grid
    cells, faces = species_weights(weights, species)
    if k is None:
        k = sobolev_k(p, q)
    out = []
    mu_total = float(np.sum(cells) * grid.cell_area)
    for h in fields:
        h = np.asarray(h, dtype=float).reshape(grid.shape)
        grad = face_norm(grid, face_gradients(grid, h), faces, p)
        if grad == 0.0 or np.ptp(h) == 0.0:
            raise ConstantFieldInPoincareProbe("Poincare probe needs a non-constant field")
        hi = weighted_norm(h, cells, k * p, grid)
        sob = hi / (weighted_norm(h, cells, p, grid) ** p + grad ** p) ** (1.0 / p)
        mean = float(np.sum(h * cells) * grid.cell_area) / mu_total
        poi = weighted_norm(h - mean, cells, k * p, grid) / grad
        out.append((sob, poi))
    return out


def sobolev_ratio(weights, p, h, k, species="u_weight"):
    """Sobolev ratio alone (defined for constant fields too)."""
    grid = weights.grid
    cells, faces = species_weights(weights, species)
    grad = face_norm(grid, face_gradients(grid, h), faces, p)
    return weighted_norm(h, cells, k * p, grid) / (weighted_norm(h, cells, p, grid) ** p
                                                    + grad ** p) ** (1.0 / p)


def make_record(t, state, weights, picard_iters=0, stability_flag="ok", psi_residual=0.0,
                psi_boundary=None):
    grid = weights.grid
    mu, mv = masses(state, weights)
    l2u = weighted_norm(state.u, weights.w_cells, 2, grid)
    l2v = weighted_norm(state.v, weights.winv_cells, 2, grid)
    try:
        E, D = free_energy_and_dissipation(state, weights, psi_boundary)
    except NegativeDensityInEnergy:
        # possible with the centered flux; the record keeps the norms and masses
        E = D = float("nan")
    return DiagnosticsRecord(
        t=float(t), mass_u=mu, mass_v=mv, l2w_u=l2u, l2winv_v=l2v,
        h1w_u=weighted_h1_norm(state.u, weights, "u_weight"),
        h1winv_v=weighted_h1_norm(state.v, weights, "v_weight"),
        H_func=l2u ** 2 + l2v ** 2, free_energy=E, dissipation=D,
        picard_iters=int(picard_iters), stability_flag=stability_flag,
        min_u=float(np.min(state.u)), min_v=float(np.min(state.v)), psi_residual=psi_residual)
