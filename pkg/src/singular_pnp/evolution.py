"""Backward-Euler finite-volume time stepping for the weighted system.

Each step freezes the potential, solves one linear drift-diffusion problem
per species, recomputes the potential and repeats until the densities stop
moving (a Picard loop).  Drift fluxes use Scharfetter-Gummel exponential
fitting by default, which keeps the transport matrices M-matrices and makes
the discrete Boltzmann states ``u = A exp(psi)``, ``v = B exp(-psi)`` exact
fixed points.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
import scipy.sparse as sp

from .diagnostics import gamma_threshold, make_record, theta_from_sigma, weighted_norm
from .elliptic import discrete_laplacian, psi_rhs, solve_psi
from .errors import (CCPBNonconvergence, NegativeInitialData, PicardNonconvergence,
                     StabilityWarning)
from .linalg import LaggedLUSolver
from .transform import State

logger = logging.getLogger(__name__)

FLUX_SCHEMES = ("scharfetter_gummel", "centered")
MAX_DT_HALVINGS = 10


@dataclass
class SchemeConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    flux_scheme: str = "scharfetter_gummel"
    picard_tol: float = 1e-8
    picard_max: int = 50
    theta_sigma: float = 1.0
    # forwarded to the stability monitor
    gamma_C: float = 1.0
    eps1: float = 0.05
    linear_tol: float = 1e-14

    def __post_init__(self):
        problems = []
        if not self.dt > 0:
            problems.append(f"dt must be positive (got {self.dt})")
        if not self.t_end > 0:
            problems.append(f"t_end must be positive (got {self.t_end})")
        if self.flux_scheme not in FLUX_SCHEMES:
            problems.append(f"flux_scheme must be one of {FLUX_SCHEMES} (got {self.flux_scheme!r})")
        if not self.picard_tol > 0:
            problems.append(f"picard_tol must be positive (got {self.picard_tol})")
        if int(self.picard_max) < 1:
            problems.append(f"picard_max must be at least 1 (got {self.picard_max})")
        if not self.theta_sigma > 0:
            problems.append(f"theta_sigma must be positive (got {self.theta_sigma})")
        if problems:
            raise ValueError("; ".join(problems))


@dataclass
class Trajectory:
    snapshots: List[State] = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    stability_eps2: float = float("nan")
    warnings: List[str] = field(default_factory=list)

    @property
    def times(self):
        return np.array([s.t for s in self.snapshots])


def bernoulli(x):
    """``B(x) = x / (exp(x) - 1)`` with ``B(0) = 1``, accurate near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-6
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        big = x / np.expm1(np.where(small, 1.0, x))
    return np.where(small, 1.0 - x / 2.0 + x * x / 12.0, big)


class _Transport:
    """Interior-face geometry of one species: conductances ``c = weight_f |f| / d``."""

    def __init__(self, grid, face_weights):
        fx, fy = face_weights
        idx = np.arange(grid.size).reshape(grid.shape)
        self.K = np.concatenate([idx[:-1, :].ravel(), idx[:, :-1].ravel()])
        self.L = np.concatenate([idx[1:, :].ravel(), idx[:, 1:].ravel()])
        self.c = np.concatenate([(fx[1:-1, :] * grid.hy / grid.hx).ravel(),
                                 (fy[:, 1:-1] * grid.hx / grid.hy).ravel()])
        n = grid.size
        self.n = n
        diag = np.arange(n)
        self.rows = np.concatenate([self.K, self.L, self.K, self.L, diag])
        self.cols = np.concatenate([self.K, self.L, self.L, self.K, diag])

    def matrix(self, drift, mass_diag, scheme):
        """``mass_diag + sum_f flux(f)`` as a sparse matrix; ``drift`` is per face."""
        if scheme == "scharfetter_gummel":
            out_K = bernoulli(-drift)  # coefficient of the upwind-K value
            out_L = bernoulli(drift)
        else:
            out_K = 1.0 + 0.5 * drift
            out_L = 1.0 - 0.5 * drift
        a = self.c * out_K
        b = self.c * out_L
        vals = np.concatenate([a, b, -b, -a, mass_diag])
        return sp.csr_matrix((vals, (self.rows, self.cols)), shape=(self.n, self.n))


class StepWorkspace:
    """Per-weight-field cache of face geometry and lagged factorizations."""

    def __init__(self, weights):
        self.weights = weights
        self.grid = weights.grid
        self.u = _Transport(self.grid, weights.w_faces)
        self.v = _Transport(self.grid, weights.winv_faces)
        self.solver_u = LaggedLUSolver()
        self.solver_v = LaggedLUSolver()

    @property
    def factorizations(self):
        return self.solver_u.factorizations + self.solver_v.factorizations


def linearized_step(s, psi_bar, dt, weights, flux_scheme="scharfetter_gummel", workspace=None,
                    tol=1e-14):
    """One backward-Euler solve per species with the potential frozen at ``psi_bar``.

    Returns ``(u_new, v_new)``.  Boundary faces carry no flux, so the weighted
    masses are preserved up to the linear-solver residual.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    ws = workspace if workspace is not None else StepWorkspace(weights)
    grid = weights.grid
    psi = np.asarray(psi_bar, dtype=float).ravel()
    drift = psi[ws.u.L] - psi[ws.u.K]
    out = []
    for trans, solver, cells, dens, sign in ((ws.u, ws.solver_u, weights.w_cells, s.u, 1.0),
                                             (ws.v, ws.solver_v, weights.winv_cells, s.v, -1.0)):
        m = cells.ravel() * grid.cell_area / dt
        A = trans.matrix(sign * drift, m, flux_scheme)
        b = m * np.asarray(dens, dtype=float).ravel()
        out.append(solver.solve(A, b, tol).reshape(grid.shape))
    return out[0], out[1]


def _picard_norm(du, dv, weights):
    g = weights.grid
    return weighted_norm(du, weights.w_cells, 2, g) + weighted_norm(dv, weights.winv_cells, 2, g)


@dataclass
class StepResult:
    state: State
    iterations: int
    psi_residual: float


def psi_residual(state, weights, source=None, boundary=None):
    """Max-norm defect of the discrete Poisson equation relative to its right-hand side."""
    rhs = psi_rhs(weights, state.u, state.v, source)
    lap = discrete_laplacian(weights.grid, state.psi, boundary)
    return float(np.max(np.abs(lap - rhs)) / max(1.0, float(np.max(np.abs(rhs)))))


def picard_step(s, dt, weights, cfg, workspace=None, source=None, boundary=None):
    """Advance ``s`` by ``dt`` with the frozen-potential fixed-point iteration.

    ``source``/``boundary`` add a fixed charge density and Dirichlet data to
    the potential equation (used by the physical-variable reference solver).
    Raises :class:`PicardNonconvergence` after ``cfg.picard_max`` iterations.
    """
    ws = workspace if workspace is not None else StepWorkspace(weights)
    grid = weights.grid
    u, v = s.u, s.v
    for k in range(1, int(cfg.picard_max) + 1):
        psi_bar = solve_psi(grid, weights, u, v, source, boundary)
        u_new, v_new = linearized_step(s, psi_bar, dt, weights, cfg.flux_scheme, ws, cfg.linear_tol)
        change = _picard_norm(u_new - u, v_new - v, weights)
        scale = _picard_norm(u, v, weights) + 1.0
        u, v = u_new, v_new
        if not math.isfinite(change):
            break
        if change <= cfg.picard_tol * scale:
            psi = solve_psi(grid, weights, u, v, source, boundary)
            new = State(u, v, psi, s.t + dt)
            return StepResult(new, k, psi_residual(new, weights, source, boundary))
    raise PicardNonconvergence(
        f"no fixed point after {cfg.picard_max} iterations at t={s.t:.6g}, dt={dt:.3g}")


def advance(s, dt, weights, cfg, workspace=None, source=None, boundary=None, depth=0):
    """``picard_step`` with recursive step halving on Picard failure.

    Returns the :class:`StepResult` of the full interval with the iteration
    counts of all substeps summed.
    """
    try:
        return picard_step(s, dt, weights, cfg, workspace, source, boundary)
    except PicardNonconvergence:
        if depth >= MAX_DT_HALVINGS:
            raise PicardNonconvergence(
                f"Picard iteration failed at t={s.t:.6g} after {MAX_DT_HALVINGS} step halvings")
        logger.info("Picard failure at t=%.6g, retrying with dt=%.3g", s.t, dt / 2)
    first = advance(s, dt / 2, weights, cfg, workspace, source, boundary, depth + 1)
    second = advance(first.state, dt / 2, weights, cfg, workspace, source, boundary, depth + 1)
    second.state.t = s.t + dt
    return StepResult(second.state, first.iterations + second.iterations, second.psi_residual)


def run(initial, cfg, weights, grid=None, snapshot_every=1, callback: Optional[Callable] = None,
        keep_snapshots=True, source=None, boundary=None, psi_boundary=None):
    """March ``initial`` to ``cfg.t_end``.

    Diagnostics are recorded at t=0 and after every step.  Snapshots are kept
    every ``snapshot_every`` steps plus the final state.  ``callback(kind,
    step, obj)`` receives ``("record", n, DiagnosticsRecord)`` and
    ``("snapshot", n, State)`` events as they happen.  If the smallness budget
    ``H(0) < min(eps1, eps2)`` holds and ``H`` later exceeds
    ``max(H(0), eps2)``, the record is flagged ``warning`` and a
    :class:`StabilityWarning` is emitted.
    """
    grid = grid if grid is not None else weights.grid
    if grid != weights.grid:
        raise ValueError("grid does not match the weight field")
    if np.min(initial.u) < 0 or np.min(initial.v) < 0:
        raise NegativeInitialData("initial densities must be non-negative")
    ws = StepWorkspace(weights)
    n_steps = max(1, int(round(cfg.t_end / cfg.dt)))
    dt = cfg.t_end / n_steps
    theta = theta_from_sigma(cfg.theta_sigma).theta
    eps2 = gamma_threshold(cfg.gamma_C, theta, cfg.eps1)
    traj = Trajectory(stability_eps2=eps2)

    def emit(kind, n, obj):
        if callback is not None:
            callback(kind, n, obj)

    state = State(np.array(initial.u, dtype=float), np.array(initial.v, dtype=float),
                  np.array(initial.psi, dtype=float), float(initial.t))
    rec = make_record(state.t, state, weights, 0, "ok",
                      psi_residual(state, weights, source, boundary), psi_boundary)
    H0 = rec.H_func
    budget_ok = H0 < min(cfg.eps1, eps2)
    bound = max(H0, eps2)
    traj.diagnostics.append(rec)
    emit("record", 0, rec)
    if keep_snapshots:
        traj.snapshots.append(state.copy())
    emit("snapshot", 0, state)
    t0 = state.t
    warned = False
    for n in range(1, n_steps + 1):
        res = advance(state, dt, weights, cfg, ws, source, boundary)
        state = res.state
        state.t = t0 + n * dt  # avoid accumulating roundoff in the time stamps
        flag = "ok"
        rec = make_record(state.t, state, weights, res.iterations, flag, res.psi_residual,
                          psi_boundary)
        if budget_ok and rec.H_func > bound + 1e-9:
            rec.stability_flag = "warning"
            if not warned:
                msg = (f"H(t={state.t:.4g}) = {rec.H_func:.6e} exceeds max(H(0), eps2) = "
                       f"{bound:.6e}")
                warnings.warn(msg, StabilityWarning, stacklevel=2)
                traj.warnings.append(msg)
                warned = True
        traj.diagnostics.append(rec)
        emit("record", n, rec)
        if n % snapshot_every == 0 or n == n_steps:
            if keep_snapshots:
                traj.snapshots.append(state.copy())
            emit("snapshot", n, state)
    logger.info("run finished: %d steps, %d factorizations", n_steps, ws.factorizations)
    return traj


def boltzmann_densities(weights, psi, M_n, M_p):
    """``u = A exp(psi)``, ``v = B exp(-psi)`` normalized to the weighted masses."""
    a = weights.grid.cell_area
    shift = float(np.max(np.abs(psi))) if np.size(psi) else 0.0
    # scale-free exponentials: the normalization absorbs the shift
    eu = np.exp(psi - shift)
    ev = np.exp(-psi - shift)
    u = M_n * eu / (np.sum(weights.w_cells * eu) * a) if M_n > 0 else np.zeros_like(psi)
    v = M_p * ev / (np.sum(weights.winv_cells * ev) * a) if M_p > 0 else np.zeros_like(psi)
    return u, v


def solve_ccpb(weights, masses, tol=1e-12, damping=0.5, max_iter=5000):
    """Charge-conserving Poisson-Boltzmann equilibrium for prescribed masses.

    ``masses = (M_n, M_p)`` are the totals of ``w u`` and ``v / w``.  Damped
    fixed-point iteration on ``psi``; the damping factor is halved whenever
    the update size grows.  Stops when the undamped update changes ``psi`` by
    at most ``tol`` in max-norm.
    """
    M_n, M_p = (float(m) for m in masses)
    if M_n < 0 or M_p < 0:
        raise ValueError("masses must be non-negative")
    if not tol > 0:
        raise ValueError("tol must be positive")
    grid = weights.grid
    psi = np.zeros(grid.shape)
    lam = float(damping)
    prev = np.inf
    for it in range(max_iter):
        u, v = boltzmann_densities(weights, psi, M_n, M_p)
        target = solve_psi(grid, weights, u, v, tol=1e-13)
        res = float(np.max(np.abs(target - psi)))
        if res <= tol:
            psi = target
            u, v = boltzmann_densities(weights, psi, M_n, M_p)
            logger.debug("CCPB converged in %d iterations", it + 1)
            return State(u, v, solve_psi(grid, weights, u, v, tol=1e-13), 0.0)
        if res > prev:
            lam *= 0.5
            if lam < 1e-8:
                break
        prev = res
        psi = (1.0 - lam) * psi + lam * target
    raise CCPBNonconvergence(f"CCPB iteration did not reach tol={tol:g} (residual {prev:.3e})")
