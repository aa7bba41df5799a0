"""End-to-end acceptance criteria 1-11 on scenario S1.

Each test prints (and the session summary repeats) one ``criterion N PASS|FAIL``
line with the measured value next to its pinned tolerance.
"""
import math
import os

import numpy as np
import pytest

from conftest import record_criterion
from singular_pnp.config import parse_config
from singular_pnp.diagnostics import (embedding_probe, masses, theta_from_sigma, theta_residual,
                                      weighted_norm)
from singular_pnp.elliptic import solve_psi
from singular_pnp.evolution import run, solve_ccpb
from singular_pnp.grid import Grid
from singular_pnp.oracle import run_oracle_comparison
from singular_pnp.transform import prepare_initial
from singular_pnp.validation import run_validation_suite
from singular_pnp.weights import PowerWeight, muckenhoupt_constant, prepare_weights

pytestmark = pytest.mark.slow

S1_CONFIG = os.path.join(os.path.dirname(__file__), os.pardir, "configs", "s1.cfg")

# first execution of the 128^2 oracle (rho = 0.05, exclusion 0.1), frozen as regression data
FROZEN_ORACLE_MISMATCH = 1.718015053743064e-3


@pytest.fixture(scope="session")
def s1_cfg():
    return parse_config(S1_CONFIG)


@pytest.fixture(scope="session")
def s1_run(s1_cfg):
    grid = s1_cfg.make_grid()
    weights = prepare_weights(s1_cfg.charges, s1_cfg.boundary_function(grid), grid,
                              snap=s1_cfg.snap_charges, tol=s1_cfg.quadrature_tol)
    initial = prepare_initial(*s1_cfg.initial_fields(grid), weights)
    traj = run(initial, s1_cfg.scheme(), weights, snapshot_every=10 ** 9)
    return weights, initial, traj


def test_s1_small_data(s1_run):
    H0 = s1_run[2].diagnostics[0].H_func
    assert 1e-3 < H0 < 1e-1  # "H(0) of order 1e-2"


def test_criterion_01_mass_conservation(s1_run):
    recs = s1_run[2].diagnostics
    drift = 0.0
    for key in ("mass_u", "mass_v"):
        m = np.array([getattr(r, key) for r in recs])
        drift = max(drift, float(np.max(np.abs(m - m[0])) / abs(m[0])))
    ok = drift <= 1e-11
    record_criterion(1, "mass conservation", ok, f"max relative drift {drift:.3e} (limit 1e-11)")
    assert ok


def test_criterion_02_nonnegativity(s1_run):
    low = min(min(r.min_u, r.min_v) for r in s1_run[2].diagnostics)
    ok = low >= -1e-13
    record_criterion(2, "nonnegativity", ok, f"min u, v over all steps {low:.3e} (limit -1e-13)")
    assert ok


def test_criterion_03_energy_dissipation(s1_run):
    recs = s1_run[2].diagnostics
    E = np.array([r.free_energy for r in recs])
    D = np.array([r.dissipation for r in recs])
    rise = float(np.max(np.diff(E) - 1e-9 * (1 + np.abs(E[1:]))))
    ok = rise <= 0 and D.min() >= -1e-12
    record_criterion(3, "energy dissipation", ok,
                     f"max step increase minus 1e-9(1+|E|) = {rise:.3e} (limit 0), "
                     f"min D {D.min():.3e} (limit -1e-12)")
    assert ok


def test_criterion_04_small_data_boundedness(s1_run):
    recs = s1_run[2].diagnostics
    H0 = recs[0].H_func
    late = max(r.H_func for r in recs if r.t >= 0.1 - 1e-12)
    flags = {r.stability_flag for r in recs}
    ok = late <= H0 and recs[-1].H_func < H0 and flags == {"ok"}
    record_criterion(4, "small-data boundedness", ok,
                     f"H(0) {H0:.4e}, max H(t>=0.1) {late:.4e}, H(1) {recs[-1].H_func:.4e}, "
                     f"flags {sorted(flags)}")
    assert ok


def test_criterion_05_elliptic_convergence():
    errs = []
    for n in (32, 64, 128):
        g = Grid(n, n)
        W = prepare_weights([(0.375, 0.5, 0.5), (0.625, 0.5, -0.5)], 0.0, g)
        X, Y = g.centers
        exact = np.sin(math.pi * X) * np.sin(math.pi * Y)
        # w u - v / w = Laplace(exact) with v = 0
        psi = solve_psi(g, W, -2 * math.pi ** 2 * exact / W.w_cells, np.zeros(g.shape), tol=1e-12)
        errs.append(float(np.max(np.abs(psi - exact))))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    ok = all(1.8 <= p <= 2.2 for p in orders)
    record_criterion(5, "elliptic convergence", ok,
                     f"max-norm orders {orders[0]:.3f}, {orders[1]:.3f} (range [1.8, 2.2])")
    assert ok


def test_criterion_06_oracle_agreement(s1_cfg):
    report = run_oracle_comparison(s1_cfg.replace(oracle_exclusion=0.1), grids=(128,))
    rows = sorted(report.by_grid()[128], key=lambda r: -r.rho)
    mism = [r.mismatch_c_n for r in rows]
    decreasing = all(b < a for a, b in zip(mism, mism[1:]))
    frozen = FROZEN_ORACLE_MISMATCH
    below = frozen is not None and mism[-1] < 1.1 * frozen
    ok = decreasing and below
    record_criterion(6, "reformulation vs mollification", ok,
                     "c_n mismatch " + " > ".join(f"{m:.4e}" for m in mism)
                     + f" for rho {[r.rho for r in rows]}; final vs frozen {frozen} (+10%)")
    assert ok


def test_criterion_07_ccpb_stationarity(s1_cfg, s1_run):
    weights, initial, _ = s1_run
    eq = solve_ccpb(weights, masses(initial, weights))
    traj = run(eq, s1_cfg.scheme(), weights, snapshot_every=10 ** 9)
    last = traj.snapshots[-1]
    g = weights.grid
    drift = (weighted_norm(last.u - eq.u, weights.w_cells, 2, g)
             + weighted_norm(last.v - eq.v, weights.winv_cells, 2, g)) / (last.t - eq.t)
    ok = drift <= 1e-6
    record_criterion(7, "CCPB stationarity", ok,
                     f"weighted L2 drift per unit time {drift:.3e} (limit 1e-6)")
    assert ok


def test_criterion_08_muckenhoupt():
    w = PowerWeight(np.array([[0.0, 0.0]]), np.array([0.5]))
    val = muckenhoupt_constant(w, 2.0, [((0.0, 0.0), r) for r in (0.05, 0.2, 0.5, 1.0)])
    rel = abs(val / (16 / 15) - 1)
    ok = rel <= 0.02
    record_criterion(8, "Muckenhoupt closed form", ok,
                     f"A_2 = {val:.8f} vs 16/15, relative error {rel:.2e} (limit 2%)")
    assert ok


def test_criterion_09_theta():
    params = [theta_from_sigma(s) for s in (0.1, 1.0, 10.0)]
    res = max(theta_residual(p) for p in params)
    th = [p.theta for p in params]
    ok = res <= 1e-12 and all(0 < t < 1 for t in th) and th[0] < th[1] < th[2]
    record_criterion(9, "theta bookkeeping", ok,
                     f"theta {', '.join(f'{t:.7f}' for t in th)} for sigma 0.1, 1, 10; "
                     f"max residual {res:.1e} (limit 1e-12)")
    assert ok


def _random_family(grid, count=20, seed=2024):
    rng = np.random.default_rng(seed)
    X, Y = grid.centers
    out = []
    for _ in range(count):
        c = rng.uniform(0.15, 0.85, 2)
        s = rng.uniform(0.05, 0.2)
        out.append(rng.uniform(0.5, 2.0) * np.exp(-((X - c[0]) ** 2 + (Y - c[1]) ** 2) / (2 * s * s)))
    return out


def test_criterion_10_embedding(s1_cfg):
    peaks = []
    for n in (64, 256):
        W = prepare_weights(s1_cfg.charges, 0.0, Grid(n, n))
        ratios = embedding_probe(W, 2.0, _random_family(W.grid))
        peaks.append(max(max(r) for r in ratios))
    growth = peaks[1] / peaks[0] - 1
    ok = growth < 0.25
    record_criterion(10, "embedding-ratio boundedness", ok,
                     f"max ratio {peaks[0]:.4f} (64^2) -> {peaks[1]:.4f} (256^2), "
                     f"growth {100 * growth:.1f}% (limit 25%)")
    assert ok


def test_criterion_11_threshold_probe(s1_cfg):
    def rerun(alpha):
        charges = [(0.375, 0.5, alpha), (0.625, 0.5, -alpha)]
        return run_validation_suite(s1_cfg.replace(charges=charges))

    inside = rerun(0.82)
    with pytest.warns(UserWarning):
        outside = rerun(1.0)
    failed_out = [r.name for r in outside.results if r.asserted and not r.passed]
    ok = inside.passed and inside.admissible and not outside.admissible
    record_criterion(11, "threshold probe", ok,
                     f"alpha 0.82: {'all invariants pass' if inside.passed else 'FAILURES'}; "
                     f"alpha 1.0 (admissible=false, reported only): "
                     f"{'all pass' if not failed_out else 'failing ' + ', '.join(failed_out)}")
    for line in outside.lines():
        print("  alpha 1.0 |", line)
    assert ok
