import math

import numpy as np
import pytest
from scipy import integrate

from conftest import S1_CHARGES, S1_GAUSS
from singular_pnp.config import RunConfig
from singular_pnp.grid import Grid
from singular_pnp.oracle import (OracleReport, OracleRow, bump, exclusion_mask, mollified_source,
                                 run_oracle_comparison)
from singular_pnp.weights import validate_charges


@pytest.mark.parametrize("rho", [0.2, 0.05])
def test_bump_integrates_to_one(rho):
    eta = bump(rho)
    val, _ = integrate.quad(lambda r: 2 * math.pi * r * float(eta(r, 0.0)), 0, rho, epsabs=1e-14)
    assert val == pytest.approx(1.0, rel=1e-12)


def test_mollified_source_total_charge():
    g = Grid(32, 32)
    cs = validate_charges(S1_CHARGES, g.domain)
    src, integrals = mollified_source(cs, g, 0.1)
    assert integrals == pytest.approx([1.0, 1.0], rel=1e-9)
    total = src.sum() * g.cell_area
    assert total == pytest.approx(2 * math.pi * sum(c[2] for c in S1_CHARGES), abs=1e-9)
    # the positive charge's bump sits on the left half
    assert src[:16].sum() > 0 > src[16:].sum()


def test_exclusion_mask():
    g = Grid(8, 8)
    cs = validate_charges([(0.5, 0.5, 0.3)], g.domain)
    assert exclusion_mask(g, cs, 0.0).all()
    m = exclusion_mask(g, cs, 0.1)
    assert (~m).sum() == 4


def s1_small(**kw):
    base = dict(grid=(32, 32), charges=list(S1_CHARGES),
                initial_c_n=("gaussian", S1_GAUSS["c_n"]), initial_c_p=("gaussian", S1_GAUSS["c_p"]),
                dt=1e-2, t_end=0.1, oracle_radii=(0.2, 0.1, 0.05))
    base.update(kw)
    return RunConfig(**base)


def test_no_charges_solvers_coincide():
    rep = run_oracle_comparison(s1_small(charges=[]))
    for row in rep.rows:
        assert row.mismatch_c_n <= 1e-12 and row.mismatch_c_p <= 1e-12


def test_exclusion_radius_zero_is_dominated_by_charge_cells():
    near = run_oracle_comparison(s1_small(oracle_exclusion=0.0))
    far = run_oracle_comparison(s1_small(oracle_exclusion=0.1))
    for a, b in zip(near.rows, far.rows):
        assert a.mismatch_c_n > b.mismatch_c_n
    assert far.monotone() == {32: True}
    assert any("exclusion radius 0" in line for line in near.lines())


def test_report_flags_non_monotone_rows():
    rep = OracleReport(0.0, [OracleRow(64, 0.2, 1e-2, 1e-2, []), OracleRow(64, 0.1, 2e-2, 1e-2, [])])
    assert rep.monotone() == {64: False}
    assert rep.lines()[-1] == "grid 64: c_n mismatch NOT monotone in rho"
