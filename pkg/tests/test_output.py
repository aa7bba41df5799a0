import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from singular_pnp.diagnostics import CSV_COLUMNS, DiagnosticsRecord
from singular_pnp.grid import Grid
from singular_pnp.output import (FIELD_NAMES, format_field_csv, read_diagnostics, read_field_csv,
                                 write_diagnostics, write_field_csv, write_snapshot, write_vtk)
from singular_pnp.transform import State
from singular_pnp.weights import WeightField

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite),
       finite)
def test_field_csv_round_trip_is_byte_exact(tmp_path_factory, values, t):
    path = tmp_path_factory.mktemp("csv") / "f.csv"
    write_field_csv(str(path), "c_n", values, t)
    first = path.read_bytes()
    name, back, t_back = read_field_csv(str(path))
    assert name == "c_n" and t_back == t
    np.testing.assert_array_equal(back, values)
    write_field_csv(str(path), name, back, t_back)
    assert path.read_bytes() == first


def test_csv_header():
    text = format_field_csv("psi", np.zeros((2, 3)), 0.25)
    assert text.splitlines()[0] == "# name=psi t=0.25 nx=2 ny=3"
    assert text.splitlines()[1] == "0.0,0.0,0.0"


def test_vtk_layout(tmp_path):
    g = Grid(4, 5)
    f = np.arange(20.0).reshape(4, 5)
    path = tmp_path / "s.vtk"
    write_vtk(str(path), g, {"u": f}, 0.5)
    lines = path.read_text().splitlines()
    assert lines[:6] == ["# vtk DataFile Version 3.0", "singular_pnp snapshot t=0.5", "ASCII",
                         "DATASET STRUCTURED_GRID", "DIMENSIONS 4 5 1", "POINTS 20 double"]
    # x varies fastest in both the points and the point data
    assert lines[6] == "0.125 0.1 0.0" and lines[7] == "0.375 0.1 0.0"
    data = lines[lines.index("LOOKUP_TABLE default") + 1:]
    assert [float(x) for x in data[:5]] == [0.0, 5.0, 10.0, 15.0, 1.0]


def test_snapshot_files(tmp_path):
    W = WeightField.unit(Grid(4, 4))
    s = State(np.ones((4, 4)), 2 * np.ones((4, 4)), np.zeros((4, 4)), 0.1)
    paths = write_snapshot(str(tmp_path), 7, s, W)
    names = sorted(p.split("/")[-1] for p in paths)
    assert names == sorted([f"{n}_000007.csv" for n in FIELD_NAMES] + ["snapshot_000007.vtk"])
    _, c_p, t = read_field_csv(str(tmp_path / "c_p_000007.csv"))
    assert t == 0.1 and np.all(c_p == 2.0)


def test_diagnostics_file(tmp_path):
    rec = DiagnosticsRecord(0.0, 1.0, 2.0, 0.1, 0.2, 0.3, 0.4, 0.05, -1.5, 0.0, 0, "ok")
    path = str(tmp_path / "diagnostics.csv")
    write_diagnostics(path, [rec, rec])
    with open(path) as fh:
        assert fh.readline().strip() == ",".join(CSV_COLUMNS)
    rows = read_diagnostics(path)
    assert len(rows) == 2 and rows[0]["E"] == -1.5 and rows[0]["stability_flag"] == "ok"
