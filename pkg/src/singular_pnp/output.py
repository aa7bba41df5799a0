"""Snapshot and diagnostics files.

Field CSV layout: one comment header line ``# name=<field> t=<time> nx=<nx> ny=<ny>``
followed by ``nx`` rows of ``ny`` comma-separated values (row ``i`` is the
``i``-th column of cells in x).  Floats are written with ``repr`` so reading
and re-writing a file reproduces it byte for byte.
"""
import os

import numpy as np

from .diagnostics import CSV_COLUMNS

FIELD_NAMES = ("u", "v", "psi", "c_n", "c_p", "phi")


def _fmt(x):
    return repr(float(x))


def format_field_csv(name, values, t):
    values = np.asarray(values, dtype=float)
    nx, ny = values.shape
    lines = [f"# name={name} t={_fmt(t)} nx={nx} ny={ny}"]
    lines.extend(",".join(_fmt(x) for x in row) for row in values)
    return "\n".join(lines) + "\n"


def write_field_csv(path, name, values, t):
    with open(path, "w", newline="\n") as fh:
        fh.write(format_field_csv(name, values, t))


def read_field_csv(path):
    """Return ``(name, values, t)``."""
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing header line")
        meta = dict(tok.split("=", 1) for tok in header[1:].split())
        rows = [[float(x) for x in line.split(",")] for line in fh if line.strip()]
    values = np.array(rows, dtype=float)
    nx, ny = int(meta["nx"]), int(meta["ny"])
    if values.shape != (nx, ny):
        raise ValueError(f"{path}: expected {nx}x{ny} values, found {values.shape}")
    return meta["name"], values, float(meta["t"])


def write_vtk(path, grid, fields, t):
    """Legacy ASCII structured grid with point data at the cell centers."""
    nx, ny = grid.shape
    X, Y = grid.centers
    lines = ["# vtk DataFile Version 3.0",
             f"singular_pnp snapshot t={_fmt(t)}",
             "ASCII",
             "DATASET STRUCTURED_GRID",
             f"DIMENSIONS {nx} {ny} 1",
             f"POINTS {nx * ny} double"]
    # VTK wants x varying fastest
    for x, y in zip(X.T.ravel(), Y.T.ravel()):
        lines.append(f"{_fmt(x)} {_fmt(y)} 0.0")
    lines.append(f"POINT_DATA {nx * ny}")
    for name, vals in fields.items():
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_fmt(x) for x in np.asarray(vals, dtype=float).T.ravel())
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def snapshot_fields(state, weights):
    """Weighted and physical fields of ``state`` keyed by output name."""
    from .transform import weighted_to_physical

    phys = weighted_to_physical(state, weights)
    return {"u": state.u, "v": state.v, "psi": state.psi,
            "c_n": phys.c_n, "c_p": phys.c_p, "phi": phys.phi}


def write_snapshot(out_dir, step, state, weights, vtk=True):
    """Write one CSV per field (and optionally a VTK file) for ``state``."""
    fields = snapshot_fields(state, weights)
    paths = []
    for name, vals in fields.items():
        p = os.path.join(out_dir, f"{name}_{step:06d}.csv")
        write_field_csv(p, name, vals, state.t)
        paths.append(p)
    if vtk:
        p = os.path.join(out_dir, f"snapshot_{step:06d}.vtk")
        write_vtk(p, weights.grid, fields, state.t)
        paths.append(p)
    return paths


class DiagnosticsWriter:
    """Streams :class:`DiagnosticsRecord` rows to ``diagnostics.csv``."""

    def __init__(self, path):
        self.path = path
        self._fh = open(path, "w", newline="\n")
        self._fh.write(",".join(CSV_COLUMNS) + "\n")

    def write(self, record):
        self._fh.write(",".join(record.csv_row()) + "\n")
        self._fh.flush()

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_diagnostics(path, records):
    with DiagnosticsWriter(path) as w:
        for r in records:
            w.write(r)


def read_diagnostics(path):
    """Rows of ``diagnostics.csv`` as dicts (floats, ``picard_iters`` as int)."""
    import csv

    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            rec = {k: float(row[k]) for k in CSV_COLUMNS[:-2]}
            rec["picard_iters"] = int(row["picard_iters"])
            rec["stability_flag"] = row["stability_flag"]
            out.append(rec)
    return out
