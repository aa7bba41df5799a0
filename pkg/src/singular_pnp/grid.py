"""Uniform Cartesian cell grid over an axis-aligned rectangle.

Cell fields are stored as arrays of shape ``(nx, ny)`` indexed ``[i, j]`` with
``i`` along x.  Face fields come in two arrays: x-normal faces of shape
``(nx + 1, ny)`` and y-normal faces of shape ``(nx, ny + 1)``; the first and
last rows of each are boundary faces.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    x0: float = 0.0
    y0: float = 0.0
    x1: float = 1.0
    y1: float = 1.0

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError(f"grid needs at least 4 cells per axis, got {self.nx}x{self.ny}")
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ValueError("degenerate domain rectangle")

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def size(self):
        return self.nx * self.ny

    @property
    def hx(self):
        return (self.x1 - self.x0) / self.nx

    @property
    def hy(self):
        return (self.y1 - self.y0) / self.ny

    @property
    def cell_area(self):
        return self.hx * self.hy

    @property
    def area(self):
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def domain(self):
        return (self.x0, self.y0, self.x1, self.y1)

    @cached_property
    def xc(self):
        return self.x0 + (np.arange(self.nx) + 0.5) * self.hx

    @cached_property
    def yc(self):
        return self.y0 + (np.arange(self.ny) + 0.5) * self.hy

    @cached_property
    def xn(self):
        """x coordinates of the vertical grid lines (x-face positions)."""
        return self.x0 + np.arange(self.nx + 1) * self.hx

    @cached_property
    def yn(self):
        return self.y0 + np.arange(self.ny + 1) * self.hy

    @cached_property
    def centers(self):
        """Cell-center coordinate arrays ``(X, Y)``, each of shape ``(nx, ny)``."""
        return np.meshgrid(self.xc, self.yc, indexing="ij")

    def cell_rects(self):
        """Return an ``(N, 4)`` array of ``[xa, xb, ya, yb]`` in flat cell order."""
        X, Y = self.centers
        X = X.ravel()
        Y = Y.ravel()
        return np.column_stack(
            [X - self.hx / 2, X + self.hx / 2, Y - self.hy / 2, Y + self.hy / 2])

    def xface_midpoints(self):
        return np.meshgrid(self.xn, self.yc, indexing="ij")

    def yface_midpoints(self):
        return np.meshgrid(self.xc, self.yn, indexing="ij")

    def xface_distance(self):
        """Center-to-center distance across each x-face (half a cell on the boundary)."""
        d = np.full((self.nx + 1, self.ny), self.hx)
        d[0] = d[-1] = self.hx / 2
        return d

    def yface_distance(self):
        d = np.full((self.nx, self.ny + 1), self.hy)
        d[:, 0] = d[:, -1] = self.hy / 2
        return d

    def boundary_midpoints(self):
        """Midpoints of the four boundary edges: dict side -> (x, y) arrays."""
        return {
            "left": (np.full(self.ny, self.x0), self.yc),
            "right": (np.full(self.ny, self.x1), self.yc),
            "bottom": (self.xc, np.full(self.nx, self.y0)),
            "top": (self.xc, np.full(self.nx, self.y1)),
        }

    def arclength(self, x, y):
        """Counter-clockwise arclength from ``(x0, y0)`` of boundary points."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        w = self.x1 - self.x0
        h = self.y1 - self.y0
        tol = 1e-12 * max(w, h)
        s = np.where(np.abs(y - self.y0) < tol, x - self.x0, np.nan)
        s = np.where(np.abs(x - self.x1) < tol, w + (y - self.y0), s)
        s = np.where(np.abs(y - self.y1) < tol, w + h + (self.x1 - x), s)
        on_left = (np.abs(x - self.x0) < tol) & ~(np.abs(y - self.y0) < tol)
        s = np.where(on_left, 2 * w + h + (self.y1 - y), s)
        return s

    def contains(self, point, strict=True):
        x, y = point
        if strict:
            return self.x0 < x < self.x1 and self.y0 < y < self.y1
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def locate(self, point):
        """Index ``(i, j)`` of the cell containing ``point`` (ties go to the lower cell)."""
        x, y = point
        i = int(np.clip(np.floor((x - self.x0) / self.hx), 0, self.nx - 1))
        j = int(np.clip(np.floor((y - self.y0) / self.hy), 0, self.ny - 1))
        return i, j

    def cell_center(self, i, j):
        return (float(self.xc[i]), float(self.yc[j]))

    def refine(self, factor=2):
        return Grid(self.nx * factor, self.ny * factor, self.x0, self.y0, self.x1, self.y1)


def disk_mask(grid, center=(0.0, 0.0), radius=1.0):
    """Boolean cell mask selecting cells whose centers lie inside a disk."""
    X, Y = grid.centers
    return (X - center[0]) ** 2 + (Y - center[1]) ** 2 < radius ** 2
