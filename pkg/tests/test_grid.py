import numpy as np
import pytest

from singular_pnp.grid import Grid, disk_mask


def test_rejects_tiny_grids():
    with pytest.raises(ValueError):
        Grid(3, 8)


def test_geometry_of_rectangle():
    g = Grid(8, 4, 0.0, -1.0, 2.0, 1.0)
    assert g.shape == (8, 4) and g.size == 32
    assert g.hx == pytest.approx(0.25) and g.hy == pytest.approx(0.5)
    assert g.cell_area * g.size == pytest.approx(g.area)
    assert g.xc[0] == pytest.approx(0.125) and g.yc[-1] == pytest.approx(0.75)
    assert g.xface_distance().shape == (9, 4)
    assert g.xface_distance()[0, 0] == pytest.approx(0.125)
    assert g.yface_distance()[0, 1] == pytest.approx(0.5)


def test_cell_rects_cover_domain():
    g = Grid(5, 7)
    r = g.cell_rects()
    assert np.sum((r[:, 1] - r[:, 0]) * (r[:, 3] - r[:, 2])) == pytest.approx(1.0)
    k = 2 * g.ny + 3
    assert r[k, 0] == pytest.approx(g.xn[2]) and r[k, 2] == pytest.approx(g.yn[3])


def test_arclength_is_counterclockwise():
    g = Grid(4, 4, 0, 0, 2, 1)
    s = g.arclength(np.array([1.0, 2.0, 1.0, 0.0]), np.array([0.0, 0.5, 1.0, 0.5]))
    np.testing.assert_allclose(s, [1.0, 2.5, 4.0, 5.5])


def test_locate_and_refine():
    g = Grid(4, 4)
    assert g.locate((0.3, 0.99)) == (1, 3)
    assert g.locate((0.25, 0.5)) == (1, 2)
    assert g.refine().shape == (8, 8)


def test_disk_mask_area():
    g = Grid(200, 200, -1, -1, 1, 1)
    assert disk_mask(g).sum() * g.cell_area == pytest.approx(np.pi, rel=1e-3)
