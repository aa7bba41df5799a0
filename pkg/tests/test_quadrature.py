import math

import numpy as np
import pytest
from scipy import integrate

from singular_pnp import quadrature as q
from singular_pnp.errors import QuadratureNonconvergence


def square_power_integral(a, beta):
    """Integral of r**beta over [-a, a]^2 by symmetry (8 triangles) and 1D quad."""
    s, _ = integrate.quad(lambda t: 1.0 / math.cos(t) ** (beta + 2), 0.0, math.pi / 4,
                          epsabs=0.0, epsrel=1e-13)
    return 8.0 * a ** (beta + 2) / (beta + 2) * s


def dense_midpoint(f, rect, n):
    xa, xb, ya, yb = rect
    hx, hy = (xb - xa) / n, (yb - ya) / n
    x = xa + hx * (np.arange(n) + 0.5)
    y = ya + hy * (np.arange(n) + 0.5)
    X, Y = np.meshgrid(x, y, indexing="ij")
    return float(np.sum(f(X, Y)) * hx * hy)


def test_gauss_tensor_exact_for_bicubic():
    f = lambda x, y: 1 + x ** 3 * y - 2 * x * y ** 2 + y ** 3
    got = q.gauss_tensor(f, np.array([[0.0, 1.0, -1.0, 2.0]]))[0]
    exact, _ = integrate.dblquad(lambda y, x: f(x, y), 0, 1, -1, 2)
    assert got == pytest.approx(exact, rel=1e-13)


def test_regular_integrals_smooth():
    f = lambda x, y: np.exp(x) * np.cos(3 * y)
    rects = np.array([[0, 1, 0, 1], [0.5, 2, -1, 0.2]], dtype=float)
    got = q.regular_integrals(f, rects, tol=1e-12)
    for r, v in zip(rects, got):
        exact = (math.exp(r[1]) - math.exp(r[0])) * (math.sin(3 * r[3]) - math.sin(3 * r[2])) / 3
        assert v == pytest.approx(exact, rel=1e-11)


@pytest.mark.parametrize("beta", [0.5, -0.82, 0.82, -1.5])
def test_power_singularity_at_cell_center(beta):
    a = 0.01
    f = lambda x, y: np.hypot(x, y) ** beta
    got = q.rect_integrals(f, np.array([[-a, a, -a, a]]), [(0.0, 0.0)], [beta], tol=1e-12)[0]
    assert got == pytest.approx(square_power_integral(a, beta), rel=1e-10)


def test_cell_average_matches_dense_tensor_oracle():
    # 10^6-point midpoint rule on a cell of side h centered on the singular point
    h = 1.0 / 64
    f = lambda x, y: np.hypot(x - 0.5, y - 0.5) ** 0.5
    rect = np.array([0.5 - h / 2, 0.5 + h / 2, 0.5 - h / 2, 0.5 + h / 2])
    got = q.rect_averages(f, rect[None], [(0.5, 0.5)], [0.5])[0]
    oracle = dense_midpoint(f, rect, 1000) / h ** 2
    assert got == pytest.approx(oracle, rel=1e-6)


@pytest.mark.parametrize("point", [(0.0, 0.0), (1.0, 0.3), (0.2, 0.7), (1.0, 1.0)])
def test_singularity_on_corner_edge_or_interior(point):
    beta = -0.6
    f = lambda x, y: np.hypot(x - point[0], y - point[1]) ** beta * (1 + x * y)
    got = q.rect_integrals(f, np.array([[0, 1, 0, 1.0]]), [point], [beta], tol=1e-11)[0]
    # split the unit square at the point so that quad only sees corner singularities
    px, py = point
    exact = 0.0
    for xa, xb in ((0.0, px), (px, 1.0)):
        for ya, yb in ((0.0, py), (py, 1.0)):
            if xb - xa <= 0 or yb - ya <= 0:
                continue
            v, _ = integrate.dblquad(lambda y, x: f(x, y), xa, xb, ya, yb,
                                     epsabs=0, epsrel=1e-12)
            exact += v
    assert got == pytest.approx(exact, rel=1e-8)


def test_segment_average_through_singular_point():
    f = lambda x, y: np.abs(x - 0.3) ** 0.5 * np.exp(y)
    got = q.segment_averages(f, [(0.0, 0.0)], [(1.0, 0.0)], [(0.3, 0.0)], [0.5])[0]
    exact, _ = integrate.quad(lambda x: abs(x - 0.3) ** 0.5, 0, 1, points=[0.3], epsrel=1e-13)
    assert got == pytest.approx(exact, rel=1e-12)


def test_segment_rejects_nonintegrable_exponent():
    with pytest.raises(QuadratureNonconvergence):
        q.segment_averages(lambda x, y: x, [(0.0, 0.0)], [(1.0, 0.0)], [(0.5, 0.0)], [-1.0])


@pytest.mark.parametrize("alpha", [0.5, -0.5, 1.5])
def test_ball_integral_origin_closed_form(alpha):
    f = lambda x, y: np.hypot(x, y) ** alpha
    R = 0.3
    got = q.ball_integral(f, (0.0, 0.0), R, [(0.0, 0.0)], [alpha])
    assert got == pytest.approx(2 * math.pi * R ** (alpha + 2) / (alpha + 2), rel=1e-10)


def test_ball_clipped_by_domain_uses_fill():
    f = lambda x, y: 2.0 + x
    R = 0.4
    got = q.ball_integral(f, (0.1, 0.5), R, domain=(0, 0, 1, 1), fill=1.0)
    inside, _ = integrate.dblquad(
        lambda y, x: f(x, y), 0.0, 0.5,
        lambda x: 0.5 - math.sqrt(max(R ** 2 - (x - 0.1) ** 2, 0)),
        lambda x: 0.5 + math.sqrt(max(R ** 2 - (x - 0.1) ** 2, 0)), epsabs=0, epsrel=1e-12)
    outside_area = math.pi * R ** 2 - integrate.quad(
        lambda x: 2 * math.sqrt(max(R ** 2 - (x - 0.1) ** 2, 0)), 0.0, 0.5, epsrel=1e-13)[0]
    assert got == pytest.approx(inside + outside_area, rel=1e-9)


def test_subdivision_cap_raises():
    f = lambda x, y: np.sin(1e4 * x * y)
    with pytest.raises(QuadratureNonconvergence):
        q.regular_integrals(f, np.array([[0, 1, 0, 1.0]]), tol=1e-12, max_level=2)
