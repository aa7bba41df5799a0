"""Adaptive quadrature for integrands with isolated power-law singularities.

Integrands are vectorized callables ``f(x, y)`` that may behave like
``|x - p|**beta * smooth`` near a finite set of points ``p``.  Rectangles free
of singular points are integrated with adaptive tensor 3x3 Gauss rules
(vectorized over all rectangles).  A rectangle containing a singular point is
subdivided dyadically toward it; the leaf holding the point is integrated by
splitting it into triangles with apex at the point (Duffy collapse) and using
Gauss-Jacobi nodes in the radial direction, which absorbs the ``r**beta``
factor exactly.
"""
import math
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import roots_jacobi, roots_legendre

from .errors import QuadratureNonconvergence

DEFAULT_TOL = 1e-8
DEFAULT_MAX_LEVEL = 20
_MAX_ACTIVE = 2_000_000

_G3_NODES = np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_G3_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 9.0


@lru_cache(maxsize=None)
def _legendre01(n):
    x, w = roots_legendre(n)
    return (x + 1) / 2, w / 2


@lru_cache(maxsize=None)
def _jacobi01(n, b):
    """Nodes/weights on [0, 1] for the weight ``t**b``."""
    x, w = roots_jacobi(n, 0.0, b)
    return (x + 1) / 2, w / 2 ** (b + 1)


def rect_areas(rects):
    return (rects[:, 1] - rects[:, 0]) * (rects[:, 3] - rects[:, 2])


def gauss_tensor(f, rects, nodes=_G3_NODES, weights=_G3_WEIGHTS):
    """Tensor Gauss rule on each rectangle ``[xa, xb, ya, yb]``; returns integrals."""
    rects = np.asarray(rects, dtype=float)
    cx = 0.5 * (rects[:, 0] + rects[:, 1])
    rx = 0.5 * (rects[:, 1] - rects[:, 0])
    cy = 0.5 * (rects[:, 2] + rects[:, 3])
    ry = 0.5 * (rects[:, 3] - rects[:, 2])
    X = cx[:, None, None] + rx[:, None, None] * nodes[None, :, None]
    Y = cy[:, None, None] + ry[:, None, None] * nodes[None, None, :]
    X, Y = np.broadcast_arrays(X, Y)
    vals = f(X, Y)
    W = weights[:, None] * weights[None, :]
    return (vals * W).sum(axis=(1, 2)) * rx * ry


def split4(rects):
    """Split each rectangle into four children, returned in groups of four."""
    xa, xb, ya, yb = rects.T
    xm = 0.5 * (xa + xb)
    ym = 0.5 * (ya + yb)
    kids = np.stack([
        np.column_stack([xa, xm, ya, ym]),
        np.column_stack([xm, xb, ya, ym]),
        np.column_stack([xa, xm, ym, yb]),
        np.column_stack([xm, xb, ym, yb]),
    ], axis=1)
    return kids.reshape(-1, 4)


def regular_integrals(f, rects, tol=DEFAULT_TOL, max_level=DEFAULT_MAX_LEVEL, atol=0.0):
    """Adaptive integrals over rectangles on which ``f`` is smooth.

    A sub-rectangle is accepted once the difference between its one-rule and
    four-children estimates is below ``tol`` times the running estimate of its
    owning rectangle, prorated by area.
    """
    rects = np.asarray(rects, dtype=float).reshape(-1, 4)
    n = len(rects)
    total = np.zeros(n)
    if n == 0:
        return total
    owner_area = rect_areas(rects)
    owner = np.arange(n)
    active = rects
    q_parent = gauss_tensor(f, active)
    for _ in range(max_level + 1):
        kids = split4(active)
        qk = gauss_tensor(f, kids).reshape(-1, 4)
        qc = qk.sum(axis=1)
        est = total.copy()
        np.add.at(est, owner, qc)
        frac = rect_areas(active) / owner_area[owner]
        ok = np.abs(qc - q_parent) <= (tol * np.abs(est[owner]) + atol) * frac
        np.add.at(total, owner[ok], qc[ok])
        keep = ~ok
        if not keep.any():
            return total
        if 4 * keep.sum() > _MAX_ACTIVE:
            break
        active = kids.reshape(-1, 4, 4)[keep].reshape(-1, 4)
        q_parent = qk[keep].ravel()
        owner = np.repeat(owner[keep], 4)
    raise QuadratureNonconvergence(
        f"{len(active)} sub-rectangles unresolved (level cap {max_level})")


def _points_in_closure(rect, points, slack):
    if len(points) == 0:
        return np.zeros(0, dtype=int)
    xa, xb, ya, yb = rect
    px, py = points[:, 0], points[:, 1]
    inside = (px >= xa - slack) & (px <= xb + slack) & (py >= ya - slack) & (py <= yb + slack)
    return np.flatnonzero(inside)


def duffy_rect(f, rect, point, beta, n=10):
    """Integral of ``f`` over a rectangle whose closure contains ``point``.

    ``f`` must behave like ``|x - point|**beta`` times a function that is
    smooth along rays from ``point``.
    """
    xa, xb, ya, yb = rect
    px, py = point
    corners = [(xa, ya), (xb, ya), (xb, yb), (xa, yb)]
    t, wt = _jacobi01(n, 1.0 + beta)
    s, ws = _legendre01(n)
    scale = max(xb - xa, yb - ya)
    total = 0.0
    for k in range(4):
        ax, ay = corners[k]
        bx, by = corners[(k + 1) % 4]
        det = (ax - px) * (by - py) - (ay - py) * (bx - px)
        if abs(det) <= 1e-13 * scale * scale:
            continue
        ex = (1 - s) * ax + s * bx
        ey = (1 - s) * ay + s * by
        X = px + t[:, None] * (ex - px)[None, :]
        Y = py + t[:, None] * (ey - py)[None, :]
        vals = f(X, Y) / t[:, None] ** beta
        total += abs(det) * float(np.sum(wt[:, None] * ws[None, :] * vals))
    return total


def singular_integral(f, rect, points, betas, tol=DEFAULT_TOL, max_level=DEFAULT_MAX_LEVEL,
                      n=10):
    """Integral over one rectangle containing singular points in its closure."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    betas = np.asarray(betas, dtype=float)
    rect = np.asarray(rect, dtype=float)
    slack = 1e-12 * max(rect[1] - rect[0], rect[3] - rect[2])

    def leaf_estimate(r):
        idx = _points_in_closure(r, points, slack)
        if len(idx) != 1:
            return math.nan
        return duffy_rect(f, r, points[idx[0]], betas[idx[0]], n)

    frontier = [rect]
    regular_sum = 0.0
    est_prev = leaf_estimate(rect)
    for _ in range(max_level):
        kids = split4(np.array(frontier))
        sing, reg = [], []
        for kid in kids:
            (sing if len(_points_in_closure(kid, points, slack)) else reg).append(kid)
        if reg:
            regular_sum += float(regular_integrals(f, np.array(reg), tol, max_level).sum())
        est = regular_sum + sum(leaf_estimate(k) for k in sing)
        if math.isfinite(est) and math.isfinite(est_prev) and \
                abs(est - est_prev) <= tol * abs(est):
            return est
        est_prev = est
        frontier = sing
    raise QuadratureNonconvergence(
        f"singular rectangle {rect.tolist()} unresolved after {max_level} levels")


def rect_integrals(f, rects, points=(), betas=(), tol=DEFAULT_TOL, max_level=DEFAULT_MAX_LEVEL):
    """Integrals of ``f`` over many rectangles, dispatching singular ones."""
    rects = np.asarray(rects, dtype=float).reshape(-1, 4)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    betas = np.asarray(betas, dtype=float).reshape(-1)
    out = np.empty(len(rects))
    singular = np.zeros(len(rects), dtype=bool)
    if len(points):
        scale = np.maximum(rects[:, 1] - rects[:, 0], rects[:, 3] - rects[:, 2])
        slack = 1e-12 * scale
        for px, py in points:
            singular |= ((px >= rects[:, 0] - slack) & (px <= rects[:, 1] + slack)
                         & (py >= rects[:, 2] - slack) & (py <= rects[:, 3] + slack))
    out[~singular] = regular_integrals(f, rects[~singular], tol, max_level)
    for k in np.flatnonzero(singular):
        out[k] = singular_integral(f, rects[k], points, betas, tol, max_level)
    return out


def rect_averages(f, rects, points=(), betas=(), tol=DEFAULT_TOL, max_level=DEFAULT_MAX_LEVEL):
    rects = np.asarray(rects, dtype=float).reshape(-1, 4)
    return rect_integrals(f, rects, points, betas, tol, max_level) / rect_areas(rects)


def segment_averages(f, a, b, points=(), betas=(), npts=5):
    """Averages of ``f`` along segments ``a[k] -> b[k]``.

    Segments free of singular points use an ``npts``-point Gauss rule.  A
    segment passing through a singular point is split there and each half is
    integrated with Gauss-Jacobi nodes for the weight ``t**beta``.
    """
    a = np.asarray(a, dtype=float).reshape(-1, 2)
    b = np.asarray(b, dtype=float).reshape(-1, 2)
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    betas = np.asarray(betas, dtype=float).reshape(-1)
    s, ws = _legendre01(npts)
    X = a[:, 0, None] + s[None, :] * (b - a)[:, 0, None]
    Y = a[:, 1, None] + s[None, :] * (b - a)[:, 1, None]
    out = (f(X, Y) * ws[None, :]).sum(axis=1)
    length = np.hypot(*(b - a).T)
    for (px, py), beta in zip(points, betas):
        d = b - a
        rel = np.column_stack([px - a[:, 0], py - a[:, 1]])
        cross = d[:, 0] * rel[:, 1] - d[:, 1] * rel[:, 0]
        along = (d * rel).sum(axis=1) / np.maximum(length ** 2, 1e-300)
        hit = (np.abs(cross) <= 1e-12 * length ** 2) & (along >= -1e-12) & (along <= 1 + 1e-12)
        for k in np.flatnonzero(hit):
            if beta <= -1.0:
                raise QuadratureNonconvergence(
                    f"face through a singular point with exponent {beta} <= -1 is not integrable")
            t, wt = _jacobi01(max(npts, 10), beta)
            total = 0.0
            for end in (a[k], b[k]):
                seg = np.hypot(*(end - (px, py)))
                if seg <= 1e-14 * length[k]:
                    continue
                Xs = px + t * (end[0] - px)
                Ys = py + t * (end[1] - py)
                total += seg * float(np.sum(wt * f(Xs, Ys) / t ** beta))
            out[k] = total / length[k]
    return out


def _ray_exit(center, theta, domain):
    """Distance from ``center`` to the rectangle boundary along direction ``theta``."""
    x0, y0, x1, y1 = domain
    cx, cy = center
    c = np.cos(theta)
    s = np.sin(theta)
    big = np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(c > 1e-15, (x1 - cx) / c, np.where(c < -1e-15, (x0 - cx) / c, big))
        ty = np.where(s > 1e-15, (y1 - cy) / s, np.where(s < -1e-15, (y0 - cy) / s, big))
    return np.minimum(tx, ty)


def _angular_breaks(center, radius, domain):
    cx, cy = center
    angles = [0.0, 2 * math.pi]
    if domain is not None:
        x0, y0, x1, y1 = domain
        for X, Y in [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]:
            if (X, Y) != (cx, cy):
                angles.append(math.atan2(Y - cy, X - cx) % (2 * math.pi))
        for X in (x0, x1):
            dx = X - cx
            if abs(dx) < radius:
                dy = math.sqrt(radius ** 2 - dx ** 2)
                angles += [math.atan2(dy, dx) % (2 * math.pi), math.atan2(-dy, dx) % (2 * math.pi)]
        for Y in (y0, y1):
            dy = Y - cy
            if abs(dy) < radius:
                dx = math.sqrt(radius ** 2 - dy ** 2)
                angles += [math.atan2(dy, dx) % (2 * math.pi), math.atan2(dy, -dx) % (2 * math.pi)]
    else:
        angles += [0.5 * math.pi, math.pi, 1.5 * math.pi]
    angles = np.unique(np.round(angles, 15))
    return angles[np.diff(np.concatenate([angles, [np.inf]])) > 1e-12] if len(angles) else angles


def _polar_disk(f, center, radius, beta_c, tol, nmax=256):
    """Disk integral of ``f ~ r**beta_c * smooth`` by a tensor Gauss-Jacobi/Legendre rule."""
    cx, cy = center
    prev = math.nan
    n = 8
    while n <= nmax:
        t, wt = _jacobi01(n, 1.0 + beta_c)
        th, wth = _legendre01(2 * n)
        th = 2 * math.pi * th
        R = radius * t[:, None]
        vals = f(cx + R * np.cos(th)[None, :], cy + R * np.sin(th)[None, :]) / t[:, None] ** beta_c
        val = radius ** 2 * 2 * math.pi * float(np.sum(wt[:, None] * wth[None, :] * vals))
        if abs(val - prev) <= tol * abs(val):
            return val
        prev = val
        n *= 2
    raise QuadratureNonconvergence("polar disk rule did not converge")


def ball_integral(f, center, radius, points=(), betas=(), domain=None, fill=1.0,
                  tol=DEFAULT_TOL, max_level=DEFAULT_MAX_LEVEL):
    """Integral over a disk of ``f`` (taken equal to ``fill`` outside ``domain``).

    A small inner disk around the center is integrated with Gauss-Jacobi
    nodes in ``r`` (absorbing a power singularity sitting at the center).  The
    rest is mapped to ``(s, theta)`` with ``r = r_in + (rho(theta) - r_in) s``
    where ``rho`` clips rays at the domain boundary, and handed to the
    rectangle quadrature, whose Duffy leaves absorb off-center singular points.
    """
    cx, cy = center
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    betas = np.asarray(betas, dtype=float).reshape(-1)
    if domain is not None:
        x0, y0, x1, y1 = domain
        if not (x0 <= cx <= x1 and y0 <= cy <= y1):
            raise ValueError("ball center must lie in the closed domain")
    dist = np.hypot(points[:, 0] - cx, points[:, 1] - cy) if len(points) else np.zeros(0)
    at_center = dist <= 1e-12 * radius
    beta_c = float(betas[at_center].sum()) if at_center.any() else 0.0

    r_in = 0.5 * radius
    if (~at_center).any():
        r_in = min(r_in, 0.5 * float(dist[~at_center].min()))
    if domain is not None:
        r_in = min(r_in, 0.5 * min(cx - x0, x1 - cx, cy - y0, y1 - cy))
    total = 0.0
    if r_in > 0:
        total += _polar_disk(f, center, r_in, beta_c, tol)
    elif at_center.any():
        raise ValueError("a singular ball center must lie in the open domain")

    def rho(theta):
        r = np.full(np.shape(theta), float(radius))
        if domain is not None:
            r = np.minimum(r, _ray_exit(center, theta, domain))
        return r

    def F(s, th):
        span = rho(th) - r_in
        r = r_in + span * s
        return f(cx + r * np.cos(th), cy + r * np.sin(th)) * r * span

    breaks = _angular_breaks(center, radius, domain)
    for ta, tb in zip(breaks[:-1], breaks[1:]):
        mapped, mbetas = [], []
        for (px, py), beta, d, c0 in zip(points, betas, dist, at_center):
            if c0 or d >= radius:
                continue
            th = math.atan2(py - cy, px - cx) % (2 * math.pi)
            if th < 1e-14 and tb > 2 * math.pi - 1e-14:
                th = 2 * math.pi
            if not (ta - 1e-14 <= th <= tb + 1e-14):
                continue
            rh = float(rho(np.array(th)))
            if d > rh * (1 + 1e-12):
                continue
            mapped.append((min((d - r_in) / (rh - r_in), 1.0), th))
            mbetas.append(beta)
        total += float(rect_integrals(F, [[0.0, 1.0, ta, tb]], mapped, mbetas, tol, max_level)[0])
        if domain is not None and fill != 0.0:
            val, _ = integrate.quad(lambda th: 0.5 * (radius ** 2 - float(rho(np.array(th))) ** 2),
                                    ta, tb, epsabs=0.0, epsrel=1e-12, limit=200)
            total += fill * val
    return total
