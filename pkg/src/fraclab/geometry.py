"""Small geometric helpers: ball volumes, sphere areas, cell/ball overlaps.

The 2-d overlap of an axis-aligned rectangle with a disc is computed in
closed form; everything that averages a piecewise-constant grid function
over a ball in the plane goes through :func:`disc_rect_area`.
"""

from __future__ import annotations

import numpy as np
from scipy.special import betainc, gamma


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n (2 for n=1, 2*pi for n=2)."""
    return 2.0 * np.pi ** (n / 2) / gamma(n / 2)


def ball_volume(n: int, r=1.0):
    return np.pi ** (n / 2) / gamma(n / 2 + 1) * np.asarray(r, dtype=float) ** n


def _prim(t, r):
    # int_0^t sqrt(r^2 - u^2) du for t in [-r, r]
    t = np.clip(t, -r, r)
    return 0.5 * (t * np.sqrt(np.maximum(r * r - t * t, 0.0)) + r * r * np.arcsin(t / r))


def _seg(lo, hi, r):
    lo = np.clip(lo, -r, r)
    hi = np.maximum(np.clip(hi, -r, r), lo)
    return _prim(hi, r) - _prim(lo, r), hi - lo


def _quadrant_area(a, b, r):
    """Area of the disc of radius r at the origin intersected with {X >= a, Y >= b}."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    w = np.sqrt(np.maximum(r * r - b * b, 0.0))
    # b >= 0: chord strip above b
    s_mid, len_mid = _seg(np.maximum(a, -w), w, r)
    pos = s_mid - b * len_mid
    # b < 0: full chord where |t| >= w, s(t) - b where |t| < w
    s_l, _ = _seg(np.maximum(a, -r), -w, r)
    s_r, _ = _seg(np.maximum(a, w), r, r)
    neg = 2.0 * (s_l + s_r) + pos
    out = np.where(b >= 0.0, pos, neg)
    out = np.where(b >= r, 0.0, out)
    return np.maximum(out, 0.0)


def disc_rect_area(cx, cy, r, x0, x1, y0, y1):
    """Exact area of the disc B_r((cx, cy)) intersected with [x0,x1]x[y0,y1].

    All rectangle arguments broadcast against each other.
    """
    if r <= 0:
        return np.zeros(np.broadcast(x0, y0).shape)
    x0 = np.asarray(x0, float) - cx
    x1 = np.asarray(x1, float) - cx
    y0 = np.asarray(y0, float) - cy
    y1 = np.asarray(y1, float) - cy
    q = _quadrant_area
    return np.maximum(q(x0, y0, r) - q(x1, y0, r) - q(x0, y1, r) + q(x1, y1, r), 0.0)


def interval_overlap(c, r, x0, x1):
    lo = np.maximum(np.asarray(x0, float), c - r)
    hi = np.minimum(np.asarray(x1, float), c + r)
    return np.maximum(hi - lo, 0.0)


def cell_centers(n: int, N: int, L: float):
    """Cell-centre coordinates for the box [-L, L]^n split into N^n cells.

    Returns an array of shape (N,)*n + (n,), index order matching
    ``values[i0, i1, ...]`` with axis d along coordinate d.
    """
    h = 2.0 * L / N
    t = -L + (np.arange(N) + 0.5) * h
    grids = np.meshgrid(*([t] * n), indexing="ij")
    return np.stack(grids, axis=-1)


def ball_cell_weights(n: int, N: int, L: float, x0, r: float) -> np.ndarray:
    """Measure of each grid cell inside the ball B_r(x0).

    Exact for n = 1 and n = 2; for n >= 3 a cell contributes h^n when its
    centre lies in the closed ball.
    """
    h = 2.0 * L / N
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    edges = -L + np.arange(N + 1) * h
    if n == 1:
        return interval_overlap(x0[0], r, edges[:-1], edges[1:])
    if n == 2:
        X0, Y0 = np.meshgrid(edges[:-1], edges[:-1], indexing="ij")
        return disc_rect_area(x0[0], x0[1], r, X0, X0 + h, Y0, Y0 + h)
    c = cell_centers(n, N, L)
    inside = np.linalg.norm(c - x0, axis=-1) <= r * (1 + 1e-12)
    return inside * h**n


def sphere_fraction_in_ball(n: int, rho, d: float, r: float):
    """Fraction of the sphere |z| = rho lying inside B_r(x) with |x| = d.

    For n = 1 the "sphere" is the point pair {-rho, rho}, each carrying
    half the weight.
    """
    rho = np.asarray(rho, dtype=float)
    if d == 0.0:
        return (rho < r).astype(float)
    if n == 1:
        return 0.5 * (np.abs(rho - d) < r) + 0.5 * (np.abs(rho + d) < r)
    with np.errstate(divide="ignore", invalid="ignore"):
        cosphi = (rho * rho + d * d - r * r) / (2.0 * rho * d)
    cosphi = np.clip(np.nan_to_num(cosphi, nan=1.0), -1.0, 1.0)
    phi = np.arccos(cosphi)
    if n == 2:
        frac = phi / np.pi
    else:
        # normalized cap measure through the regularized incomplete beta
        a = 0.5 * (n - 1)
        sin2 = np.sin(phi) ** 2
        cap = 0.5 * betainc(a, 0.5, sin2)
        frac = np.where(phi <= np.pi / 2, cap, 1.0 - cap)
    frac = np.where(rho <= r - d, 1.0, frac)
    frac = np.where((rho >= r + d) | (rho <= d - r), 0.0, frac)
    return frac
