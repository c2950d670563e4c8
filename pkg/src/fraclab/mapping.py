"""The resolvent S_V = (L_K + V)^-1 and its mapping diagnostics.

Everything here lives on the lattice of cell centres with cell measure
h^n.  Convolutions go through :func:`convolve`, which sums directly for
small problems and switches to FFT when the work estimate
size(a) * size(k) exceeds ``DIRECT_LIMIT``; the two
routes are kept interchangeable so that either can serve as an oracle
for the other.

Weak-type statements are judged with the distribution function
omega_g(t) = |{|g| > t}| of piecewise-constant data, which on a grid is a
cell count times h^n and therefore exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import integrate, signal
from scipy.special import roots_legendre

from .auxfunc import m_field, m_v
from .geometry import ball_cell_weights, ball_volume, cell_centers
from .grid import Exterior, GridFunction
from .kernel import KernelSpec
from .reports import InequalityReport, WeakNormReport
from .solver import DirichletProblem, assemble, solve_dirichlet
from .weights import Weight

DIRECT_LIMIT = 2 ** 22
LADDER_LEVELS = 32


# ---------------------------------------------------------------------------
# exponents and the region of boundedness
# ---------------------------------------------------------------------------

def _frac(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, int):
        return Fraction(v)
    # decimal reading of floats: 1.5 -> 3/2, 0.3 -> 3/10
    return Fraction(str(float(v)))


def _recip(v) -> Fraction:
    if isinstance(v, float) and math.isinf(v):
        return Fraction(0)
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity"):
        return Fraction(0)
    f = _frac(v)
    if f <= 0:
        raise ValueError("exponents must be positive")
    return 1 / f


@dataclass(frozen=True)
class ExponentPoint:
    """An exponent pair (p, q), stored exactly through x = 1/p and y = 1/q.

    Floats are read as decimals, so ``ExponentPoint(1.5, 3, 2)`` has
    x = 2/3 exactly.  theta = n (1/p - 1/q).
    """

    x: Fraction
    y: Fraction
    n: int = 2

    def __init__(self, p, q, n: int = 2):
        object.__setattr__(self, "x", _recip(p))
        object.__setattr__(self, "y", _recip(q))
        object.__setattr__(self, "n", int(n))
        self._validate()

    @classmethod
    def from_reciprocals(cls, x, y, n: int = 2) -> "ExponentPoint":
        obj = cls.__new__(cls)
        object.__setattr__(obj, "x", _frac(x))
        object.__setattr__(obj, "y", _frac(y))
        object.__setattr__(obj, "n", int(n))
        obj._validate()
        return obj

    def _validate(self):
        if not (0 <= self.x <= 1 and 0 <= self.y <= 1):
            raise ValueError("p and q must lie in [1, inf]")

    @property
    def p(self) -> float:
        return math.inf if self.x == 0 else float(1 / self.x)

    @property
    def q(self) -> float:
        return math.inf if self.y == 0 else float(1 / self.y)

    @property
    def theta_exact(self) -> Fraction:
        return self.n * (self.x - self.y)

    @property
    def theta(self) -> float:
        return float(self.theta_exact)

    @property
    def ordered(self) -> bool:
        """p <= q."""
        return self.x >= self.y


REGIONS = ("interior-a", "weak-b", "weak-c", "outside")


def region_membership(pt: ExponentPoint, s, n: Optional[int] = None) -> str:
    """Classify (1/p, 1/q) against the boundedness region of M_W o S_V.

    (a) the open trapezoid 0 < 1/q <= 1/p < 1, 1/p - 1/q < 2s/n, and the
        corner p = q = inf;
    (b) p = 1 with 1/q in ((n-2s)/n, 1];
    (c) 1/p - 1/q = 2s/n with 0 < 1/q < (n-2s)/n.
    Arithmetic is exact in rationals.
    """
    n = pt.n if n is None else int(n)
    s = _frac(s)
    x, y = pt.x, pt.y
    a = 2 * s / n
    b = (n - 2 * s) / Fraction(n)
    if x == 0 and y == 0:
        return "interior-a"
    if 0 < y <= x < 1 and x - y < a:
        return "interior-a"
    if x == 1 and b < y <= 1:
        return "weak-b"
    if x - y == a and 0 < y < b:
        return "weak-c"
    return "outside"


def region_lattice(s, n: int = 2, M: int = 50):
    """Rows (i, j, x, y, region) for x = i/M, y = j/M with 0 <= i, j <= M."""
    rows = []
    for i in range(M + 1):
        for j in range(M + 1):
            pt = ExponentPoint.from_reciprocals(Fraction(i, M), Fraction(j, M), n)
            rows.append((i, j, float(pt.x), float(pt.y), region_membership(pt, s, n)))
    return rows


# ---------------------------------------------------------------------------
# lattice utilities
# ---------------------------------------------------------------------------

def convolve(a: np.ndarray, k: np.ndarray, mode: str = "same", method: str = "auto") -> np.ndarray:
    """Discrete convolution, direct when a.size * k.size <= DIRECT_LIMIT, FFT otherwise."""
    if method == "auto":
        method = "direct" if a.size * k.size <= DIRECT_LIMIT else "fft"
    if method == "direct":
        return signal.convolve(a, k, mode=mode, method="direct")
    if method == "fft":
        return signal.fftconvolve(a, k, mode=mode)
    raise ValueError(f"unknown convolution method {method!r}")


def lp_norm(g, p: float, h: Optional[float] = None) -> float:
    """(h^n sum |g|^p)^(1/p); p = inf gives the max.  Zero exterior assumed."""
    if isinstance(g, GridFunction):
        vals, h = g.values, g.h
        _require_zero_exterior(g)
    else:
        vals = np.asarray(g, float)
        if h is None:
            raise ValueError("the cell width is needed for raw arrays")
    a = np.abs(vals)
    if math.isinf(p):
        return float(a.max()) if a.size else 0.0
    if a.max(initial=0.0) == 0.0:
        return 0.0
    m = a.max()
    # scale out the max to keep a^p in range
    return float(m * (h ** vals.ndim * np.sum((a / m) ** p)) ** (1.0 / p))


def _require_zero_exterior(g: GridFunction):
    if g.exterior.kind != "zero" and not (g.exterior.kind == "constant"
                                          and g.exterior.far_value == 0.0):
        raise ValueError("this operation needs a zero exterior")


def _cell_index(g: GridFunction, x) -> tuple:
    x = np.atleast_1d(np.asarray(x, float))
    idx = (x + g.L) / g.h - 0.5
    r = np.round(idx)
    if not np.allclose(idx, r, atol=1e-9) or np.any(r < 0) or np.any(r > g.N - 1):
        raise ValueError(f"{x} is not a cell centre of the grid")
    return tuple(r.astype(int))


# ---------------------------------------------------------------------------
# weak L^p quasinorms
# ---------------------------------------------------------------------------

@dataclass
class LevelSetModel:
    """An analytic distribution function.

    ``omega(t)`` is |{|g| > t}|; ``jumps`` lists the values where omega
    jumps, and ``omega_left(t)`` is the left limit there.
    """

    omega: Callable[[float], float]
    jumps: Sequence[float] = ()
    omega_left: Optional[Callable[[float], float]] = None
    name: str = "analytic"


def indicator_ball_levels(n: int, r: float = 1.0) -> LevelSetModel:
    vol = float(ball_volume(n, r))
    return LevelSetModel(lambda t: vol if t < 1.0 else 0.0, (1.0,),
                         lambda t: vol if t <= 1.0 else 0.0, f"indicator B_{r:g}")


def riesz_kernel_levels(n: int, theta: float) -> LevelSetModel:
    """Level sets of |y|^(theta-n): {|y|^(theta-n) > t} is the ball of radius t^(-1/(n-theta))."""
    return LevelSetModel(lambda t: float(ball_volume(n, t ** (-1.0 / (n - theta)))),
                         (), None, f"riesz kernel theta={theta:g}")


def distribution(g: GridFunction, t) -> np.ndarray:
    """omega_g(t) = h^n #{|g| > t} for each t (exact integer counts times h^n)."""
    a = np.sort(np.abs(g.values).ravel())
    t = np.asarray(t, float)
    cnt = a.size - np.searchsorted(a, t, side="right")
    return cnt * g.cell_measure


def _default_gammas(vmax: float) -> np.ndarray:
    if vmax <= 0:
        return np.array([1.0])
    return vmax * np.geomspace(1e-6, 1.0, 61)


def weak_lp_quasinorm(g, p: float, gammas: Optional[Iterable[float]] = None,
                      function_id: str = "") -> WeakNormReport:
    """sup_t t omega_g(t)^(1/p) over a t-grid augmented with every jump point.

    For a grid function the jumps are the distinct values of |g|, and the
    supremum is the left limit v * |{|g| >= v}|^(1/p) at one of them.
    """
    if p <= 0:
        raise ValueError("p must be positive")
    if isinstance(g, LevelSetModel):
        grid = [] if gammas is None else [float(t) for t in gammas]
        cands = [(t * g.omega(t) ** (1.0 / p), t) for t in grid if t > 0]
        left = g.omega_left or g.omega
        cands += [(t * left(t) ** (1.0 / p), t) for t in g.jumps if t > 0]
        if not cands:
            raise ValueError("an analytic model needs a t-grid or jump points")
        best = max(cands)
        return WeakNormReport(function_id or g.name, float(p), float(best[0]), float(best[1]),
                              len(cands), 0.0)
    if not isinstance(g, GridFunction):
        raise TypeError("expected a GridFunction or a LevelSetModel")
    ext = g.exterior
    if ext.kind == "constant" and ext.far_value != 0.0:
        return WeakNormReport(function_id, float(p), math.inf, abs(ext.far_value), 0, 0.0)
    if ext.kind not in ("zero", "constant"):
        raise ValueError("weak norms need a zero or constant exterior")
    a = np.sort(np.abs(g.values).ravel())[::-1]
    vals, first = np.unique(-a, return_index=True)
    vals = -vals
    # |{|g| >= v}| for each distinct v, in decreasing order of v
    last = np.r_[first[1:], a.size]
    meas = last * g.cell_measure
    cand_jump = vals * meas ** (1.0 / p)
    grid = _default_gammas(a[0] if a.size else 0.0) if gammas is None else np.asarray(list(gammas), float)
    grid = grid[grid > 0]
    cand_grid = grid * distribution(g, grid) ** (1.0 / p)
    keep = vals > 0
    allc = np.r_[cand_jump[keep], cand_grid]
    allt = np.r_[vals[keep], grid]
    if allc.size == 0:
        return WeakNormReport(function_id, float(p), 0.0, 0.0, 0, 0.0)
    k = int(np.argmax(allc))
    return WeakNormReport(function_id, float(p), float(allc[k]), float(allt[k]),
                          int(allc.size), 0.0)


# ---------------------------------------------------------------------------
# fractional maximal function and Riesz potential
# ---------------------------------------------------------------------------

def ladder(h: float, levels: int = LADDER_LEVELS) -> np.ndarray:
    """Radii (h/2) 2^(k/4), k = 0..levels-1."""
    return 0.5 * h * 2.0 ** (np.arange(levels) / 4.0)


def _ball_stencil(n: int, h: float, r: float, m_max: int) -> np.ndarray:
    m = min(int(math.ceil(r / h + 0.5)), m_max)
    M = 2 * m + 1
    return ball_cell_weights(n, M, 0.5 * M * h, np.zeros(n), r)


def ball_masses(g: GridFunction, radii, method: str = "auto") -> np.ndarray:
    """int_{B_r(x)} |g| at every cell centre x, for each radius (leading axis)."""
    n, N, h = g.n, g.N, g.h
    ext = g.exterior
    if ext.kind not in ("zero", "constant"):
        raise ValueError("ball masses need a zero or constant exterior")
    c = abs(ext.far_value)
    a = np.abs(g.values)
    out = []
    for r in radii:
        st = _ball_stencil(n, h, r, N - 1)
        mass = convolve(a, st, "same", method)
        if c:
            inside = convolve(np.ones_like(a), st, "same", method)
            mass = mass + c * (float(ball_volume(n, r)) - inside)
        out.append(mass)
    return np.array(out)


def frac_maximal(g: GridFunction, theta: float, radii=None, method: str = "auto",
                 return_level: bool = False):
    """max over centred balls on the radius ladder of |B|^(theta/n - 1) int_B |g|."""
    n = g.n
    if not 0 <= theta < n:
        raise ValueError("theta must lie in [0, n)")
    radii = ladder(g.h) if radii is None else np.asarray(radii, float)
    masses = ball_masses(g, radii, method)
    norm = ball_volume(n, radii) ** (theta / n - 1.0)
    avg = masses * norm.reshape((-1,) + (1,) * n)
    out = GridFunction(avg.max(axis=0), g.L, Exterior.zero())
    if return_level:
        return out, avg.argmax(axis=0)
    return out


def frac_maximal_direct(g: GridFunction, theta: float, x, radii=None) -> float:
    """Ladder maximal function at one point by explicit ball/cell overlaps."""
    n = g.n
    radii = ladder(g.h) if radii is None else np.asarray(radii, float)
    c = abs(g.exterior.far_value)
    best = 0.0
    for r in radii:
        w = ball_cell_weights(n, g.N, g.L, x, r)
        mass = float(np.sum(w * np.abs(g.values)))
        if c:
            mass += c * (float(ball_volume(n, r)) - float(w.sum()))
        best = max(best, mass * float(ball_volume(n, r)) ** (theta / n - 1.0))
    return best


_GL = {o: roots_legendre(o) for o in (2, 3, 4, 6, 8, 12, 16)}


def _self_cell(n: int, h: float, theta: float) -> float:
    """int over [-h/2, h/2]^n of |y|^(theta-n), exact up to a smooth 1-d quadrature."""
    if n == 1:
        return 2.0 * (0.5 * h) ** theta / theta
    if n != 2:
        raise NotImplementedError("n <= 2")
    val, _ = integrate.quad(lambda ph: (0.5 * h / math.cos(ph)) ** theta, 0.0, math.pi / 4,
                            epsabs=0, epsrel=1e-13)
    return 8.0 * val / theta


def _triangle_integral(theta: float, x, a, b) -> float:
    """int over the triangle (x, a, b) of |y - x|^(theta-2), through polar coordinates at x."""
    a = np.asarray(a, float) - x
    b = np.asarray(b, float) - x
    e = b - a
    le = np.hypot(*e)
    cross = a[0] * e[1] - a[1] * e[0]
    delta = abs(cross) / le
    if delta < 1e-15 * le:
        return 0.0
    # foot of the perpendicular from x onto the edge line
    ta = float(np.dot(a, e)) / le
    tb = ta + le
    # rho(phi) = delta / cos(phi) for tan(phi) in [ta/delta, tb/delta]
    f = lambda ph: (delta / math.cos(ph)) ** theta
    val, _ = integrate.quad(f, math.atan2(ta, delta), math.atan2(tb, delta),
                            epsabs=0, epsrel=1e-12)
    return val / theta


def _cell_integrals(n: int, h: float, theta: float, x, centres: np.ndarray) -> np.ndarray:
    """int over each cell (centres (M, n), width h) of |x - y|^(theta - n)."""
    x = np.atleast_1d(np.asarray(x, float))
    centres = np.asarray(centres, float).reshape(-1, n)
    out = np.empty(len(centres))
    d = np.abs(centres - x) - 0.5 * h
    gap = np.linalg.norm(np.maximum(d, 0.0), axis=-1) / h
    if n == 1:
        lo = centres[:, 0] - 0.5 * h - x[0]
        hi = lo + h
        F = lambda t: np.sign(t) * np.abs(t) ** theta / theta
        return F(hi) - F(lo)
    inside = np.all(d <= 1e-14 * h, axis=-1)
    for i in np.nonzero(inside)[0]:
        c = centres[i]
        if np.allclose(c, x, atol=1e-14 * h):
            out[i] = _self_cell(n, h, theta)
            continue
        v = c + 0.5 * h * np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]])
        out[i] = sum(_triangle_integral(theta, x, v[k], v[(k + 1) % 4]) for k in range(4))
    near = ~inside & (gap < 1.0)
    for i in np.nonzero(near)[0]:
        c = centres[i]
        g = lambda yy, xx: ((xx - x[0]) ** 2 + (yy - x[1]) ** 2) ** (0.5 * (theta - 2))
        out[i] = integrate.dblquad(g, c[0] - 0.5 * h, c[0] + 0.5 * h, c[1] - 0.5 * h,
                                   c[1] + 0.5 * h, epsabs=0, epsrel=1e-12)[0]
    for lo, hi, o in ((1.0, 3.0, 16), (3.0, 8.0, 8), (8.0, 24.0, 4), (24.0, np.inf, 2)):
        sel = ~inside & (gap >= lo) & (gap < hi)
        if not sel.any():
            continue
        t, w = _GL[o]
        Y = centres[sel][:, None, None, :] + 0.5 * h * np.stack(
            np.meshgrid(t, t, indexing="ij"), axis=-1)[None]
        r2 = np.sum((Y - x) ** 2, axis=-1)
        out[sel] = 0.25 * h * h * np.einsum("mij,i,j->m", r2 ** (0.5 * (theta - 2)), w, w)
    return out


@lru_cache(maxsize=32)
def _riesz_table(n: int, h: float, theta: float, m: int) -> np.ndarray:
    """k_j = int_{C_j} |y|^(theta-n) dy for offsets j in [-m, m]^n."""
    off = np.arange(-m, m + 1) * h
    centres = np.stack(np.meshgrid(*([off] * n), indexing="ij"), axis=-1).reshape(-1, n)
    return _cell_integrals(n, h, theta, np.zeros(n), centres).reshape((2 * m + 1,) * n)


def riesz_table(n: int, h: float, theta: float, m: int) -> np.ndarray:
    return _riesz_table(int(n), float(h), float(theta), int(m)).copy()


def riesz_potential(g: GridFunction, theta: float, method: str = "auto") -> GridFunction:
    """I_theta g at every cell centre for piecewise-constant g with zero exterior."""
    n = g.n
    if not 0 < theta < n:
        raise ValueError("theta must lie in (0, n)")
    _require_zero_exterior(g)
    k = riesz_table(n, g.h, theta, g.N - 1)
    return GridFunction(convolve(g.values, k, "same", method), g.L, Exterior.zero())


def riesz_potential_at(g: GridFunction, theta: float, points) -> np.ndarray:
    """I_theta g at arbitrary points."""
    _require_zero_exterior(g)
    pts = np.asarray(points, float).reshape(-1, g.n)
    c = g.centers().reshape(-1, g.n)
    v = g.values.ravel()
    nz = v != 0
    return np.array([float(np.dot(v[nz], _cell_integrals(g.n, g.h, theta, x, c[nz])))
                     for x in pts])


# ---------------------------------------------------------------------------
# the resolvent S_V
# ---------------------------------------------------------------------------

def resolvent_problem(K: KernelSpec, V: Optional[Weight], L: float, N: int,
                      near_field: str = "auto") -> DirichletProblem:
    """(L_h + V) on the full box [-L, L]^n with zero exterior."""
    return assemble(K, np.ones((N,) * K.n, bool), L, exterior=Exterior.zero(), potential=V,
                    form="resolvent", near_field=near_field)


def _check_resolvent(P: DirichletProblem):
    if P.form != "resolvent":
        raise ValueError("S_V needs a problem assembled in resolvent form")
    if P.exterior.kind != "zero":
        raise ValueError("S_V needs a zero exterior")


def apply_SV(P: DirichletProblem, f: GridFunction, tol: float = 1e-10) -> GridFunction:
    """u = S_V f: one solve of (L_h + V) u = f with zero exterior."""
    _check_resolvent(P)
    return solve_dirichlet(P, f=f, tol=tol).solution


def sv_column(P: DirichletProblem, x, tol: float = 1e-12) -> GridFunction:
    """w with (S_V f)(x) = h^n sum_y w(y) f(y): the discrete fundamental solution at x.

    The discrete operator is symmetric, so the row of S_V at x is the
    solution with a unit mass at x.
    """
    _check_resolvent(P)
    probe = GridFunction(np.zeros((P.N,) * P.n), P.L)
    idx = _cell_index(probe, x)
    e = np.zeros((P.N,) * P.n)
    e[idx] = 1.0 / P.h ** P.n
    return solve_dirichlet(P, f=GridFunction(e, P.L), tol=tol).solution


def split_radius(P: DirichletProblem, x) -> float:
    if P.potential is None:
        raise ValueError("the split radius needs a potential")
    return 1.0 / m_v(P.potential, P.kernel.s, x).value


def split_SV(P: DirichletProblem, f: GridFunction, x, tol: float = 1e-12,
             radius: Optional[float] = None):
    """(near, far): the parts of (S_V f)(x) from |y - x| < 1/m_V(x) and from the rest."""
    r = split_radius(P, x) if radius is None else float(radius)
    w = sv_column(P, x, tol)
    dist = np.linalg.norm(w.centers() - np.atleast_1d(np.asarray(x, float)), axis=-1)
    prod = w.values * f.values * P.h ** P.n
    near_mask = dist < r
    return float(prod[near_mask].sum()), float(prod[~near_mask].sum())


def multiplier_weight(V: Weight, s: float, theta: float, g: GridFunction) -> np.ndarray:
    """W = m_V^(2s - theta) at the cell centres of g."""
    m = m_field(V, s, g.centers().reshape(-1, g.n)).reshape(g.values.shape)
    return m ** (2 * s - theta)


def _default_samples(g: GridFunction, stride: int = 4, frac: float = 0.5) -> np.ndarray:
    c = g.centers().reshape(-1, g.n)
    sel = np.all(np.abs(c) <= frac * g.L, axis=-1)
    idx = np.nonzero(sel)[0][::stride]
    return c[idx]


def domination_check_lemma61(P: DirichletProblem, f: GridFunction, theta: float,
                             samples=None, C: Optional[float] = None,
                             tol: float = 1e-10) -> InequalityReport:
    """Smallest C with m_V(x)^(2s-theta) |S_V f(x)| <= C M_theta f(x) at the samples."""
    V = P.potential
    if V is None:
        raise ValueError("the domination check needs a potential")
    s, n = P.kernel.s, P.n
    if not 0 <= theta < 2 * s:
        raise ValueError("theta must lie in [0, 2s)")
    if np.any(f.values < 0):
        raise ValueError("f must be nonnegative")
    pts = _default_samples(f) if samples is None else np.asarray(samples, float).reshape(-1, n)
    u = apply_SV(P, f, tol)
    Mf = frac_maximal(f, theta)
    idx = tuple(np.array([_cell_index(f, x) for x in pts]).T)
    m = m_field(V, s, pts)
    lhs = m ** (2 * s - theta) * np.abs(u.values[idx])
    rhs = Mf.values[idx]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    C_min = float(ratio.max()) if ratio.size else 0.0
    Cu = C_min if C is None else C
    k = int(np.argmax(ratio)) if ratio.size else 0
    return InequalityReport(
        "domination_lemma61", float(lhs[k]) if lhs.size else 0.0,
        float(Cu * rhs[k]) if rhs.size else 0.0,
        bool(math.isfinite(C_min) and C_min <= Cu * (1 + 1e-12)), tol,
        {"C_min": C_min, "C": Cu, "theta": theta}, int(len(pts)),
        {"worst_point": pts[k].tolist() if len(pts) else None,
         "ladder": "centred balls, radii (h/2) 2^(k/4), 32 levels"},
        ["constant is relative to the centred-ball ladder"])


def maximal_vs_riesz_check(g: GridFunction, theta: float, samples=None) -> InequalityReport:
    """M_theta g <= |B_1|^(theta/n - 1) I_theta |g| at the samples (default: every cell)."""
    n = g.n
    if not 0 < theta < n:
        raise ValueError("theta must lie in (0, n)")
    C = float(ball_volume(n, 1.0)) ** (theta / n - 1.0)
    Mg = frac_maximal(g, theta).values
    Ig = riesz_potential(g.with_values(np.abs(g.values)), theta).values
    if samples is None:
        sel = (slice(None),) * n
    else:
        pts = np.asarray(samples, float).reshape(-1, n)
        sel = tuple(np.array([_cell_index(g, x) for x in pts]).T)
    lhs, rhs = Mg[sel].ravel(), C * Ig[sel].ravel()
    viol = int(np.sum(lhs > rhs * (1 + 1e-10)))
    with np.errstate(divide="ignore", invalid="ignore"):
        slack = np.where(rhs > 0, 1.0 - lhs / rhs, 0.0)
    k = int(np.argmin(slack))
    return InequalityReport(
        "maximal_vs_riesz", float(lhs[k]), float(rhs[k]), viol == 0, 1e-10,
        {"C_n_theta": C, "theta": theta}, int(lhs.size),
        {"violations": viol, "min_slack": float(slack.min()), "max_slack": float(slack.max())})


# ---------------------------------------------------------------------------
# weak Young inequality
# ---------------------------------------------------------------------------

def dual_exponent(p: float) -> float:
    return math.inf if p == 1 else p / (p - 1)


def check_young_exponents(p: float, q: float, r: float, tol: float = 1e-12):
    if not (1 <= p < math.inf and 1 < q < math.inf and 1 < r < math.inf):
        raise ValueError("need p in [1, inf) and q, r in (1, inf)")
    if abs(1 / p - 1 / q - (1 - 1 / r)) > tol:
        raise ValueError(f"exponents violate 1/p - 1/q = 1 - 1/r: p={p}, q={q}, r={r}")


def young_q(p: float, r: float) -> float:
    """q solving 1/p - 1/q = 1 - 1/r."""
    return 1.0 / (1.0 / p - 1.0 + 1.0 / r)


def young_level(gamma: float, p: float, r: float, G: float, A: float) -> float:
    """The truncation level N chosen so that the bounded part of h contributes gamma/2."""
    pp = dual_exponent(p)
    if math.isinf(pp):
        return gamma / (2.0 * G)
    return ((gamma / (2.0 * G)) ** pp * (pp - r) / (pp * A ** r)) ** (1.0 / (pp - r))


def young_chain_bound(gamma: float, p: float, r: float, G: float, A: float) -> float:
    """(2/gamma)^p (r N^(1-r) A^r G / (r-1))^p with N = young_level(...)."""
    N = young_level(gamma, p, r, G, A)
    return (2.0 / gamma) ** p * (r * N ** (1 - r) * A ** r * G / (r - 1)) ** p


def young_constant(p: float, q: float, r: float) -> float:
    """C with omega_{g*h}(gamma) <= C^q gamma^-q ||h||^q_{r,inf} ||g||^q_p, from the proof chain."""
    check_young_exponents(p, q, r, tol=1e-9)
    return young_chain_bound(1.0, p, r, 1.0, 1.0) ** (1.0 / q)


def _count_gt(a: np.ndarray, t: float) -> int:
    return int(np.count_nonzero(np.abs(a) > t))


def _counts_gt(a: np.ndarray, t: np.ndarray) -> np.ndarray:
    srt = np.sort(np.abs(a).ravel())
    return srt.size - np.searchsorted(srt, t, side="right")


def weak_young_check(g: GridFunction, hk: GridFunction, p: float, q: float, r: float,
                     gammas: Optional[Iterable[float]] = None, method: str = "auto",
                     rtol: float = 1e-12) -> InequalityReport:
    """Check ||g*h||_{q,inf} <= C ||h||_{r,inf} ||g||_p and replay the proof chain.

    ``hk`` lives on a box with an odd number of cells per side, its middle
    cell centred at the origin, with the same cell width as ``g``.  The
    convolution is (g*h)_i = h^n sum_j g_j h_{i-j} over the full lattice
    support.  For each gamma the truncation level N is chosen as in the
    proof, h is split into h1 = h 1{|h| <= N} and h2 = h 1{|h| > N}, and
    every intermediate inequality is checked separately.
    """
    check_young_exponents(p, q, r)
    if hk.N % 2 == 0:
        raise ValueError("the kernel grid needs an odd number of cells per side")
    if not np.isclose(hk.h, g.h, rtol=1e-12):
        raise ValueError("g and h must share the cell width")
    _require_zero_exterior(g)
    _require_zero_exterior(hk)
    mu = g.cell_measure
    hv = hk.values
    G = lp_norm(g, p)
    A = weak_lp_quasinorm(hk, r).quasinorm
    conv = mu * convolve(g.values, hv, "full", method)
    convg = GridFunction(conv, 0.5 * conv.shape[0] * g.h)
    Q = weak_lp_quasinorm(convg, q).quasinorm
    C = young_constant(p, q, r)
    pp = dual_exponent(p)
    if gammas is None:
        top = float(np.abs(conv).max())
        gammas = top * np.geomspace(0.02, 1.0, 12) if top > 0 else []
    habs = np.abs(hv).ravel()
    levels = np.unique(habs)
    viol = {k: 0 for k in ("levels_low", "levels_high", "split", "low_part_norm", "low_part_sup",
                                "high_part_l1", "high_part_lp", "chebyshev")}
    rows = []
    for gam in gammas:
        gam = float(gam)
        N = young_level(gam, p, r, G, A)
        low = np.abs(hv) <= N
        h1 = np.where(low, hv, 0.0)
        h2 = np.where(low, 0.0, hv)
        wN = _count_gt(hv, N)
        # level sets of h1, h2 on every jump of omega_h and at N itself, as exact counts
        t = np.r_[levels, N]
        w1, w2, wt = _counts_gt(h1, t), _counts_gt(h2, t), _counts_gt(hv, t)
        viol["levels_low"] += int(np.sum(w1 != np.where(t < N, wt - wN, 0)))
        viol["levels_high"] += int(np.sum(w2 != np.where(t <= N, wN, wt)))
        c1 = mu * convolve(g.values, h1, "full", method)
        c2 = mu * convolve(g.values, h2, "full", method)
        # omega_{g*h}(gam) <= omega_{g*h1}(gam/2) + omega_{g*h2}(gam/2)
        if _count_gt(conv, gam) > _count_gt(c1, gam / 2) + _count_gt(c2, gam / 2):
            viol["split"] += 1
        # ||h1||_{p'} and the sup bound on g*h1 (p' = inf handled separately)
        sup1 = float(np.abs(c1).max())
        if math.isinf(pp):
            b45 = G * float(np.abs(h1).max(initial=0.0))
            if b45 > G * N * (1 + rtol):
                viol["low_part_norm"] += 1
        else:
            h1n = float(mu * np.sum(np.abs(h1) ** pp))
            b74 = pp * N ** (pp - r) * A ** r / (pp - r) - N ** pp * wN * mu
            if h1n > b74 * (1 + rtol) + 1e-300:
                viol["low_part_norm"] += 1
            b45 = G * h1n ** (1.0 / pp)
        if sup1 > b45 * (1 + rtol) or b45 > 0.5 * gam * (1 + rtol):
            viol["low_part_sup"] += 1
        # ||h2||_1 and ||g*h2||_p
        h2n = float(mu * np.sum(np.abs(h2)))
        b78 = r * N ** (1 - r) * A ** r / (r - 1)
        if h2n > b78 * (1 + rtol):
            viol["high_part_l1"] += 1
        c2p = lp_norm(c2, p, g.h)
        if c2p > G * h2n * (1 + rtol) or G * h2n > b78 * G * (1 + rtol):
            viol["high_part_lp"] += 1
        # Chebyshev on g*h2 and the final weak bound
        wconv = _count_gt(conv, gam) * mu
        w2h = _count_gt(c2, gam / 2) * mu
        cheb = (2.0 / gam) ** p * c2p ** p
        final = C ** q * gam ** (-q) * A ** q * G ** q
        if not (wconv <= w2h * (1 + rtol) and w2h <= cheb * (1 + rtol) and cheb <= final * (1 + 1e-9)):
            viol["chebyshev"] += 1
        rows.append({"gamma": gam, "N": N, "omega_conv": wconv, "bound": final,
                     "sup_g_h1": sup1, "half_gamma": 0.5 * gam})
    rhs = C * A * G
    ok = Q <= rhs * (1 + rtol) and all(v == 0 for v in viol.values())
    return InequalityReport(
        "weak_young", Q, rhs, bool(ok), rtol,
        {"C": C, "weak_norm_h": A, "lp_norm_g": G, "p": p, "q": q, "r": r},
        len(rows), {"violations": viol, "slack": 1.0 - Q / rhs if rhs > 0 else 0.0,
                    "chain": rows})


def young_blowup_sweep(p: float, rs: Sequence[float]) -> dict:
    """Proof-chain constant C(p, q(r), r) and C (r-1)^(p/q) along r -> 1."""
    out = {"r": [], "q": [], "C": [], "normalized": []}
    for r in rs:
        q = young_q(p, r)
        C = young_constant(p, q, r)
        out["r"].append(float(r))
        out["q"].append(q)
        out["C"].append(C)
        out["normalized"].append(C * (r - 1) ** (p / q))
    nv = np.array(out["normalized"])
    out["spread"] = float(nv.max() / nv.min())
    lr, lc = np.log(np.array(rs, float) - 1), np.log(out["C"])
    out["fitted_exponent"] = float(np.polyfit(lr, lc, 1)[0])
    return out


def riesz_kernel_grid(n: int, theta: float, m: int, h: float) -> GridFunction:
    """Cell averages of |y|^(theta-n) on the (2m+1)^n cells centred at the origin."""
    k = riesz_table(n, h, theta, m) / h ** n
    return GridFunction(k, (m + 0.5) * h)


# ---------------------------------------------------------------------------
# operator norms
# ---------------------------------------------------------------------------

def _bump(c, rad):
    c = np.asarray(c, float)

    def f(x):
        t = np.sum((x - c) ** 2, axis=-1) / rad ** 2
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(t < 1, np.exp(-1.0 / np.maximum(1 - t, 1e-300)), 0.0)
    return f


def default_test_family(n: int, N: int, L: float, p: float = 2.0, seed: int = 0):
    """[(name, GridFunction)]: bumps, indicators, random signs, Riesz-type profiles.

    Every member is supported in |x| <= L/2.  Random signs use a Philox
    stream so that the family is reproducible from the seed.
    """
    c = cell_centers(n, N, L)
    rad = np.linalg.norm(c, axis=-1)
    h = 2 * L / N
    e0 = np.eye(n)[0]
    fam = [("bump_centre", _bump(np.zeros(n), 0.4 * L)(c)),
           ("bump_offset", _bump(0.2 * L * e0, 0.25 * L)(c)),
           ("indicator_half", (rad < 0.5 * L).astype(float)),
           ("indicator_small", (rad < 0.15 * L + 0.5 * h).astype(float))]
    rng = np.random.Generator(np.random.Philox(seed))
    signs = rng.choice([-1.0, 1.0], size=(N,) * n)
    fam.append(("random_signs", signs * (rad < 0.5 * L)))
    alpha = 0.9 * n / p if math.isfinite(p) else 0.0
    prof = np.maximum(rad, 0.5 * h) ** (-alpha) * (rad < 0.5 * L)
    fam.append((f"riesz_profile_{alpha:.3g}", prof))
    return [(name, GridFunction(v, L)) for name, v in fam]


def operator_bound_report(P: DirichletProblem, family, pt: ExponentPoint,
                          tol: float = 1e-10) -> InequalityReport:
    """Lower bounds for the norms of M_W o S_V and L_K o S_V over a test family.

    Strong norms in the open region, weak-type quasinorms on the edges (b)
    and (c).  The identity L_K o S_V = id - M_V o S_V is checked through
    the discrete operator for every input.
    """
    V = P.potential
    if V is None:
        raise ValueError("the mapping report needs a potential")
    s, n = P.kernel.s, P.n
    region = region_membership(pt, s, n)
    if region == "outside":
        raise ValueError(f"(1/p, 1/q) = ({pt.x}, {pt.y}) is outside the region; nothing to verify")
    p, q, theta = pt.p, pt.q, pt.theta
    probe = GridFunction(np.zeros((P.N,) * n), P.L)
    W = multiplier_weight(V, s, theta, probe)
    vbar = P.vbar
    ratios, lratios, ident = {}, {}, {}
    for name, f in family:
        fn = lp_norm(f, p)
        if fn == 0:
            continue
        u = apply_SV(P, f, tol)
        out = u.with_values(W * u.values)
        if region == "interior-a":
            num = lp_norm(out, q)
        else:
            num = weak_lp_quasinorm(out, q).quasinorm
        ratios[name] = num / fn
        Lu = P.operator_strong(u).reshape(u.values.shape)
        lratios[name] = lp_norm(Lu, q, P.h) / fn if region == "interior-a" else None
        resid = Lu - f.values + vbar * u.values
        ident[name] = float(np.linalg.norm(resid) / np.linalg.norm(f.values))
    worst = max(ratios, key=ratios.get)
    finite = all(math.isfinite(v) for v in ratios.values())
    id_ok = max(ident.values()) <= 10 * tol
    notes = ["ratios are lower bounds for the operator norm over the test family",
             "M_V uses the cell-averaged potential of the discrete operator"]
    if pt.x == 0 and pt.y == 0:
        notes.append("the point (inf, inf) is checked as a sup-norm ratio only")
    return InequalityReport(
        f"operator_bound_{region}", ratios[worst], ratios[worst], bool(finite and id_ok),
        10 * tol,
        {"p": p, "q": q, "theta": theta, "region": region, "norm_lower_bound": ratios[worst]},
        len(ratios),
        {"ratios": ratios, "LK_SV_ratios": lratios, "identity_residual": ident,
         "identity_residual_max": max(ident.values()), "worst": worst},
        notes)
