"""Discrete fundamental solutions of L_K + V and their decay bounds.

The estimate is the kernel of the discrete resolvent: the solution of
(L_h + V) u = h^-n 1_{C_y} on a box with zero exterior, where C_y is the
source cell.  Points closer than 5h to the source are excluded from
every fit, and so is the outer quarter of the box radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .auxfunc import m_field, verify_lemma31
from .grid import Exterior, GridFunction
from .kernel import KernelSpec
from .regularity import log_xi
from .reports import InequalityReport
from .solver import assemble, solve_dirichlet
from .weights import Weight


@dataclass
class FundamentalSolutionEstimate:
    y: np.ndarray
    u: GridFunction
    h: float
    r_min: float
    kernel: KernelSpec
    potential: Optional[Weight]
    residual: float
    iterations: int
    notes: list = field(default_factory=list)

    @property
    def L(self) -> float:
        return self.u.L

    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.u.centers() - self.y, axis=-1)

    def window(self, r_lo: Optional[float] = None, r_hi: Optional[float] = None):
        """(r, x, u) for cells with r_lo <= |x - y| <= r_hi; defaults [5h, 0.75 L]."""
        r_lo = self.r_min if r_lo is None else r_lo
        r_hi = 0.75 * self.L if r_hi is None else r_hi
        r = self.radii()
        sel = (r >= r_lo) & (r <= r_hi)
        if not sel.any():
            raise ValueError("empty fit window")
        return r[sel], self.u.centers()[sel], self.u.values[sel]


def estimate_fundamental_solution(K: KernelSpec, V: Optional[Weight], y, L: float, N: int,
                                  tol: float = 1e-10, near_field: str = "auto",
                                  strength: float = 1.0, pad: int = 2) -> FundamentalSolutionEstimate:
    """Solve (L_h + V) u = strength * h^-n 1_{C_y} with zero exterior, h = 2L/N.

    The solve runs on the padded box [-pad L, pad L]^n (same h) and the
    estimate is returned on [-L, L]^n; pad = 2 puts the truncation at
    8x the largest slope-window radius L/4.
    """
    n = K.n
    h = 2 * L / N
    if pad < 1 or int(pad) != pad or ((pad - 1) * N) % 2:
        raise ValueError("pad must be a positive integer with (pad-1)*N even")
    Np, Lp = pad * N, pad * L
    y = np.atleast_1d(np.asarray(y, float))
    idx = (y + L) / h - 0.5
    if not np.allclose(idx, np.round(idx), atol=1e-9) or np.any(idx < 0) or np.any(idx > N - 1):
        raise ValueError("the source must be a cell centre inside the box")
    off = (pad - 1) * N // 2
    P = assemble(K, np.ones((Np,) * n, bool), Lp, exterior=Exterior.zero(), potential=V,
                 form="resolvent", near_field=near_field)
    f = np.zeros((Np,) * n)
    f[tuple(np.round(idx).astype(int) + off)] = strength / h**n
    res = solve_dirichlet(P, f=GridFunction(f, Lp), tol=tol)
    sl = tuple(slice(off, off + N) for _ in range(n))
    u = GridFunction(res.solution.values[sl], L, Exterior.sampled(res.solution))
    notes = ["estimate is the kernel of the discrete resolvent on a truncated box",
             f"solved on [-{Lp:g}, {Lp:g}]^{n} with zero exterior"]
    if u.values.min() < -1e-8 * u.values.max():
        notes.append(f"negative values down to {u.values.min():.3e}")
    return FundamentalSolutionEstimate(y, u, h, 5 * h, K, V, res.residual, res.iterations, notes)


def decay_slope(est: FundamentalSolutionEstimate, r_lo=None, r_hi=None) -> float:
    """Least-squares slope of log u against log |x - y|; default window [5h, L/4]."""
    r, _, u = est.window(r_lo, r_hi if r_hi is not None else est.L / 4)
    if np.any(u <= 0):
        raise ValueError("nonpositive values in the slope window")
    return float(np.polyfit(np.log(r), np.log(u), 1)[0])


def free_decay_check(est: FundamentalSolutionEstimate, C: Optional[float] = None,
                     r_lo=None, r_hi=None) -> InequalityReport:
    """Smallest C with u(x) <= C |x-y|^-(n-2s) on the window, and min u."""
    n, s = est.kernel.n, est.kernel.s
    r, _, u = est.window(r_lo, r_hi)
    scaled = u * r ** (n - 2 * s)
    C_min = float(scaled.max())
    Cu = C_min if C is None else C
    umin, umax = float(est.u.values.min()), float(est.u.values.max())
    nonneg = umin >= -1e-8 * umax
    try:
        slope = decay_slope(est)
    except ValueError:
        slope = math.nan
    return InequalityReport(
        "free_decay", C_min, Cu, bool(C_min <= Cu * (1 + 1e-12) and nonneg), 1e-8,
        {"C_min": C_min, "C": Cu}, int(r.size),
        {"min_u": umin, "max_u": umax, "nonnegative": bool(nonneg), "slope": slope,
         "expected_slope": -(n - 2 * s), "window": [float(r.min()), float(r.max())]},
        list(est.notes))


def _default_pairs(est: FundamentalSolutionEstimate, n_pts: int = 6):
    y = est.y
    rr = np.geomspace(est.r_min, 0.75 * est.L, n_pts)
    pts = [y] + [y + t * np.eye(len(y))[0] for t in rr]
    return [(p, q) for i, p in enumerate(pts) for q in pts[i + 1:]]


def xi_decay_check(est: FundamentalSolutionEstimate, d0: Optional[float] = None,
                   eps_grid: Optional[Sequence[float]] = None, r_lo=None,
                   r_hi=None) -> InequalityReport:
    """Fit u(x) |x-y|^(n-2s) Xi(eps (1 + |x-y| m_V(x)/2)^(s/(d0+1))) <= C on the window.

    For each eps on the grid (default 0 and 2^-12..2^0) C is minimal; the
    reported eps is the one whose bound C / Xi(...) tracks the data best
    (smallest l-inf log residual).  ``eps = 0`` reproduces free_decay_check.
    """
    V = est.potential
    if V is None:
        raise ValueError("the Xi bound needs a potential")
    n, s = est.kernel.n, est.kernel.s
    r, x, u = est.window(r_lo, r_hi)
    if np.any(u <= 0):
        raise ValueError("nonpositive values in the window")
    m = m_field(V, s, x)
    if d0 is None:
        d0 = verify_lemma31(V, s, _default_pairs(est))[0].d0
    arg = (1 + 0.5 * r * m) ** (s / (d0 + 1))
    base = np.log(u) + (n - 2 * s) * np.log(r)
    grid = [0.0] + list(2.0 ** np.arange(-12, 1)) if eps_grid is None else list(eps_grid)
    fits = []
    for eps in grid:
        lx = np.array([log_xi(eps * a, n, s) for a in arg])
        logC = float(np.max(base + lx))
        res = logC - lx - base
        fits.append((float(np.max(res)), eps, logC))
    linf, eps, logC = min(fits, key=lambda t: (t[0], -t[1]))
    by_eps = {f"{e:.6g}": math.exp(c) for _, e, c in fits}
    # r u(x) |x-y|^(n-2s) should fall off if the potential helps
    order = np.argsort(r)
    return InequalityReport(
        "xi_decay", math.exp(logC), math.exp(logC), bool(eps > 0 and math.isfinite(logC)), 0.0,
        {"epsilon": eps, "C": math.exp(logC), "d0": d0, "C_by_epsilon": by_eps},
        int(r.size),
        {"log_residual_linf": linf, "scaled_first": float(np.exp(base[order][0])),
         "scaled_last": float(np.exp(base[order][-1])), "m_range": [float(m.min()), float(m.max())]},
        list(est.notes))


def sup_poly_over_xi(N: float, n: int, s: float) -> tuple:
    """(sup_t t^N / Xi(t), argmax) by 1-d maximization of N log t - log Xi(t)."""
    if N == 0:
        return 1.0, 0.0
    f = lambda lt: -(N * lt - log_xi(math.exp(lt), n, s))
    # the maximizer grows like N^(n/2+s); bracket generously
    hi = math.log(10 * (N + 1) ** (n / 2 + s + 1))
    res = optimize.minimize_scalar(f, bounds=(-10.0, hi), method="bounded",
                                   options={"xatol": 1e-10})
    return math.exp(-res.fun), math.exp(res.x)


def poly_decay_fit(est: FundamentalSolutionEstimate, Ns: Sequence[float] = (1, 2, 4),
                   r_lo=None, r_hi=None) -> InequalityReport:
    """Smallest C_N with u(x) <= C_N / ((1 + |x-y| m_V(x))^N |x-y|^(n-2s)), per N."""
    V = est.potential
    if V is None:
        raise ValueError("the polynomial bound needs a potential")
    n, s = est.kernel.n, est.kernel.s
    r, x, u = est.window(r_lo, r_hi)
    m = m_field(V, s, x)
    scaled = u * r ** (n - 2 * s)
    C = {}
    sup = {}
    for N in Ns:
        C[str(N)] = float(np.max(scaled * (1 + r * m) ** N))
        sup[str(N)] = sup_poly_over_xi(N, n, s)[0]
    vals = [C[str(N)] for N in Ns]
    finite = all(math.isfinite(v) for v in vals + list(sup.values()))
    return InequalityReport(
        "poly_decay", vals[-1], vals[-1], bool(finite), 0.0,
        {"C_N": C, "sup_t_pow_over_xi": sup}, int(r.size),
        {"increasing_in_N": bool(np.all(np.diff(vals) >= 0)) if sorted(Ns) == list(Ns) else None},
        list(est.notes))
