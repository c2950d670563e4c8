"""Xi series, cutoffs and the Caccioppoli / Harnack-type checks on solved problems.

Ball quantities on a grid: the sup over a ball is the max over cells whose
centres lie in the closed ball; integrals use exact cell/ball overlaps
(n <= 2).
"""

from __future__ import annotations

import math
import warnings
from typing import Iterable, Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from .auxfunc import fractional_seminorm_p, m_v, verify_lemma31
from .geometry import ball_cell_weights, ball_volume, sphere_area
from .grid import Exterior, GridFunction
from .reports import HarnackReport, InequalityReport
from .solver import DirichletProblem, classify_solution, nonlocal_tail


class XiSaturation(RuntimeWarning):
    """Xi(x) exceeds the float range; the value saturates at inf."""


def log_xi(x: float, n: int, s: float) -> float:
    """log Xi(x), Xi(x) = sum_k x^k / (k!)^(n/2 + s), summed in log space."""
    if x < 0:
        raise ValueError("Xi is defined for x >= 0")
    if x == 0:
        return 0.0
    e = n / 2 + s
    lx = math.log(x)
    # terms peak near k = x^(1/e); sum well past the peak
    peak = x ** (1.0 / e)
    kmax = int(peak + 50 + 10 * math.sqrt(peak + 1))
    k = np.arange(kmax + 1)
    logs = k * lx - e * gammaln(k + 1.0)
    while logs[-1] - logsumexp(logs) > math.log(1e-16):
        kmax *= 2
        k = np.arange(kmax + 1)
        logs = k * lx - e * gammaln(k + 1.0)
    return float(logsumexp(logs))


def xi(x: float, n: int, s: float) -> float:
    """Xi(x) = sum_{k>=0} x^k / (k!)^(n/2+s); inf with an XiSaturation warning on overflow."""
    lv = log_xi(x, n, s)
    if lv > 709.0:
        warnings.warn(f"Xi({x}) overflows (log Xi = {lv:.1f})", XiSaturation, stacklevel=2)
        return math.inf
    return math.exp(lv)


def cutoff(x, x0, r: float, R_star: float):
    """((R* - |x-x0|)/(R* - r) v 0) ^ 1, vectorized over points (..., n)."""
    if not 0 < r < R_star:
        raise ValueError("need 0 < r < R_star")
    x = np.asarray(x, float)
    x0 = np.asarray(x0, float)
    d = np.linalg.norm(x - x0, axis=-1) if x.ndim else abs(float(x) - float(x0))
    return np.clip((R_star - d) / (R_star - r), 0.0, 1.0)


# ---------------------------------------------------------------------------
# ball helpers
# ---------------------------------------------------------------------------

def ball_sup(u: GridFunction, x0, r: float) -> float:
    c = u.centers()
    d = np.linalg.norm(c - np.asarray(x0, float), axis=-1)
    inside = d <= r * (1 + 1e-12)
    if not inside.any():
        raise ValueError("no cell centre lies in the ball")
    return float(u.values[inside].max())


def ball_integral_sq(u: GridFunction, x0, r: float, weight=None) -> float:
    """int_{B_r(x0)} w u^2 with exact cell overlaps."""
    w = ball_cell_weights(u.n, u.N, u.L, np.asarray(x0, float), r)
    vals = u.values**2 if weight is None else weight * u.values**2
    return float(np.sum(w * vals))


def ball_l2_average(u: GridFunction, x0, r: float) -> float:
    """(|B_r|^-1 int_{B_r} u^2)^(1/2)."""
    return math.sqrt(ball_integral_sq(u, x0, r) / ball_volume(u.n, r))


def boundary_distance(P: DirichletProblem, x0) -> float:
    """Distance from x0 to the complement of the cell union Omega (and the box edge)."""
    x0 = np.asarray(x0, float)
    h = P.h
    cells = -P.L + (np.argwhere(~P.omega) + 0.5) * h
    box = float(np.min(P.L - np.abs(x0)))
    if cells.size == 0:
        return box
    # distance to the nearest non-Omega cell (as a square)
    d = np.maximum(np.abs(cells - x0) - h / 2, 0.0)
    return float(min(box, np.min(np.linalg.norm(d, axis=1))))


def _require_nonneg(u: GridFunction, what: str):
    if np.any(u.values < 0):
        raise ValueError(f"{what}: u is negative somewhere")
    ext = u.exterior
    if ext.kind == "constant" and ext.value < 0:
        raise ValueError(f"{what}: exterior data is negative")


def _check_subsolution(P: DirichletProblem, u: GridFunction):
    cls = classify_solution(P, u)
    if cls not in ("subsolution", "solution"):
        raise ValueError(f"u is not a subsolution (classified {cls!r})")
    return cls


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

def caccioppoli_check(P: DirichletProblem, u: GridFunction, x0, r: float, R: float,
                      C: float = 0.0, check_class: bool = True) -> InequalityReport:
    """Energy bound for nonnegative subsolutions with the linear cutoff on B_{R*}, R* = (R+r)/2.

    LHS = ||u||^2_{L^2_V(B_R*)} + lambda c_{n,s} ||phi u||^2_{H^s}, with the
    H^s norm ||.||_{L^2} + [.]; RHS = (20 Theta + C)(R-r)^(-2s) (R/(R-r))^n ||u||^2_{L^2(B_R)}.
    The report records C_eff = LHS / ((R-r)^(-2s) (R/(R-r))^n ||u||^2), the total
    constant the data require, and C_min = max(C_eff - 20 Theta, 0).
    """
    K = P.kernel
    n, s = K.n, K.s
    x0 = np.asarray(x0, float)
    dist = boundary_distance(P, x0)
    if not (0 < r < dist / 2):
        raise ValueError(f"need 0 < r < dist(x0, boundary)/2 = {dist / 2}")
    if not (r < R <= 2 * r):
        raise ValueError("need r < R <= 2r")
    _require_nonneg(u, "caccioppoli")
    cls = _check_subsolution(P, u) if check_class else "unchecked"
    Rs = 0.5 * (R + r)
    phi = cutoff(u.centers(), x0, r, Rs)
    pu = GridFunction(phi * u.values, u.L)
    l2 = P.h**n * float(np.sum(pu.values**2))
    semi = fractional_seminorm_p(pu, s, 2.0) if np.any(pu.values) else 0.0
    hs_sq = (math.sqrt(l2) + math.sqrt(semi)) ** 2
    lv = ball_integral_sq(u, x0, Rs, weight=P.vbar)
    lhs = lv + K.lam * K.c_ns * hs_sq
    theta = sphere_area(n) * K.Lam / s
    base = (R - r) ** (-2 * s) * (R / (R - r)) ** n * ball_integral_sq(u, x0, R)
    rhs = (20 * theta + C) * base
    c_eff = lhs / base if base > 0 else (0.0 if lhs == 0 else math.inf)
    return InequalityReport(
        "caccioppoli", lhs, rhs, bool(lhs <= rhs * (1 + 1e-12)), 1e-12,
        {"Theta": theta, "C": C, "C_eff": c_eff, "C_min": max(c_eff - 20 * theta, 0.0)},
        1,
        {"x0": x0, "r": r, "R": R, "R_star": Rs, "hs_norm_sq": hs_sq, "l2_V": lv,
         "classification": cls, "h": P.h},
    )


def _positive_part(u: GridFunction, sign: float = 1.0) -> GridFunction:
    vals = np.maximum(sign * u.values, 0.0)
    ext = u.exterior
    if ext.kind in ("zero",):
        new = Exterior.zero()
    elif ext.kind == "constant":
        new = Exterior.constant(max(sign * ext.value, 0.0))
    elif ext.kind == "closure":
        g = ext.func
        new = Exterior.closure(lambda p: np.maximum(sign * np.asarray(g(p), float), 0.0),
                               max(sign * ext.value, 0.0))
    elif ext.kind == "sampled":
        o = ext.outer
        new = Exterior.sampled(o.with_values(np.maximum(sign * o.values, 0.0)))
    else:
        new = ext
    return GridFunction(vals, u.L, new)


def local_boundedness_check(P: DirichletProblem, u: GridFunction, x0, r: float,
                            delta: float = 1.0, R: Optional[float] = None,
                            c1: Optional[float] = None, c2: Optional[float] = None,
                            check_class: bool = True) -> InequalityReport:
    """sup_{B_{r/2}} u <= delta T(u+; x0, r/2) + c1 delta^(-n/4s) (avg_{B_r} (u+)^2)^(1/2).

    Reports the smallest admissible c1.  With ``R`` (and u >= 0 on B_R)
    the tail bound T(u+; x0, r) <= c2 sup_{B_r} u + c2 (r/R)^(2s) T(u-; x0, R)
    is evaluated as well, reporting the smallest admissible c2.  Given
    constants turn the fits into pass/fail checks.
    """
    n, s = P.n, P.kernel.s
    x0 = np.asarray(x0, float)
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    if boundary_distance(P, x0) < r * (1 - 1e-12):
        raise ValueError("B_r(x0) must lie inside Omega")
    cls = _check_subsolution(P, u) if check_class else "unchecked"
    up = _positive_part(u)
    sup = ball_sup(u, x0, r / 2)
    tail = nonlocal_tail(up, x0, r / 2, s)
    avg = ball_l2_average(up, x0, r)
    scale = delta ** (-n / (4 * s)) * avg
    c1_min = max(sup - delta * tail, 0.0) / scale if scale > 0 else (0.0 if sup <= delta * tail else math.inf)
    c1_used = c1_min if c1 is None else c1
    rhs = delta * tail + c1_used * scale
    ok = sup <= rhs * (1 + 1e-12) + 1e-300
    consts = {"c1_min": c1_min, "delta": delta}
    details = {"sup": sup, "tail_half": tail, "avg": avg, "classification": cls}
    if R is not None:
        if not r < R or boundary_distance(P, x0) < R * (1 - 1e-12):
            raise ValueError("need r < R with B_R(x0) inside Omega")
        if ball_sup(_positive_part(u, -1.0), x0, R) > 0:
            raise ValueError("the tail bound needs u >= 0 on B_R(x0)")
        t_plus = nonlocal_tail(up, x0, r, s)
        t_minus = nonlocal_tail(_positive_part(u, -1.0), x0, R, s)
        supr = ball_sup(u, x0, r)
        denom = supr + (r / R) ** (2 * s) * t_minus
        c2_min = t_plus / denom if denom > 0 else (0.0 if t_plus == 0 else math.inf)
        consts["c2_min"] = c2_min
        details.update({"tail_r": t_plus, "tail_minus_R": t_minus, "sup_r": supr})
        if c2 is not None:
            ok = ok and t_plus <= c2 * denom * (1 + 1e-12)
    return InequalityReport("local_boundedness", sup, rhs, bool(ok), 1e-12, consts, 1, details)


def weak_harnack_check(P: DirichletProblem, u: GridFunction, x0, r: float,
                       C: Optional[float] = None) -> HarnackReport:
    """sup_{B_{r/2}} u / (avg_{B_r} u^2)^(1/2) for a nonnegative solution with V = 0."""
    x0 = np.asarray(x0, float)
    _require_nonneg(u, "weak Harnack")
    if P.potential is not None and np.any(P.vbar):
        raise ValueError("weak Harnack is stated for V = 0")
    if boundary_distance(P, x0) < r * (1 - 1e-12):
        raise ValueError("B_r(x0) must lie inside Omega")
    sup = ball_sup(u, x0, r / 2)
    avg = ball_l2_average(u, x0, r)
    ratio = sup / avg if avg > 0 else (0.0 if sup == 0 else math.inf)
    passed = math.isfinite(ratio) and (C is None or ratio <= C)
    return HarnackReport("weak_harnack", x0, r, sup, avg, ratio, bool(passed), 0.0, C=C,
                         details={"h": P.h})


def improved_harnack_check(P: DirichletProblem, u: GridFunction, x0, radii: Iterable[float],
                           d0: Optional[float] = None, eps_grid=None,
                           pairs=None) -> HarnackReport:
    """Fit ratio(R) <= C / Xi(eps (1 + R m_V(x0))^(s/(d0+1))) over the radii.

    ratio(R) = sup_{B_{R/2}} u / (R^-n int_{B_R} u^2)^(1/2).  For each eps on
    the grid 2^-12..2^0 the minimal C is taken; the pair minimizing the
    l-inf log residual max_R |log(C/Xi) - log ratio| is reported.  d0
    comes from verify_lemma31 on ``pairs`` (default: a ring of points
    around x0) unless given.
    """
    V = P.potential
    if V is None:
        raise ValueError("improved Harnack needs a potential")
    n, s = P.n, P.kernel.s
    x0 = np.asarray(x0, float)
    _require_nonneg(u, "improved Harnack")
    radii = np.asarray(sorted(radii), float)
    dist = boundary_distance(P, x0)
    if radii.max() >= dist:
        raise ValueError(f"radii must stay below dist(x0, boundary) = {dist}")
    m = m_v(V, s, x0).value
    if d0 is None:
        if pairs is None:
            pts = [x0 + rr * np.array([math.cos(a), math.sin(a)])[:n]
                   for rr in (0.0, 0.5, 1.0, 2.0) for a in np.linspace(0, 2 * math.pi, 5)[:-1]]
            pairs = [(p, q) for i, p in enumerate(pts) for q in pts[i + 1:]
                     if np.linalg.norm(p - q) > 0]
        consts, _ = verify_lemma31(V, s, pairs)
        d0 = consts.d0
    sups = np.array([ball_sup(u, x0, R / 2) for R in radii])
    dens = np.array([math.sqrt(ball_integral_sq(u, x0, R) / R**n) for R in radii])
    ratio = sups / dens
    arg = (1 + radii * m) ** (s / (d0 + 1))
    eps_grid = 2.0 ** np.arange(-12, 1) if eps_grid is None else np.asarray(eps_grid, float)
    lr = np.log(ratio)
    best = None
    for eps in eps_grid:
        lx = np.array([log_xi(eps * a, n, s) for a in arg])
        logC = float(np.max(lr + lx))         # minimal C for this eps
        res = logC - lx - lr                  # >= 0 everywhere
        linf = float(np.max(np.abs(res)))
        if best is None or linf < best[0] - 1e-15:
            best = (linf, eps, logC, res)
    linf, eps, logC, res = best
    C = math.exp(logC)
    feasible = eps > 0 and math.isfinite(C)
    return HarnackReport(
        "improved_harnack", x0, radii, sups, dens, ratio, bool(feasible), 0.5,
        xi_factor=[math.exp(log_xi(eps * a, n, s)) for a in arg], epsilon=float(eps), C=C,
        residual=linf,
        details={"m_V": m, "d0": d0, "R_m": radii * m, "log_residuals": res,
                 "monotone_bound": bool(np.all(np.diff([logC - log_xi(eps * a, n, s)
                                                        for a in arg]) <= 1e-15))},
    )
