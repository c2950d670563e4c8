"""Nonnegative potentials viewed as weights.

Ball integrals, Muckenhoupt A_p averages, reverse Hoelder constants, A_inf
level-set fractions and doubling constants, each evaluated over a finite,
documented family of balls.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize

from .geometry import ball_cell_weights, ball_volume, sphere_area, sphere_fraction_in_ball
from .grid import GridFunction
from .reports import InequalityReport


@dataclass(frozen=True)
class BallQuery:
    center: tuple
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    @property
    def x(self) -> np.ndarray:
        return np.array(self.center)

    def scaled(self, factor: float) -> "BallQuery":
        return BallQuery(self.center, self.radius * factor)


@dataclass(frozen=True)
class Weight:
    """A nonnegative function on R^n.

    ``family`` is one of ``("const", c)``, ``("power", a, coef)``
    (coef*|x|^a), ``("exp", rate)`` (exp(rate*|x|)), ``("sampled",)`` or
    ``("custom",)``.  ``radial`` gives v(rho) when the weight is a function
    of |x| alone; ``grid`` holds sampled cell values.
    """

    func: Callable
    n: int
    family: tuple = ("custom",)
    radial: Optional[Callable] = None
    grid: Optional[GridFunction] = None
    name: str = "custom"
    class_hint: Optional[tuple] = None

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    # ---- shipped families ------------------------------------------------
    @classmethod
    def constant(cls, c: float, n: int) -> "Weight":
        c = float(c)
        if c < 0:
            raise ValueError("weights are nonnegative")
        return cls(lambda x: np.full(np.shape(x)[:-1], c), n, ("const", c),
                   radial=lambda r: np.full(np.shape(r), c), name=f"const:{c!r}")

    @classmethod
    def power(cls, a: float, n: int, coef: float = 1.0) -> "Weight":
        a, coef = float(a), float(coef)

        def f(x):
            r = np.linalg.norm(x, axis=-1)
            with np.errstate(divide="ignore"):
                return coef * r**a
        return cls(f, n, ("power", a, coef), radial=lambda r: coef * np.asarray(r, float) ** a,
                   name=f"power:{a!r}" + ("" if coef == 1.0 else f"*{coef!r}"))

    @classmethod
    def exp_radial(cls, n: int, rate: float = 1.0) -> "Weight":
        rate = float(rate)
        return cls(lambda x: np.exp(rate * np.linalg.norm(x, axis=-1)), n, ("exp", rate),
                   radial=lambda r: np.exp(rate * np.asarray(r, float)), name=f"exp:{rate!r}")

    @classmethod
    def sampled(cls, grid: GridFunction) -> "Weight":
        if np.any(grid.values < 0):
            raise ValueError("sampled weight has negative values")
        return cls(grid.evaluate, grid.n, ("sampled",), grid=grid, name="sampled")

    # ---- derived weights -------------------------------------------------
    def pow(self, t: float) -> "Weight":
        """The weight V^t."""
        fam = self.family
        if fam[0] == "const":
            return Weight.constant(fam[1] ** t, self.n)
        if fam[0] == "power":
            return Weight.power(fam[1] * t, self.n, fam[2] ** t)
        if fam[0] == "exp":
            return Weight.exp_radial(self.n, fam[1] * t)
        if fam[0] == "sampled":
            with np.errstate(divide="ignore"):
                vals = self.grid.values ** t
            return Weight.sampled(self.grid.with_values(np.where(np.isfinite(vals), vals, 0.0)))
        rad = self.radial
        return Weight(lambda x: self(x) ** t, self.n,
                      radial=None if rad is None else (lambda r: rad(r) ** t),
                      name=f"({self.name})^{t!r}")

    def dilated(self, t: float, s: float) -> "Weight":
        """The weight x -> t^{2s} V(t x)."""
        k = t ** (2 * s)
        fam = self.family
        if fam[0] == "const":
            return Weight.constant(k * fam[1], self.n)
        if fam[0] == "power":
            return Weight.power(fam[1], self.n, fam[2] * k * t ** fam[1])
        rad = self.radial
        return Weight(lambda x: k * self(t * np.asarray(x, float)), self.n,
                      radial=None if rad is None else (lambda r: k * rad(t * np.asarray(r, float))),
                      name=f"dilate({self.name},{t!r})")

    # ---- closed-form ball mass -------------------------------------------
    def closed_mass(self, x, r):
        """Closed-form int_{B_r(x)} V, vectorized in r, or None."""
        fam = self.family
        r = np.asarray(r, dtype=float)
        n = self.n
        if fam[0] == "const":
            return fam[1] * ball_volume(n, r)
        if fam[0] == "power":
            a, coef = fam[1], fam[2]
            d = float(np.linalg.norm(x))
            if a == 0:
                return coef * ball_volume(n, r)
            if a == 2:
                return coef * ball_volume(n, r) * (d * d + n * r * r / (n + 2))
            if d == 0:
                if a <= -n:
                    return np.full(r.shape, np.inf)
                return coef * sphere_area(n) * r ** (n + a) / (n + a)
            if a <= -n:
                return None
            if n == 1:
                F = lambda z: np.sign(z) * np.abs(z) ** (a + 1) / (a + 1)
                return coef * (F(d + r) - F(d - r))
            if n == 2:
                return _power_mass_2d(a, coef, d, r)
        return None


_COS_NODES, _COS_WEIGHTS = np.polynomial.legendre.leggauss(96)


def _power_mass_2d(a: float, coef: float, d: float, r):
    """int_{B_r(x)} |z|^a for |x| = d > 0, vectorized in r.

    Full circles contribute in closed form; the band |d-r| < rho < d+r
    uses a Gauss rule in theta with rho = c + w cos(theta), which
    smooths the square-root behaviour of the arc fraction at both ends.
    Radii whose band reaches down to the origin, where rho^(a+1) is
    not smooth, fall back to adaptive quadrature.
    """
    r = np.atleast_1d(np.asarray(r, float))
    full = np.where(r > d, 2 * np.pi * np.maximum(r - d, 0.0) ** (a + 2) / (a + 2), 0.0)
    lo, hi = np.abs(d - r), d + r
    c, w = 0.5 * (lo + hi), 0.5 * (hi - lo)
    th = 0.5 * np.pi * (_COS_NODES + 1.0)
    rho = c[:, None] + w[:, None] * np.cos(th)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        cosphi = np.clip((rho * rho + d * d - r[:, None] ** 2) / (2 * rho * d), -1.0, 1.0)
    frac = np.arccos(cosphi) / np.pi
    f = 2 * np.pi * rho ** (a + 1) * frac * w[:, None] * np.sin(th)[None, :]
    band = 0.5 * np.pi * (f @ _COS_WEIGHTS)
    out = coef * (full + band)
    rough = (lo < 0.05 * w) & (a + 1 != np.round(a + 1))
    for i in np.flatnonzero(rough):
        v = lambda t: coef * np.asarray(t, float) ** a
        out[i] = _radial_ball_integral(v, 2, np.array([d, 0.0]), float(r[i]), 1e-12)
    return out


def _radial_ball_integral(v: Callable, n: int, x, r: float, tol: float) -> float:
    d = float(np.linalg.norm(x))
    omega = sphere_area(n)

    def f(rho):
        return v(rho) * omega * rho ** (n - 1) * sphere_fraction_in_ball(n, rho, d, r)

    lo, hi = max(0.0, d - r), d + r
    pts = sorted({p for p in (r - d, d) if lo < p < hi})
    edges = [lo] + pts + [hi]
    total, err = 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for a, b in zip(edges[:-1], edges[1:]):
            if b - a <= 1e-12 * hi:
                # a sliver next to a breakpoint; the midpoint rule is exact enough
                total += (b - a) * float(f(0.5 * (a + b)))
                continue
            try:
                val, e = integrate.quad(f, a, b, epsabs=0.0, epsrel=tol, limit=500)
            except integrate.IntegrationWarning as exc:
                raise RuntimeError(f"ball quadrature failed near [{a}, {b}]: {exc}") from None
            total += val
            err += e
    return total


def ball_integral(V: Weight, B: BallQuery, tol: float = 1e-10, seed: int = 0,
                  samples: int = 2_000_000) -> float:
    """int_{B_r(x)} V.

    Uses the closed form when the family has one, the exact cell/ball
    overlap for sampled weights, a 1-d radial quadrature for radial
    weights, nested polar quadrature in 2-d and seeded Monte Carlo
    otherwise.
    """
    x = B.x
    if x.shape != (V.n,):
        raise ValueError("ball centre has the wrong dimension")
    m = V.closed_mass(x, B.radius)
    if m is not None:
        return float(np.squeeze(m))
    if V.grid is not None:
        g = V.grid
        w = ball_cell_weights(g.n, g.N, g.L, x, B.radius)
        inner = float(np.sum(w * g.values))
        if g.exterior.kind == "constant" and g.exterior.value != 0:
            inner += g.exterior.value * (ball_volume(g.n, B.radius) - float(w.sum()))
        return inner
    if V.radial is not None:
        return _radial_ball_integral(V.radial, V.n, x, B.radius, tol)
    if V.n == 1:
        return integrate.quad(lambda t: float(V(np.array([t]))), x[0] - B.radius,
                              x[0] + B.radius, epsabs=0.0, epsrel=tol, limit=500)[0]
    if V.n == 2:
        def inner(rho):
            f = lambda th: float(V(x + rho * np.array([np.cos(th), np.sin(th)])))
            return rho * integrate.quad(f, 0, 2 * np.pi, epsabs=0.0, epsrel=tol, limit=200)[0]
        return integrate.quad(inner, 0, B.radius, epsabs=0.0, epsrel=tol, limit=200)[0]
    rng = np.random.Generator(np.random.Philox(seed))
    z = rng.normal(size=(samples, V.n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    z *= rng.random(samples)[:, None] ** (1.0 / V.n) * B.radius
    return float(np.mean(V(x + z)) * ball_volume(V.n, B.radius))


def ball_average(V: Weight, B: BallQuery, tol: float = 1e-10) -> float:
    return ball_integral(V, B, tol) / float(ball_volume(V.n, B.radius))


def _ess_inf(V: Weight, B: BallQuery) -> float:
    x, r = B.x, B.radius
    if V.family[0] == "const":
        return V.family[1]
    if V.grid is not None:
        g = V.grid
        w = ball_cell_weights(g.n, g.N, g.L, x, r)
        return float(g.values[w > 0].min()) if np.any(w > 0) else 0.0
    if V.radial is not None:
        d = float(np.linalg.norm(x))
        rho = np.linspace(max(0.0, d - r), d + r, 4001)
        with np.errstate(divide="ignore"):
            return float(np.nanmin(V.radial(rho)))
    rng = np.random.Generator(np.random.Philox(1))
    z = rng.uniform(-r, r, size=(200_000, V.n))
    z = z[np.linalg.norm(z, axis=1) < r]
    return float(V(x + z).min())


def ap_norm_estimate(V: Weight, p: float, balls, tol: float = 1e-10) -> float:
    """max over balls of avg(w) * avg(w^(-1/(p-1)))^(p-1).

    For p = 1 the second factor is ``1 / ess inf w``.  Balls on which an
    average diverges (or w vanishes for p = 1) contribute +inf.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    best = 0.0
    dual = None if p == 1 else V.pow(-1.0 / (p - 1))
    for B in balls:
        a = ball_average(V, B, tol)
        if p == 1:
            m = _ess_inf(V, B)
            val = np.inf if m <= 0 else a / m
        else:
            b = ball_average(dual, B, tol)
            val = a * b ** (p - 1)
        if not np.isfinite(val):
            return float("inf")
        best = max(best, val)
    return float(best)


def reverse_holder_check(V: Weight, q: float, balls, tol: float = 1e-10) -> InequalityReport:
    """sup over balls of avg(V^q)^(1/q) / avg(V)."""
    if q <= 1:
        raise ValueError("q must exceed 1")
    Vq = V.pow(q)
    ratios, radii = [], []
    for B in balls:
        num = ball_average(Vq, B, tol) ** (1.0 / q)
        den = ball_average(V, B, tol)
        ratios.append(num / den if den > 0 else np.inf)
        radii.append(B.radius)
    ratios = np.array(ratios)
    C = float(ratios.max())
    # growth record: worst ratio per radius
    by_r = {}
    for r, v in zip(radii, ratios):
        by_r[r] = max(by_r.get(r, 0.0), v)
    return InequalityReport(
        name="reverse-holder",
        lhs=C,
        rhs=float("inf"),
        passed=bool(np.isfinite(C)),
        tolerance=tol,
        constants={"q": q, "C_RH": C},
        samples=len(ratios),
        details={"worst_ratio_by_radius": [[r, by_r[r]] for r in sorted(by_r)]},
        notes=["certified on the tested ball family only"],
    )


def ainf_levelset_params(V: Weight, B: BallQuery, alpha0: float, tol: float = 1e-10,
                         seed: int = 0, samples: int = 4_000_000) -> float:
    """beta = |{x in B : V(x) >= alpha0 * avg_B V}| / |B|."""
    if not 0 < alpha0 < 1:
        raise ValueError("alpha0 must lie in (0, 1)")
    x, r = B.x, B.radius
    thr = alpha0 * ball_average(V, B, tol)
    vol = float(ball_volume(V.n, r))
    if V.family[0] == "const":
        return 1.0
    if V.grid is not None:
        g = V.grid
        w = ball_cell_weights(g.n, g.N, g.L, x, r)
        return float(np.sum(w * (g.values >= thr)) / vol)
    if V.radial is not None:
        n = V.n
        d = float(np.linalg.norm(x))
        lo, hi = max(0.0, d - r), d + r
        rho = np.linspace(lo, hi, 4097)
        with np.errstate(divide="ignore"):
            sgn = V.radial(rho) - thr
        cuts = [lo]
        for i in np.flatnonzero(np.sign(sgn[:-1]) != np.sign(sgn[1:])):
            cuts.append(optimize.brentq(lambda t: V.radial(t) - thr, rho[i], rho[i + 1], xtol=1e-14))
        cuts.append(hi)
        omega = sphere_area(n)
        meas = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            mid = 0.5 * (a + b)
            if V.radial(mid) >= thr:
                meas += integrate.quad(
                    lambda t: omega * t ** (n - 1) * sphere_fraction_in_ball(n, t, d, r),
                    a, b, epsabs=0.0, epsrel=tol, limit=200)[0]
        return float(meas / vol)
    rng = np.random.Generator(np.random.Philox(seed))
    z = rng.normal(size=(samples, V.n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    z *= rng.random(samples)[:, None] ** (1.0 / V.n) * r
    return float(np.mean(V(x + z) >= thr))


def doubling_constant(V: Weight, balls, tol: float = 1e-10) -> float:
    """max over balls of int_{B_2r} V / int_{B_r} V; zero denominators skipped."""
    best = 0.0
    skipped = []
    for B in balls:
        den = ball_integral(V, B, tol)
        if den <= 0:
            skipped.append(B)
            continue
        best = max(best, ball_integral(V, B.scaled(2.0), tol) / den)
    if skipped:
        warnings.warn(f"{len(skipped)} balls with zero mass excluded from the doubling constant")
    return float(best)


def ball_family(n: int, centers=None, radii=None, spacing: float = 1.0, extent: int = 2):
    """Deterministic ball family: lattice centres times dyadic radii 2^-8..2^8."""
    if radii is None:
        radii = [2.0**k for k in range(-8, 9)]
    if centers is None:
        ticks = spacing * np.arange(-extent, extent + 1)
        grids = np.meshgrid(*([ticks] * n), indexing="ij")
        centers = np.stack([g.ravel() for g in grids], axis=1)
    return [BallQuery(tuple(c), float(r)) for c in np.atleast_2d(centers) for r in radii]


def parse_weight(spec: str, n: int) -> Weight:
    """Build a weight from ``const:c``, ``power:a`` or ``sampled:<grid-file>``."""
    if not isinstance(spec, str) or ":" not in spec:
        raise ValueError(f"malformed weight spec {spec!r}")
    kind, _, arg = spec.partition(":")
    kind = kind.strip()
    try:
        if kind == "const":
            return Weight.constant(float(arg), n)
        if kind == "power":
            return Weight.power(float(arg), n)
    except ValueError as exc:
        raise ValueError(f"malformed weight spec {spec!r}: {exc}") from None
    if kind == "sampled":
        g = GridFunction.load(arg)
        if g.n != n:
            raise ValueError(f"grid file {arg!r} has dimension {g.n}, expected {n}")
        return Weight.sampled(g)
    raise ValueError(f"unknown weight family {kind!r}")
