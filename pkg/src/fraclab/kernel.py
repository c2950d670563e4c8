"""Symmetric kernels of fractional order and pointwise evaluation of L_K.

A kernel is ``K(y) = scale * a(y) * |y|^(-n-2s)`` where ``scale`` is the
fractional-Laplacian normalization ``c_{n,s}`` (or 1 for the bare
Gagliardo kernel used in Sobolev seminorms) and ``a`` is a bounded, even
profile with ``lam <= a <= Lam``.  The operator is

    L_K u(x) = 1/2 * int (2u(x) - u(x+y) - u(x-y)) K(y) dy.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import beta

from .geometry import sphere_area
from .reports import InequalityReport


class QuadratureError(RuntimeError):
    """Adaptive quadrature could not reach the requested tolerance."""

    def __init__(self, msg, achieved=None):
        super().__init__(msg)
        self.achieved = achieved


# ---------------------------------------------------------------------------
# normalization constant
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalizationConstant:
    n: int
    s: float
    value: float
    error: float


def _one_minus_cos_integral(s: float, tol: float) -> tuple[float, float]:
    """I_s = int_0^inf (1 - cos t) t^(-1-2s) dt and an error estimate.

    On [0, 1] the power series of 1 - cos integrates term by term; on
    [1, inf) the algebraic part is exact and the oscillatory part goes to a
    Fourier-weighted quadrature.
    """
    near = 0.0
    for k in range(1, 40):
        term = (-1) ** (k + 1) / (math.factorial(2 * k) * (2 * k - 2 * s))
        near += term
        if abs(term) < 1e-18:
            break
    with warnings.catch_warnings():
        # cycle-level warnings are reflected in the returned error estimate
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        osc, err = integrate.quad(lambda t: t ** (-1.0 - 2.0 * s), 1.0, np.inf,
                                  weight="cos", wvar=1.0, epsabs=tol * 1e-3, limlst=200)
    return near + 1.0 / (2.0 * s) - osc, err


def _angular_factor(n: int, s: float) -> float:
    # int_{S^{n-1}} |theta_1|^{2s} dtheta
    if n == 1:
        return 2.0
    return sphere_area(n - 1) * beta(s + 0.5, 0.5 * (n - 1))


@functools.lru_cache(maxsize=256)
def _normalization_cached(n: int, s: float, tol: float) -> NormalizationConstant:
    I, err = _one_minus_cos_integral(s, tol)
    A = _angular_factor(n, s)
    total = A * I
    rel = err / I
    if rel > tol:
        raise QuadratureError(
            f"normalization integral for n={n}, s={s} reached only {rel:.2e}", achieved=rel)
    return NormalizationConstant(n, s, 1.0 / total, rel / total)


def normalization_constant(n: int, s: float, tol: float = 1e-10) -> NormalizationConstant:
    """The constant c_{n,s} with c * int (1 - cos xi_1)|xi|^(-n-2s) dxi = 1.

    In polar coordinates the integral factorizes into a radial integral
    ``int_0^inf (1 - cos t) t^(-1-2s) dt`` and the angular moment
    ``int_{S^{n-1}} |theta_1|^{2s}``; the former is split at t = 1.

    Parameters
    ----------
    n : int
        Dimension, n >= 1.
    s : float
        Order in (0, 1).
    tol : float
        Relative accuracy requested of the radial integral.

    Raises
    ------
    QuadratureError
        If the oscillatory tail quadrature does not reach ``tol``.
    """
    if n < 1 or not 0 < s < 1 or tol <= 0:
        raise ValueError("need n >= 1, 0 < s < 1, tol > 0")
    return _normalization_cached(int(n), float(s), float(tol))


# ---------------------------------------------------------------------------
# kernel specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    """Kernel ``scale * a(y) * |y|^(-n-2s)``.

    ``profile`` maps points of shape (..., n) to values of ``a``; ``None``
    means ``a = 1`` (a pure power kernel).  ``normalized`` selects
    ``scale = c_{n,s}``; otherwise ``scale = 1``.  ``radial`` declares that
    ``a`` depends on |y| only, which the assembly relies on.
    """

    n: int
    s: float
    lam: float = 1.0
    Lam: float = 1.0
    profile: Optional[Callable] = None
    radial: bool = True
    normalized: bool = True
    name: str = "fractional-laplacian"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be positive")
        if not 0.0 < self.s < 1.0:
            raise ValueError("order s must lie strictly inside (0, 1)")
        if not 0.0 < self.lam <= self.Lam:
            raise ValueError("need 0 < lambda <= Lambda")

    @classmethod
    def fractional_laplacian(cls, n: int, s: float) -> "KernelSpec":
        return cls(n, s)

    @classmethod
    def gagliardo(cls, n: int, s: float) -> "KernelSpec":
        """The bare kernel |y|^(-n-2s) of the H^s seminorm."""
        return cls(n, s, normalized=False, name="gagliardo")

    @property
    def pure(self) -> bool:
        return self.profile is None

    @property
    def scale(self) -> float:
        return normalization_constant(self.n, self.s).value if self.normalized else 1.0

    @property
    def c_ns(self) -> float:
        return normalization_constant(self.n, self.s).value

    def profile_values(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.profile is None:
            return np.ones(y.shape[:-1])
        return np.broadcast_to(np.asarray(self.profile(y), float), y.shape[:-1])

    def radial_profile(self, rho) -> np.ndarray:
        """a(rho * e_1); meaningful for radial kernels."""
        rho = np.asarray(rho, dtype=float)
        if self.profile is None:
            return np.ones_like(rho)
        y = np.zeros(rho.shape + (self.n,))
        y[..., 0] = rho
        return self.profile_values(y)

    def base(self, rho) -> np.ndarray:
        return self.scale * np.asarray(rho, float) ** (-self.n - 2.0 * self.s)

    def evaluate(self, y) -> np.ndarray:
        """K at points of shape (..., n)."""
        y = np.asarray(y, dtype=float)
        rho = np.linalg.norm(y, axis=-1)
        return self.base(rho) * self.profile_values(y)

    __call__ = evaluate

    def radial_values(self, rho) -> np.ndarray:
        return self.base(rho) * self.radial_profile(rho)


def polar_integral(K: KernelSpec, g: Callable, a: float, b: float, tol: float = 1e-11) -> float:
    """int_{a < |y| < b} g(|y|) K(y) dy for n = 1, 2, or radial K in any n."""
    n = K.n
    if K.radial or n == 1:
        if n == 1 and not K.radial:
            def f(r):
                return g(r) * 0.5 * (K.evaluate([[r]])[0] + K.evaluate([[-r]])[0]) * 2.0
        else:
            def f(r):
                return g(r) * sphere_area(n) * K.radial_values(r) * r ** (n - 1)
        val, err = integrate.quad(f, a, b, epsabs=0.0, epsrel=tol, limit=400)
        return val
    if n != 2:
        raise NotImplementedError("non-radial kernels are supported for n <= 2 only")

    def inner(th):
        e = np.array([np.cos(th), np.sin(th)])
        return integrate.quad(lambda r: g(r) * K.evaluate(r * e) * r, a, b,
                              epsabs=0.0, epsrel=tol, limit=400)[0]
    return integrate.quad(inner, 0.0, 2 * np.pi, epsabs=0.0, epsrel=tol, limit=200)[0]


def kernel_tail_mass(K: KernelSpec, R: float) -> float:
    """int_{|y| >= R} K(y) dy."""
    if K.pure:
        return K.scale * sphere_area(K.n) * R ** (-2 * K.s) / (2 * K.s)
    return polar_integral(K, lambda r: 1.0, R, np.inf)


# ---------------------------------------------------------------------------
# second differences and pointwise evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TailModel:
    """Declared far-field behaviour of a closure.

    kind ``compact`` (scale = support radius), ``gaussian``
    (|u(z)| <~ exp(-|z|^2/scale^2)) or ``power`` (|u(z)| <~ |z|^-scale,
    scale > 2s).
    """

    kind: str
    scale: float

    def __post_init__(self):
        if self.kind not in ("compact", "gaussian", "power"):
            raise ValueError(f"unknown tail model {self.kind!r}")
        if self.scale <= 0:
            raise ValueError("tail scale must be positive")


@dataclass(frozen=True)
class DecayingFunction:
    """A vectorized closure ``func(points) -> values`` with a tail model."""

    func: Callable
    tail: TailModel

    def __call__(self, x):
        return self.func(x)


def _as_point(x, n):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (n,):
        raise ValueError(f"expected a point in R^{n}")
    return x


def _eval(u, pts):
    pts = np.asarray(pts, dtype=float)
    return np.asarray(u(pts), dtype=float)


def second_difference(u, x, y) -> float:
    """mu(u, x, y) = 2u(x) - u(x+y) - u(x-y).

    ``u`` is a :class:`~fraclab.grid.GridFunction` (exterior model used
    outside its box) or a vectorized callable on points of shape (..., n).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    pts = np.stack([x, x + y, x - y])
    v = _eval(u, pts)
    return float(2.0 * v[0] - v[1] - v[2])


@dataclass(frozen=True)
class QuadConfig:
    split: float = 1.0
    epsrel: float = 1e-10
    epsabs: float = 1e-13
    n_theta: int = 96
    inner: float = 1e-2


def _far_radius(u, x):
    tail = getattr(u, "tail", None)
    if tail is None:
        return None
    r = float(np.linalg.norm(x))
    if tail.kind == "compact":
        return r + tail.scale
    if tail.kind == "gaussian":
        return r + 6.5 * tail.scale
    return np.inf


def apply_pointwise(K: KernelSpec, u, x, quad: QuadConfig = QuadConfig()) -> float:
    """Evaluate L_K u(x) = 1/2 int mu(u, x, y) K(y) dy.

    The second-difference form removes the principal value; the near field
    |y| < quad.split and the far field are integrated along rays
    (equispaced angles on [0, pi) in 2-d, using the evenness of mu), and
    beyond the radius where the declared tail makes u(x +- y) negligible
    the integrand reduces to 2u(x)K(y), integrated in closed form.

    ``u`` should be a :class:`DecayingFunction`; a bare callable is
    accepted only when its second difference vanishes at large radii.
    """
    n = K.n
    if n > 2:
        raise NotImplementedError("pointwise evaluation is implemented for n <= 2")
    x = _as_point(x, n)
    if n == 1:
        dirs = np.array([[1.0]])
        wdir = np.array([1.0])
    else:
        th = (np.arange(quad.n_theta) + 0.5) * np.pi / quad.n_theta
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
        wdir = np.full(quad.n_theta, np.pi / quad.n_theta)
    ux = float(_eval(u, x[None, :])[0])

    def mu(rho):
        y = rho * dirs
        return 2.0 * ux - _eval(u, x + y) - _eval(u, x - y)

    def integrand(rho):
        y = rho * dirs
        if n == 1:
            k = 0.5 * (K.evaluate(y) + K.evaluate(-y))
        else:
            k = K.evaluate(y) * rho
        return mu(rho) * k

    R_far = _far_radius(u, x)
    if R_far is None:
        probe = np.geomspace(quad.split, 1e6 * max(1.0, quad.split), 40)
        worst = max(np.max(np.abs(mu(r))) for r in probe)
        if worst > 1e-12 * (1.0 + abs(ux)):
            raise ValueError("no tail model declared and the far field does not vanish")
        R_far = quad.split

    def vint(a, b):
        if b <= a:
            return np.zeros(len(dirs)), 0.0
        return integrate.quad_vec(integrand, a, b, epsabs=quad.epsabs,
                                  epsrel=quad.epsrel, limit=4000)

    split = min(quad.split, R_far)
    # Innermost disc: mu = alpha rho^2 + beta rho^4 + O(rho^6), fitted from
    # two radii; integrating it against K avoids the cancellation in mu.
    r0 = quad.inner * split
    m1, m2 = mu(r0), mu(0.5 * r0)
    alpha = (16.0 * m2 - m1) / (3.0 * r0**2)
    beta_ = (m1 - 4.0 * m2) * 4.0 / (3.0 * r0**4)
    if n == 1:
        a_dir = 0.5 * (K.evaluate(r0 * dirs) + K.evaluate(-r0 * dirs)) * r0 ** (n + 2 * K.s)
    else:
        a_dir = K.evaluate(r0 * dirs) * r0 ** (n + 2 * K.s)
    two_s = 2.0 * K.s
    inner = a_dir * (alpha * r0 ** (2 - two_s) / (2 - two_s) + beta_ * r0 ** (4 - two_s) / (4 - two_s))
    # rho = t^k with k = 1/(1-s) turns the rho^(1-2s) behaviour at the
    # origin into a linear one
    k = 1.0 / (1.0 - K.s)
    near, e1 = integrate.quad_vec(lambda t: integrand(t**k) * k * t ** (k - 1.0),
                                  r0 ** (1.0 / k), split ** (1.0 / k), epsabs=quad.epsabs,
                                  epsrel=quad.epsrel, limit=4000)
    near = near + inner
    far, e2 = vint(split, R_far)
    total = float(np.dot(wdir, near + far))
    if np.isfinite(R_far):
        total += ux * kernel_tail_mass(K, R_far)
    achieved = float(np.dot(wdir, np.ones(len(dirs)))) * (e1 + e2)
    if achieved > max(1e-7 * abs(total), 1e-10):
        raise QuadratureError("pointwise quadrature did not converge", achieved=achieved)
    return total


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

def kernel_bounds_check(K: KernelSpec, samples, tol: float = 1e-12) -> InequalityReport:
    """Check c*lam*|y|^(-n-2s) <= K(y) <= c*Lam*|y|^(-n-2s) and K(y) = K(-y)."""
    y = np.asarray(samples, dtype=float).reshape(-1, K.n)
    rho = np.linalg.norm(y, axis=1)
    if np.any(rho == 0):
        raise ValueError("samples must avoid the origin")
    base = K.base(rho)
    kp = K.evaluate(y)
    km = K.evaluate(-y)
    a_eff = kp / base
    lower = a_eff / K.lam
    upper = a_eff / K.Lam
    asym = np.abs(kp - km) / np.maximum(np.abs(kp), 1e-300)
    bad = (lower < 1 - tol) | (upper > 1 + tol) | (asym > tol)
    offending = np.flatnonzero(bad)
    return InequalityReport(
        name="kernel-bounds",
        lhs=float(upper.max()),
        rhs=1.0,
        passed=not bad.any(),
        tolerance=tol,
        constants={"lambda": K.lam, "Lambda": K.Lam, "c_ns": K.c_ns},
        samples=len(y),
        details={
            "min_lower_ratio": float(lower.min()),
            "max_upper_ratio": float(upper.max()),
            "max_asymmetry": float(asym.max()),
            "offending_indices": offending[:20].tolist(),
            "offending_points": y[offending[:20]].tolist(),
        },
    )


def tail_mass_bound_check(K: KernelSpec, rho: float, h: float, tol: float = 1e-9) -> InequalityReport:
    """rho^-2 int_{|y|<rho} |y|^2 K + int_{|y|>=rho} K <= Theta rho^(-2s), Theta = omega_n Lam / s."""
    if not 0 < rho < h:
        raise ValueError("need 0 < rho < h")
    n, s = K.n, K.s
    omega = sphere_area(n)
    if K.pure:
        near = K.scale * omega * rho ** (2 - 2 * s) / (2 - 2 * s)
        far = K.scale * omega * rho ** (-2 * s) / (2 * s)
    else:
        near = polar_integral(K, lambda r: r * r, 0.0, rho)
        far = kernel_tail_mass(K, rho)
    lhs = near / rho**2 + far
    theta = omega * K.Lam / s
    rhs = theta * rho ** (-2 * s)
    return InequalityReport(
        name="tail-mass-bound",
        lhs=float(lhs),
        rhs=float(rhs),
        passed=bool(lhs <= rhs * (1 + tol)),
        tolerance=tol,
        constants={"Theta": theta, "omega_n": omega},
        samples=1,
        details={"near_moment": float(near / rho**2), "tail_mass": float(far), "rho": rho},
    )
