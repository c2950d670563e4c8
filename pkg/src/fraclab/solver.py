"""Cell discretization of L_K on a box, Dirichlet solves and energies.

The discrete operator acts on piecewise-constant cell values U as

    (L_h U)_i = sum_{k != 0} W_k (U_i - U_{i+k}),

a symmetric Toeplitz operator with nonnegative weights.  For offsets with
|k|_inf >= 2 the weight is the exact P0 Galerkin entry divided by the
cell measure,

    W_k = h^-n int K(kh + z) Lambda(z) dz,   Lambda(z) = prod_d (h - |z_d|)_+,

(Lambda is the autocorrelation of a cell).  Touching offsets are
treated in one of two ways:

``galerkin``
    the same formula, integrated in polar coordinates around the kernel
    singularity.  The integrals only exist for s < 1/2.
``taylor``
    the kernel mass near the origin is turned into a second-difference
    stencil on the axis neighbours, W_{+-e_d} = J / (2h^2) with
    J = int y_1^2 K(y) chi(y) dy, where chi is the partition-of-unity
    sum of the touching tents.  Consistent to O(h^(2-2s)).

``auto`` picks ``galerkin`` for s < 1/2 and ``taylor`` otherwise.  The
diagonal is the full weight sum d = sum_k W_k, so constants are
reproduced exactly; the mass beyond the tabulated window is added in
closed form (pure power kernels) or by radial quadrature.

Weak-form problems carry the factor 2 of the bilinear form,
<u, phi>_K = 2 <L_K u, phi>; resolvent-form problems (used for
fundamental solutions and S_V) solve L_K u + V u = f.
"""

from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.signal import fftconvolve

from .geometry import cell_centers
from .grid import Exterior, ExteriorError, GridFunction
from .kernel import KernelSpec, QuadratureError
from .weights import Weight

# ---------------------------------------------------------------------------
# offset weights
# ---------------------------------------------------------------------------

_TIERS = ((3, 12), (8, 6), (24, 4), (80, 3), (10**9, 2))


def _tent_rule(order: int):
    """Nodes/weights on [-1, 1] for int (1 - |t|) f(t) dt, split at 0."""
    x, w = leggauss(order)
    t = 0.5 * (x + 1.0)          # nodes on [0, 1]
    wt = 0.5 * w * (1.0 - t)
    return np.concatenate([-t[::-1], t]), np.concatenate([wt[::-1], wt])


def _canonical_offsets(n: int, M: int) -> np.ndarray:
    if n == 1:
        return np.arange(M + 1)[:, None]
    k1, k2 = np.meshgrid(np.arange(M + 1), np.arange(M + 1), indexing="ij")
    keep = k1 >= k2
    return np.stack([k1[keep], k2[keep]], axis=1)


def _far_weights(K: KernelSpec, h: float, ks: np.ndarray) -> np.ndarray:
    """W_k for offsets with |k|_inf >= 2 by tensor tent-weighted Gauss rules."""
    n = K.n
    out = np.zeros(len(ks))
    kinf = np.abs(ks).max(axis=1)
    lo = 2
    for hi, order in _TIERS:
        sel = np.flatnonzero((kinf >= lo) & (kinf <= hi))
        lo = hi + 1
        if sel.size == 0:
            continue
        t, w = _tent_rule(order)
        grids = np.meshgrid(*([t] * n), indexing="ij")
        z = np.stack([g.ravel() for g in grids], axis=1) * h
        wz = functools.reduce(np.multiply.outer, [w] * n).ravel() * h**n
        chunk = max(1, 4_000_000 // len(z))
        for a in range(0, sel.size, chunk):
            idx = sel[a:a + chunk]
            y = ks[idx][:, None, :] * h + z[None, :, :]
            out[idx] = K.evaluate(y) @ wz / h**n
    return out


def _quad(f, a, b, what, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            return integrate.quad(f, a, b, limit=200, epsabs=0.0, epsrel=1e-12, **kw)[0]
        except integrate.IntegrationWarning as exc:
            raise QuadratureError(f"quadrature failed for {what}: {exc}") from None


def _kreg(K: KernelSpec, r) -> float:
    """K(r) r^(n+2s): the kernel with its power singularity removed."""
    return K.scale * float(K.radial_profile(r))


def _alg(K, g, b, expo, what):
    """int_0^b g(r) r^expo dr with the algebraic endpoint weight."""
    return _quad(g, 0.0, b, what, weight="alg", wvar=(expo, 0.0))


def _taylor_moment(K: KernelSpec, h: float) -> float:
    """J = int y_1^2 K(y) chi(y) dy with chi the sum of the touching tents."""
    e = 1.0 - 2.0 * K.s
    what = "near-field moment"

    def chi(t):
        return min(max((2 * h - abs(t)) / h, 0.0), 1.0)

    if K.n == 1:
        a = _alg(K, lambda y: _kreg(K, y), h, e, what)
        b = _quad(lambda y: y * y * float(K.radial_values(y)) * chi(y), h, 2 * h, what)
        return 2.0 * (a + b)

    def inner(th):
        c, s = np.cos(th), np.sin(th)
        b1, b2 = h / c, 2 * h / c
        out = _alg(K, lambda r: _kreg(K, r), b1, e, what)
        pts = [h / s] if s > 0 and b1 < h / s < b2 else None
        out += _quad(lambda r: r**3 * float(K.radial_values(r)) * chi(r * c) * chi(r * s),
                     b1, b2, what, points=pts)
        return out
    return 4.0 * _quad(inner, 0.0, np.pi / 4, what, points=[np.arctan(0.5)])


def _touching_galerkin(K: KernelSpec, h: float, k) -> float:
    """Exact W_k for a touching offset (s < 1/2), polar around the origin."""
    e = -2.0 * K.s
    what = f"touching pair at offset {tuple(int(v) for v in k)}"
    Kr = lambda r: float(K.radial_values(r))
    if K.n == 1:
        a = _alg(K, lambda y: _kreg(K, y), h, e, what)
        b = _quad(lambda y: Kr(y) * (2 * h - y), h, 2 * h, what)
        return (a + b) / h
    k = tuple(sorted(int(abs(v)) for v in k))
    if k == (0, 1):
        def ray(th):
            c, s = np.cos(th), np.sin(th)
            exit_ = min(2 * h / c, h / s if s > 0 else np.inf)
            b1 = min(h / c, exit_)
            out = _alg(K, lambda r: _kreg(K, r) * c * (h - r * s), b1, e, what)
            if exit_ > b1:
                out += _quad(lambda r: Kr(r) * r * (2 * h - r * c) * (h - r * s), b1, exit_, what)
            return out
        val = 2.0 * _quad(ray, 0.0, np.pi / 2, what, points=[np.arctan(0.5), np.pi / 4])
        return val / h**2
    if k == (1, 1):
        def lam(y1, y2):
            return max(h - abs(y1 - h), 0.0) * max(h - abs(y2 - h), 0.0)

        def ray(th):
            c, s = np.cos(th), np.sin(th)
            exit_ = 2 * h / c
            b1 = h / c
            out = _alg(K, lambda r: _kreg(K, r) * c * s, min(b1, h / s) if s > 0 else b1,
                       1.0 + e, what)
            edges = sorted({p for p in (b1, h / s if s > 0 else np.inf) if p < exit_}) + [exit_]
            for a, b in zip(edges[:-1], edges[1:]):
                out += _quad(lambda r: Kr(r) * r * lam(r * c, r * s), a, b, what)
            return out
        val = 2.0 * _quad(ray, 0.0, np.pi / 4, what)
        return val / h**2
    raise ValueError(f"offset {k} is not touching")


def self_interaction(K: KernelSpec, h: float) -> float:
    """D = int K(y) (h^n - Lambda(y)) dy = int_C int_{C^c} K, finite for s < 1/2.

    Independent of the weight table; used to cross-check sum_k W_k h^n.
    """
    if K.s >= 0.5:
        return np.inf
    e = -2.0 * K.s
    Kr = lambda r: float(K.radial_values(r))
    if K.n == 1:
        a = _alg(K, lambda y: _kreg(K, y), h, e, "self pair")
        tail = _quad(lambda y: Kr(y) * h, h, np.inf, "self pair")
        return 2.0 * (a + tail)

    def ray(th):
        c, s = np.cos(th), np.sin(th)
        b1 = h / c
        out = _alg(K, lambda r: _kreg(K, r) * (h * (c + s) - r * c * s), b1, e, "self pair")
        out += _quad(lambda r: Kr(r) * r * h * h, b1, np.inf, "self pair")
        return out
    return 8.0 * _quad(ray, 0.0, np.pi / 4, "self pair")


def _window_tail(K: KernelSpec, h: float, M: int) -> float:
    """int K(y) (1 - prod_d chi_M(y_d)) dy, the mass not covered by |k|_inf <= M."""
    a, b = M * h, (M + 1) * h

    def chi(t):
        return np.clip((b - abs(t)) / h, 0.0, 1.0)

    def outer(r0):
        if K.pure:
            return K.scale * r0 ** (-2 * K.s) / (2 * K.s)
        return _quad(lambda r: K.radial_values(r) * r ** (K.n - 1), r0, np.inf, "window tail")

    if K.n == 1:
        band = _quad(lambda r: K.radial_values(r) * (1 - chi(r)), a, b, "window tail")
        return 2.0 * (band + outer(b))

    def ray(th):
        c, s = np.cos(th), np.sin(th)
        r1, r2 = a / c, b / c
        band = _quad(lambda r: K.radial_values(r) * r * (1 - chi(r * c) * chi(r * s)),
                     r1, r2, "window tail")
        return band + outer(r2)
    return 8.0 * _quad(ray, 0.0, np.pi / 4, "window tail")


@dataclass
class WeightTable:
    """Offset weights W on the window |k|_inf <= M (centre entry zero) and d = sum W."""

    W: np.ndarray
    d: float
    M: int
    h: float
    near_field: str
    tail: float

    def window(self, m: int) -> np.ndarray:
        if m > self.M:
            raise ValueError("window larger than the table")
        c = self.M
        sl = tuple(slice(c - m, c + m + 1) for _ in range(self.W.ndim))
        return self.W[sl]


def resolve_near_field(K: KernelSpec, near_field: str) -> str:
    if near_field == "auto":
        return "galerkin" if K.s < 0.5 else "taylor"
    if near_field == "galerkin" and K.s >= 0.5:
        raise ValueError("touching-cell Galerkin integrals diverge for s >= 1/2; use 'taylor'")
    if near_field not in ("galerkin", "taylor"):
        raise ValueError(f"unknown near-field mode {near_field!r}")
    return near_field


def _build_table(K: KernelSpec, h: float, M: int, mode: str) -> WeightTable:
    n = K.n
    if n > 2:
        raise NotImplementedError("the cell discretization is implemented for n <= 2")
    if not K.radial:
        raise NotImplementedError("assembly requires a radial kernel profile")
    ks = _canonical_offsets(n, M)
    vals = _far_weights(K, h, ks)
    kinf = ks.max(axis=1)
    touching = np.flatnonzero(kinf == 1)
    if mode == "galerkin":
        for i in touching:
            vals[i] = _touching_galerkin(K, h, ks[i])
    else:
        J = _taylor_moment(K, h)
        for i in touching:
            vals[i] = J / (2 * h * h) if ks[i].sum() == 1 else 0.0
    vals[kinf == 0] = 0.0
    # scatter canonical values to the full symmetric window
    W = np.zeros((2 * M + 1,) * n)
    if n == 1:
        W[M + ks[:, 0]] = vals
        W[M - ks[:, 0]] = vals
    else:
        a, b = ks[:, 0], ks[:, 1]
        for sa in (1, -1):
            for sb in (1, -1):
                W[M + sa * a, M + sb * b] = vals
                W[M + sb * b, M + sa * a] = vals
    tail = _window_tail(K, h, M)
    # fixed summation order: sort before adding
    d = float(np.sum(np.sort(W.ravel()))) + tail
    return WeightTable(W, d, M, h, mode, tail)


_TABLE_CACHE: dict = {}


def weight_table(K: KernelSpec, h: float, M: int, near_field: str = "auto") -> WeightTable:
    """Offset weights for spacing h on the window |k|_inf <= M.

    Pure power kernels are homogeneous, W_k(h) = h^(-2s) W_k(1), so a
    single unit-spacing table is cached and rescaled.
    """
    mode = resolve_near_field(K, near_field)
    if K.pure:
        key = (K.n, K.s, K.normalized, mode)
        tab = _TABLE_CACHE.get(key)
        if tab is None or tab.M < M:
            tab = _build_table(K, 1.0, M, mode)
            _TABLE_CACHE[key] = tab
        f = h ** (-2 * K.s)
        if tab.M == M:
            W = tab.W * f
            tail = tab.tail
        else:
            W = tab.window(M) * f
            tail = _window_tail(K, 1.0, M)
        d = float(np.sum(np.sort(W.ravel()))) + tail * f
        return WeightTable(W, d, M, h, mode, tail * f)
    return _build_table(K, h, M, mode)


def _conv(U: np.ndarray, W: np.ndarray) -> np.ndarray:
    """(W * U)_i = sum_j W_{i-j} U_j on the index box of U (W centred, odd size)."""
    out = fftconvolve(U, W, mode="same")
    return out


# ---------------------------------------------------------------------------
# Dirichlet problem
# ---------------------------------------------------------------------------

def cell_averages(V: Optional[Weight], n: int, N: int, L: float, order: int = 4) -> np.ndarray:
    """h^-n int_{C_i} V for every cell, by a tensor Gauss rule (exact for sampled grids)."""
    if V is None:
        return np.zeros((N,) * n)
    if V.family[0] == "const":
        return np.full((N,) * n, V.family[1])
    if V.grid is not None and V.grid.N == N and V.grid.L == L:
        return V.grid.values.copy()
    h = 2 * L / N
    x, w = leggauss(order)
    grids = np.meshgrid(*([0.5 * h * x] * n), indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=1)
    wz = functools.reduce(np.multiply.outer, [0.5 * w] * n).ravel()
    c = cell_centers(n, N, L).reshape(-1, n)
    vals = np.zeros(len(c))
    chunk = max(1, 2_000_000 // len(z))
    for a in range(0, len(c), chunk):
        pts = c[a:a + chunk, None, :] + z[None, :, :]
        vals[a:a + chunk] = V(pts) @ wz
    return vals.reshape((N,) * n)


@dataclass
class DirichletProblem:
    """Exterior-value problem for L_K (+ V) on a cell mask inside [-L, L]^n.

    ``form='weak'`` solves <u, phi>_K + <V u, phi> = <f, phi>, i.e.
    2 L_K u + V u = f; ``form='resolvent'`` solves L_K u + V u = f.
    """

    kernel: KernelSpec
    omega: np.ndarray
    L: float
    exterior: Exterior = field(default_factory=Exterior.zero)
    potential: Optional[Weight] = None
    form: str = "weak"
    near_field: str = "auto"
    ext_factor: int = 4

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=bool)
        if self.omega.ndim != self.kernel.n or len(set(self.omega.shape)) != 1:
            raise ValueError("omega must be a cube mask of the kernel's dimension")
        if not self.omega.any():
            raise ValueError("omega is empty")
        if self.form not in ("weak", "resolvent"):
            raise ValueError("form must be 'weak' or 'resolvent'")
        if self.exterior.kind == "undeclared":
            raise ExteriorError("Dirichlet problems need declared exterior data")
        self.near_field = resolve_near_field(self.kernel, self.near_field)
        self._cache = {}

    # ---- geometry -------------------------------------------------------
    @property
    def n(self) -> int:
        return self.kernel.n

    @property
    def N(self) -> int:
        return self.omega.shape[0]

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def kappa(self) -> float:
        return 2.0 if self.form == "weak" else 1.0

    @property
    def needs_extension(self) -> bool:
        return self.exterior.kind in ("closure", "sampled")

    @property
    def N_ext(self) -> int:
        return self.N * self.ext_factor if self.needs_extension else self.N

    def with_potential(self, V: Optional[Weight]) -> "DirichletProblem":
        P = DirichletProblem(self.kernel, self.omega, self.L, self.exterior, V, self.form,
                             self.near_field, self.ext_factor)
        P._cache = {k: v for k, v in self._cache.items() if k in ("table", "S_box")}
        return P

    def with_exterior(self, ext: Exterior) -> "DirichletProblem":
        return DirichletProblem(self.kernel, self.omega, self.L, ext, self.potential, self.form,
                                self.near_field, self.ext_factor)

    # ---- assembled pieces -------------------------------------------------
    @property
    def table(self) -> WeightTable:
        if "table" not in self._cache:
            self._cache["table"] = weight_table(self.kernel, self.h, self.N_ext - 1, self.near_field)
        return self._cache["table"]

    @property
    def W_box(self) -> np.ndarray:
        return self.table.window(self.N - 1)

    @property
    def vbar(self) -> np.ndarray:
        if "vbar" not in self._cache:
            self._cache["vbar"] = cell_averages(self.potential, self.n, self.N, self.L)
        return self._cache["vbar"]

    @property
    def index(self) -> np.ndarray:
        return np.flatnonzero(self.omega.ravel())

    def _embed(self, u_omega) -> np.ndarray:
        U = np.zeros(self.omega.size)
        U[self.index] = u_omega
        return U.reshape(self.omega.shape)

    def exterior_grid(self) -> GridFunction:
        """Exterior data on the (extended) box, zero on Omega cells."""
        Ne, Le = self.N_ext, self.L * self.N_ext / self.N
        c = cell_centers(self.n, Ne, Le).reshape(-1, self.n)
        base = GridFunction(np.zeros((1,) * self.n), Le, self.exterior)
        vals = base.exterior_values(c).reshape((Ne,) * self.n)
        vals[self._omega_in_ext()] = 0.0
        return GridFunction(vals, Le, self.exterior)

    def _omega_in_ext(self) -> np.ndarray:
        Ne = self.N_ext
        off = (Ne - self.N) // 2
        m = np.zeros((Ne,) * self.n, dtype=bool)
        m[tuple(slice(off, off + self.N) for _ in range(self.n))] = self.omega
        return m

    def _inner_slice(self):
        off = (self.N_ext - self.N) // 2
        return tuple(slice(off, off + self.N) for _ in range(self.n))

    @property
    def S_omega(self) -> np.ndarray:
        """sum_{j in Omega, j != i} W_{j-i} for every box cell i."""
        if "S_omega" not in self._cache:
            self._cache["S_omega"] = _conv(self.omega.astype(float), self.W_box)
        return self._cache["S_omega"]

    @property
    def couplings(self) -> np.ndarray:
        """c_i = sum_{j not in Omega} W_{j-i} g_j (strong units), on the box."""
        if "coupling" in self._cache:
            return self._cache["coupling"]
        ext = self.exterior
        d = self.table.d
        if ext.kind == "zero":
            c = np.zeros(self.omega.shape)
        elif ext.kind == "constant":
            c = ext.value * (d - self.S_omega)
        else:
            G = self.exterior_grid().values
            W = self.table.W
            near = _conv(G, W)[self._inner_slice()]
            box = _conv(np.ones_like(G), W)[self._inner_slice()]
            c = near + ext.far_value * (d - box)
        self._cache["coupling"] = c
        return c

    def diagonal(self) -> np.ndarray:
        """Diagonal of the strong-form system on Omega cells."""
        return (self.kappa * self.table.d + self.vbar.ravel())[self.index]

    def apply(self, u_omega: np.ndarray) -> np.ndarray:
        """Strong-form system matrix times u (Omega unknowns only)."""
        U = self._embed(u_omega)
        conv = _conv(U, self.W_box).ravel()[self.index]
        return self.kappa * (self.table.d * u_omega - conv) + self.vbar.ravel()[self.index] * u_omega

    def rhs(self, f=None) -> np.ndarray:
        b = self.kappa * self.couplings.ravel()[self.index]
        if f is not None:
            b = b + source_values(f, self.n, self.N, self.L).ravel()[self.index]
        return b

    def stiffness_matrix(self) -> np.ndarray:
        """Galerkin stiffness A on Omega (dense): a_ij = kappa h^n (d delta_ij - W_{j-i})."""
        idx = np.argwhere(self.omega)
        M = self.table.M
        diff = idx[None, :, :] - idx[:, None, :]
        W = self.table.W[tuple((diff + M).transpose(2, 0, 1))]
        A = -W
        np.fill_diagonal(A, self.table.d)
        return self.kappa * self.h**self.n * A

    def mass_matrix(self) -> np.ndarray:
        return np.diag(self.h**self.n * self.vbar.ravel()[self.index])

    def operator_strong(self, u: GridFunction) -> np.ndarray:
        """(L_h u)_i on Omega cells for a grid function on the same box.

        The exterior of ``u`` must be zero or constant.
        """
        if u.N != self.N or u.n != self.n:
            raise ValueError("grid mismatch")
        ext = u.exterior
        if ext.kind not in ("zero", "constant"):
            raise ValueError("operator_strong supports zero or constant exteriors")
        conv = _conv(u.values, self.W_box)
        box_sum = _conv(np.ones_like(u.values), self.W_box)
        out = self.table.d * u.values - conv - ext.far_value * (self.table.d - box_sum)
        return out.ravel()[self.index]

    def full_solution(self, u_omega: np.ndarray) -> GridFunction:
        flat = self.exterior_grid().values[self._inner_slice()].ravel().copy()
        flat[self.index] = u_omega
        return GridFunction(flat.reshape(self.omega.shape), self.L, self.exterior)


def source_values(f, n: int, N: int, L: float) -> np.ndarray:
    if f is None:
        return np.zeros((N,) * n)
    if isinstance(f, GridFunction):
        if f.N != N or f.n != n or f.L != L:
            raise ValueError("source grid does not match the problem grid")
        return f.values
    if callable(f):
        return np.asarray(f(cell_centers(n, N, L)), dtype=float)
    return np.broadcast_to(np.asarray(f, float), (N,) * n)


def assemble(K: KernelSpec, omega, L: float = 1.0, *, exterior: Exterior = None,
             potential: Optional[Weight] = None, form: str = "weak",
             near_field: str = "auto", ext_factor: int = 4) -> DirichletProblem:
    """Set up the discrete problem for K on the cell mask ``omega`` of [-L, L]^n.

    The cell width is h = 2L / omega.shape[0].  Weights are computed
    eagerly so that quadrature failures surface here.
    """
    P = DirichletProblem(K, omega, L, exterior or Exterior.zero(), potential, form,
                         near_field, ext_factor)
    _ = P.table
    return P


# ---------------------------------------------------------------------------
# linear solve
# ---------------------------------------------------------------------------

class SolverError(RuntimeError):
    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


def pcg(apply: Callable, b: np.ndarray, diag: np.ndarray, tol: float = 1e-10,
        maxiter: Optional[int] = None, x0: Optional[np.ndarray] = None):
    """Jacobi-preconditioned conjugate gradients; stops at ||r|| <= tol ||b||."""
    nb = float(np.linalg.norm(b))
    history = []
    x = np.zeros_like(b) if x0 is None else x0.copy()
    if nb == 0.0:
        return np.zeros_like(b), 0, [0.0]
    maxiter = maxiter or max(200, 20 * int(np.sqrt(b.size)) + 200)
    r = b - apply(x)
    z = r / diag
    p = z.copy()
    rz = float(r @ z)
    history.append(float(np.linalg.norm(r)) / nb)
    for it in range(1, maxiter + 1):
        if history[-1] <= tol:
            return x, it - 1, history
        Ap = apply(p)
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if it % 50 == 0:
            r = b - apply(x)    # guard against drift
        z = r / diag
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        history.append(float(np.linalg.norm(r)) / nb)
    if history[-1] <= tol:
        return x, maxiter, history
    raise SolverError(f"CG did not converge: residual {history[-1]:.3e} after {maxiter} steps",
                      history)


@dataclass
class SolveResult:
    solution: GridFunction
    residual: float
    energy: float
    iterations: int
    history: list
    tol: float


def solve_dirichlet(P: DirichletProblem, f=None, tol: float = 1e-10,
                    maxiter: Optional[int] = None) -> SolveResult:
    """Solve the discrete exterior-value problem; u = g outside Omega."""
    b = P.rhs(f)
    x, its, hist = pcg(P.apply, b, P.diagonal(), tol=tol, maxiter=maxiter)
    nb = float(np.linalg.norm(b))
    res = float(np.linalg.norm(b - P.apply(x))) / nb if nb > 0 else 0.0
    u = P.full_solution(x)
    return SolveResult(u, res, energy_V(u, P, f), its, hist, tol)


# ---------------------------------------------------------------------------
# energies and classification
# ---------------------------------------------------------------------------

def _check_match(u: GridFunction, P: DirichletProblem):
    if u.N != P.N or u.n != P.n or not np.isclose(u.L, P.L):
        raise ValueError("grid function does not match the problem grid")
    if u.exterior.kind == "undeclared":
        raise ExteriorError("energy needs a declared exterior")


def energy(u: GridFunction, P: DirichletProblem) -> float:
    """Restricted energy over R^2n minus (Omega^c x Omega^c):

    h^n [ sum_{i,j in Omega} + 2 sum_{i in Omega, j notin Omega} ] (U_i - U_j)^2 W_{j-i},

    exterior values taken from the problem's exterior data.
    """
    _check_match(u, P)
    om = P.omega.astype(float)
    U = u.values * om
    W = P.W_box
    d = P.table.d
    # Omega x Omega block
    S = P.S_omega
    inner = np.sum(om * (U * U * S - 2 * U * _conv(U, W) + _conv(U * U, W)))
    ext = P.exterior
    if ext.kind in ("zero", "constant"):
        g = ext.far_value
        cross = np.sum(om * (U - g) ** 2 * (d - S))
    else:
        G = P.exterior_grid().values
        We = P.table.W
        sl = P._inner_slice()
        ones = np.ones_like(G)
        c1 = _conv(G, We)[sl]
        c2 = _conv(G * G, We)[sl]
        m0 = _conv((~P._omega_in_ext()).astype(float), We)[sl]
        box = _conv(ones, We)[sl]
        far = ext.far_value
        cross = np.sum(om * (U * U * m0 - 2 * U * c1 + c2 + (U - far) ** 2 * (d - box)))
    return float(P.h**P.n * (inner + 2.0 * cross))


def energy_V(u: GridFunction, P: DirichletProblem, f=None) -> float:
    """(kappa/2) * energy + h^n sum_Omega V u^2 - 2 h^n sum_Omega f u.

    For weak-form problems with f = 0 this is E(u) + ||u||^2_{L^2_V(Omega)},
    whose minimizer over X_g is the discrete weak solution.
    """
    E = 0.5 * P.kappa * energy(u, P)
    om = P.omega
    hn = P.h**P.n
    E += hn * float(np.sum((P.vbar * u.values**2)[om]))
    if f is not None:
        E -= 2.0 * hn * float(np.sum((source_values(f, P.n, P.N, P.L) * u.values)[om]))
    return E


def residual(P: DirichletProblem, u: GridFunction, f=None) -> np.ndarray:
    """Strong-form residual per Omega cell: (system) u - couplings - f."""
    _check_match(u, P)
    return P.apply(u.values.ravel()[P.index]) - P.rhs(f)


def classify_solution(P: DirichletProblem, u: GridFunction, tol: Optional[float] = None,
                      f=None) -> str:
    """Sub/super-solution test against every interior basis function.

    ``tol`` is absolute in strong-form units; the default is 10x the
    default solver tolerance times the right-hand-side norm.
    """
    r = residual(P, u, f)
    if tol is None:
        tol = 10 * 1e-10 * max(float(np.linalg.norm(P.rhs(f))), float(np.linalg.norm(
            P.apply(u.values.ravel()[P.index]))), 1e-300)
    sub = bool(np.all(r <= tol))
    sup = bool(np.all(r >= -tol))
    if sub and sup:
        return "solution"
    if sub:
        return "subsolution"
    if sup:
        return "supersolution"
    return "neither"


def identity_check_lemma56(alpha: float, beta: float, a: float, b: float):
    """Both sides of (beta - alpha)(b^2 beta - a^2 alpha) = (b beta - a alpha)^2 - alpha beta (b - a)^2."""
    if a < 0 or b < 0:
        raise ValueError("a and b must be nonnegative")
    lhs = (beta - alpha) * (b * b * beta - a * a * alpha)
    rhs = (b * beta - a * alpha) ** 2 - alpha * beta * (b - a) ** 2
    return lhs, rhs


# ---------------------------------------------------------------------------
# Sobolev-type quantities on grids
# ---------------------------------------------------------------------------

def gagliardo_seminorm_sq(u: GridFunction, s: float, near_field: str = "auto") -> float:
    """int int |u(x) - u(y)|^2 |x - y|^(-n-2s) dx dy for a compactly supported grid function.

    Uses the offset weights of the bare kernel: the double integral equals
    h^n sum_{i,j} (u_i - u_j)^2 W_{j-i} = 2 h^n u^T L_h u.
    """
    if u.exterior.kind != "zero":
        raise ValueError("the seminorm helper expects zero exterior")
    K = KernelSpec.gagliardo(u.n, s)
    tab = weight_table(K, u.h, u.N - 1, near_field)
    U = u.values
    Lu = tab.d * U - _conv(U, tab.W)
    return float(2.0 * u.h**u.n * np.sum(U * Lu))


def x_norms(P: DirichletProblem, v: GridFunction):
    """(||v||_{L^2(Omega)}, ||v||_{X_0}, ||v||_X) for v vanishing outside Omega.

    The X_0 seminorm uses the problem kernel over R^2n; for such v it
    coincides with the restricted seminorm, so ||v||_X = ||v||_{L^2} + ||v||_{X_0}.
    """
    if np.any(v.values[~P.omega] != 0) or v.exterior.kind != "zero":
        raise ValueError("v must vanish outside Omega")
    U = v.values
    Lu = P.table.d * U - _conv(U, P.W_box)
    semi = float(np.sqrt(max(2.0 * v.h**v.n * np.sum(U * Lu), 0.0)))
    l2 = float(np.sqrt(v.h**v.n * np.sum(U * U)))
    return l2, semi, l2 + semi


# ---------------------------------------------------------------------------
# nonlocal tail
# ---------------------------------------------------------------------------

def _ray_tail_grid(f: GridFunction, x0: np.ndarray, r: float, s: float, n_rays: int) -> float:
    """int_{|y-x0|>=r} |f(y)| |y-x0|^(-n-2s) dy for n = 2, exact along each ray."""
    L, N, h = f.L, f.N, f.h
    th = (np.arange(n_rays) + 0.5) * (2 * np.pi / n_rays)
    dx, dy = np.cos(th), np.sin(th)
    lines = -L + h * np.arange(N + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = (lines[None, :] - x0[0]) / dx[:, None]
        ty = (lines[None, :] - x0[1]) / dy[:, None]
    # exit parameter of the box along each ray
    ex = np.where(dx > 0, (L - x0[0]) / dx, np.where(dx < 0, (-L - x0[0]) / dx, np.inf))
    ey = np.where(dy > 0, (L - x0[1]) / dy, np.where(dy < 0, (-L - x0[1]) / dy, np.inf))
    rho_exit = np.minimum(ex, ey)
    t = np.concatenate([tx, ty, np.full((n_rays, 1), r), rho_exit[:, None]], axis=1)
    t = np.where(np.isfinite(t) & (t >= r), t, np.nan)
    t = np.minimum(t, rho_exit[:, None])
    t = np.sort(t, axis=1)
    a, b = t[:, :-1], t[:, 1:]
    ok = np.isfinite(a) & np.isfinite(b) & (b > a)
    mid = 0.5 * (np.where(ok, a, 0) + np.where(ok, b, 0))
    px = x0[0] + mid * dx[:, None]
    py = x0[1] + mid * dy[:, None]
    ix = np.clip(np.floor((px + L) / h).astype(int), 0, N - 1)
    iy = np.clip(np.floor((py + L) / h).astype(int), 0, N - 1)
    vals = np.abs(f.values[ix, iy])
    e = -2 * s
    with np.errstate(invalid="ignore", divide="ignore"):
        seg = np.where(ok, (a ** e - b ** e) / (2 * s), 0.0)
    inner = np.sum(vals * seg, axis=1)
    # beyond the box along each ray
    start = np.maximum(rho_exit, r)
    ext = f.exterior
    if ext.kind == "zero":
        outer = np.zeros(n_rays)
    elif ext.kind == "constant":
        outer = abs(ext.value) * start ** e / (2 * s)
    elif ext.kind in ("closure", "sampled"):
        outer = np.empty(n_rays)
        for k in range(n_rays):
            d = np.array([dx[k], dy[k]])
            g = lambda rho: abs(float(f.exterior_values((x0 + rho * d)[None, :])[0])) \
                * rho ** (-1 - 2 * s)
            outer[k] = integrate.quad(g, start[k], np.inf, limit=200)[0]
    else:
        raise ExteriorError("tail needs an exterior model")
    return float(np.sum(inner + outer) * (2 * np.pi / n_rays))


def nonlocal_tail(f, x0, r: float, s: float, n: Optional[int] = None,
                  n_rays: int = 4096) -> float:
    """T(f; x0, r) = r^(2s) int_{|y-x0| >= r} |f(y)| |y-x0|^(-n-2s) dy.

    ``f`` is a GridFunction (exact along rays from x0 for n = 2, exact for
    n = 1; the exterior model supplies the far field) or a vectorized
    callable with ``n`` given (nested adaptive quadrature, n <= 2).
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    x0 = np.atleast_1d(np.asarray(x0, float))
    if isinstance(f, GridFunction):
        if f.exterior.kind == "undeclared":
            raise ExteriorError("tail needs an exterior model")
        if f.n == 1:
            L, h, N = f.L, f.h, f.N
            edges = -L + h * np.arange(N + 1)
            total = 0.0
            e = -2 * s
            for side in (1.0, -1.0):
                # distances from x0 to cell edges on this side
                d = np.sort(side * (edges - x0[0]))
                d = d[d > 0]
                lo = np.concatenate([[0.0], d[:-1]])
                hi = d
                a, b = np.maximum(lo, r), np.maximum(hi, r)
                mid = x0[0] + side * 0.5 * (lo + hi)
                idx = np.clip(np.floor((mid + L) / h).astype(int), 0, N - 1)
                inside = (mid > -L) & (mid < L)
                with np.errstate(divide="ignore", invalid="ignore"):
                    seg = np.where(b > a, (a ** e - b ** e) / (2 * s), 0.0)
                total += float(np.sum(np.abs(f.values[idx]) * seg * inside))
                start = max(d[-1] if d.size else 0.0, r)
                ext = f.exterior
                if ext.kind == "constant":
                    total += abs(ext.value) * start ** e / (2 * s)
                elif ext.kind in ("closure", "sampled"):
                    g = lambda t: abs(float(f.exterior_values(np.array([[x0[0] + side * t]]))[0])) \
                        * t ** (-1 - 2 * s)
                    total += integrate.quad(g, start, np.inf, limit=200)[0]
            return r ** (2 * s) * total
        if f.n == 2:
            return r ** (2 * s) * _ray_tail_grid(f, x0, r, s, n_rays)
        raise NotImplementedError("grid tails for n <= 2")
    if n is None:
        raise ValueError("callable f needs the dimension n")
    if n == 1:
        g = lambda t: (abs(float(f(np.array([x0[0] + t])))) + abs(float(f(np.array([x0[0] - t]))))) \
            * t ** (-1 - 2 * s)
        return r ** (2 * s) * integrate.quad(g, r, np.inf, epsabs=0, epsrel=1e-10, limit=500)[0]
    if n == 2:
        def ray(th):
            d = np.array([np.cos(th), np.sin(th)])
            g = lambda rho: abs(float(f(x0 + rho * d))) * rho ** (-1 - 2 * s)
            return integrate.quad(g, r, np.inf, epsabs=0, epsrel=1e-10, limit=500)[0]
        return r ** (2 * s) * integrate.quad(ray, 0, 2 * np.pi, epsabs=0, epsrel=1e-9,
                                             limit=200)[0]
    raise NotImplementedError("callable tails for n <= 2")
