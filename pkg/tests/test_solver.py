import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import gamma, hyp1f1

from fraclab.grid import Exterior, GridFunction
from fraclab.kernel import KernelSpec
from fraclab.solver import (SolverError, assemble, classify_solution, energy, energy_V,
                            identity_check_lemma56, nonlocal_tail, pcg, resolve_near_field,
                            solve_dirichlet, weight_table, x_norms)
from fraclab.weights import Weight

from oracles import GAUSS_TAIL


def _problem(s=0.3, N=12, L=1.0, ext=None, V=None, form="weak"):
    K = KernelSpec.fractional_laplacian(2, s)
    return assemble(K, np.ones((N, N), bool), L, exterior=ext or Exterior.zero(), potential=V,
                    form=form)


@pytest.mark.parametrize("s", [0.2, 0.45, 0.5, 0.8])
def test_weight_table_symmetry_and_sum(s):
    tab = weight_table(KernelSpec.fractional_laplacian(2, s), 0.1, 6)
    W = tab.W
    assert np.all(W >= 0) and W[6, 6] == 0
    assert np.allclose(W, W[::-1, ::-1]) and np.allclose(W, W.T)
    assert tab.d == pytest.approx(W.sum() + tab.tail, rel=1e-13)


def test_table_homogeneity():
    K = KernelSpec.fractional_laplacian(2, 0.3)
    a, b = weight_table(K, 1.0, 4), weight_table(K, 0.25, 4)
    assert np.allclose(b.W, a.W * 0.25 ** -0.6, rtol=1e-13)


def test_near_field_modes():
    K = KernelSpec.fractional_laplacian(2, 0.7)
    assert resolve_near_field(K, "auto") == "taylor"
    with pytest.raises(ValueError):
        resolve_near_field(K, "galerkin")
    assert resolve_near_field(KernelSpec.fractional_laplacian(2, 0.3), "auto") == "galerkin"


def _gauss_fl(r, s):
    return 4 ** s * gamma(1 + s) * hyp1f1(1 + s, 1.0, -r * r)


@pytest.mark.parametrize("s", [0.3, 0.5, 0.7])
def test_discrete_operator_converges_on_gaussian(s):
    errs = []
    for N in (64, 128):
        P = _problem(s, N, 4.0, form="resolvent")
        u = GridFunction.from_function(lambda x: np.exp(-np.sum(x ** 2, -1)), 2, N, 4.0)
        Lu = P.operator_strong(u).reshape(N, N)
        o = _gauss_fl(np.linalg.norm(u.centers(), axis=-1), s)
        errs.append(np.abs(Lu - o).max() / np.abs(o).max())
    assert errs[1] < errs[0] and errs[1] < 0.03


@pytest.mark.parametrize("s", [0.3, 0.7])
def test_constant_exterior_reproduced(s):
    P = _problem(s, ext=Exterior.constant(1.0))
    u = solve_dirichlet(P, tol=1e-12).solution
    assert np.max(np.abs(u.values - 1)) < 1e-10


def test_zero_data_gives_zero():
    res = solve_dirichlet(_problem(V=Weight.constant(2.0, 2)))
    assert np.all(res.solution.values == 0) and res.iterations == 0


def test_stiffness_is_spd_and_matches_apply(rng):
    P = _problem(0.3, 6)
    A = P.stiffness_matrix()
    assert np.allclose(A, A.T)
    assert np.linalg.eigvalsh(A).min() > 0
    x = rng.normal(size=36)
    assert np.allclose(A @ x, P.h ** 2 * P.apply(x), rtol=1e-10, atol=1e-12)


@settings(max_examples=10)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0.3, 0.5, 0.7]))
def test_maximum_principle(seed, s):
    r = np.random.Generator(np.random.Philox(seed))
    N = 8
    a = r.uniform(0, 2)
    ext = Exterior.closure(lambda p, a=a: a * (1 + np.cos(np.sum(p, -1))), a)
    P = assemble(KernelSpec.fractional_laplacian(2, s),
                 np.ones((N, N), bool), 1.0, exterior=ext,
                 potential=Weight.constant(float(r.uniform(0, 5)), 2), ext_factor=2)
    u = solve_dirichlet(P).solution
    assert u.values.min() >= -1e-10 * max(1.0, u.values.max())


def test_energy_minimal_against_perturbations(rng):
    P = _problem(0.4, 10, ext=Exterior.constant(1.0), V=Weight.constant(1.0, 2))
    u = solve_dirichlet(P, tol=1e-12).solution
    E0 = energy_V(u, P)
    for _ in range(20):
        v = u.with_values(u.values + 1e-2 * rng.normal(size=u.values.shape))
        assert energy_V(v, P) >= E0 - 1e-12 * abs(E0)


def test_energy_quadratic_identity(rng):
    # E(u + t v) = E(u) + t^2 E(v) for the solution u of the V = 0, g = 0 problem with source
    P = _problem(0.3, 8)
    f = GridFunction(rng.uniform(size=(8, 8)), 1.0)
    u = solve_dirichlet(P, f=f, tol=1e-13).solution
    v = GridFunction(rng.normal(size=(8, 8)), 1.0)
    lhs = energy_V(u.with_values(u.values + v.values), P, f) - energy_V(u, P, f)
    assert lhs == pytest.approx(0.5 * P.kappa * energy(v, P), rel=1e-8)


def test_classification():
    P = _problem(0.3, 8, ext=Exterior.constant(1.0))
    u = solve_dirichlet(P, tol=1e-12).solution
    assert classify_solution(P, u) == "solution"
    assert classify_solution(P, u.with_values(u.values - 0.1)) == "subsolution"
    assert classify_solution(P, u.with_values(u.values + 0.1)) == "supersolution"


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.floats(0, 10))
def test_resolvent_splitting_identity(alpha, beta, a, b):
    lhs, rhs = identity_check_lemma56(alpha, beta, a, b)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)


def test_pcg_reports_failure():
    A = np.diag(np.arange(1.0, 101.0))
    with pytest.raises(SolverError):
        pcg(lambda x: A @ x + 0.5 * x[::-1], np.ones(100), np.ones(100), tol=1e-14, maxiter=3)


def test_x_norms_zero_outside():
    P = _problem(0.3, 8)
    v = GridFunction(np.pad(np.ones((4, 4)), 2), 1.0)
    l2, semi, full = x_norms(P, v)
    assert l2 == pytest.approx(1.0) and semi > 0 and full == pytest.approx(l2 + semi)


@pytest.mark.parametrize("s,r", sorted(GAUSS_TAIL))
def test_tail_callable_route(s, r):
    f = lambda y: np.exp(-np.sum(np.asarray(y) ** 2, axis=-1))
    assert nonlocal_tail(f, [0.0, 0.0], r, s, n=2) == pytest.approx(GAUSS_TAIL[(s, r)], rel=1e-7)


@pytest.mark.parametrize("s,r", sorted(GAUSS_TAIL))
def test_tail_grid_route(s, r):
    g = GridFunction.from_function(lambda y: np.exp(-np.sum(y ** 2, -1)), 2, 128, 4.0)
    assert nonlocal_tail(g, [0.0, 0.0], r, s) == pytest.approx(GAUSS_TAIL[(s, r)], rel=2e-2)


def test_tail_of_constant_exterior():
    # f = c outside [-L, L]^n, zero inside: rays from 0 see c beyond the exit radius
    g1 = GridFunction(np.zeros(8), 1.0, Exterior.constant(2.0))
    # r^(2s) * 2 sides * c * L^(-2s) / (2s)
    assert nonlocal_tail(g1, [0.0], 0.5, 0.5) == pytest.approx(0.5 * 2 * 2.0, rel=1e-12)
    g = GridFunction(np.zeros((8, 8)), 1.0, Exterior.constant(2.0))
    t = nonlocal_tail(g, [0.0, 0.0], 0.5, 0.5)
    # exit radii lie in [1, sqrt 2]
    assert 0.5 * 2.0 * 2 * math.pi / math.sqrt(2) < t < 0.5 * 2.0 * 2 * math.pi
