import csv
import math
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fraclab.fundsol import estimate_fundamental_solution
from fraclab.geometry import ball_cell_weights, ball_volume
from fraclab.grid import Exterior, GridFunction
from fraclab.kernel import KernelSpec
from fraclab.mapping import (ExponentPoint, apply_SV, ball_masses, check_young_exponents,
                             convolve, default_test_family, distribution,
                             domination_check_lemma61, frac_maximal, frac_maximal_direct,
                             indicator_ball_levels, ladder, lp_norm, maximal_vs_riesz_check,
                             operator_bound_report, region_lattice, region_membership,
                             resolvent_problem, riesz_kernel_grid, riesz_kernel_levels,
                             riesz_potential, riesz_potential_at, split_SV, sv_column,
                             weak_lp_quasinorm, weak_young_check, young_blowup_sweep,
                             young_chain_bound, young_constant, young_level, young_q)
from fraclab.weights import Weight

from oracles import RIESZ_DISC

DATA = Path(__file__).parent / "data"


# ---- exponents and regions -------------------------------------------------

def test_exponent_point_is_exact():
    pt = ExponentPoint(1.5, 3, 2)
    assert pt.x == Fraction(2, 3) and pt.y == Fraction(1, 3) and pt.theta_exact == Fraction(2, 3)
    assert ExponentPoint("inf", "inf").x == 0
    with pytest.raises(ValueError):
        ExponentPoint(0.5, 2)


@pytest.mark.parametrize("s,name", [(0.5, "region_reference_n2_s05.csv"),
                                    (0.3, "region_reference_n2_s03.csv")])
def test_region_lattice_matches_reference(s, name):
    with open(DATA / name, newline="") as fh:
        want = {(int(r["i"]), int(r["j"])): r["region"] for r in csv.DictReader(fh)}
    rows = region_lattice(s, 2, 50)
    assert len(rows) == len(want) == 51 * 51
    assert all(want[(i, j)] == reg for i, j, _, _, reg in rows)


@pytest.mark.parametrize("x,y,reg", [
    ("0", "0", "interior-a"), ("1/2", "1/2", "interior-a"), ("1/2", "0", "outside"),
    ("1", "1", "weak-b"), ("1", "1/2", "outside"), ("1", "0.51", "weak-b"),
    ("3/4", "1/4", "weak-c"), ("0.3", "0.4", "outside"), ("1/2", "1/100", "interior-a")])
def test_region_edges_s_half(x, y, reg):
    pt = ExponentPoint.from_reciprocals(Fraction(x), Fraction(y), 2)
    assert region_membership(pt, 0.5) == reg


@given(st.integers(0, 60), st.integers(0, 60))
def test_region_open_part_is_below_line(i, j):
    pt = ExponentPoint.from_reciprocals(Fraction(i, 60), Fraction(j, 60))
    reg = region_membership(pt, "0.4")
    if reg == "interior-a" and (i, j) != (0, 0):
        assert Fraction(j, 60) <= Fraction(i, 60) < 1
        assert Fraction(i - j, 60) < Fraction(2, 5)


# ---- convolution and norms ------------------------------------------------

@pytest.mark.parametrize("shape,kshape", [((16, 16), (7, 7)), ((32, 32), (63, 63)), ((20,), (41,))])
def test_direct_and_fft_agree(rng, shape, kshape):
    a, k = rng.normal(size=shape), rng.normal(size=kshape)
    for mode in ("same", "full"):
        d = convolve(a, k, mode, "direct")
        f = convolve(a, k, mode, "fft")
        assert np.max(np.abs(d - f)) <= 1e-10 * np.max(np.abs(d))


def test_lp_norm_of_indicator():
    g = GridFunction(np.pad(np.ones((4, 4)), 2), 1.0)       # 16 cells of area 1/16
    assert lp_norm(g, 2) == pytest.approx(1.0)
    assert lp_norm(g, math.inf) == 1.0
    with pytest.raises(ValueError):
        lp_norm(g.with_exterior(Exterior.constant(1.0)), 2)


@pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0, 7.0])
def test_indicator_quasinorm_exact(p):
    w = weak_lp_quasinorm(indicator_ball_levels(2), p)
    assert w.quasinorm == math.pi ** (1 / p)


@pytest.mark.parametrize("theta", [0.5, 1.0, 1.5])
def test_riesz_kernel_quasinorm(theta):
    # |y|^(theta-n) in L^{n/(n-theta), inf} with quasinorm |B_1|^((n-theta)/n)
    p = 2 / (2 - theta)
    w = weak_lp_quasinorm(riesz_kernel_levels(2, theta), p, gammas=np.geomspace(1e-3, 1e3, 7))
    assert w.quasinorm == pytest.approx(math.pi ** (1 / p), rel=1e-12)


def test_grid_indicator_quasinorm_converges():
    N, L = 96, 1.5
    c = GridFunction(np.zeros((N, N)), L).centers()
    g = GridFunction((np.linalg.norm(c, axis=-1) < 1.0).astype(float), L)
    assert weak_lp_quasinorm(g, 3.0).quasinorm == pytest.approx(math.pi ** (1 / 3), rel=2e-3)


@given(st.integers(0, 2 ** 32 - 1), st.floats(1.0, 4.0))
def test_weak_norm_below_strong_norm(seed, p):
    # Chebyshev: t |{|g| > t}|^(1/p) <= ||g||_p
    r = np.random.Generator(np.random.Philox(seed))
    g = GridFunction(r.normal(size=(12, 12)), 1.0)
    assert weak_lp_quasinorm(g, p).quasinorm <= lp_norm(g, p) * (1 + 1e-12)


def test_distribution_counts():
    g = GridFunction(np.array([[0.0, 1.0], [2.0, 2.0]]), 1.0)
    assert list(distribution(g, [0.0, 1.0, 1.5, 2.0])) == [3.0, 2.0, 2.0, 0.0]


def test_weak_norm_constant_exterior_is_infinite():
    g = GridFunction(np.zeros((4, 4)), 1.0, Exterior.constant(1.0))
    assert weak_lp_quasinorm(g, 2).quasinorm == math.inf


# ---- maximal function and Riesz potential -----------------------------------

def test_maximal_of_one_everywhere():
    g = GridFunction(np.ones((16, 16)), 1.0, Exterior.constant(1.0))
    assert np.allclose(frac_maximal(g, 0.0).values, 1.0, rtol=1e-12)


@pytest.mark.parametrize("method", ["direct", "fft"])
def test_maximal_ladder_matches_direct_overlaps(rng, method):
    g = GridFunction(rng.uniform(size=(16, 16)), 1.0)
    M = frac_maximal(g, 0.7, method=method)
    c = g.centers()
    for i, j in [(0, 0), (7, 8), (15, 3), (10, 10)]:
        assert M.values[i, j] == pytest.approx(frac_maximal_direct(g, 0.7, c[i, j]), rel=1e-10)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=10)
def test_maximal_sublinear_and_homogeneous(seed):
    r = np.random.Generator(np.random.Philox(seed))
    f = GridFunction(r.normal(size=(12, 12)), 1.0)
    g = GridFunction(r.normal(size=(12, 12)), 1.0)
    Mf, Mg = frac_maximal(f, 1.0).values, frac_maximal(g, 1.0).values
    Mfg = frac_maximal(f.with_values(f.values + g.values), 1.0).values
    assert np.all(Mfg <= (Mf + Mg) * (1 + 1e-12))
    assert np.allclose(frac_maximal(f.with_values(2 * f.values), 1.0).values, 2 * Mf, rtol=1e-12)


def test_ladder_radii():
    r = ladder(0.1)
    assert r[0] == 0.05 and r[4] == pytest.approx(0.1) and len(r) == 32


def test_ball_masses_total():
    g = GridFunction(np.ones((16, 16)), 1.0)
    m = ball_masses(g, [0.2])
    assert m[0][8, 8] == pytest.approx(math.pi * 0.04, rel=1e-12)


def test_riesz_of_disc_matches_continuous():
    N, L = 96, 1.5
    h = 2 * L / N
    g = GridFunction(ball_cell_weights(2, N, L, np.zeros(2), 1.0) / h ** 2, L)
    val = riesz_potential_at(g, 1.0, [[2.0, 0.0]])[0]
    assert val == pytest.approx(RIESZ_DISC, rel=1e-4)


def test_riesz_grid_and_point_routes_agree(rng):
    g = GridFunction(rng.uniform(size=(12, 12)), 1.0)
    I = riesz_potential(g, 1.2)
    c = g.centers()
    pts = [c[0, 0], c[5, 6], c[11, 2]]
    assert np.allclose(riesz_potential_at(g, 1.2, pts), [I.values[0, 0], I.values[5, 6],
                                                         I.values[11, 2]], rtol=1e-10)


def test_riesz_positive_and_maximal_domination(rng):
    g = GridFunction(rng.normal(size=(16, 16)), 1.0)
    assert np.all(riesz_potential(g.with_values(np.abs(g.values)), 1.0).values > 0)
    rep = maximal_vs_riesz_check(g, 1.0)
    assert rep.passed and rep.details["violations"] == 0


# ---- resolvent ------------------------------------------------------------

@pytest.fixture(scope="module")
def resolvent():
    K = KernelSpec.fractional_laplacian(2, 0.5)
    return resolvent_problem(K, Weight.constant(1.0, 2), 4.0, 32)


def test_sv_linear_and_positive(resolvent, rng):
    P = resolvent
    f = GridFunction(rng.uniform(size=(32, 32)), 4.0)
    g = GridFunction(rng.uniform(size=(32, 32)), 4.0)
    u = apply_SV(P, f, 1e-12).values + 3 * apply_SV(P, g, 1e-12).values
    w = apply_SV(P, f.with_values(f.values + 3 * g.values), 1e-12).values
    assert np.allclose(u, w, rtol=1e-9, atol=1e-12)
    assert apply_SV(P, f).values.min() > 0


def test_sv_column_is_fundamental_solution(resolvent):
    P = resolvent
    x = np.array([0.125, 0.125])
    col = sv_column(P, x)
    est = estimate_fundamental_solution(P.kernel, P.potential, x, 4.0, 32, tol=1e-12, pad=1)
    assert np.allclose(col.values, est.u.values, rtol=1e-9, atol=1e-14)


def test_split_parts_sum(resolvent):
    P = resolvent
    f = dict(default_test_family(2, 32, 4.0))["bump_centre"]
    x = np.array([0.125, 0.125])
    near, far = split_SV(P, f, x)
    u = apply_SV(P, f, 1e-12)
    assert near + far == pytest.approx(u.values[16, 16], rel=1e-9)
    n0, f0 = split_SV(P, f, x, radius=100.0)
    assert f0 == 0.0 and n0 == pytest.approx(near + far)


def test_domination_homogeneous(resolvent):
    P = resolvent
    f = dict(default_test_family(2, 32, 4.0))["bump_centre"]
    a = domination_check_lemma61(P, f, 0.5)
    b = domination_check_lemma61(P, f.with_values(5 * f.values), 0.5)
    assert a.passed and b.constants["C_min"] == pytest.approx(a.constants["C_min"], rel=1e-8)
    with pytest.raises(ValueError):
        domination_check_lemma61(P, f.with_values(-f.values), 0.5)


@pytest.mark.parametrize("pq", [(2, 2), (1, 1), (1, 1.5), (1.5, 6), ("inf", "inf")])
def test_operator_bound_identity(resolvent, pq):
    P = resolvent
    pt = ExponentPoint(*pq)
    fam = default_test_family(2, 32, 4.0, pt.p, seed=3)
    rep = operator_bound_report(P, fam, pt, 1e-10)
    assert rep.passed and rep.details["identity_residual_max"] <= 1e-9


def test_operator_bound_scale_invariant(resolvent):
    P = resolvent
    pt = ExponentPoint(2, 2)
    fam = default_test_family(2, 32, 4.0)[:2]
    a = operator_bound_report(P, fam, pt, 1e-12).details["ratios"]
    b = operator_bound_report(P, [(k, f.with_values(2 * f.values)) for k, f in fam], pt,
                              1e-12).details["ratios"]
    for k in a:
        assert b[k] == pytest.approx(a[k], rel=1e-8)


def test_operator_bound_outside_rejected(resolvent):
    with pytest.raises(ValueError):
        operator_bound_report(resolvent, [], ExponentPoint(2, 1))


# ---- weak Young ----------------------------------------------------------

def test_young_exponents():
    assert young_q(1.0, 2.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        check_young_exponents(2.0, 2.0, 2.0)
    with pytest.raises(ValueError):
        young_constant(1.0, 3.0, 1.5)


@given(st.floats(0.01, 100), st.floats(0.1, 10), st.floats(0.1, 10),
       st.sampled_from([(1.0, 1.5), (1.2, 1.3), (1.5, 1.1), (1.0, 1.05)]))
def test_chain_bound_scaling(gamma, A, G, pr):
    # the chain bound equals C^q gamma^-q A^q G^q for every gamma, A, G
    p, r = pr
    q = young_q(p, r)
    C = young_constant(p, q, r)
    assert young_chain_bound(gamma, p, r, G, A) == pytest.approx(
        C ** q * gamma ** -q * A ** q * G ** q, rel=1e-9)


def test_level_p1():
    assert young_level(3.0, 1.0, 1.5, 2.0, 7.0) == 0.75


@pytest.mark.parametrize("theta,p", [(1.0, 1.0), (1.0, 1.2), (0.5, 1.0), (1.5, 1.1)])
def test_weak_young_chain(theta, p):
    N, L = 32, 1.0
    h = 2 * L / N
    g = GridFunction((np.linalg.norm(GridFunction(np.zeros((N, N)), L).centers(), axis=-1)
                      < 0.8).astype(float), L)
    r = 2 / (2 - theta)
    hk = riesz_kernel_grid(2, theta, 24, h)
    rep = weak_young_check(g, hk, p, young_q(p, r), r)
    assert rep.passed
    assert all(v == 0 for v in rep.details["violations"].values())


def test_blowup_sweep():
    sw = young_blowup_sweep(1.0, [1.5, 1.2, 1.1, 1.05, 1.02, 1.01])
    assert sw["spread"] <= 2.0
    assert sw["fitted_exponent"] == pytest.approx(-1.0, abs=0.1)
