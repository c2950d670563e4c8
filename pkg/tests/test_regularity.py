import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fraclab.grid import Exterior, GridFunction
from fraclab.kernel import KernelSpec
from fraclab.regularity import (XiSaturation, ball_l2_average, ball_sup, boundary_distance,
                                caccioppoli_check, cutoff, improved_harnack_check,
                                local_boundedness_check, log_xi, weak_harnack_check, xi)
from fraclab.solver import assemble, solve_dirichlet
from fraclab.weights import Weight

from oracles import XI


@pytest.mark.parametrize("key", sorted(XI))
def test_xi_oracle(key):
    x, n, s = key
    assert xi(x, n, s) == pytest.approx(XI[key], rel=1e-13)


def test_xi_large_argument_log_space():
    # log Xi grows like e x^(1/e) for e = n/2 + s; direct summation would overflow
    lv = log_xi(1e6, 2, 0.5)
    assert math.isfinite(lv) and lv > 700
    with pytest.warns(XiSaturation):
        assert xi(1e6, 2, 0.5) == math.inf


@given(st.floats(0.0, 50.0), st.floats(0.0, 50.0))
def test_xi_monotone(a, b):
    lo, hi = sorted((a, b))
    assert log_xi(lo, 2, 0.3) <= log_xi(hi, 2, 0.3) + 1e-12


def test_xi_rejects_negative():
    with pytest.raises(ValueError):
        log_xi(-1.0, 2, 0.5)


@given(st.floats(0.05, 1.0), st.floats(1.01, 3.0))
def test_cutoff_profile(r, ratio):
    R = r * ratio
    pts = np.array([[0.0, 0.0], [r, 0.0], [R, 0.0], [2 * R, 0.0]])
    phi = cutoff(pts, [0.0, 0.0], r, R)
    assert phi[0] == 1 and phi[1] == pytest.approx(1.0) and phi[2] == 0 and phi[3] == 0


@pytest.fixture(scope="module")
def solved():
    K = KernelSpec.fractional_laplacian(2, 0.5)
    P = assemble(K, np.ones((24, 24), bool), 1.0, exterior=Exterior.constant(1.0),
                 potential=Weight.constant(1.0, 2))
    return P, solve_dirichlet(P, tol=1e-12).solution


def test_caccioppoli_on_solution(solved):
    P, u = solved
    rep = caccioppoli_check(P, u, [P.h / 2, P.h / 2], 0.25, 0.4)
    assert rep.passed and rep.constants["C_eff"] > 0
    with pytest.raises(ValueError):
        caccioppoli_check(P, u, [P.h / 2, P.h / 2], 0.25, 0.6)
    with pytest.raises(ValueError):
        caccioppoli_check(P, u.with_values(u.values + 0.5), [P.h / 2, P.h / 2], 0.25, 0.4)


def test_weak_harnack_constant_solution():
    K = KernelSpec.fractional_laplacian(2, 0.5)
    P = assemble(K, np.ones((16, 16), bool), 1.0, exterior=Exterior.constant(2.0))
    u = solve_dirichlet(P, tol=1e-13).solution
    rep = weak_harnack_check(P, u, [P.h / 2, P.h / 2], 0.5)
    assert rep.ratio == pytest.approx(1.0, rel=1e-9)


def test_weak_harnack_rejects_potential(solved):
    P, u = solved
    with pytest.raises(ValueError):
        weak_harnack_check(P, u, [P.h / 2, P.h / 2], 0.5)


def test_ball_helpers():
    u = GridFunction(np.full((16, 16), 3.0), 1.0)
    assert ball_sup(u, [0.0, 0.0], 0.3) == 3.0
    assert ball_l2_average(u, [0.0, 0.0], 0.5) == pytest.approx(3.0, rel=1e-12)


def test_boundary_distance_on_ball_mask():
    K = KernelSpec.fractional_laplacian(2, 0.3)
    c = (np.arange(16) + 0.5) / 8 - 1
    mask = (c[:, None] ** 2 + c[None, :] ** 2) < 0.8 ** 2
    P = assemble(K, mask, 1.0)
    d = boundary_distance(P, [0.0, 0.0])
    assert 0.7 < d <= 0.8 + 1e-12


def test_local_boundedness_fits_constants(solved):
    P, u = solved
    rep = local_boundedness_check(P, u, [P.h / 2, P.h / 2], 0.4, delta=0.5, R=0.6)
    assert rep.passed and rep.constants["c1_min"] >= 0 and rep.constants["c2_min"] > 0


def test_improved_harnack_small(solved):
    P, u = solved
    m = math.pi
    radii = np.geomspace(1.0, 2.5, 5) / m
    rep = improved_harnack_check(P, u, [P.h / 2, P.h / 2], radii)
    assert rep.epsilon > 0 and math.isfinite(rep.C) and rep.details["d0"] == 0.0
