import math

import numpy as np
import pytest

from fraclab.fundsol import (decay_slope, estimate_fundamental_solution, free_decay_check,
                             poly_decay_fit, sup_poly_over_xi, xi_decay_check)
from fraclab.kernel import KernelSpec
from fraclab.regularity import log_xi
from fraclab.weights import Weight


@pytest.fixture(scope="module")
def pair():
    K = KernelSpec.fractional_laplacian(2, 0.5)
    y = np.array([1 / 16, 1 / 16])     # centre of a cell next to the origin, h = 1/8
    free = estimate_fundamental_solution(K, None, y, 4.0, 64, pad=2)
    damp = estimate_fundamental_solution(K, Weight.constant(1.0, 2), y, 4.0, 64, pad=2)
    return free, damp


def test_free_slope(pair):
    free, _ = pair
    assert decay_slope(free) == pytest.approx(-1.0, abs=0.1)
    rep = free_decay_check(free)
    assert rep.passed and rep.details["nonnegative"]


def test_resolvent_monotone(pair):
    free, damp = pair
    assert np.all(damp.u.values <= free.u.values * (1 + 1e-9))
    assert damp.u.values.min() >= 0


def test_poly_fit_grows_with_N(pair):
    _, damp = pair
    rep = poly_decay_fit(damp, [1, 2])
    assert rep.passed and rep.details["increasing_in_N"]


def test_xi_fit_runs(pair):
    _, damp = pair
    rep = xi_decay_check(damp)
    assert rep.constants["epsilon"] >= 0 and math.isfinite(rep.constants["C"])


def test_source_must_be_cell_centre():
    K = KernelSpec.fractional_laplacian(2, 0.5)
    with pytest.raises(ValueError):
        estimate_fundamental_solution(K, None, [0.0, 0.0], 1.0, 8)
    with pytest.raises(ValueError):
        estimate_fundamental_solution(K, None, [1 / 8, 1 / 8], 1.0, 8, pad=0)


@pytest.mark.parametrize("N", [1.0, 2.0, 4.0])
def test_sup_poly_over_xi(N):
    val, t = sup_poly_over_xi(N, 2, 0.5)
    grid = np.geomspace(1e-3, 1e4, 20001)
    brute = np.max(N * np.log(grid) - np.array([log_xi(v, 2, 0.5) for v in grid]))
    assert math.log(val) == pytest.approx(brute, abs=1e-6)
