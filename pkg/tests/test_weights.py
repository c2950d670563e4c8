import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fraclab.geometry import ball_cell_weights, ball_volume, disc_rect_area
from fraclab.grid import Exterior, GridFunction
from fraclab.weights import (BallQuery, Weight, ainf_levelset_params, ap_norm_estimate,
                             ball_average, ball_family, ball_integral, doubling_constant,
                             parse_weight, reverse_holder_check)


@given(st.floats(-1.5, 3.0), st.floats(0.0, 2.0), st.floats(0.05, 3.0))
def test_power_mass_closed_form_vs_quadrature(a, d, r):
    V = Weight.power(a, 2)
    closed = ball_integral(V, BallQuery((d, 0.0), r))
    plain = Weight(V.func, 2, radial=V.radial)      # no family: radial quadrature
    assert closed == pytest.approx(ball_integral(plain, BallQuery((d, 0.0), r)), rel=1e-7)


@pytest.mark.parametrize("a", [0.0, 1.0, 2.0, -0.5])
def test_power_mass_1d(a):
    V = Weight.power(a, 1)
    plain = Weight(V.func, 1)
    B = BallQuery((0.7,), 0.5)
    assert ball_integral(V, B) == pytest.approx(ball_integral(plain, B), rel=1e-8)


def test_sampled_weight_matches_overlap():
    N, L = 16, 1.0
    g = GridFunction(np.arange(N * N, dtype=float).reshape(N, N) / 10, L)
    V = Weight.sampled(g)
    B = BallQuery((0.1, -0.2), 0.45)
    w = ball_cell_weights(2, N, L, B.x, B.radius)
    assert ball_integral(V, B) == pytest.approx(float(np.sum(w * g.values)), rel=1e-14)
    with pytest.raises(ValueError):
        Weight.sampled(g.with_values(-g.values))


def test_disc_overlaps_sum_to_area():
    w = ball_cell_weights(2, 32, 1.0, np.array([0.013, -0.27]), 0.6)
    assert w.sum() == pytest.approx(math.pi * 0.36, rel=1e-12)
    assert disc_rect_area(0, 0, 1, -2, 2, -2, 2) == pytest.approx(math.pi, rel=1e-13)


@given(st.floats(0.1, 4.0), st.floats(0.2, 0.8))
def test_dilation_rescales_mass(t, s):
    V = Weight.power(1.0, 2)
    W = V.dilated(t, s)
    x = np.array([0.3, 0.4])
    m1 = ball_integral(W, BallQuery(tuple(x), 0.5))
    m2 = t ** (2 * s - 2) * ball_integral(V, BallQuery(tuple(t * x), 0.5 * t))
    assert m1 == pytest.approx(m2, rel=1e-9)


def test_constant_is_a1_and_rh_everything():
    V = Weight.constant(3.0, 2)
    balls = ball_family(2, radii=[0.5, 2.0], extent=1)
    assert ap_norm_estimate(V, 1.0, balls) == pytest.approx(1.0)
    assert ap_norm_estimate(V, 2.0, balls) == pytest.approx(1.0)
    assert reverse_holder_check(V, 3.0, balls).lhs == pytest.approx(1.0)
    assert ainf_levelset_params(V, balls[0], 0.5) == 1.0
    assert doubling_constant(V, balls) == pytest.approx(4.0)


def test_power_weight_doubling_and_rh():
    V = Weight.power(2.0, 2)
    balls = ball_family(2, centers=[[0.0, 0.0]], radii=[0.25, 1.0, 4.0])
    # |x|^2 at the origin: mass ~ r^4, so doubling is 16
    assert doubling_constant(V, balls) == pytest.approx(16.0, rel=1e-12)
    rh = reverse_holder_check(V, 2.0, balls)
    # avg(|x|^4)^(1/2) / avg(|x|^2) on centred balls = sqrt(1/3) / (1/2)
    assert rh.lhs == pytest.approx(2 / math.sqrt(3), rel=1e-7)
    # |x|^-1 on centred balls: average 2/r against ess inf 1/r
    assert ap_norm_estimate(Weight.power(-1.0, 2), 1.0, balls) == pytest.approx(2.0, rel=1e-9)


def test_ap_p1_of_vanishing_weight_is_infinite():
    V = Weight.power(2.0, 2)
    assert ap_norm_estimate(V, 1.0, [BallQuery((0.0, 0.0), 1.0)]) == math.inf


def test_levelset_fraction_power():
    V = Weight.power(2.0, 2)
    B = BallQuery((0.0, 0.0), 1.0)
    # avg = 1/2, {|x|^2 >= 1/4} has measure fraction 1 - 1/4
    assert ainf_levelset_params(V, B, 0.5) == pytest.approx(0.75, rel=1e-9)


@pytest.mark.parametrize("spec,fam", [("const:2.5", "const"), ("power:1", "power"),
                                      ("power:-0.5", "power")])
def test_parse_weight(spec, fam):
    assert parse_weight(spec, 2).family[0] == fam


@pytest.mark.parametrize("spec", ["const", "const:abc", "magic:1", "const:-1", 3])
def test_parse_weight_rejects(spec):
    with pytest.raises(ValueError):
        parse_weight(spec, 2)


def test_parse_sampled_roundtrip(tmp_path):
    g = GridFunction(np.ones((8, 8)), 1.0)
    path = g.save(tmp_path / "w.gf")
    V = parse_weight(f"sampled:{path}", 2)
    assert ball_average(V, BallQuery((0.0, 0.0), 0.5)) == pytest.approx(1.0, rel=1e-12)
