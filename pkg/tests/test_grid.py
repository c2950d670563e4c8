import numpy as np
import pytest
from hypothesis import given, strategies as st

from fraclab.geometry import ball_volume, cell_centers, sphere_area
from fraclab.grid import Exterior, ExteriorError, GridFunction


@pytest.mark.parametrize("ext", [Exterior.zero(), Exterior.constant(2.5)])
def test_gf_roundtrip(tmp_path, rng, ext):
    g = GridFunction(rng.normal(size=(8, 8)), 1.5, ext)
    back = GridFunction.load(g.save(tmp_path / "a.gf"))
    assert np.array_equal(back.values, g.values)
    assert back.L == g.L and back.exterior.tag() == ext.tag()


def test_sampled_roundtrip(tmp_path, rng):
    outer = GridFunction(rng.normal(size=(16, 16)), 2.0)
    g = GridFunction(rng.normal(size=(8, 8)), 1.0, Exterior.sampled(outer))
    back = GridFunction.load(g.save(tmp_path / "s.gf"))
    assert np.array_equal(back.exterior.outer.values, outer.values)


def test_closure_reads_back_undeclared(tmp_path):
    g = GridFunction(np.ones((4, 4)), 1.0, Exterior.closure(lambda p: p[..., 0], 0.0))
    back = GridFunction.load(g.save(tmp_path / "c.gf"))
    assert back.exterior.kind == "undeclared"
    with pytest.raises(ExteriorError):
        back.evaluate([[5.0, 5.0]])


def test_evaluate_inside_and_outside():
    g = GridFunction(np.arange(16.0).reshape(4, 4), 1.0, Exterior.constant(-1.0))
    assert g.evaluate([[-0.9, -0.9]]) == 0.0
    assert g.evaluate([[0.9, -0.9]]) == 12.0
    assert g.evaluate([[3.0, 0.0]]) == -1.0


def test_rejects_nonfinite_and_noncube():
    with pytest.raises(ValueError):
        GridFunction(np.array([[np.nan]]), 1.0)
    with pytest.raises(ValueError):
        GridFunction(np.zeros((3, 4)), 1.0)


@given(st.integers(1, 3))
def test_geometry_helpers(n):
    assert ball_volume(n, 2.0) == pytest.approx(ball_volume(n, 1.0) * 2 ** n)
    assert sphere_area(n) == pytest.approx(n * ball_volume(n, 1.0))
    c = cell_centers(n, 4, 1.0)
    assert c.shape == (4,) * n + (n,)
    assert np.allclose(c.reshape(-1, n).mean(axis=0), 0.0)
