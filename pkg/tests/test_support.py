import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mixrec.support import (DegenerateDensityError, MixingDensity, SupportGrid, discrete_grid,
                            normalize, parse_grid, product_grid, uniform_density, uniform_grid)


def test_uniform_grid_endpoints_and_weights():
    g = uniform_grid(-3, 3, 7)
    assert g.atoms[:, 0].tolist() == [-3, -2, -1, 0, 1, 2, 3]
    assert np.allclose(g.quad_weights, 1.0)
    assert g.dim == 1 and g.size == 7


def test_product_grid_ordering():
    g = product_grid(0, 1, 2, 10, 12, 3)
    assert g.size == 6
    # first coordinate varies slowest
    assert g.atoms[:3, 0].tolist() == [0, 0, 0]
    assert g.atoms[:3, 1].tolist() == [10, 11, 12]
    assert np.allclose(g.quad_weights, 1.0 * 1.0)


@pytest.mark.parametrize("spec,size,dim", [
    ("-3:3:200", 200, 1),
    ("-6:6:20,-6:6:30", 600, 2),
    ("{0,2.5}", 2, 1),
    ("{-1, 2}", 2, 1),
    ("{0;0|5;2}", 2, 2),
])
def test_parse_grid(spec, size, dim):
    g = parse_grid(spec)
    assert (g.size, g.dim) == (size, dim)


@pytest.mark.parametrize("bad", ["", "1:0:5", "0:1:0", "a:b:c", "{}", "{1,1}", "0:1:5,0:1:5,0:1:5"])
def test_parse_grid_rejects(bad):
    with pytest.raises(ValueError):
        parse_grid(bad)


def test_grid_validation():
    with pytest.raises(ValueError):
        SupportGrid(np.array([[1.0], [0.0]]), np.ones(2), ((0, 1),))
    with pytest.raises(ValueError):
        SupportGrid(np.array([[0.0], [1.0]]), np.array([1.0, 0.0]), ((0, 1),))


def test_nearest_and_contains():
    g = uniform_grid(0, 1, 11)
    assert g.nearest(0.34) == 3
    assert g.contains(0.5) and not g.contains(1.5)


def test_mixing_density_checks():
    g = discrete_grid([0, 1])
    with pytest.raises(ValueError):
        MixingDensity(g, [0.6, 0.6])
    with pytest.raises(ValueError):
        MixingDensity(g, [1.1, -0.1])
    f = MixingDensity(g, [0.3, 0.7])
    assert f.masses.flags.writeable is False


def test_density_over_quad_weights():
    g = uniform_grid(0, 1, 5)  # spacing 0.25
    f = uniform_density(g)
    assert np.allclose(f.density, 0.2 / 0.25)


def test_mass_near_and_marginal():
    g = product_grid(0, 1, 2, 0, 1, 2)
    f = MixingDensity(g, [0.1, 0.2, 0.3, 0.4])
    vals, m = f.marginal_along(0)
    assert vals.tolist() == [0, 1] and np.allclose(m, [0.3, 0.7])
    assert f.mass_near((1, 1), 0.1) == pytest.approx(0.4)


def test_normalize_errors():
    g = discrete_grid([0, 1, 2])
    with pytest.raises(DegenerateDensityError, match="degenerate density"):
        normalize([0, 0, 0], g)
    with pytest.raises(DegenerateDensityError):
        normalize([1, -1, 1], g)
    with pytest.raises(DegenerateDensityError):
        normalize([1, np.nan, 1], g)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=50))
def test_normalize_idempotent(raw):
    g = uniform_grid(0, 1, len(raw)) if len(raw) > 1 else discrete_grid([0.0])
    once = normalize(raw, g)
    twice = normalize(once.masses, g)
    assert np.array_equal(once.masses, twice.masses)
    assert abs(once.masses.sum() - 1) <= 1e-12


def test_single_atom_axis_sits_at_midpoint():
    g = parse_grid("0:1:1")
    assert g.atoms[:, 0].tolist() == [0.5]
