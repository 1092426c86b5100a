import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from mixrec import kernels
from mixrec.kernels import KERNEL_FLOOR, Kernel, OutsideSupportError, drift, gaussian
from mixrec.support import MixingDensity, discrete_grid, product_grid, uniform_grid


def test_gaussian_matches_scipy():
    k = gaussian(0.5)
    atoms = np.array([-1.0, 0.0, 2.0])
    assert np.allclose(k.pdf(0.3, atoms), stats.norm.pdf(0.3, atoms, math.sqrt(0.5)), rtol=1e-14)


def test_drift_mean_uses_time_scale():
    k = drift(0.1, 100.0)
    atoms = np.array([[0.0, 2.0], [5.0, 2.0]])
    assert np.allclose(k.means(atoms, 50.0), [1.0, 6.0])
    # value at the mean is the normal peak
    assert k.pdf(1.0, atoms, 50.0)[0] == pytest.approx(1 / math.sqrt(2 * math.pi * 0.1))


def test_array_x_shape_and_covariate_alignment():
    k = drift(0.1)
    atoms = product_grid(-1, 1, 3, -1, 1, 3).atoms
    x = np.array([0.0, 0.5])
    t = np.array([10.0, 20.0])
    out = k.pdf(x, atoms, t)
    assert out.shape == (2, 9)
    assert np.allclose(out[1], k.pdf(0.5, atoms, 20.0))


def test_kernel_validation():
    with pytest.raises(ValueError):
        Kernel("cauchy")
    with pytest.raises(ValueError):
        gaussian(0.0)
    with pytest.raises(ValueError):
        drift(0.1).pdf(0.0, np.zeros((1, 2)))
    with pytest.raises(ValueError):
        kernels.eval(gaussian(), math.inf, 0.0)


def test_likelihood_is_floored():
    k = gaussian(1.0)
    assert k.pdf(100.0, np.array([0.0]))[0] == 0.0
    assert k.likelihood(100.0, np.array([0.0]))[0] == KERNEL_FLOOR


def test_marginal_two_atoms():
    g = discrete_grid([0.0, 2.5])
    f = MixingDensity(g, [0.3, 0.7])
    x = 1.0
    want = 0.3 * stats.norm.pdf(1.0) + 0.7 * stats.norm.pdf(1.0, 2.5)
    assert kernels.marginal(gaussian(), f, x) == pytest.approx(want, rel=1e-14)


def test_marginal_outside_support():
    g = discrete_grid([0.0, 1.0])
    f = MixingDensity(g, [0.5, 0.5])
    with pytest.raises(OutsideSupportError, match="observation outside model support"):
        kernels.marginal(gaussian(0.01), f, 1e3)


def test_marginal_curve_matches_pointwise():
    g = uniform_grid(-2, 2, 41)
    f = MixingDensity(g, np.full(41, 1 / 41))
    xs = np.linspace(-4, 4, 17)
    curve = kernels.marginal_curve(gaussian(), f, xs)
    assert np.allclose(curve, [kernels.marginal(gaussian(), f, x) for x in xs], rtol=1e-13)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 4.0), st.floats(-5, 5))
def test_pdf_integrates_to_one(sigma2, mu):
    k = gaussian(sigma2)
    xs = np.linspace(mu - 12 * math.sqrt(sigma2), mu + 12 * math.sqrt(sigma2), 4001)
    vals = k.pdf(xs, np.array([mu]))[:, 0]
    assert np.trapezoid(vals, xs) == pytest.approx(1.0, abs=1e-9)
