import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _oracles import pr_update_reference
from mixrec import kernels
from mixrec.kernels import OutsideSupportError, drift, gaussian
from mixrec.recursion import (FitError, Truth, default_record_iters, harmonic,
                              marginal_step_check, power, pr_fit, pr_step, weight)
from mixrec.support import MixingDensity, discrete_grid, product_grid, uniform_density, uniform_grid


def test_harmonic_weights():
    assert [weight(harmonic(), i) for i in (1, 2, 9)] == [0.5, 1 / 3, 0.1]


def test_power_weights_and_flags():
    s = power(0.75, c=0.5)
    assert weight(s, 16) == pytest.approx(0.5 * 16 ** -0.75)
    assert s.b1 and not s.b1_prime
    assert power(0.9).b1_prime and harmonic().b1_prime
    assert not power(0.5).b1
    with pytest.raises(ValueError):
        power(0.75, c=1.0)
    with pytest.raises(ValueError):
        weight(s, 0)


def test_one_step_closed_form():
    # atoms {0, 1}, f = (1/2, 1/2), x = 0, w = 1/2, unit variance:
    # posterior weight on 0 is 1 / (1 + exp(-1/2))
    g = discrete_grid([0.0, 1.0])
    f = pr_step(uniform_density(g), 0.0, 0.5, gaussian())
    want = 0.25 + 0.5 / (1.0 + math.exp(-0.5))
    assert f.masses[0] == pytest.approx(want, rel=1e-14)
    assert f.masses[0] == pytest.approx(0.5612296656, abs=1e-10)


def test_step_matches_reference_update():
    rng = np.random.default_rng(3)
    g = uniform_grid(-2, 2, 9)
    f = MixingDensity(g, rng.dirichlet(np.ones(9)))
    x, w = 0.7, 0.3
    lik = gaussian().pdf(x, g.atoms)
    ref = pr_update_reference(list(f.masses), list(lik), w)
    assert np.allclose(pr_step(f, x, w, gaussian()).masses, ref, rtol=1e-13, atol=0)


def test_zero_weight_is_identity_and_zero_mass_stays_zero():
    g = discrete_grid([0.0, 1.0, 2.0])
    f = MixingDensity(g, [0.5, 0.5, 0.0])
    assert np.array_equal(pr_step(f, 0.3, 0.0, gaussian()).masses, f.masses)
    assert pr_step(f, 2.0, 0.9, gaussian()).masses[2] == 0.0


def test_step_rejects_bad_input():
    f = uniform_density(discrete_grid([0.0, 1.0]))
    with pytest.raises(ValueError):
        pr_step(f, 0.0, 1.0, gaussian())
    with pytest.raises(ValueError):
        pr_step(f, math.nan, 0.5, gaussian())
    with pytest.raises(OutsideSupportError):
        pr_step(f, 500.0, 0.5, gaussian(0.01))


def test_fit_equals_iterated_steps_bitwise():
    rng = np.random.default_rng(0)
    x = rng.normal(size=300)
    g = uniform_grid(-3, 3, 25)
    f = uniform_density(g)
    for i, xi in enumerate(x, start=1):
        f = pr_step(f, xi, weight(harmonic(), i), gaussian())
    fit, _ = pr_fit(x, uniform_density(g), harmonic(), gaussian())
    assert np.array_equal(fit.masses, f.masses)


def test_fit_with_drift_kernel_matches_steps():
    rng = np.random.default_rng(1)
    t = np.arange(1, 51, dtype=float)
    x = rng.normal(size=50) + 2 * t / 100
    g = product_grid(-1, 1, 5, -3, 3, 5)
    k = drift(0.5)
    f = uniform_density(g)
    for i in range(50):
        f = pr_step(f, x[i], weight(harmonic(), i + 1), k, t[i])
    fit, _ = pr_fit(x, uniform_density(g), harmonic(), k, t)
    assert np.array_equal(fit.masses, f.masses)


def test_fit_error_reports_index():
    x = np.array([0.0, 0.1, 400.0, 0.0])
    with pytest.raises(FitError) as exc:
        pr_fit(x, uniform_density(discrete_grid([0.0, 1.0])), harmonic(), gaussian(0.01))
    assert exc.value.index == 3


def test_trace_recording_and_checkpoints():
    x = np.random.default_rng(2).normal(size=5000)
    g = discrete_grid([0.0, 2.5])
    truth = Truth(MixingDensity(g, [1.0, 0.0]), lambda v: gaussian().pdf(v, np.array([0.0]))[:, 0],
                  (-9, 11))
    f, tr = pr_fit(x, uniform_density(g), harmonic(), gaussian(), truth=truth,
                   checkpoints=(100, 5000, 9999))
    assert tr.iters[0] == 1 and tr.iters[-1] == 5000
    assert np.array_equal(tr.iters[:100], np.arange(1, 101))
    assert set(tr.checkpoints) == {100, 5000}
    assert np.array_equal(tr.checkpoints[5000], f.masses)
    assert tr.masses.shape == (tr.iters.size, 2)
    assert tr.w[-1] == weight(harmonic(), 5000)
    assert np.all(np.isfinite(tr.K_n_star)) and np.all(tr.hellinger <= math.sqrt(2))
    assert tr.K_n_star[-1] < tr.K_n_star[10]


def test_default_record_iters_stride():
    assert default_record_iters(10, 4).tolist() == [4, 8, 10]
    it = default_record_iters(100_000)
    assert it[-1] == 100_000 and np.all(np.diff(it) > 0)


def test_marginal_step_check_matches_refit():
    rng = np.random.default_rng(4)
    g = uniform_grid(-3, 3, 31)
    f = MixingDensity(g, rng.dirichlet(np.ones(31)))
    probes = np.linspace(-4, 4, 20)
    m_prev = kernels.marginal_curve(gaussian(), f, probes)
    got = marginal_step_check(m_prev, f, 1.2, 0.2, gaussian(), probes)
    want = kernels.marginal_curve(gaussian(), pr_step(f, 1.2, 0.2, gaussian()), probes)
    assert np.allclose(got, want, rtol=1e-12, atol=0)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 40), st.floats(-4, 4), st.floats(0.0, 0.99), st.integers(0, 2 ** 31))
def test_step_preserves_simplex(k, x, w, seed):
    rng = np.random.default_rng(seed)
    g = uniform_grid(-3, 3, k)
    masses = rng.dirichlet(np.full(k, 0.3))
    masses[rng.random(k) < 0.2] = 0.0
    if masses.sum() == 0:
        masses[0] = 1.0
    f = MixingDensity(g, masses / masses.sum())
    new = pr_step(f, x, w, gaussian())
    assert abs(new.masses.sum() - 1) <= 1e-12
    assert np.all(new.masses >= 0)
    assert np.all(new.masses[f.masses == 0] == 0)
