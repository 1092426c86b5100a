"""Convergence and dependence diagnostics.

Divergences between mixing densities are sums over atoms; divergences between
marginal densities use composite trapezoid quadrature on a fixed node set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import Kernel
from .processes import ProcessConfig, ThetaLaw, ma_innovation_var, theta_law_of
from .support import MixingDensity

INF_DIVERGENCE = math.inf
DEFAULT_QUAD_POINTS = 2000
_NEG_CLAMP = 1e-8


class QuadratureError(ValueError):
    pass


def kl_masses(p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    pos = p > 0
    if np.any(q[pos] <= 0):
        return INF_DIVERGENCE
    val = float(np.sum(p[pos] * np.log(p[pos] / q[pos])))
    return max(val, 0.0)


def kl_mixing(f_true: MixingDensity, f_est: MixingDensity) -> float:
    """K_n: sum over atoms of true mass * log(true mass / estimated mass)."""
    if f_true.grid is not f_est.grid and not np.array_equal(f_true.grid.atoms, f_est.grid.atoms):
        raise ValueError("densities live on different grids")
    return kl_masses(f_true.masses, f_est.masses)


def _trapz_weights(nodes: np.ndarray) -> np.ndarray:
    d = np.diff(nodes)
    w = np.zeros(nodes.size)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def kl_on_nodes(nodes, m_true, m_est) -> float:
    m_true = np.asarray(m_true, dtype=float)
    m_est = np.asarray(m_est, dtype=float)
    live = m_true > 1e-300
    if np.any(m_est[m_true > 1e-12] <= 0):
        return INF_DIVERGENCE
    integrand = np.zeros(m_true.size)
    integrand[live] = m_true[live] * (np.log(m_true[live]) - np.log(np.maximum(m_est[live], 1e-320)))
    val = float(_trapz_weights(np.asarray(nodes, dtype=float)) @ integrand)
    if val < -_NEG_CLAMP:
        raise QuadratureError(f"KL quadrature came out negative ({val:.3g}); refine the nodes")
    return max(val, 0.0)


def hellinger_on_nodes(nodes, m1, m2) -> float:
    d2 = (np.sqrt(np.maximum(m1, 0.0)) - np.sqrt(np.maximum(m2, 0.0))) ** 2
    h2 = float(_trapz_weights(np.asarray(nodes, dtype=float)) @ d2)
    return float(min(math.sqrt(max(h2, 0.0)), math.sqrt(2.0)))


def _nodes(x_range, quad_points):
    lo, hi = x_range
    if not hi > lo:
        raise QuadratureError("quadrature range must satisfy lo < hi")
    if quad_points < 400:
        raise QuadratureError("need at least 400 quadrature points")
    return np.linspace(lo, hi, int(quad_points))


def kl_marginal(m_true, m_est, x_range, quad_points: int = DEFAULT_QUAD_POINTS) -> float:
    """K_n*: integral of m_true log(m_true / m_est) by trapezoid rule.

    ``m_true`` and ``m_est`` are vectorized callables. Returns ``inf`` when
    ``m_est`` vanishes where ``m_true`` does not.
    """
    x = _nodes(x_range, quad_points)
    return kl_on_nodes(x, m_true(x), m_est(x))


def hellinger(m1, m2, x_range, quad_points: int = DEFAULT_QUAD_POINTS) -> float:
    """sqrt of the integral of (sqrt(m1) - sqrt(m2))**2; lies in [0, sqrt(2)]."""
    x = _nodes(x_range, quad_points)
    return hellinger_on_nodes(x, m1(x), m2(x))


def quadrature_range(centers, sds, pad: float = 8.0):
    """[min center - pad * max sd, max center + pad * max sd]."""
    c = np.atleast_1d(np.asarray(centers, dtype=float))
    s = float(np.max(sds))
    return float(c.min() - pad * s), float(c.max() + pad * s)


# -- dependence decay -------------------------------------------------------

@dataclass
class DependenceEstimate:
    lags: np.ndarray
    chi2: np.ndarray
    stderr: np.ndarray
    mc_size: int
    rho_hat: float = math.nan
    c0_hat: float = math.nan

    def rows(self):
        for lag, c, s in zip(self.lags, self.chi2, self.stderr):
            yield int(lag), float(c), float(s), self.rho_hat


class NoTractableConditional(ValueError):
    pass


def _conditional_structure(process: ProcessConfig, lag: int):
    """Split X_{i+lag} given the latent state at i into parts.

    Returns (dep_law, dep_weight, indep_law, v) where the conditional
    density is dep_weight * (dep_law conv N(c, v)) + (1 - dep_weight) *
    (indep_law conv N(0, 1)), with c ~ N(0, 1 - v) over latent histories.
    """
    p = process.params
    if process.kind == "ar1_mixture":
        r = float(p.get("r", 0.0))
        w = float(p.get("p", 0.3))
        mu2 = float(p.get("mu2", 2.5))
        v = 1.0 - r ** (2 * lag)
        return (ThetaLaw.points([0.0], [1.0]), w, ThetaLaw.points([mu2], [1.0]), v)
    if process.kind == "mean_mixture_ar1":
        r = float(p.get("r", 0.0))
        return theta_law_of(process), 1.0, None, 1.0 - r ** (2 * lag)
    if process.kind == "ma_q":
        psi = np.array([1.0] + [float(v) for v in p.get("psi", [])])
        s2 = ma_innovation_var(psi[1:])
        v = s2 * float(np.sum(psi[:lag] ** 2)) if lag < psi.size else 1.0
        w = float(p.get("p", 0.3))
        law = ThetaLaw.points([0.0, float(p.get("mu2", 2.5))], [w, 1.0 - w])
        return law, 1.0, None, min(v, 1.0)
    raise NoTractableConditional(f"no tractable conditional for process kind {process.kind!r}")


def dependence_coefficient(process: ProcessConfig, lag: int, mc_size: int = 100_000,
                           seed: int = 0, chunk: int = 2000):
    """Monte Carlo estimate of E[ chi^2( m(. | past) || m ) ] at ``lag``.

    Conditions on the latent Gaussian state of the process at time i, for
    which the conditional of X_{i+lag} is a Gaussian mixture; the inner
    integral is done by trapezoid quadrature. Returns (estimate, stderr).
    """
    if lag < 1:
        raise ValueError("lag must be >= 1")
    if mc_size < 1:
        raise ValueError("mc_size must be positive")
    dep, dep_w, indep, v = _conditional_structure(process, lag)
    if v >= 1.0 - 1e-15:
        return 0.0, 0.0
    full = dep if indep is None else ThetaLaw(
        tuple(dict(c, weight=c["weight"] * dep_w) for c in dep.components)
        + tuple(dict(c, weight=c["weight"] * (1 - dep_w)) for c in indep.components))
    rng = np.random.default_rng([int(seed), int(lag)])
    c = math.sqrt(1.0 - v) * rng.standard_normal(mc_size)

    lo, hi = full.support_bounds()
    h = min(math.sqrt(v), 1.0) / 8.0
    y = np.arange(lo - 9.0, hi + 9.0 + h, h)
    wq = _trapz_weights(y)
    m = full.convolved_pdf(y, 0.0, 1.0)
    base = np.zeros_like(y) if indep is None else (1 - dep_w) * indep.convolved_pdf(y, 0.0, 1.0)
    inv_m = wq / np.maximum(m, 1e-300)

    vals = np.empty(mc_size)
    for s in range(0, mc_size, chunk):
        cc = c[s:s + chunk, None]
        cond = base[None, :] + dep_w * dep.convolved_pdf(y[None, :], cc, v)
        vals[s:s + chunk] = (cond * cond) @ inv_m - 1.0
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(mc_size)) if mc_size > 1 else math.nan
    return max(est, 0.0), se


def fit_decay(lags, chi2, stderr, min_snr: float = 10.0):
    """Least-squares fit of log chi2 = 2 log c0 + 2 lag log rho on lags with chi2 > min_snr * stderr."""
    lags = np.asarray(lags, dtype=float)
    chi2 = np.asarray(chi2, dtype=float)
    stderr = np.asarray(stderr, dtype=float)
    use = (chi2 > min_snr * stderr) & (chi2 > 0)
    if use.sum() < 2:
        return math.nan, math.nan
    slope, icept = np.polyfit(lags[use], np.log(chi2[use]), 1)
    return math.exp(slope / 2.0), math.exp(icept / 2.0)


def dependence_profile(process: ProcessConfig, lags, mc_size: int = 100_000,
                       seed: int = 0) -> DependenceEstimate:
    lags = np.asarray(sorted(set(int(v) for v in lags)))
    est = [dependence_coefficient(process, int(lag), mc_size, seed) for lag in lags]
    chi2 = np.array([e[0] for e in est])
    se = np.array([e[1] for e in est])
    rho, c0 = fit_decay(lags, chi2, se)
    return DependenceEstimate(lags, chi2, se, mc_size, rho, c0)


# -- marginal-ratio envelope ------------------------------------------------

def a1_bound(kernel: Kernel, theta_h, a: float, b: float, c_u: float, x: float,
             covariate=None) -> float:
    """c_u * sum over pairs (k, l) in theta_h of p(x|k) b / (p(x|l) a)."""
    if not 0 < a < 1:
        raise ValueError("need 0 < a < 1")
    if not b > 1:
        raise ValueError("need b > 1")
    if not c_u >= 1:
        raise ValueError("need c_u >= 1")
    pts = np.asarray(theta_h, dtype=float)
    if pts.size == 0:
        raise ValueError("theta_h must be nonempty")
    if pts.ndim == 1:
        pts = pts[:, None] if kernel.theta_dim == 1 else pts[None, :]
    vals = kernel.pdf(float(x), pts, covariate)
    if np.any(vals <= 0):
        return INF_DIVERGENCE
    return float(c_u * (b / a) * vals.sum() * np.sum(1.0 / vals))


# -- empirical rates -------------------------------------------------------

@dataclass
class RateEstimate:
    gamma_slope: float
    intercept: float
    window: tuple
    r2: float
    points: int


def rate_fit(iters, values, window) -> RateEstimate:
    """Slope of log(values) against log(iters) over ``window = (n_lo, n_hi)``."""
    iters = np.asarray(iters, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = window
    if lo < 100:
        raise ValueError("rate window must start at n >= 100")
    if iters.size and (lo < iters.min() or hi > iters.max()):
        raise ValueError("rate window must lie within the recorded iterations")
    sel = (iters >= lo) & (iters <= hi) & np.isfinite(values)
    if sel.sum() < 10:
        raise ValueError("need at least 10 recorded points inside the window")
    y = values[sel]
    if np.any(y <= 0):
        raise ValueError("rate fit needs strictly positive values")
    lx, ly = np.log(iters[sel]), np.log(y)
    slope, icept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return RateEstimate(float(slope), float(icept), (lo, hi), r2, int(sel.sum()))


def trace_rate(trace, window) -> RateEstimate:
    return rate_fit(trace.iters, trace.K_n_star, window)
