"""Independent reference computations used only by the tests.

None of these share code with the package: they use plain numpy/scipy
quadrature or brute force.
"""
import math

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import integrate, stats


def chi2_bivariate_normal(rho):
    """Closed form of the chi^2 dependence between two standard normals."""
    return rho ** 2 / (1.0 - rho ** 2)


def chi2_gauss_hermite(rho, nodes=120):
    """E_x[ int q(y|x)^2 / phi(y) dy ] - 1 for q = N(rho x, 1 - rho^2), by 2D Gauss-Hermite.

    The outer expectation is over x ~ N(0,1); the inner integral is written
    as E_{y~q}[q(y)/phi(y)] and both are done with probabilists' nodes.
    """
    z, w = hermegauss(nodes)
    w = w / w.sum()
    s = math.sqrt(1.0 - rho ** 2)
    x = z[:, None]
    y = rho * x + s * z[None, :]
    ratio = np.exp(-0.5 * z[None, :] ** 2 + 0.5 * y ** 2) / s
    return float(w @ ratio @ w) - 1.0


def pr_update_reference(masses, lik, w):
    """Textbook predictive recursion update, one step, in plain Python."""
    m = sum(p * f for p, f in zip(lik, masses))
    return [(1 - w) * f + w * p * f / m for p, f in zip(lik, masses)]


def gauss_mixture_pdf(x, atoms, masses, var=1.0):
    x = np.asarray(x, dtype=float)[..., None]
    return np.sum(np.asarray(masses) * stats.norm.pdf(x, np.asarray(atoms), math.sqrt(var)), axis=-1)


def kl_quad(p, q, lo, hi):
    """KL(p || q) for 1D densities by adaptive quadrature."""
    def g(x):
        px = p(x)
        return 0.0 if px <= 0 else px * math.log(px / q(x))
    return integrate.quad(g, lo, hi, limit=400)[0]


def projection_grid_search(mu_true, lo, hi, var=1.0, fine=601, coarse=25, steps=21):
    """Brute-force min over single atoms on a fine grid and two-atom mixtures on a coarse one.

    Returns (best objective, best atoms, best weights) for
    KL(N(mu_true, var) || sum_k pi_k N(theta_k, var)) with theta_k in [lo, hi].
    """
    xs = np.linspace(mu_true - 10, mu_true + 10, 4001)
    dx = xs[1] - xs[0]
    p = stats.norm.pdf(xs, mu_true, math.sqrt(var))

    def kl(atoms, wts):
        q = gauss_mixture_pdf(xs, atoms, wts, var)
        return float(np.sum(p * (np.log(p) - np.log(q))) * dx)

    best = (math.inf, None, None)
    for t in np.linspace(lo, hi, fine):
        v = kl([t], [1.0])
        if v < best[0]:
            best = (v, (t,), (1.0,))
    grid = np.linspace(lo, hi, coarse)
    for i, a in enumerate(grid):
        for b in grid[i + 1:]:
            for pw in np.linspace(0.05, 0.95, steps - 2):
                v = kl([a, b], [pw, 1 - pw])
                if v < best[0]:
                    best = (v, (a, b), (pw, 1 - pw))
    return best
