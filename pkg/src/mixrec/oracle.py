"""Slow batch reference computations used to check the recursion.

Both routines are fixed-grid EM (multiplicative) iterations on the simplex:
the KL information projection of a known marginal onto a set of kernel
mixtures, and the nonparametric MLE of mixing weights from data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import KERNEL_FLOOR, Kernel
from .support import MixingDensity, SupportGrid, normalize, uniform_density

_MONOTONE_SLACK = 1e-12


class OracleError(ArithmeticError):
    pass


@dataclass
class ProjectionResult:
    f_tilde: MixingDensity
    k_tilde: float
    iterations: int
    converged: bool
    objective: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "k_tilde": self.k_tilde,
            "iterations": self.iterations,
            "converged": self.converged,
            "atoms": self.f_tilde.grid.atoms.tolist(),
            "masses": self.f_tilde.masses.tolist(),
        }


@dataclass(frozen=True)
class Quadrature:
    """x-nodes and positive weights; ``covariates`` averages the objective over times."""

    nodes: np.ndarray
    weights: np.ndarray
    covariates: np.ndarray | None = None

    @classmethod
    def trapezoid(cls, lo: float, hi: float, points: int = 2000, covariates=None):
        x = np.linspace(lo, hi, int(points))
        d = np.diff(x)
        w = np.zeros(x.size)
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
        cov = None if covariates is None else np.asarray(covariates, dtype=float)
        return cls(x, w, cov)


def _rel_change(new, old, floor=1e-12):
    # atoms whose mass has decayed below ``floor`` (the tolerance) no longer gate convergence
    live = old > floor
    if not live.any():
        return 0.0
    return float(np.max(np.abs(new[live] - old[live]) / old[live]))


def _check_monotone(history, label, increasing=False):
    a, b = history[-2], history[-1]
    slack = _MONOTONE_SLACK * max(1.0, abs(a))
    if (b < a - slack) if increasing else (b > a + slack):
        raise OracleError(f"{label} not monotone: {a!r} -> {b!r}")


def kl_projection(m_true, grid0: SupportGrid, kernel: Kernel, quad: Quadrature,
                  max_iter: int = 100_000, tol: float = 1e-9, start=None) -> ProjectionResult:
    """Minimize KL(m_true, sum_k p(.|theta_k) pi_k) over the simplex on ``grid0``.

    ``m_true`` is a vectorized callable; for covariate-indexed kernels it is
    called as ``m_true(x, t)`` and the objective is averaged over
    ``quad.covariates``. Each iteration rescales pi_k by the integral of
    m_true p(.|theta_k) / m_pi, which never increases the objective.
    """
    times = quad.covariates if kernel.needs_covariate else [None]
    if kernel.needs_covariate and times is None:
        raise ValueError("covariate-indexed kernel needs quad.covariates")
    blocks = []
    for t in times:
        mt = np.asarray(m_true(quad.nodes) if t is None else m_true(quad.nodes, t), dtype=float)
        wm = quad.weights * mt / len(times)
        live = wm > 0
        p = kernel.likelihood(quad.nodes[live], grid0.atoms,
                              None if t is None else np.full(live.sum(), t))
        blocks.append((wm[live], mt[live], p))
    total = sum(b[0].sum() for b in blocks)
    if not total > 0:
        raise OracleError("true marginal has no mass on the quadrature nodes")
    const = sum(float(wm @ np.log(mt)) for wm, mt, _ in blocks)

    pi = uniform_density(grid0).masses.copy() if start is None else \
        np.asarray(start.masses if isinstance(start, MixingDensity) else start, dtype=float).copy()

    def step(pi):
        grad = np.zeros(grid0.size)
        obj = const
        for wm, _, p in blocks:
            m_pi = p @ pi
            if np.any(m_pi <= 0):
                raise OracleError("projection objective is not finite (support mismatch)")
            obj -= float(wm @ np.log(m_pi))
            grad += (wm / m_pi) @ p
        return obj, grad / total

    history = []
    converged = False
    it = 0
    obj, grad = step(pi)
    history.append(obj)
    while it < max_iter:
        it += 1
        new = pi * grad
        new /= new.sum()
        change = _rel_change(new, pi, max(tol, 1e-12))
        pi = new
        obj, grad = step(pi)
        if not math.isfinite(obj):
            raise OracleError("projection objective is not finite")
        history.append(obj)
        _check_monotone(history, "projection objective")
        if change < tol:
            converged = True
            break
    f = normalize(pi, grid0)
    return ProjectionResult(f, max(obj, 0.0), it, converged, np.array(history))


def npmle_em(values, grid: SupportGrid, kernel: Kernel, covariates=None,
             max_iter: int = 10_000, tol: float = 1e-9, start=None,
             return_loglik: bool = False):
    """EM for mixing weights on a fixed grid: pi_k <- mean_i p(X_i|k) pi_k / m_pi(X_i)."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("no data")
    pmat = kernel.pdf(x, grid.atoms, covariates)
    pi = uniform_density(grid).masses.copy() if start is None else np.asarray(start, float).copy()
    lls = []
    for _ in range(max_iter):
        m = pmat @ pi
        if np.any(m <= 0):
            bad = int(np.flatnonzero(m <= 0)[0])
            raise OracleError(f"zero mixture likelihood at observation {bad + 1} (x={x[bad]!r})")
        lls.append(float(np.sum(np.log(m))))
        if len(lls) > 1:
            _check_monotone(lls, "EM log-likelihood", increasing=True)
        new = pi * (((1.0 / m) @ pmat) / x.size)
        new /= new.sum()
        change = _rel_change(new, pi, max(tol, 1e-12))
        pi = new
        if change < tol:
            break
    f = normalize(np.maximum(pi, 0.0), grid)
    return (f, np.array(lls)) if return_loglik else f


def mixture_pdf(kernel: Kernel, f: MixingDensity):
    """Vectorized marginal of ``f`` under ``kernel`` (non-covariate kernels)."""
    atoms = f.grid.atoms
    masses = f.masses

    def m(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.maximum(kernel.pdf(x, atoms), KERNEL_FLOOR) @ masses

    return m
