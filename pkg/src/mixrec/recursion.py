"""Predictive recursion: step-size schedules, the per-observation update and
the full sequential fit with optional convergence tracing."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .kernels import KERNEL_FLOOR, Kernel, OutsideSupportError, explained
from .support import MixingDensity

_CHUNK_CELLS = 2_000_000  # max rows*atoms of likelihood materialized at once


@dataclass(frozen=True)
class WeightSchedule:
    """Step sizes ``w_i``: ``harmonic`` is 1/(i+1), ``power`` is c * i**-alpha."""

    kind: str = "harmonic"
    alpha: float = 1.0
    c: float = 0.5

    def __post_init__(self):
        if self.kind not in ("harmonic", "power"):
            raise ValueError(f"unknown schedule {self.kind!r}")
        if self.kind == "power":
            if not self.alpha > 0:
                raise ValueError("alpha must be positive")
            if not 0 < self.c <= 0.99:
                raise ValueError("power schedule needs 0 < c <= 0.99 so that w_1 < 1")
        else:
            object.__setattr__(self, "alpha", 1.0)

    @property
    def b1(self) -> bool:
        return 0.5 < self.alpha <= 1.0

    @property
    def b1_prime(self) -> bool:
        return 0.75 < self.alpha <= 1.0

    @property
    def a1(self) -> bool:
        # every residue class mod q of i**-alpha diverges iff the full series does;
        # square-summability needs alpha > 1/2
        return 0.5 < self.alpha <= 1.0

    def weights(self, start: int, stop: int) -> np.ndarray:
        """w_i for i = start, ..., stop - 1."""
        if start < 1:
            raise ValueError("iteration index must be >= 1")
        i = np.arange(start, stop, dtype=float)
        if self.kind == "harmonic":
            return 1.0 / (i + 1.0)
        return self.c * i ** (-self.alpha)

    def to_dict(self) -> dict:
        if self.kind == "harmonic":
            return {"kind": "harmonic"}
        return {"kind": "power", "alpha": self.alpha, "c": self.c}


def harmonic() -> WeightSchedule:
    return WeightSchedule("harmonic")


def power(alpha: float, c: float = 0.5) -> WeightSchedule:
    return WeightSchedule("power", alpha, c)


def weight(schedule: WeightSchedule, i: int) -> float:
    if i < 1:
        raise ValueError("iteration index must be >= 1")
    return float(schedule.weights(i, i + 1)[0])


@numba.njit(cache=True, nogil=True)
def _advance(masses, lik, weights):
    """Apply the update in place for each row of ``lik``; sequential and
    bit-reproducible. Returns the number of rows processed."""
    n, k = lik.shape
    for i in range(n):
        w = weights[i]
        m = 0.0
        for j in range(k):
            m += lik[i, j] * masses[j]
        if not m > 0.0:
            return i
        a = 1.0 - w
        b = w / m
        s = 0.0
        for j in range(k):
            v = masses[j] * (a + b * lik[i, j])
            masses[j] = v
            s += v
        for j in range(k):
            masses[j] /= s
    return n


def pr_step(f_prev: MixingDensity, x: float, w: float, kernel: Kernel,
            covariate=None) -> MixingDensity:
    """One recursion update of ``f_prev`` with observation ``x`` and step ``w``."""
    if not 0.0 <= w < 1.0:
        raise ValueError("step size must lie in [0, 1)")
    if not math.isfinite(x):
        raise ValueError(f"non-finite observation {x!r}")
    raw = kernel.pdf(float(x), f_prev.grid.atoms, covariate)
    if not explained(raw, f_prev.masses > 0):
        raise OutsideSupportError(x)
    masses = np.array(f_prev.masses)
    lik = np.maximum(raw, KERNEL_FLOOR)[None, :]
    if _advance(masses, lik, np.array([float(w)])) != 1:
        raise OutsideSupportError(x)
    return MixingDensity(f_prev.grid, masses)


def marginal_step_check(m_prev_at_xs, f_prev: MixingDensity, x_i: float, w: float,
                        kernel: Kernel, probes, covariate=None,
                        probe_covariate=None) -> np.ndarray:
    """Advance marginal values on ``probes`` by one step without touching f.

    ``m_prev_at_xs`` holds m_{i-1} at the probe points; the update multiplies
    each by 1 + w * (h(x) / (m_{i-1}(x) m_{i-1}(x_i)) - 1), where h(x) is the
    integral of p(x|theta) p(x_i|theta) against f_{i-1}.
    """
    m_prev = np.asarray(m_prev_at_xs, dtype=float)
    atoms = f_prev.grid.atoms
    lik_i = kernel.likelihood(float(x_i), atoms, covariate)
    m_xi = float(lik_i @ f_prev.masses)
    if not m_xi > 0:
        raise OutsideSupportError(x_i)
    probe_lik = kernel.likelihood(np.asarray(probes, dtype=float), atoms, probe_covariate)
    h = probe_lik @ (lik_i * f_prev.masses)
    return m_prev * (1.0 + w * (h / (m_prev * m_xi) - 1.0))


@dataclass
class FitTrace:
    """Snapshots of a fit at recorded iterations.

    ``masses`` holds only the atoms listed in ``atom_index``. Divergences are
    NaN when no ground truth was supplied.
    """

    iters: np.ndarray
    w: np.ndarray
    atom_index: np.ndarray
    masses: np.ndarray
    K_n: np.ndarray
    K_n_star: np.ndarray
    hellinger: np.ndarray
    checkpoints: dict = field(default_factory=dict)

    def __len__(self):
        return self.iters.size

    def at(self, n: int) -> int:
        return int(np.searchsorted(self.iters, n))


@dataclass
class Truth:
    """Ground truth for diagnostics inside a fit.

    ``f`` lives on the fitting grid (or is None); ``m`` is a vectorized
    callable for the true marginal on ``x_range``.
    """

    f: MixingDensity | None = None
    m: object = None
    x_range: tuple | None = None
    quad_points: int = 2000


def default_record_iters(n: int, stride: int | None = None) -> np.ndarray:
    if stride:
        it = np.arange(stride, n + 1, stride)
    else:
        step = math.ceil(n / 1000)
        it = np.union1d(np.arange(1, min(n, 100) + 1), np.arange(step, n + 1, step))
    return np.union1d(it, [n]).astype(np.int64)


class FitError(RuntimeError):
    def __init__(self, index, cause):
        self.index = index
        self.cause = cause
        super().__init__(f"fit failed at iteration {index}: {cause}")


def pr_fit(values, f0: MixingDensity, schedule: WeightSchedule, kernel: Kernel,
           covariates=None, *, stride: int | None = None, record_iters=None,
           trace_atoms=None, truth: Truth | None = None, checkpoints=()):
    """Run the recursion over ``values`` in order.

    Returns ``(f_n, trace)``. ``trace_atoms`` selects which atom masses are
    recorded (default: all atoms when there are at most 20, else none).
    ``checkpoints`` are iteration counts at which the full mass vector is kept.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("empty observation stream")
    if kernel.needs_covariate:
        if covariates is None:
            raise ValueError("covariate-indexed kernel needs covariates")
        t = np.asarray(covariates, dtype=float)
        if t.size != n:
            raise ValueError("covariates must align with values")
    else:
        t = None
    grid = f0.grid
    atoms = grid.atoms
    if trace_atoms is None:
        trace_atoms = np.arange(grid.size) if grid.size <= 20 else np.array([], int)
    trace_atoms = np.asarray(trace_atoms, dtype=np.int64)
    rec = default_record_iters(n, stride) if record_iters is None else \
        np.union1d(np.asarray(record_iters, dtype=np.int64), [n])
    rec = rec[(rec >= 1) & (rec <= n)]
    checkpoints = sorted({int(c) for c in checkpoints if 1 <= c <= n})
    stops = np.union1d(rec, checkpoints).astype(np.int64)

    diag = _Diagnostics(kernel, grid, truth) if truth is not None else None
    support = f0.masses > 0
    masses = np.array(f0.masses)
    rows = max(1, _CHUNK_CELLS // grid.size)

    out_w, out_m, out_k, out_ks, out_h = [], [], [], [], []
    saved = {}
    done = 0
    for stop in stops:
        while done < stop:
            hi = min(stop, done + rows)
            cov = None if t is None else t[done:hi]
            raw = kernel.pdf(x[done:hi], atoms, cov)
            ok = explained(raw, support)
            lik = np.maximum(raw, KERNEL_FLOOR, out=raw)
            ws = schedule.weights(done + 1, hi + 1)
            bad = np.flatnonzero(~ok)
            limit = bad[0] if bad.size else hi - done
            got = _advance(masses, lik[:limit], ws[:limit])
            if got < limit or bad.size:
                idx = done + got + 1
                raise FitError(idx, OutsideSupportError(float(x[idx - 1]), idx))
            done = hi
        if stop in checkpoints:
            saved[int(stop)] = masses.copy()
        if stop in rec:
            out_w.append(schedule.weights(int(stop), int(stop) + 1)[0])
            out_m.append(masses[trace_atoms].copy())
            if diag is None:
                out_k.append(np.nan), out_ks.append(np.nan), out_h.append(np.nan)
            else:
                k, ks, h = diag(masses)
                out_k.append(k), out_ks.append(ks), out_h.append(h)

    trace = FitTrace(
        iters=rec,
        w=np.array(out_w),
        atom_index=trace_atoms,
        masses=np.array(out_m).reshape(len(rec), trace_atoms.size),
        K_n=np.array(out_k),
        K_n_star=np.array(out_ks),
        hellinger=np.array(out_h),
        checkpoints=saved,
    )
    return MixingDensity(grid, masses), trace


class _Diagnostics:
    """Evaluates K_n, K_n* and Hellinger against ground truth on a fixed quadrature."""

    def __init__(self, kernel, grid, truth: Truth):
        from . import diagnostics

        self._dg = diagnostics
        self.f_true = truth.f
        self.nodes = None
        if truth.m is not None and not kernel.needs_covariate:
            lo, hi = truth.x_range
            self.nodes = np.linspace(lo, hi, truth.quad_points)
            self.m_true = np.asarray(truth.m(self.nodes), dtype=float)
            self.kx = kernel.likelihood(self.nodes, grid.atoms)

    def __call__(self, masses):
        k = np.nan
        if self.f_true is not None:
            k = self._dg.kl_masses(self.f_true.masses, masses)
        ks = h = np.nan
        if self.nodes is not None:
            m_est = self.kx @ masses
            ks = self._dg.kl_on_nodes(self.nodes, self.m_true, m_est)
            h = self._dg.hellinger_on_nodes(self.nodes, self.m_true, m_est)
        return k, ks, h
