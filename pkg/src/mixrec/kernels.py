"""Gaussian mixture kernels p(x | theta) and the induced marginal density."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .support import MixingDensity

KERNEL_FLOOR = 1e-300
_KINDS = ("gaussian_location", "linear_drift_gaussian")
_ALIASES = {"gaussian": "gaussian_location", "drift": "linear_drift_gaussian"}


class OutsideSupportError(ValueError):
    """Raised when no atom of the mixing density explains an observation."""

    def __init__(self, x, index=None):
        self.x = x
        self.index = index
        where = "" if index is None else f" at iteration {index}"
        super().__init__(f"observation outside model support{where}: x={x!r}")


@dataclass(frozen=True)
class Kernel:
    kind: str = "gaussian_location"
    sigma2: float = 1.0
    time_scale: float = 100.0

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in _KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if not (self.sigma2 > 0 and math.isfinite(self.sigma2)):
            raise ValueError("sigma2 must be positive and finite")
        if kind == "linear_drift_gaussian" and not self.time_scale > 0:
            raise ValueError("time_scale must be positive")

    @property
    def needs_covariate(self) -> bool:
        return self.kind == "linear_drift_gaussian"

    @property
    def theta_dim(self) -> int:
        return 2 if self.needs_covariate else 1

    @property
    def sd(self) -> float:
        return math.sqrt(self.sigma2)

    def means(self, atoms, covariate=None) -> np.ndarray:
        """Location of p(.|theta) for each row of ``atoms``."""
        atoms = np.asarray(atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if self.needs_covariate:
            if covariate is None:
                raise ValueError("linear_drift_gaussian kernel requires a covariate t")
            if atoms.shape[1] != 2:
                raise ValueError("drift kernel needs 2D atoms (intercept, slope)")
            return atoms[:, 0] + atoms[:, 1] * (float(covariate) / self.time_scale)
        if atoms.shape[1] != 1:
            raise ValueError("gaussian_location kernel needs 1D atoms")
        return atoms[:, 0]

    def pdf(self, x, atoms, covariate=None) -> np.ndarray:
        """Raw kernel values p(x | atom_k); ``x`` scalar or 1D array.

        For array ``x`` the result has shape (len(x), K). The covariate may be
        an array aligned with ``x``.
        """
        x = np.asarray(x, dtype=float)
        norm = 1.0 / math.sqrt(2.0 * math.pi * self.sigma2)
        if x.ndim == 0:
            mu = self.means(atoms, covariate)
            return norm * np.exp(-0.5 * (float(x) - mu) ** 2 / self.sigma2)
        atoms = np.asarray(atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if self.needs_covariate:
            if covariate is None:
                raise ValueError("linear_drift_gaussian kernel requires a covariate t")
            t = np.broadcast_to(np.asarray(covariate, dtype=float), x.shape)
            mu = atoms[None, :, 0] + atoms[None, :, 1] * (t[:, None] / self.time_scale)
        else:
            mu = self.means(atoms)[None, :]
        return norm * np.exp(-0.5 * (x[:, None] - mu) ** 2 / self.sigma2)

    def likelihood(self, x, atoms, covariate=None) -> np.ndarray:
        """Kernel values floored at ``KERNEL_FLOOR`` (safe to divide by)."""
        return np.maximum(self.pdf(x, atoms, covariate), KERNEL_FLOOR)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "sigma2": self.sigma2}
        if self.needs_covariate:
            d["time_scale"] = self.time_scale
        return d


def gaussian(sigma2: float = 1.0) -> Kernel:
    return Kernel("gaussian_location", sigma2)


def drift(sigma2: float = 0.1, time_scale: float = 100.0) -> Kernel:
    return Kernel("linear_drift_gaussian", sigma2, time_scale)


def _check_finite(x, theta):
    if not np.all(np.isfinite(np.asarray(x, dtype=float))):
        raise ValueError(f"non-finite observation {x!r}")
    if not np.all(np.isfinite(np.asarray(theta, dtype=float))):
        raise ValueError(f"non-finite parameter {theta!r}")


def eval(kernel: Kernel, x: float, theta, covariate=None) -> float:  # noqa: A001
    """p(x | theta) for a single parameter point."""
    _check_finite(x, theta)
    if kernel.needs_covariate and covariate is None:
        raise ValueError("linear_drift_gaussian kernel requires a covariate t")
    atom = np.atleast_1d(np.asarray(theta, dtype=float))[None, :]
    return float(kernel.pdf(float(x), atom, covariate)[0])


def explained(raw: np.ndarray, support_mask: np.ndarray) -> np.ndarray:
    """Whether some atom with positive mass has a kernel value above the floor.

    ``raw`` is (n, K) or (K,); returns a boolean per observation.
    """
    return np.any(raw[..., support_mask] >= KERNEL_FLOOR, axis=-1)


def marginal(kernel: Kernel, f: MixingDensity, x: float, covariate=None) -> float:
    """m_f(x) = sum_k p(x | atom_k) mass_k."""
    _check_finite(x, 0.0)
    raw = kernel.pdf(float(x), f.grid.atoms, covariate)
    if not explained(raw, f.masses > 0):
        raise OutsideSupportError(x)
    return float(np.dot(np.maximum(raw, KERNEL_FLOOR), f.masses))


def marginal_curve(kernel: Kernel, f: MixingDensity, xs, covariate=None) -> np.ndarray:
    """Vectorized marginal over many x (no support check, floor applied)."""
    xs = np.asarray(xs, dtype=float)
    out = np.empty(xs.size)
    step = max(1, 4_000_000 // f.grid.size)
    for s in range(0, xs.size, step):
        cov = covariate
        if covariate is not None and np.ndim(covariate):
            cov = np.asarray(covariate)[s:s + step]
        out[s:s + step] = kernel.likelihood(xs[s:s + step], f.grid.atoms, cov) @ f.masses
    return out
