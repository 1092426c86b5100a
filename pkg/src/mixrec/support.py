"""Parameter grids and probability masses on them.

A :class:`SupportGrid` is a finite set of atoms in R^1 or R^2 together with a
quadrature weight per atom. A :class:`MixingDensity` stores probability masses
(not density values) on such a grid; density values are recovered by dividing
by the quadrature weights.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MASS_TOL = 1e-12
_SUM_EXACT = 1e-13
DEFAULT_ATOMS = 200


class DegenerateDensityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SupportGrid:
    atoms: np.ndarray  # shape (K, d)
    quad_weights: np.ndarray  # shape (K,)
    bounds: tuple  # ((lo, hi),) * d

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        qw = np.array(self.quad_weights, dtype=float).reshape(-1)
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        if atoms.shape[0] == 0:
            raise ValueError("empty grid")
        if atoms.shape[1] not in (1, 2) or len(bounds) != atoms.shape[1]:
            raise ValueError("grid dimension must be 1 or 2 and match bounds")
        if qw.shape[0] != atoms.shape[0]:
            raise ValueError("one quadrature weight per atom required")
        if not np.all(qw > 0):
            raise ValueError("quadrature weights must be positive")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        for j, (lo, hi) in enumerate(bounds):
            if lo > hi or np.any(atoms[:, j] < lo) or np.any(atoms[:, j] > hi):
                raise ValueError("atoms must lie within bounds")
        # strictly increasing in lexicographic order
        if atoms.shape[0] > 1:
            prev, nxt = atoms[:-1], atoms[1:]
            if atoms.shape[1] == 1:
                ok = nxt[:, 0] > prev[:, 0]
            else:
                ok = (nxt[:, 0] > prev[:, 0]) | (
                    (nxt[:, 0] == prev[:, 0]) & (nxt[:, 1] > prev[:, 1]))
            if not np.all(ok):
                raise ValueError("atoms must be strictly increasing (lexicographic)")
        atoms.setflags(write=False)
        qw.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "quad_weights", qw)
        object.__setattr__(self, "bounds", bounds)

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    def __len__(self):
        return self.size

    def nearest(self, point) -> int:
        """Index of the atom closest (Euclidean) to ``point``."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        return int(np.argmin(np.sum((self.atoms - p) ** 2, axis=1)))

    def contains(self, point) -> bool:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        return all(lo <= v <= hi for v, (lo, hi) in zip(p, self.bounds))

    def axis(self, j: int = 0) -> np.ndarray:
        """Distinct coordinate values along dimension ``j``."""
        return np.unique(self.atoms[:, j])

    def spec(self) -> str:
        return getattr(self, "_spec", "")


def _axis(lo, hi, k):
    lo, hi, k = float(lo), float(hi), int(k)
    if k < 1:
        raise ValueError("need at least one atom per dimension")
    if k == 1:
        return np.array([0.5 * (lo + hi)]), hi - lo if hi > lo else 1.0
    if not hi > lo:
        raise ValueError("grid bounds must satisfy lo < hi")
    return np.linspace(lo, hi, k), (hi - lo) / (k - 1)


def uniform_grid(lo: float, hi: float, k: int = DEFAULT_ATOMS) -> SupportGrid:
    """Equally spaced 1D grid including both endpoints."""
    pts, h = _axis(lo, hi, k)
    return SupportGrid(pts, np.full(pts.size, h), ((lo, hi),))


def product_grid(lo1, hi1, k1, lo2, hi2, k2) -> SupportGrid:
    """2D tensor grid; atoms ordered with the first coordinate varying slowest."""
    a, h1 = _axis(lo1, hi1, k1)
    b, h2 = _axis(lo2, hi2, k2)
    aa, bb = np.meshgrid(a, b, indexing="ij")
    atoms = np.column_stack([aa.ravel(), bb.ravel()])
    return SupportGrid(atoms, np.full(atoms.shape[0], h1 * h2),
                       ((lo1, hi1), (lo2, hi2)))


def discrete_grid(points) -> SupportGrid:
    """Finite support with unit quadrature weights (masses equal densities)."""
    pts = np.array(points, dtype=float)
    if pts.ndim == 1:
        pts = np.sort(pts)[:, None]
    else:
        pts = pts[np.lexsort(pts.T[::-1])]
    bounds = tuple((pts[:, j].min(), pts[:, j].max()) for j in range(pts.shape[1]))
    return SupportGrid(pts, np.ones(pts.shape[0]), bounds)


def parse_grid(spec: str) -> SupportGrid:
    """Parse ``"lo:hi:K"``, ``"lo1:hi1:K1,lo2:hi2:K2"`` or ``"{a,b,...}"``.

    The brace form lists 1D atoms explicitly; ``{a;b|c;d}`` lists 2D atoms.
    """
    s = spec.strip()
    try:
        if s.startswith("{") and s.endswith("}"):
            body = s[1:-1]
            if ";" in body:
                pts = [[float(v) for v in p.split(";")] for p in body.split("|")]
            else:
                pts = [float(v) for v in body.split(",")]
            grid = discrete_grid(pts)
        else:
            parts = [p.split(":") for p in s.split(",")]
            if any(len(p) != 3 for p in parts) or len(parts) not in (1, 2):
                raise ValueError
            if len(parts) == 1:
                lo, hi, k = parts[0]
                grid = uniform_grid(float(lo), float(hi), int(k))
            else:
                (lo1, hi1, k1), (lo2, hi2, k2) = parts
                grid = product_grid(float(lo1), float(hi1), int(k1),
                                    float(lo2), float(hi2), int(k2))
    except ValueError as exc:
        raise ValueError(f"bad grid spec {spec!r}: {exc}") from None
    object.__setattr__(grid, "_spec", s)
    return grid


@dataclass(frozen=True, eq=False)
class MixingDensity:
    grid: SupportGrid
    masses: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.masses, dtype=float).reshape(-1)
        if m.shape[0] != self.grid.size:
            raise ValueError("masses must have one entry per grid atom")
        if not np.all(m >= 0):
            raise ValueError("masses must be nonnegative")
        if abs(m.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"masses sum to {m.sum()!r}, not 1")
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    @property
    def density(self) -> np.ndarray:
        return self.masses / self.grid.quad_weights

    def mass_where(self, mask) -> float:
        return float(self.masses[np.asarray(mask)].sum())

    def mass_near(self, point, radius: float) -> float:
        """Total mass on atoms within ``radius`` of ``point``."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        d = np.sqrt(np.sum((self.grid.atoms - p) ** 2, axis=1))
        return float(self.masses[d <= radius].sum())

    def marginal_along(self, j: int):
        """(axis values, masses) of the marginal on coordinate ``j``."""
        vals, inv = np.unique(self.grid.atoms[:, j], return_inverse=True)
        return vals, np.bincount(inv, weights=self.masses, minlength=vals.size)


def normalize(raw_masses, grid: SupportGrid) -> MixingDensity:
    raw = np.asarray(raw_masses, dtype=float).reshape(-1)
    if raw.shape[0] != grid.size:
        raise ValueError("raw masses must have one entry per grid atom")
    if np.any(raw < 0) or not np.all(np.isfinite(raw)):
        raise DegenerateDensityError("degenerate density: negative or non-finite mass")
    total = raw.sum()
    if not total > 0:
        raise DegenerateDensityError("degenerate density: all masses zero")
    if abs(total - 1.0) <= _SUM_EXACT:
        # already normalized up to rounding: returning it unchanged keeps normalize idempotent
        return MixingDensity(grid, raw)
    m = raw / total
    return MixingDensity(grid, m)


def uniform_density(grid: SupportGrid) -> MixingDensity:
    return MixingDensity(grid, np.full(grid.size, 1.0 / grid.size))


def density_from_values(values, grid: SupportGrid) -> MixingDensity:
    """Build masses from density values evaluated at the atoms."""
    return normalize(np.asarray(values, dtype=float) * grid.quad_weights, grid)
