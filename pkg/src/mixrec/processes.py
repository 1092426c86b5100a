"""Seeded simulators for dependent sequences whose marginal is a known mixture.

Every simulator returns an :class:`ObservationStream` whose ``meta`` carries
the process description and the true mixing law, so fits on simulated data
can be scored against ground truth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, signal, special, stats

from .support import MixingDensity, SupportGrid, normalize

GP_JITTER = 1e-10
GP_MAX_N = 5000
KINDS = ("ar1_mixture", "mean_mixture_ar1", "ma_q", "gp_drift")


def _ncdf(z):
    return special.ndtr(z)


def _npdf(x, mu, var):
    return np.exp(-0.5 * (x - mu) ** 2 / var) / np.sqrt(2.0 * np.pi * var)


@dataclass(frozen=True)
class ThetaLaw:
    """Finite mixture of point masses and truncated normals on the parameter space.

    Each component is a dict: ``{"type": "point", "at": a, "weight": w}`` or
    ``{"type": "truncnorm", "mu", "sigma2", "lo", "hi", "weight"}``. Point
    components may be 2D (``"at": [a, b]``).
    """

    components: tuple

    def __post_init__(self):
        comps = tuple(dict(c) for c in self.components)
        if not comps:
            raise ValueError("empty mixing law")
        for c in comps:
            c.setdefault("weight", 1.0)
            if c["type"] == "truncnorm":
                if not (math.isfinite(c["lo"]) and math.isfinite(c["hi"]) and c["lo"] < c["hi"]):
                    raise ValueError("truncation bounds must be finite with lo < hi")
                if not c["sigma2"] > 0:
                    raise ValueError("truncnorm variance must be positive")
            elif c["type"] != "point":
                raise ValueError(f"unknown component type {c['type']!r}")
            if c["weight"] < 0:
                raise ValueError("component weights must be nonnegative")
        total = sum(c["weight"] for c in comps)
        if abs(total - 1.0) > 1e-9:
            raise ValueError("mixture probabilities must sum to 1")
        object.__setattr__(self, "components", comps)

    @classmethod
    def points(cls, atoms, weights):
        return cls(tuple({"type": "point", "at": a, "weight": float(w)}
                         for a, w in zip(atoms, weights)))

    @classmethod
    def truncnorm(cls, mu, sigma2, lo, hi):
        return cls(({"type": "truncnorm", "mu": mu, "sigma2": sigma2, "lo": lo, "hi": hi,
                     "weight": 1.0},))

    @property
    def dim(self) -> int:
        return int(np.size(self.components[0].get("at", 0.0)))

    def to_list(self) -> list:
        return [dict(c) for c in self.components]

    def support_bounds(self):
        lo = min(np.min(c["at"]) if c["type"] == "point" else c["lo"] for c in self.components)
        hi = max(np.max(c["at"]) if c["type"] == "point" else c["hi"] for c in self.components)
        return float(lo), float(hi)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        w = np.array([c["weight"] for c in self.components])
        idx = rng.choice(len(w), size=n, p=w / w.sum())
        out = np.empty(n)
        for j, c in enumerate(self.components):
            sel = idx == j
            k = int(sel.sum())
            if c["type"] == "point":
                out[sel] = float(c["at"])
            elif k:
                s = math.sqrt(c["sigma2"])
                a, b = (c["lo"] - c["mu"]) / s, (c["hi"] - c["mu"]) / s
                out[sel] = stats.truncnorm.rvs(a, b, loc=c["mu"], scale=s, size=k,
                                               random_state=rng)
        return out

    def convolved_pdf(self, y, shift=0.0, var=1.0) -> np.ndarray:
        """Density of theta + N(shift, var) at ``y`` (1D laws only).

        ``y`` and ``shift`` broadcast against each other.
        """
        y = np.asarray(y, dtype=float) - shift
        out = np.zeros(np.broadcast(y, np.zeros(1)).shape)
        for c in self.components:
            if c["type"] == "point":
                out = out + c["weight"] * _npdf(y, float(c["at"]), var)
                continue
            mu, s2, lo, hi = c["mu"], c["sigma2"], c["lo"], c["hi"]
            s = math.sqrt(s2)
            z = _ncdf((hi - mu) / s) - _ncdf((lo - mu) / s)
            post_mean = (mu * var + y * s2) / (s2 + var)
            post_sd = math.sqrt(s2 * var / (s2 + var))
            inside = _ncdf((hi - post_mean) / post_sd) - _ncdf((lo - post_mean) / post_sd)
            out = out + c["weight"] * _npdf(y, mu, s2 + var) * inside / z
        return out

    def cdf(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = np.zeros(v.shape)
        for c in self.components:
            if c["type"] == "point":
                out = out + c["weight"] * (v >= float(c["at"]))
            else:
                s = math.sqrt(c["sigma2"])
                a = _ncdf((c["lo"] - c["mu"]) / s)
                b = _ncdf((c["hi"] - c["mu"]) / s)
                cl = np.clip(v, c["lo"], c["hi"])
                out = out + c["weight"] * (_ncdf((cl - c["mu"]) / s) - a) / (b - a)
        return out

    def discretize(self, grid: SupportGrid) -> MixingDensity:
        """Masses on ``grid``: point masses go to the nearest atom, continuous
        parts are integrated over the Voronoi cell of each atom."""
        masses = np.zeros(grid.size)
        cont = [c for c in self.components if c["type"] == "truncnorm"]
        for c in self.components:
            if c["type"] == "point":
                masses[grid.nearest(c["at"])] += c["weight"]
        if cont:
            if grid.dim != 1:
                raise ValueError("continuous laws are discretized on 1D grids only")
            a = grid.atoms[:, 0]
            edges = np.concatenate([[-np.inf], 0.5 * (a[1:] + a[:-1]), [np.inf]])
            for c in cont:
                sub = ThetaLaw(({**c, "weight": 1.0},))
                masses += c["weight"] * np.diff(sub.cdf(edges))
        return normalize(masses, grid)

    def within(self, grid: SupportGrid, tol: float = 1e-9) -> bool:
        """Whether every component lies inside the grid's bounds."""
        for c in self.components:
            if c["type"] == "point":
                p = np.atleast_1d(c["at"])
                if len(p) != grid.dim:
                    return False
                if not all(lo - tol <= v <= hi + tol for v, (lo, hi) in zip(p, grid.bounds)):
                    return False
            else:
                if grid.dim != 1:
                    return False
                lo, hi = grid.bounds[0]
                if c["lo"] < lo - tol or c["hi"] > hi + tol:
                    return False
        return True


def law_from_list(items) -> ThetaLaw:
    return ThetaLaw(tuple(items))


@dataclass(frozen=True)
class ObservationStream:
    values: np.ndarray
    covariates: np.ndarray | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)
    latent: dict | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("observations must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.covariates is not None:
            t = np.asarray(self.covariates, dtype=float).reshape(-1)
            if t.size != v.size:
                raise ValueError("covariates must have the same length as values")
            if t.size > 1 and not np.all(np.diff(t) > 0):
                raise ValueError("covariates must be strictly increasing")
            t.setflags(write=False)
            object.__setattr__(self, "covariates", t)

    def __len__(self):
        return self.values.size

    @property
    def theta_law(self) -> ThetaLaw | None:
        items = self.meta.get("theta_law")
        return None if items is None else law_from_list(items)

    def true_mixing(self, grid: SupportGrid) -> MixingDensity | None:
        """Truth discretized to ``grid``; None when the truth is not representable there."""
        law = self.theta_law
        if law is None or law.dim != grid.dim or not law.within(grid):
            return None
        return law.discretize(grid)

    def true_marginal(self):
        """Vectorized true marginal density of X_i, or None for covariate-indexed data."""
        law = self.theta_law
        if law is None or law.dim != 1:
            return None
        var = float(self.meta.get("noise_var", 1.0))
        return lambda x: law.convolved_pdf(x, 0.0, var)

    def marginal_range(self, pad_sd: float = 8.0):
        law = self.theta_law
        lo, hi = law.support_bounds()
        sd = math.sqrt(float(self.meta.get("noise_var", 1.0)))
        return lo - pad_sd * sd, hi + pad_sd * sd


@dataclass(frozen=True)
class ProcessConfig:
    """Process kind, length and kind-specific parameters."""

    kind: str
    n: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown process kind {self.kind!r}; expected one of {KINDS}")
        if int(self.n) < 1:
            raise ValueError("n must be >= 1")
        p = dict(self.params)
        if self.kind in ("ar1_mixture", "mean_mixture_ar1"):
            r = float(p.get("r", 0.0))
            if not -1.0 < r < 1.0:
                raise ValueError("AR coefficient must satisfy |r| < 1")
        if self.kind == "ma_q" and len(p.get("psi", ())) + 1 < 1:
            raise ValueError("q must be >= 1")
        if "p" in p and not 0.0 <= float(p["p"]) <= 1.0:
            raise ValueError("mixture probability must lie in [0, 1]")
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "n", int(self.n))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, **self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessConfig":
        d = dict(d)
        return cls(d.pop("kind"), d.pop("n", 1000), d)


def _ar1(rng: np.random.Generator, r: float, n: int) -> np.ndarray:
    """Stationary AR(1) with N(0, 1) marginal started from its stationary law."""
    e = rng.standard_normal(n)
    e[1:] *= math.sqrt(1.0 - r * r)
    return signal.lfilter([1.0], [1.0, -r], e)


def simulate_ar1_mixture(p: float, r: float, mu2: float, n: int, seed: int) -> ObservationStream:
    """X_i is AR(1) (mean 0) with probability ``p``, else iid N(mu2, 1)."""
    if not -1.0 < r < 1.0:
        raise ValueError("AR coefficient must satisfy |r| < 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    ind = rng.random(n) < p
    ar = _ar1(rng, r, n)
    other = mu2 + rng.standard_normal(n)
    x = np.where(ind, ar, other)
    law = ThetaLaw.points([0.0, float(mu2)], [p, 1.0 - p])
    meta = {"kind": "ar1_mixture", "params": {"p": p, "r": r, "mu2": mu2, "n": n},
            "seed": seed, "noise_var": 1.0, "theta_law": law.to_list()}
    return ObservationStream(x, None, seed, meta,
                             latent={"indicator": ind, "ar": ar, "other": other})


def simulate_mean_mixture_ar1(theta_law: ThetaLaw, r: float, n: int, seed: int) -> ObservationStream:
    """X_i = theta_i + Z_i with theta_i iid from ``theta_law`` and Z stationary AR(1)."""
    if not -1.0 < r < 1.0:
        raise ValueError("AR coefficient must satisfy |r| < 1")
    if not isinstance(theta_law, ThetaLaw):
        theta_law = law_from_list(theta_law)
    rng = np.random.default_rng(seed)
    theta = theta_law.sample(rng, n)
    z = _ar1(rng, r, n)
    meta = {"kind": "mean_mixture_ar1",
            "params": {"r": r, "n": n, "theta_law": theta_law.to_list()},
            "seed": seed, "noise_var": 1.0, "theta_law": theta_law.to_list()}
    return ObservationStream(theta + z, None, seed, meta, latent={"theta": theta, "ar": z})


def ma_innovation_var(psi) -> float:
    return 1.0 / (1.0 + float(np.sum(np.square(psi))))


def simulate_ma(psi, p: float, mu2: float, n: int, seed: int) -> ObservationStream:
    """MA(q-1) noise with unit marginal variance plus an iid two-point shift.

    The shift is 0 with probability ``p`` and ``mu2`` otherwise, so X_i and
    X_{i+h} are independent for h >= q = len(psi) + 1.
    """
    psi = [float(v) for v in psi]
    q = len(psi) + 1
    rng = np.random.default_rng(seed)
    s = math.sqrt(ma_innovation_var(psi))
    e = s * rng.standard_normal(n + q - 1)
    ma = signal.lfilter([1.0] + psi, [1.0], e)[q - 1:]
    shift = np.where(rng.random(n) < p, 0.0, mu2)
    law = ThetaLaw.points([0.0, float(mu2)], [p, 1.0 - p])
    meta = {"kind": "ma_q", "params": {"psi": psi, "q": q, "p": p, "mu2": mu2, "n": n},
            "seed": seed, "noise_var": 1.0, "theta_law": law.to_list()}
    return ObservationStream(ma + shift, None, seed, meta, latent={"ma": ma, "shift": shift})


def gp_covariance(times, amplitude: float = 0.1, length_scale2: float = 10.0) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    return amplitude * np.exp(-np.subtract.outer(t, t) ** 2 / length_scale2)


def sample_gp(rng: np.random.Generator, times, mean: float = 0.0, amplitude: float = 0.1,
              length_scale2: float = 10.0) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    z = rng.standard_normal(t.size)
    if amplitude == 0:
        return np.full(t.size, float(mean))
    cov = gp_covariance(t, amplitude, length_scale2)
    cov[np.diag_indices_from(cov)] += GP_JITTER
    try:
        root = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        vals, vecs = linalg.eigh(cov)
        root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    return mean + root @ z


def simulate_gp_drift(mode: str = "two_point_shift", n: int = 1000, seed: int = 0, *,
                      gp_mean: float = -1.0, amplitude: float = 0.1,
                      length_scale2: float = 10.0, shift: float = 3.0,
                      alpha: float = 5.0, beta: float = 2.0, p: float = 0.3,
                      time_scale: float = 100.0, times=None) -> ObservationStream:
    """Latent GP path plus a Bernoulli(``p``) switched mean.

    ``two_point_shift`` adds ``shift`` when switched on; ``linear_drift`` adds
    alpha + beta * t / time_scale instead.
    """
    if mode not in ("two_point_shift", "linear_drift"):
        raise ValueError(f"unknown gp_drift mode {mode!r}")
    t = np.arange(1.0, n + 1.0) if times is None else np.asarray(times, dtype=float)
    if t.size > 1 and not np.all(np.diff(t) > 0):
        raise ValueError("observation times must be strictly increasing")
    if t.size > GP_MAX_N:
        raise ValueError(f"dense GP sampling is limited to n <= {GP_MAX_N}")
    n = t.size
    rng = np.random.default_rng(seed)
    path = sample_gp(rng, t, gp_mean, amplitude, length_scale2)
    on = rng.random(n) < p
    if mode == "two_point_shift":
        x = path + on * shift
        law = ThetaLaw.points([gp_mean, gp_mean + shift], [1.0 - p, p])
    else:
        x = path + on * (alpha + beta * t / time_scale)
        law = ThetaLaw.points([[gp_mean, 0.0], [gp_mean + alpha, beta]], [1.0 - p, p])
    params = {"mode": mode, "gp_mean": gp_mean, "amplitude": amplitude,
              "length_scale2": length_scale2, "shift": shift, "alpha": alpha,
              "beta": beta, "p": p, "time_scale": time_scale, "n": n}
    meta = {"kind": "gp_drift", "mode": mode, "params": params, "seed": seed,
            "noise_var": amplitude, "theta_law": law.to_list()}
    return ObservationStream(x, t, seed, meta, latent={"gp": path, "switch": on})


def simulate(config: ProcessConfig, seed: int) -> ObservationStream:
    """Dispatch on ``config.kind``."""
    p, n = config.params, config.n
    if config.kind == "ar1_mixture":
        return simulate_ar1_mixture(float(p.get("p", 0.3)), float(p.get("r", 0.0)),
                                    float(p.get("mu2", 2.5)), n, seed)
    if config.kind == "mean_mixture_ar1":
        law = p.get("theta_law", [{"type": "truncnorm", "mu": 0.0, "sigma2": 1.0,
                                   "lo": -3.0, "hi": 3.0, "weight": 1.0}])
        return simulate_mean_mixture_ar1(law_from_list(law), float(p.get("r", 0.0)), n, seed)
    if config.kind == "ma_q":
        return simulate_ma(p.get("psi", []), float(p.get("p", 0.3)),
                           float(p.get("mu2", 2.5)), n, seed)
    kw = {k: v for k, v in p.items() if k != "mode"}
    return simulate_gp_drift(p.get("mode", "two_point_shift"), n, seed, **kw)


def theta_law_of(config: ProcessConfig) -> ThetaLaw:
    """True mixing law implied by ``config`` without simulating."""
    p = config.params
    if config.kind in ("ar1_mixture", "ma_q"):
        w = float(p.get("p", 0.3))
        return ThetaLaw.points([0.0, float(p.get("mu2", 2.5))], [w, 1.0 - w])
    if config.kind == "mean_mixture_ar1":
        return law_from_list(p.get("theta_law", [{"type": "truncnorm", "mu": 0.0,
                                                  "sigma2": 1.0, "lo": -3.0, "hi": 3.0}]))
    return law_from_list(simulate_gp_drift(p.get("mode", "two_point_shift"), 2, 0,
                                           **{k: v for k, v in p.items()
                                              if k not in ("mode", "n")}).meta["theta_law"])
