"""Simulate -> fit -> summarize pipelines and the named example presets.

Every run writes into its own directory and finishes with a
``manifest.json`` listing each output file with its SHA-256, so reruns can be
compared byte for byte.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics, io, oracle
from .kernels import Kernel
from .processes import ObservationStream, ProcessConfig, law_from_list, simulate
from .recursion import FitError, Truth, WeightSchedule, pr_fit
from .support import MixingDensity, normalize, parse_grid, uniform_density

DEFAULT_CHECKPOINTS = (100, 500, 1000, 2000, 5000)


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    def __init__(self, stage, seed, index, cause):
        self.stage, self.seed, self.index, self.cause = stage, seed, index, cause
        at = "" if index is None else f", iteration {index}"
        super().__init__(f"stage {stage!r} failed (seed {seed}{at}): {cause}")


def env_threads(default: int = 1) -> int:
    try:
        return max(1, int(os.environ.get("MIXREC_THREADS", default)))
    except ValueError:
        return default


def kernel_from(spec) -> Kernel:
    if isinstance(spec, Kernel):
        return spec
    if isinstance(spec, str):
        spec = {"kind": spec}
    spec = dict(spec)
    kind = spec.pop("kind", "gaussian")
    try:
        return Kernel(kind, float(spec.get("sigma2", 1.0 if kind.startswith("gauss") else 0.1)),
                      float(spec.get("time_scale", 100.0)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad kernel spec: {exc}") from None


def schedule_from(spec) -> WeightSchedule:
    if isinstance(spec, WeightSchedule):
        return spec
    if spec is None:
        return WeightSchedule("harmonic")
    if isinstance(spec, str):
        spec = {"kind": spec}
    try:
        return WeightSchedule(spec.get("kind", "harmonic"), float(spec.get("alpha", 1.0)),
                              float(spec.get("c", 0.5)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad schedule spec: {exc}") from None


@dataclass
class ExperimentConfig:
    process: ProcessConfig
    kernel: Kernel
    grid: str
    schedule: WeightSchedule = field(default_factory=WeightSchedule)
    seeds: list = field(default_factory=lambda: [0])
    out: str | None = None
    f0: object = "uniform"
    stride: int | None = None
    checkpoints: tuple = ()
    trace_atoms: list | None = None
    oracle: dict | None = None

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        try:
            parse_grid(self.grid)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.kernel.theta_dim != parse_grid(self.grid).dim:
            raise ConfigError("grid dimension does not match the kernel")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        try:
            proc = dict(d.pop("process"))
            if "n" in d:
                proc["n"] = d.pop("n")
            process = ProcessConfig.from_dict(proc)
            seeds = d.pop("seeds", None)
            if seeds is None:
                seeds = [d.pop("seed", 0)]
            elif isinstance(seeds, int):
                seeds = list(range(seeds))
            d.pop("seed", None)
            sched = d.pop("schedule", None)
            if "alpha" in d:
                sched = {"kind": "power", **({} if not isinstance(sched, dict) else sched),
                         "alpha": d.pop("alpha")}
            return cls(process=process, kernel=kernel_from(d.pop("kernel", "gaussian")),
                       grid=str(d.pop("grid")), schedule=schedule_from(sched),
                       seeds=[int(s) for s in seeds], out=d.pop("out", None),
                       f0=d.pop("f0", "uniform"), stride=d.pop("stride", None),
                       checkpoints=tuple(d.pop("checkpoints", ())),
                       trace_atoms=d.pop("trace_atoms", None), oracle=d.pop("oracle", None))
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid experiment config: {exc!r}") from None

    def to_dict(self) -> dict:
        return {"process": self.process.to_dict(), "kernel": self.kernel.to_dict(),
                "grid": self.grid, "schedule": self.schedule.to_dict(), "seeds": self.seeds,
                "f0": self.f0, "stride": self.stride, "checkpoints": list(self.checkpoints),
                "oracle": self.oracle}


def load_config(path) -> ExperimentConfig:
    try:
        return ExperimentConfig.from_dict(io.read_json(path))
    except (OSError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def initial_density(spec, grid) -> MixingDensity:
    if spec in (None, "uniform"):
        return uniform_density(grid)
    try:
        return normalize(spec, grid)
    except ValueError as exc:
        raise ConfigError(f"bad f0: {exc}") from None


def truth_for(stream: ObservationStream, grid, kernel: Kernel):
    f_true = stream.true_mixing(grid)
    m_true = None if kernel.needs_covariate else stream.true_marginal()
    if f_true is None and m_true is None:
        return None
    return Truth(f_true, m_true, stream.marginal_range() if m_true is not None else None)


def marginal_given_time(law_items, noise_var: float, time_scale: float):
    """m(x | t) for point-mass laws over (intercept, slope)."""
    pts = np.array([np.atleast_1d(c["at"]) for c in law_items], dtype=float)
    w = np.array([c["weight"] for c in law_items])

    def m(x, t):
        mu = pts[:, 0] + (pts[:, 1] * t / time_scale if pts.shape[1] > 1 else 0.0)
        x = np.asarray(x, dtype=float)[:, None]
        return (np.exp(-0.5 * (x - mu) ** 2 / noise_var) / math.sqrt(2 * math.pi * noise_var)) @ w

    return m


@dataclass
class SeedResult:
    seed: int
    stream: ObservationStream
    f: MixingDensity
    trace: object


@dataclass
class RunResult:
    config: ExperimentConfig
    grid: object
    seeds: list
    files: list
    summary: dict


def _mark_failed(out: Path, err: ExperimentError):
    io.write_json(out / ".failed", {"stage": err.stage, "seed": err.seed,
                                     "iteration": err.index, "error": str(err.cause)})


def _summary(config, grid, results, report_fn):
    masses = np.array([r.f.masses for r in results])
    summ = {"config": config.to_dict(), "seeds": [r.seed for r in results],
            "meta": [r.stream.meta for r in results]}
    if grid.dim == 1 and grid.size <= 1000:
        summ["atoms"] = grid.atoms[:, 0]
        summ["mass_mean"] = masses.mean(axis=0)
        summ["mass_sd"] = masses.std(axis=0, ddof=1) if len(results) > 1 else np.zeros(grid.size)
    else:
        summ["axis_marginals"] = []
        for j in range(grid.dim):
            vals = [MixingDensity(grid, m).marginal_along(j) for m in masses]
            summ["axis_marginals"].append({"values": vals[0][0],
                                           "mass_mean": np.mean([v[1] for v in vals], axis=0)})
    traces = [r.trace for r in results]
    summ["rate"] = None
    ks = np.array([t.K_n_star for t in traces])
    if np.all(np.isfinite(ks)):
        pooled = ks.mean(axis=0)
        iters = traces[0].iters
        lo = max(100, int(iters[-1]) // 100)
        try:
            rf = diagnostics.rate_fit(iters, pooled, (lo, int(iters[-1])))
            summ["rate"] = {"slope": rf.gamma_slope, "r2": rf.r2, "window": list(rf.window),
                            "points": rf.points}
        except ValueError:
            pass
    if report_fn is not None:
        summ["report"] = report_fn(grid, results)
    return summ


def execute(config: ExperimentConfig, threads: int = 1, report_fn=None) -> RunResult:
    """Run every seed of ``config``; files go to ``config.out``."""
    if config.out is None:
        raise ConfigError("config has no output directory")
    out = Path(config.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {exc}") from None
    (out / ".failed").unlink(missing_ok=True)
    grid = parse_grid(config.grid)
    f0 = initial_density(config.f0, grid)

    def one(seed):
        stage = "simulate"
        try:
            stream = simulate(config.process, seed)
            files = [io.write_stream(out / f"stream_seed{seed}.csv", stream)]
            stage = "fit"
            f, trace = pr_fit(stream.values, f0, config.schedule, config.kernel,
                              stream.covariates, stride=config.stride,
                              trace_atoms=config.trace_atoms,
                              truth=truth_for(stream, grid, config.kernel),
                              checkpoints=config.checkpoints)
            stage = "write"
            files.append(io.write_trace(out / f"trace_seed{seed}.csv", trace, grid))
            files.append(io.write_density(out / f"density_seed{seed}.csv", f))
            if trace.checkpoints:
                files.append(io.write_plot_data(out / f"plot_seed{seed}.csv", grid,
                                                trace.checkpoints))
        except FitError as exc:
            raise ExperimentError(stage, seed, exc.index, exc.cause) from exc
        except ExperimentError:
            raise
        except Exception as exc:  # noqa: BLE001 - re-raised with stage context
            raise ExperimentError(stage, seed, None, exc) from exc
        return SeedResult(seed, stream, f, trace), files

    try:
        if threads > 1 and len(config.seeds) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                done = list(pool.map(one, config.seeds))
        else:
            done = [one(s) for s in config.seeds]
        results = [d[0] for d in done]
        files = [p for d in done for p in d[1]]
        summ = _summary(config, grid, results, report_fn)
        if config.oracle:
            files.append(_run_oracle(config, grid, results[0].stream, out))
        files.append(io.write_json(out / "summary.json", summ))
    except ExperimentError as err:
        _mark_failed(out, err)
        raise
    except oracle.OracleError as exc:
        err = ExperimentError("oracle", config.seeds[0], None, exc)
        _mark_failed(out, err)
        raise err from exc
    return RunResult(config, grid, results, files, summ)


def _run_oracle(config, grid, stream, out: Path) -> Path:
    spec = config.oracle
    grid0 = parse_grid(spec.get("grid", config.grid))
    points = int(spec.get("quad_points", 2000))
    kernel = config.kernel
    if kernel.needs_covariate:
        t = stream.covariates
        times = np.linspace(t[0], t[-1], int(spec.get("times", 20)))
        m_true = marginal_given_time(stream.meta["theta_law"], float(stream.meta["noise_var"]),
                                     kernel.time_scale)
        means = [np.array([np.atleast_1d(c["at"])[0] + np.atleast_1d(c["at"])[-1] * tt
                           / kernel.time_scale for c in stream.meta["theta_law"]])
                 for tt in times]
        atoms_lo = min(grid0.atoms[:, 0].min() + grid0.atoms[:, 1].min() * times.max()
                       / kernel.time_scale, min(m.min() for m in means))
        atoms_hi = max(grid0.atoms[:, 0].max() + grid0.atoms[:, 1].max() * times.max()
                       / kernel.time_scale, max(m.max() for m in means))
        lo, hi = atoms_lo - 8 * kernel.sd, atoms_hi + 8 * kernel.sd
        quad = oracle.Quadrature.trapezoid(lo, hi, points, times)
    else:
        m_true = stream.true_marginal()
        lo, hi = stream.marginal_range()
        quad = oracle.Quadrature.trapezoid(lo, hi, points)
    res = oracle.kl_projection(m_true, grid0, kernel, quad,
                               int(spec.get("max_iter", 100_000)), float(spec.get("tol", 1e-9)))
    return io.write_json(out / "projection.json", res.to_dict())


def run_experiment(config: ExperimentConfig, threads: int = 1, report_fn=None) -> dict:
    """Run the pipeline and return the manifest (also written to ``manifest.json``)."""
    res = execute(config, threads, report_fn)
    return io.write_manifest(config.out, res.files)


# -- presets -----------------------------------------------------------------

EX1_RS = (0.3, 0.7, 0.99, 0.999)
EX3_LAW = [{"type": "point", "at": 0.0, "weight": 0.5},
           {"type": "truncnorm", "mu": 4.0, "sigma2": 1.0, "lo": -8.0, "hi": 8.0, "weight": 0.5}]
EX2_LAW = [{"type": "truncnorm", "mu": 0.0, "sigma2": 1.0, "lo": -3.0, "hi": 3.0, "weight": 1.0}]
PRESETS = ("ex1", "ex2", "ex3", "ex4a", "ex4b", "ex4b_misspec", "ma_q")


def local_modes(values, masses, top: int = 2):
    """Locations of the ``top`` highest local maxima, sorted by location."""
    m = np.asarray(masses, dtype=float)
    padded = np.concatenate([[-np.inf], m, [-np.inf]])
    peak = (padded[1:-1] >= padded[:-2]) & (padded[1:-1] > padded[2:])
    idx = np.flatnonzero(peak)
    idx = idx[np.argsort(-m[idx], kind="stable")][:top]
    return sorted(float(values[i]) for i in idx)


def _mass_at_report(point, label):
    def report(grid, results):
        k = grid.nearest(point)
        vals = [float(r.f.masses[k]) for r in results]
        return {label: vals, "mean": float(np.mean(vals))}
    return report


def _ex3_report(grid, results):
    a = grid.atoms[:, 0]
    near = (a > -0.5) & (a < 0.5)
    out = {}
    for r in results:
        cps = {int(n): float(m[near].sum()) for n, m in r.trace.checkpoints.items()}
        second = (a >= 1.5)
        k = np.flatnonzero(second)[np.argmax(r.f.masses[second])]
        out[str(r.seed)] = {"mass_near_zero_by_n": cps,
                            "mass_near_zero": float(r.f.masses[near].sum()),
                            "second_mode": float(a[k]),
                            "mass_2.5_5.5": float(r.f.masses[(a >= 2.5) & (a <= 5.5)].sum())}
    return out


def _ex2_report(grid, results):
    a = grid.atoms[:, 0]
    law = law_from_list(EX2_LAW)
    truth = law.discretize(grid)
    return {str(r.seed): {"l1_to_truth": float(np.abs(r.f.masses - truth.masses).sum()),
                          "mean": float(a @ r.f.masses)} for r in results}


def _drift_report(grid, results):
    out = {}
    for r in results:
        ia, ma = r.f.marginal_along(0)
        ib, mb = r.f.marginal_along(1)
        out[str(r.seed)] = {"intercept_modes": local_modes(ia, ma),
                            "slope_modes": local_modes(ib, mb)}
    return out


def preset_runs(example_id: str, overrides: dict | None = None):
    """(name, config dict, report_fn) triples for a named example."""
    if example_id not in PRESETS:
        raise ConfigError(f"unknown example {example_id!r}; valid ids: {', '.join(PRESETS)}")
    ov = dict(overrides or {})
    runs = []
    if example_id == "ex1":
        for r in ov.pop("rs", EX1_RS):
            runs.append((f"r{r}", {
                "process": {"kind": "ar1_mixture", "p": 0.3, "r": r, "mu2": 2.5, "n": 5000},
                "kernel": {"kind": "gaussian", "sigma2": 1.0}, "grid": "{0,2.5}",
                "f0": [0.7, 0.3], "seeds": list(range(10))}, _mass_at_report(0.0, "mass_at_0")))
    elif example_id == "ex2":
        runs.append(("ex2", {
            "process": {"kind": "mean_mixture_ar1", "r": 0.7, "theta_law": EX2_LAW, "n": 2000},
            "kernel": {"kind": "gaussian", "sigma2": 1.0}, "grid": "-3:3:200",
            "checkpoints": [1000, 2000]}, _ex2_report))
    elif example_id == "ex3":
        runs.append(("ex3", {
            "process": {"kind": "mean_mixture_ar1", "r": 0.7, "theta_law": EX3_LAW, "n": 5000},
            "kernel": {"kind": "gaussian", "sigma2": 1.0}, "grid": "-8:8:200",
            "checkpoints": [500, 1000, 5000]}, _ex3_report))
    elif example_id == "ex4a":
        proc = {"kind": "gp_drift", "mode": "two_point_shift", "gp_mean": -1.0, "shift": 3.0,
                "p": 0.3, "amplitude": 0.1, "length_scale2": 10.0, "n": 1000}
        runs.append(("known_support", {"process": proc, "grid": "{-1,2}",
                                       "kernel": {"kind": "gaussian", "sigma2": 0.1}},
                     _mass_at_report(-1.0, "mass_at_-1")))
        runs.append(("uniform_support", {"process": dict(proc), "grid": "-3:3:200",
                                         "kernel": {"kind": "gaussian", "sigma2": 0.1},
                                         "checkpoints": list(DEFAULT_CHECKPOINTS)},
                     lambda g, res: {str(r.seed): {"modes": local_modes(g.atoms[:, 0],
                                                                         r.f.masses)}
                                     for r in res}))
    else:
        if example_id == "ma_q":
            runs.append(("ma_q", {
                "process": {"kind": "ma_q", "psi": [0.5, 0.25], "p": 0.3, "mu2": 2.5,
                            "n": 100_000},
                "kernel": {"kind": "gaussian", "sigma2": 1.0}, "grid": "{0,2.5}",
                "seeds": list(range(10))}, _mass_at_report(0.0, "mass_at_0")))
        else:
            grid = "-6:6:200,-6:6:200" if example_id == "ex4b" else "-3:3:200,-6:6:200"
            runs.append((example_id, {
                "process": {"kind": "gp_drift", "mode": "linear_drift", "gp_mean": 0.0,
                            "alpha": 5.0, "beta": 2.0, "p": 0.3, "amplitude": 0.1,
                            "length_scale2": 10.0, "time_scale": 100.0, "n": 1000},
                "kernel": {"kind": "drift", "sigma2": 0.1, "time_scale": 100.0},
                "grid": grid, "checkpoints": [1000]}, _drift_report))
    for _, cfg, _ in runs:
        cfg.setdefault("checkpoints", [])
        if "n" in ov:
            cfg["process"]["n"] = int(ov["n"])
            cfg["checkpoints"] = [c for c in cfg["checkpoints"] if c <= int(ov["n"])] or \
                ([int(ov["n"])] if cfg["checkpoints"] else [])
        for key in ("seeds", "grid", "schedule", "f0", "stride"):
            if key in ov:
                cfg[key] = ov[key]
        if "alpha" in ov:
            cfg["schedule"] = {"kind": "power", "alpha": float(ov["alpha"]),
                               "c": float(ov.get("c", 0.5))}
    return runs


def reproduce(example_id: str, out, overrides: dict | None = None, threads: int = 1) -> dict:
    """Run a named example preset into ``out`` and return its manifest."""
    out = Path(out)
    files, report = [], {}
    results = {}
    for name, cfg, report_fn in preset_runs(example_id, overrides):
        cfg = dict(cfg, out=str(out / name))
        res = execute(ExperimentConfig.from_dict(cfg), threads, report_fn)
        results[name] = res
        files.extend(res.files)
        report[name] = res.summary.get("report")
    if example_id == "ex1":
        files.append(_ex1_paths(out, results))
        report["mean_abs_error"] = {name: float(np.mean([abs(r.f.masses[0] - 0.3)
                                                         for r in res.seeds]))
                                    for name, res in results.items()}
    files.append(io.write_json(out / "report.json", {"example": example_id, "report": report}))
    return io.write_manifest(out, files, {"example": example_id})


def _ex1_paths(out: Path, results) -> Path:
    """Trajectory of the mass at 0: first seed plus across-seed mean and sd."""
    rows = []
    for name, res in results.items():
        r = float(name[1:])
        m = np.array([s.trace.masses[:, 0] for s in res.seeds])
        sd = m.std(axis=0, ddof=1) if m.shape[0] > 1 else np.zeros(m.shape[1])
        for j, it in enumerate(res.seeds[0].trace.iters):
            rows.append([r, int(it), float(m[0, j]), float(m[:, j].mean()), float(sd[j])])
    return io.write_table(out / "ex1_paths.csv", ["r", "iter", "first_seed", "mean", "sd"], rows)
