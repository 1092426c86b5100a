"""Command-line entry point: ``mixrec {simulate,fit,diagnose,oracle,reproduce,run}``.

Settings resolve as flags > --config file > preset defaults. Exit status is
0 on success, 2 for configuration errors and 3 for numeric failures.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, experiment, io, oracle
from .experiment import ConfigError, ExperimentError
from .kernels import OutsideSupportError
from .processes import ProcessConfig, simulate
from .recursion import FitError, pr_fit
from .support import DegenerateDensityError, parse_grid

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
_NUMERIC = (ExperimentError, FitError, OutsideSupportError, DegenerateDensityError,
            oracle.OracleError, diagnostics.QuadratureError, ArithmeticError,
            np.linalg.LinAlgError)


def _param(text: str):
    key, sep, val = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key, json.loads(val)
    except json.JSONDecodeError:
        return key, val


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON experiment config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--threads", type=int)
    p.add_argument("--grid", help='"lo:hi:K", "lo1:hi1:K1,lo2:hi2:K2" or "{a,b,...}"')
    p.add_argument("--kernel", choices=["gaussian", "drift"])
    p.add_argument("--sigma2", type=float)
    p.add_argument("--time-scale", type=float)
    p.add_argument("--schedule", choices=["harmonic", "power"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--c", type=float, help="power-schedule scale (default 0.5)")
    p.add_argument("--n", type=int)
    p.add_argument("--process", help="process kind (simulate/run/diagnose)")
    p.add_argument("--param", type=_param, action="append", default=[],
                   help="process parameter KEY=VALUE (JSON value), repeatable")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mixrec", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated stream")
    _common(p)

    p = sub.add_parser("fit", help="run the recursion on a stream CSV")
    _common(p)
    p.add_argument("--stream", type=Path, required=True)
    p.add_argument("--stride", type=int)

    p = sub.add_parser("diagnose", help="rate fit of a trace, or dependence profile of a process")
    _common(p)
    p.add_argument("--trace", type=Path)
    p.add_argument("--window", type=int, nargs=2, metavar=("LO", "HI"))
    p.add_argument("--lags", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    p.add_argument("--mc-size", type=int, default=100_000)

    p = sub.add_parser("oracle", help="batch reference fits")
    _common(p)
    p.add_argument("--method", choices=["npmle", "projection"], default="npmle")
    p.add_argument("--stream", type=Path)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--quad-points", type=int, default=2000)

    p = sub.add_parser("reproduce", help="run a named example preset")
    _common(p)
    p.add_argument("example", help=", ".join(experiment.PRESETS))

    p = sub.add_parser("run", help="run a full experiment config")
    _common(p)
    return ap


def _threads(args) -> int:
    return args.threads if args.threads else experiment.env_threads()


def _merged(args, base: dict | None = None) -> dict:
    """Preset/base dict, overlaid by the config file, overlaid by flags."""
    cfg = dict(base or {})
    if args.config is not None:
        try:
            cfg.update(io.read_json(args.config))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    proc = dict(cfg.get("process", {}))
    if args.process:
        proc["kind"] = args.process
    proc.update(dict(args.param))
    if args.n is not None:
        proc["n"] = args.n
        cfg.pop("n", None)
    if proc:
        cfg["process"] = proc
    kern = cfg.get("kernel", {})
    kern = {"kind": kern} if isinstance(kern, str) else dict(kern)
    for key, val in (("kind", args.kernel), ("sigma2", args.sigma2),
                     ("time_scale", args.time_scale)):
        if val is not None:
            kern[key] = val
    if kern:
        cfg["kernel"] = kern
    sched = cfg.get("schedule")
    sched = {"kind": sched} if isinstance(sched, str) else dict(sched or {})
    if args.schedule:
        sched["kind"] = args.schedule
    if args.alpha is not None:
        sched.setdefault("kind", "power")
        sched["alpha"] = args.alpha
    if args.c is not None:
        sched["c"] = args.c
    cfg.pop("alpha", None)
    if sched:
        cfg["schedule"] = sched
    if args.grid:
        cfg["grid"] = args.grid
    if args.seed is not None:
        cfg["seeds"] = [args.seed]
    if args.out is not None:
        cfg["out"] = str(args.out)
    return cfg


def _process(cfg: dict) -> ProcessConfig:
    if "process" not in cfg or "kind" not in cfg["process"]:
        raise ConfigError("no process given (use --process or a config 'process' block)")
    proc = dict(cfg["process"])
    if "n" in cfg:
        proc["n"] = cfg["n"]
    try:
        return ProcessConfig.from_dict(proc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _seed(cfg: dict) -> int:
    seeds = cfg.get("seeds", [cfg.get("seed", 0)])
    return int(seeds[0] if isinstance(seeds, list) else 0)


def _out(cfg: dict) -> Path:
    if not cfg.get("out"):
        raise ConfigError("--out is required")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _grid(cfg):
    if "grid" not in cfg:
        raise ConfigError("--grid is required")
    try:
        return parse_grid(cfg["grid"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_simulate(args) -> int:
    cfg = _merged(args)
    stream = simulate(_process(cfg), _seed(cfg))
    out = _out(cfg)
    files = [io.write_stream(out / "stream.csv", stream),
             io.write_stream_meta(out / "stream_meta.json", stream)]
    io.write_manifest(out, files)
    print(f"wrote {len(stream)} observations to {out / 'stream.csv'}")
    return EXIT_OK


def _meta_beside(path: Path):
    meta = path.with_name(path.stem + "_meta.json")
    return meta if meta.exists() else None


def cmd_fit(args) -> int:
    cfg = _merged(args)
    grid = _grid(cfg)
    kernel = experiment.kernel_from(cfg.get("kernel", "gaussian"))
    schedule = experiment.schedule_from(cfg.get("schedule"))
    try:
        stream = io.read_stream(args.stream, _meta_beside(args.stream))
    except (OSError, KeyError) as exc:
        raise ConfigError(f"cannot read stream {args.stream}: {exc}") from None
    f0 = experiment.initial_density(cfg.get("f0", "uniform"), grid)
    f, trace = pr_fit(stream.values, f0, schedule, kernel,
                      stream.covariates if kernel.needs_covariate else None,
                      stride=args.stride or cfg.get("stride"),
                      truth=experiment.truth_for(stream, grid, kernel) if stream.meta else None)
    out = _out(cfg)
    files = [io.write_trace(out / "trace.csv", trace, grid), io.write_density(out / "density.csv", f)]
    io.write_manifest(out, files)
    print(f"fit {len(stream)} observations on {grid.size} atoms; wrote {out}")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cfg = _merged(args)
    if args.trace is not None:
        tr = io.read_trace(args.trace)
        iters = tr["iter"]
        window = tuple(args.window) if args.window else (max(100, int(iters[-1]) // 100),
                                                         int(iters[-1]))
        rf = diagnostics.rate_fit(iters, tr["K_n_star"], window)
        result = {"slope": rf.gamma_slope, "intercept": rf.intercept, "r2": rf.r2,
                  "window": list(rf.window), "points": rf.points}
        if cfg.get("out"):
            io.write_json(_out(cfg) / "rate.json", result)
        print(json.dumps(io._clean(result), sort_keys=True))
        return EXIT_OK
    try:
        est = diagnostics.dependence_profile(_process(cfg), args.lags, args.mc_size, _seed(cfg))
    except diagnostics.NoTractableConditional as exc:
        raise ConfigError(str(exc)) from None
    if cfg.get("out"):
        out = _out(cfg)
        io.write_manifest(out, [io.write_dependence(out / "dependence.csv", est)])
    for lag, c, s, _ in est.rows():
        print(f"lag {lag}: chi2 = {c:.6g} (se {s:.2g})")
    print(f"rho_hat = {est.rho_hat:.4f}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _merged(args)
    grid = _grid(cfg)
    kernel = experiment.kernel_from(cfg.get("kernel", "gaussian"))
    out = _out(cfg)
    if args.method == "npmle":
        if args.stream is None:
            raise ConfigError("--stream is required for --method npmle")
        stream = io.read_stream(args.stream)
        f = oracle.npmle_em(stream.values, grid, kernel,
                            stream.covariates if kernel.needs_covariate else None,
                            max_iter=args.max_iter or 10_000, tol=args.tol)
        files = [io.write_density(out / "npmle_density.csv", f)]
    else:
        cfg["oracle"] = {"grid": cfg["grid"], "tol": args.tol, "quad_points": args.quad_points,
                         "max_iter": args.max_iter or 100_000}
        proc = _process(cfg)
        # a short stream supplies the truth metadata and time range
        stream = simulate(proc, _seed(cfg))
        conf = experiment.ExperimentConfig(proc, kernel, cfg["grid"], oracle=cfg["oracle"])
        files = [experiment._run_oracle(conf, grid, stream, out)]
    io.write_manifest(out, files)
    print(f"wrote {files[0]}")
    return EXIT_OK


def cmd_reproduce(args) -> int:
    overrides = {}
    cfg = _merged(args)
    if args.n is not None:
        overrides["n"] = args.n
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    if args.grid:
        overrides["grid"] = args.grid
    if "schedule" in cfg:
        overrides["schedule"] = cfg["schedule"]
    for key in ("seeds", "f0", "stride"):
        if key in cfg and key not in overrides:
            overrides[key] = cfg[key]
    out = Path(cfg.get("out") or f"runs/{args.example}")
    manifest = experiment.reproduce(args.example, out, overrides, _threads(args))
    print(f"{args.example}: {len(manifest['files'])} files under {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _merged(args)
    conf = experiment.ExperimentConfig.from_dict(cfg)
    manifest = experiment.run_experiment(conf, _threads(args))
    print(f"{len(manifest['files'])} files under {conf.out}")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "diagnose": cmd_diagnose,
            "oracle": cmd_oracle, "reproduce": cmd_reproduce, "run": cmd_run}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except _NUMERIC as exc:
        print(f"mixrec: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"mixrec: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
