"""CSV/JSON persistence with deterministic float formatting."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .processes import ObservationStream
from .support import MixingDensity, SupportGrid


def fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) else (str(v) if math.isinf(v) else v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _write_rows(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def write_stream(path, stream: ObservationStream) -> Path:
    t = stream.covariates
    rows = ((i + 1, "" if t is None else fmt(t[i]), fmt(x)) for i, x in enumerate(stream.values))
    return _write_rows(path, ["i", "t", "x"], rows)


def write_stream_meta(path, stream: ObservationStream) -> Path:
    return write_json(path, stream.meta)


def read_stream(path, meta_path=None) -> ObservationStream:
    vals, ts = [], []
    with Path(path).open() as fh:
        for row in csv.DictReader(fh):
            vals.append(float(row["x"]))
            ts.append(row["t"])
    cov = None
    if ts and all(t != "" for t in ts):
        cov = np.array([float(t) for t in ts])
    meta = read_json(meta_path) if meta_path else {}
    return ObservationStream(np.array(vals), cov, meta.get("seed"), meta)


def atom_label(atom) -> str:
    return "_".join(f"{float(v):g}" for v in np.atleast_1d(atom))


def write_trace(path, trace, grid: SupportGrid) -> Path:
    header = ["iter", "w"] + [f"mass_{atom_label(grid.atoms[k])}" for k in trace.atom_index] \
        + ["K_n", "K_n_star", "hellinger"]
    rows = []
    for j, it in enumerate(trace.iters):
        rows.append([int(it), fmt(trace.w[j])] + [fmt(v) for v in trace.masses[j]]
                    + [fmt(trace.K_n[j]), fmt(trace.K_n_star[j]), fmt(trace.hellinger[j])])
    return _write_rows(path, header, rows)


def read_trace(path) -> dict:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for key in rows[0].keys() if rows else []:
        out[key] = np.array([float(r[key]) if r[key] != "" else np.nan for r in rows])
    return out


def _theta_header(grid):
    return [f"theta_{j + 1}" for j in range(grid.dim)]


def write_density(path, f: MixingDensity) -> Path:
    dens = f.density
    rows = ([fmt(v) for v in f.grid.atoms[k]] + [fmt(f.masses[k]), fmt(dens[k])]
            for k in range(f.grid.size))
    return _write_rows(path, _theta_header(f.grid) + ["mass", "density"], rows)


def read_density(path) -> tuple:
    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    keys = [k for k in rows[0] if k.startswith("theta_")]
    atoms = np.array([[float(r[k]) for k in keys] for r in rows])
    masses = np.array([float(r["mass"]) for r in rows])
    return atoms, masses


def write_plot_data(path, grid: SupportGrid, checkpoints: dict) -> Path:
    """Long-format grid vs. density at each recorded checkpoint n."""
    qw = grid.quad_weights

    def rows():
        for n in sorted(checkpoints):
            m = checkpoints[n]
            for k in range(grid.size):
                yield [int(n)] + [fmt(v) for v in grid.atoms[k]] + [fmt(m[k]), fmt(m[k] / qw[k])]

    return _write_rows(path, ["n"] + _theta_header(grid) + ["mass", "density"], rows())


def write_dependence(path, est) -> Path:
    rows = ([lag, fmt(c), fmt(s), fmt(rho)] for lag, c, s, rho in est.rows())
    return _write_rows(path, ["lag", "chi2", "stderr", "rho_hat"], rows)


def write_table(path, header, rows) -> Path:
    return _write_rows(path, header, ([fmt(v) if isinstance(v, float) else v for v in r]
                                      for r in rows))


def sha256(path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out_dir, files, extra=None) -> dict:
    out_dir = Path(out_dir)
    entries = []
    for p in sorted({Path(f).resolve() for f in files}):
        entries.append({"path": str(p.relative_to(out_dir.resolve())), "sha256": sha256(p),
                        "bytes": p.stat().st_size})
    manifest = {"files": entries, **(extra or {})}
    write_json(out_dir / "manifest.json", manifest)
    return manifest
