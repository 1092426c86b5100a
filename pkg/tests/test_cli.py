import json

import numpy as np
import pytest

from mixrec import cli, experiment, io
from mixrec.experiment import ConfigError, ExperimentConfig, ExperimentError, run_experiment

MINIMAL = {"process": {"kind": "ar1_mixture", "r": 0.0, "n": 100}, "grid": "{0,2.5}"}


def hashes(manifest):
    return {f["path"]: f["sha256"] for f in manifest["files"]}


def test_minimal_run_has_four_files(tmp_path):
    m = run_experiment(ExperimentConfig.from_dict({**MINIMAL, "out": str(tmp_path)}))
    assert sorted(hashes(m)) == ["density_seed0.csv", "stream_seed0.csv", "summary.json",
                                 "trace_seed0.csv"]
    for f in m["files"]:
        assert io.sha256(tmp_path / f["path"]) == f["sha256"]


def test_rerun_and_threads_are_byte_identical(tmp_path):
    cfg = {**MINIMAL, "process": {**MINIMAL["process"], "r": 0.7, "n": 2000},
           "seeds": [0, 1, 2, 3]}
    a = run_experiment(ExperimentConfig.from_dict({**cfg, "out": str(tmp_path / "a")}))
    b = run_experiment(ExperimentConfig.from_dict({**cfg, "out": str(tmp_path / "b")}), threads=3)
    assert hashes(a) == hashes(b)


def test_summary_contents(tmp_path):
    cfg = {**MINIMAL, "process": {**MINIMAL["process"], "n": 3000}, "seeds": 3,
           "out": str(tmp_path)}
    run_experiment(ExperimentConfig.from_dict(cfg))
    s = io.read_json(tmp_path / "summary.json")
    assert s["seeds"] == [0, 1, 2]
    assert len(s["mass_mean"]) == 2 and len(s["mass_sd"]) == 2
    assert s["rate"] is not None and s["rate"]["points"] >= 10
    assert len(s["meta"]) == 3


@pytest.mark.parametrize("bad", [
    {"grid": "{0,1}"},
    {**MINIMAL, "grid": "nonsense"},
    {**MINIMAL, "seeds": []},
    {**MINIMAL, "kernel": "drift"},
    {**MINIMAL, "process": {"kind": "ar1_mixture", "r": 2.0}},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_failure_leaves_marker(tmp_path):
    cfg = {**MINIMAL, "grid": "{10,20}", "kernel": {"kind": "gaussian", "sigma2": 0.001},
           "out": str(tmp_path)}
    with pytest.raises(ExperimentError) as exc:
        run_experiment(ExperimentConfig.from_dict(cfg))
    assert exc.value.stage == "fit" and exc.value.seed == 0 and exc.value.index == 1
    marker = io.read_json(tmp_path / ".failed")
    assert marker["stage"] == "fit" and marker["iteration"] == 1
    assert (tmp_path / "stream_seed0.csv").exists()


def test_unknown_preset_lists_ids():
    with pytest.raises(ConfigError, match="ex4b_misspec"):
        experiment.preset_runs("ex5")


def test_local_modes():
    v = np.arange(7.0)
    assert experiment.local_modes(v, [0, 3, 1, 0, 2, 5, 1]) == [1.0, 5.0]


def test_cli_pipeline(tmp_path, capsys):
    s, f = tmp_path / "s", tmp_path / "f"
    assert cli.main(["simulate", "--process", "ar1_mixture", "--param", "r=0.5", "--n", "500",
                     "--seed", "3", "--out", str(s)]) == 0
    assert (s / "stream_meta.json").exists()
    assert cli.main(["fit", "--stream", str(s / "stream.csv"), "--grid", "{0,2.5}",
                     "--out", str(f)]) == 0
    tr = io.read_trace(f / "trace.csv")
    assert tr["iter"][-1] == 500 and np.all(np.isfinite(tr["K_n_star"]))
    assert cli.main(["diagnose", "--trace", str(f / "trace.csv"), "--window", "100", "500"]) == 0
    assert "slope" in capsys.readouterr().out
    assert cli.main(["oracle", "--stream", str(s / "stream.csv"), "--grid", "{0,2.5}",
                     "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "npmle_density.csv").exists()


def test_cli_projection_and_dependence(tmp_path, capsys):
    law = json.dumps([{"type": "point", "at": 5.0, "weight": 1.0}])
    assert cli.main(["oracle", "--method", "projection", "--process", "mean_mixture_ar1",
                     "--param", f"theta_law={law}", "--n", "10", "--grid=-3:3:61",
                     "--out", str(tmp_path)]) == 0
    d = io.read_json(tmp_path / "projection.json")
    assert d["k_tilde"] == pytest.approx(2.0, abs=1e-3)
    assert cli.main(["diagnose", "--process", "ar1_mixture", "--param", "p=1", "--param",
                     "r=0.7", "--lags", "1", "2", "--mc-size", "10000"]) == 0
    assert "rho_hat" in capsys.readouterr().out


def test_cli_flags_override_config(tmp_path):
    cfgfile = tmp_path / "c.json"
    cfgfile.write_text(json.dumps({**MINIMAL, "out": str(tmp_path / "ignored")}))
    out = tmp_path / "run"
    assert cli.main(["run", "--config", str(cfgfile), "--n", "150", "--seed", "4",
                     "--out", str(out), "--alpha", "0.8"]) == 0
    s = io.read_json(out / "summary.json")
    assert s["seeds"] == [4]
    assert s["config"]["process"]["n"] == 150
    assert s["config"]["schedule"] == {"kind": "power", "alpha": 0.8, "c": 0.5}
    assert not (tmp_path / "ignored").exists()


def test_cli_exit_codes(tmp_path, capsys):
    assert cli.main(["reproduce", "ex9", "--out", str(tmp_path)]) == 2
    assert "valid ids" in capsys.readouterr().err
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    s = tmp_path / "s"
    cli.main(["simulate", "--process", "ar1_mixture", "--n", "20", "--out", str(s)])
    assert cli.main(["fit", "--stream", str(s / "stream.csv"), "--grid", "{10,20}",
                     "--sigma2", "0.001", "--out", str(tmp_path / "f")]) == 3
    with pytest.raises(SystemExit) as exc:
        cli.main(["fit"])
    assert exc.value.code == 2


def test_threads_env_fallback(monkeypatch):
    monkeypatch.setenv("MIXREC_THREADS", "3")
    assert experiment.env_threads() == 3
    monkeypatch.setenv("MIXREC_THREADS", "x")
    assert experiment.env_threads() == 1


def test_reproduce_small_preset(tmp_path):
    m = experiment.reproduce("ex4a", tmp_path, {"n": 300})
    paths = hashes(m)
    assert "known_support/summary.json" in paths and "report.json" in paths
    assert "uniform_support/plot_seed0.csv" in paths
    rep = io.read_json(tmp_path / "report.json")["report"]
    assert 0 < rep["known_support"]["mean"] < 1
