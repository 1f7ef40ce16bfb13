"""End-to-end CLI runs and exit codes."""
import json

import pytest

from relpose.cli import EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO, EXIT_OK, main

QUIET = {
    "sigma_gyr": 0.0, "sigma_acc": 0.0, "sigma_gyr_rw": 0.0, "sigma_acc_rw": 0.0,
    "sigma_range": 0.0, "sigma_neighbour_bias": 0.0,
}


def write_config(tmp_path, name="c.json", **extra):
    data = {"trajectory": {"duration": 3.0}, "output_dir": str(tmp_path / "out")}
    data.update(extra)
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


def test_simulate_outputs(tmp_path, monkeypatch):
    monkeypatch.delenv("RELPOSE_OUTPUT_DIR", raising=False)
    cfg = write_config(tmp_path)
    assert main(["simulate", "--config", str(cfg), "--trials", "2", "--compare-bias", "--export-log"]) == EXIT_OK
    out = tmp_path / "out"
    names = {p.name for p in out.iterdir()}
    assert {"resolved_config.json", "summary.json", "nees.csv", "truth_000.csv", "estimate_001.csv",
            "log_000.csv", "estimate_nobias_001.csv"} <= names
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["trials"]) == 2
    assert "with_bias_rmse" in summary["comparison"]
    assert summary["nees"]["dof"] == 15
    assert json.loads((out / "resolved_config.json").read_text())["trials"] == 2


def test_zero_noise_summary(tmp_path, monkeypatch):
    monkeypatch.delenv("RELPOSE_OUTPUT_DIR", raising=False)
    cfg = write_config(tmp_path, noise=QUIET, init={"mode": "exact"}, simulation={"bias_init_scale": 0.0},
                       trajectory={"duration": 10.0})
    assert main(["simulate", "--config", str(cfg)]) == EXIT_OK
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["trials"][0]["position_rmse"] < 1e-6


def test_config_error_exit(tmp_path, capsys):
    cfg = write_config(tmp_path, noise={"sigma_range": -1})
    assert main(["simulate", "--config", str(cfg)]) == EXIT_CONFIG
    assert "noise.sigma_range" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG


def test_divergence_exit(tmp_path, monkeypatch):
    monkeypatch.delenv("RELPOSE_OUTPUT_DIR", raising=False)
    # A bias prior far tighter than the true bias: NEES blows past the threshold.
    cfg = write_config(tmp_path, init={"mode": "zero_bias", "gyr_bias": 1e-9})
    assert main(["simulate", "--config", str(cfg)]) == EXIT_DIVERGED
    assert json.loads((tmp_path / "out" / "summary.json").read_text())["divergences"] == 1


def test_io_error_exit(tmp_path, monkeypatch):
    monkeypatch.delenv("RELPOSE_OUTPUT_DIR", raising=False)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = write_config(tmp_path, output_dir=str(blocker / "sub"))
    assert main(["simulate", "--config", str(cfg)]) == EXIT_IO
    cfg = write_config(tmp_path, name="d.json")
    assert main(["replay", "--config", str(cfg), "--log", str(tmp_path / "none.csv")]) == EXIT_IO


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("RELPOSE_OUTPUT_DIR", str(tmp_path / "env"))
    cfg = write_config(tmp_path, trajectory={"duration": 1.0})
    assert main(["simulate", "--config", str(cfg)]) == EXIT_OK
    assert (tmp_path / "env" / "summary.json").is_file()


def test_replay_matches_simulation(tmp_path, monkeypatch):
    monkeypatch.delenv("RELPOSE_OUTPUT_DIR", raising=False)
    common = {"noise": {"sigma_neighbour_bias": 0.0}, "init": {"mode": "exact"}}
    sim = write_config(tmp_path, **common)
    assert main(["simulate", "--config", str(sim), "--export-log"]) == EXIT_OK
    rep = write_config(tmp_path, name="r.json", **common, output_dir=str(tmp_path / "rep"))
    assert main(["replay", "--config", str(rep), "--log", str(tmp_path / "out" / "log_000.csv")]) == EXIT_OK
    want = (tmp_path / "out" / "estimate_000.csv").read_bytes()
    assert (tmp_path / "rep" / "estimate_replay.csv").read_bytes() == want


def test_replay_empty_log(tmp_path, monkeypatch):
    monkeypatch.delenv("RELPOSE_OUTPUT_DIR", raising=False)
    log = tmp_path / "empty.csv"
    log.write_text("")
    cfg = write_config(tmp_path)
    assert main(["replay", "--config", str(cfg), "--log", str(log)]) == EXIT_OK
    assert json.loads((tmp_path / "out" / "summary.json").read_text())["epochs"] == 0


def test_selftest_passes(capsys):
    assert main(["selftest"]) == EXIT_OK
    assert "FAIL" not in capsys.readouterr().out


def test_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
