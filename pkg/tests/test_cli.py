"""Command-line pipeline: config contract, determinism, error surfaces."""

import json

import numpy as np
import pytest

from rsdbpf.cli import (
    ConfigError,
    apply_flag_overrides,
    build_parser,
    cmd_evaluate,
    cmd_generate,
    cmd_train,
    default_config,
    main,
    validate_config,
)


def _micro_config(out, **train_overrides):
    cfg = {
        "out": str(out),
        "dataset": {"train": 4, "val": 2, "test": 2},
        "filter": {"eval_particles": 50},
        "train": {"learning_rates": [0.05], "epochs": 1, "batch_size": 2,
                  "train_particles": 12, "tape_chunk": 2, **train_overrides},
    }
    return validate_config(cfg)


# ---------------------------------------------------------------------------
# Config contract
# ---------------------------------------------------------------------------

def test_defaults_match_benchmark_values():
    cfg = default_config()
    assert cfg["dataset"] == {"path": "dataset.jsonl", "train": 1000, "val": 500, "test": 500}
    assert cfg["filter"]["eval_particles"] == 2000
    assert cfg["train"]["learning_rates"] == [0.01, 0.02, 0.05, 0.1]
    assert cfg["train"]["momentum"] == 0.9
    assert cfg["train"]["epochs"] == 60
    assert cfg["train"]["batch_size"] == 100
    assert cfg["train"]["train_particles"] == 200
    assert cfg["train"]["lr_halving_period"] == 10
    assert cfg["dynamics"] == "markov"


def test_unknown_keys_rejected_with_path():
    with pytest.raises(ConfigError, match="unknown config key: train.warmup"):
        validate_config({"train": {"warmup": 5}})
    with pytest.raises(ConfigError, match="unknown config key: particles"):
        validate_config({"particles": 100})


def test_invalid_values_rejected_before_any_io():
    with pytest.raises(ConfigError, match="dataset.train"):
        validate_config({"dataset": {"train": -5}})
    with pytest.raises(ConfigError, match="dynamics"):
        validate_config({"dynamics": "levy"})
    with pytest.raises(ConfigError, match="train.learning_rates"):
        validate_config({"train": {"learning_rates": []}})


def test_flag_overrides_precedence():
    parser = build_parser()
    args = parser.parse_args(["generate", "--config", "x.json", "--seed", "5",
                              "--dynamics", "polya", "--particles", "123",
                              "--eta", "0.02"])
    cfg = apply_flag_overrides(default_config(), args)
    assert cfg["seeds"] == {"dataset": 5, "training": 5, "evaluation": 5}
    assert cfg["dynamics"] == "polya"
    assert cfg["filter"]["eval_particles"] == 123
    assert cfg["train"]["learning_rates"] == [0.02]
    args = parser.parse_args(["generate", "--config", "x.json", "--eta", "grid"])
    cfg = apply_flag_overrides(default_config(), args)
    assert cfg["train"]["learning_rates"] == [0.01, 0.02, 0.05, 0.1]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def test_generate_byte_identical_reruns(tmp_path):
    cfg = _micro_config(tmp_path / "run")
    p = cmd_generate(cfg)
    first = p.read_bytes()
    cmd_generate(cfg)
    assert p.read_bytes() == first


def test_evaluate_byte_identical_reruns(tmp_path):
    cfg = _micro_config(tmp_path / "run")
    cmd_generate(cfg)
    cmd_evaluate(cfg, ["rs-pf", "mm-pf"])
    results = tmp_path / "run" / "results"
    snapshot = {f.name: f.read_bytes() for f in results.iterdir()}
    cmd_evaluate(cfg, ["rs-pf", "mm-pf"])
    assert {f.name: f.read_bytes() for f in results.iterdir()} == snapshot


def test_train_writes_checkpoints_logs_and_selection(tmp_path):
    cfg = _micro_config(tmp_path / "run")
    cmd_generate(cfg)
    best = cmd_train(cfg, "dbpf")
    assert best.exists()
    selection = json.loads((tmp_path / "run" / "logs" / "selection_dbpf.json").read_text())
    assert selection["selected_eta"] == 0.05
    assert len(selection["runs"]) == 1  # pinned eta -> exactly one run logged
    log = (tmp_path / "run" / "logs" / "train_dbpf_eta0.05.csv").read_text().splitlines()
    assert log[0] == "epoch,train_loss,val_rmse,lr"
    assert len(log) == 2


def test_full_pipeline_with_learned_filters(tmp_path):
    cfg = _micro_config(tmp_path / "run")
    cmd_generate(cfg)
    cmd_train(cfg, "dbpf")
    cmd_train(cfg, "rs-dbpf")
    table = cmd_evaluate(cfg, ["mm-pf", "rs-pf", "dbpf", "rs-dbpf"])
    assert set(table.rows) == {"mm-pf", "rs-pf", "dbpf", "rs-dbpf"}
    for avg, best, worst in table.rows.values():
        assert best <= avg <= worst
    results = tmp_path / "run" / "results"
    for name in ("table.md", "table.csv", "per_step_mae.csv", "per_traj_rmse.csv",
                 "estimates_rs-pf.csv", "estimates_rs-dbpf.csv"):
        assert (results / name).exists()
    md = (results / "table.md").read_text()
    for label in ("MM-PF", "DBPF", "RS-DBPF", "RS-PF (oracle)"):
        assert f"| {label} |" in md


def test_reproduce_runs_the_whole_pipeline(tmp_path):
    from rsdbpf.cli import cmd_reproduce

    cfg = _micro_config(tmp_path / "run")
    table = cmd_reproduce(cfg, dynamics="polya")
    assert set(table.rows) == {"mm-pf", "rs-pf", "dbpf", "rs-dbpf"}
    assert (tmp_path / "run" / "results" / "per_step_mae.csv").exists()
    assert (tmp_path / "run" / "dataset.jsonl").exists()


def test_missing_dataset_yields_error_exit_code(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"out": str(tmp_path / "none")}))
    rc = main(["evaluate", "--config", str(cfg_path), "--filters", "rs-pf"])
    assert rc == 2
    err = capsys.readouterr().err.strip().splitlines()[-1]
    parsed = json.loads(err)
    assert parsed["error"] == "FileNotFoundError"
    assert "dataset" in parsed["message"]


def test_missing_checkpoint_yields_error(tmp_path):
    cfg = _micro_config(tmp_path / "run")
    cmd_generate(cfg)
    with pytest.raises(FileNotFoundError, match="checkpoint"):
        cmd_evaluate(cfg, ["dbpf"])


def test_dynamics_mismatch_detected(tmp_path):
    cfg = _micro_config(tmp_path / "run")
    cmd_generate(cfg)
    cfg2 = json.loads(json.dumps(cfg))
    cfg2["dynamics"] = "polya"
    with pytest.raises(ConfigError, match="dynamics mismatch"):
        cmd_evaluate(cfg2, ["rs-pf"])


def test_main_generate_roundtrip(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "out": str(tmp_path / "run"),
        "dataset": {"train": 2, "val": 1, "test": 1},
    }))
    rc = main(["generate", "--config", str(cfg_path)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "4 trajectories" in out
    assert (tmp_path / "run" / "dataset.jsonl").exists()


def test_invalid_config_file_reports_cleanly(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text('{"dataset": {"train": -1}}')
    rc = main(["generate", "--config", str(cfg_path)])
    assert rc == 2
    parsed = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert parsed["error"] == "ConfigError"
    assert "dataset.train" in parsed["message"]
