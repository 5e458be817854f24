"""CLI subcommands, exit codes, environment override."""

import json
import os

import numpy as np
import pytest

from otvq.cli import main


def _write_cfg(tmp_path, name="cfg.json", **overrides):
    base = dict(method="vqwae", iters=8, K=4, M=1, n_z=2, hidden=[8],
                points_per_cluster=16, batch_size=16, lr=1e-3, log_every=4,
                seed=1)
    base.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(base))
    return str(path)


def test_train_success(tmp_path, capsys):
    out = tmp_path / "run"
    cfg = _write_cfg(tmp_path, out_dir=str(out))
    assert main(["train", cfg]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["method"] == "vqwae"
    assert (out / "metrics.csv").exists()
    assert (out / "checkpoint.npz").exists()


def test_train_unknown_key_exits_1(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"warmup": 10}))
    assert main(["train", str(path)]) == 1
    assert "'warmup'" in capsys.readouterr().err


def test_train_malformed_json_exits_1(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{oops")
    assert main(["train", str(path)]) == 1
    assert "malformed" in capsys.readouterr().err


def test_train_missing_config_exits_3(tmp_path, capsys):
    assert main(["train", str(tmp_path / "nope.json")]) == 3
    assert "io error" in capsys.readouterr().err


def test_train_numeric_failure_exits_2(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, lr=1e80, iters=30, log_every=1,
                     out_dir=str(tmp_path / "run"))
    with np.errstate(over="ignore"):
        assert main(["train", cfg]) == 2
    assert "numeric failure" in capsys.readouterr().err
    assert (tmp_path / "run" / "metrics.csv").exists()


def test_otvq_out_overrides_directory(tmp_path, monkeypatch, capsys):
    override = tmp_path / "elsewhere"
    monkeypatch.setenv("OTVQ_OUT", str(override))
    cfg = _write_cfg(tmp_path, out_dir=str(tmp_path / "ignored"))
    assert main(["train", cfg]) == 0
    capsys.readouterr()
    assert (override / "metrics.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_seed_sweep_writes_subdirectories(tmp_path, capsys):
    out = tmp_path / "sweep"
    cfg = _write_cfg(tmp_path, iters=4, out_dir=str(out))
    assert main(["train", cfg, "--seeds", "2,5"]) == 0
    capsys.readouterr()
    s2 = json.load(open(out / "seed2" / "summary.json"))
    s5 = json.load(open(out / "seed5" / "summary.json"))
    assert s2["seed"] == 2 and s5["seed"] == 5


def test_bad_seed_sweep_exits_1(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, out_dir=str(tmp_path / "run"))
    assert main(["train", cfg, "--seeds", "2,x"]) == 1
    assert "--seeds" in capsys.readouterr().err


def test_eval_prints_metrics(tmp_path, capsys):
    out = tmp_path / "run"
    cfg = _write_cfg(tmp_path, out_dir=str(out))
    assert main(["train", cfg]) == 0
    capsys.readouterr()
    assert main(["eval", str(out / "checkpoint.npz"), cfg]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["mse"] > 0
    assert len(printed["perplexity"]) == 1
    assert printed["samples"] == 128


def test_eval_missing_checkpoint_exits_3(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    assert main(["eval", str(tmp_path / "none.npz"), cfg]) == 3


def test_ot_bench_writes_csv(tmp_path, capsys):
    out_csv = tmp_path / "bench.csv"
    assert main(["ot-bench", "--sizes", "1x1,3x2", "--eps", "0.1",
                 "--seed", "4", "--out", str(out_csv)]) == 0
    printed = capsys.readouterr().out
    assert "exact" in printed
    assert out_csv.exists()


def test_ot_bench_default_csv_location(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("OTVQ_OUT", str(tmp_path / "benchout"))
    assert main(["ot-bench", "--sizes", "2x2", "--eps", "0.1"]) == 0
    capsys.readouterr()
    assert (tmp_path / "benchout" / "ot_bench.csv").exists()


def test_ot_bench_bad_sizes_exits_1(capsys):
    assert main(["ot-bench", "--sizes", "5by4"]) == 1
    assert "--sizes" in capsys.readouterr().err or "5by4" in capsys.readouterr().err


def test_usage_error_exits_1(capsys):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
