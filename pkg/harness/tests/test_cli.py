"""End-to-end CLI runs in a subprocess, checked against the planner parser."""

import json
import os
import subprocess
import sys

import pytest

trainplan_core = pytest.importorskip(
    "trainplan.core", reason="conformance tests need the planner installed")

FAST_CONFIG = """\
micro_batch = 2
grad_accum_steps = 4
repetitions = 1
warmup = 0
"""


def run_cli(*args, env=None):
    base = {k: v for k, v in os.environ.items() if k != "TRAINPLAN_CATALOG_DIR"}
    if env:
        base.update(env)
    return subprocess.run(
        [sys.executable, "-m", "gpuharness.cli", "run", *args],
        capture_output=True, text=True, env=base)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.toml"
    path.write_text(FAST_CONFIG)
    return path


def test_run_writes_record_the_planner_can_read(catalog_dir, config_file, tmp_path):
    out = tmp_path / "records.jsonl"
    proc = run_cli("--model", "tiny-dec", "--config", str(config_file),
                   "--out", str(out), "--gpu", "a100",
                   "--catalog-dir", str(catalog_dir), "--device", "cpu")
    assert proc.returncode == 0, proc.stderr
    assert "micro batch 2" in proc.stdout
    rec, = trainplan_core.read_records(out)
    assert (rec.model_id, rec.gpu_id, rec.n_gpus) == ("tiny-dec", "a100", 1)
    assert not rec.oom
    assert rec.pass_seconds > 0 and rec.update_seconds > 0
    assert rec.config.grad_accum_steps == 4
    assert json.loads(out.read_text())["timestamp"]   # stamped, ISO-ish text


def test_env_catalog_and_append(catalog_dir, config_file, tmp_path):
    out = tmp_path / "records.jsonl"
    env = {"TRAINPLAN_CATALOG_DIR": str(catalog_dir)}
    for _ in range(2):
        proc = run_cli("--model", "tiny-dec", "--config", str(config_file),
                       "--out", str(out), "--gpu", "rtx3090", "--device", "cpu",
                       env=env)
        assert proc.returncode == 0, proc.stderr
    got = trainplan_core.read_records(out)
    assert len(got) == 2
    assert {r.gpu_id for r in got} == {"rtx3090"}


def test_unknown_model_is_bad_input(catalog_dir, config_file, tmp_path):
    proc = run_cli("--model", "no-such", "--config", str(config_file),
                   "--out", str(tmp_path / "r.jsonl"), "--gpu", "a100",
                   "--catalog-dir", str(catalog_dir))
    assert proc.returncode == 3
    assert "no-such" in proc.stderr


def test_missing_catalog_dir_is_bad_input(config_file, tmp_path):
    proc = run_cli("--model", "tiny-dec", "--config", str(config_file),
                   "--out", str(tmp_path / "r.jsonl"), "--gpu", "a100",
                   "--catalog-dir", str(tmp_path / "nowhere"))
    assert proc.returncode == 3
    assert "models/" in proc.stderr


def test_no_catalog_given_is_bad_input(config_file, tmp_path):
    proc = run_cli("--model", "tiny-dec", "--config", str(config_file),
                   "--out", str(tmp_path / "r.jsonl"), "--gpu", "a100")
    assert proc.returncode == 3
    assert "TRAINPLAN_CATALOG_DIR" in proc.stderr


def test_unknown_config_key_is_bad_input(catalog_dir, tmp_path):
    cfg = tmp_path / "config.toml"
    cfg.write_text(FAST_CONFIG + 'zeal = true\n')
    proc = run_cli("--model", "tiny-dec", "--config", str(cfg),
                   "--out", str(tmp_path / "r.jsonl"), "--gpu", "a100",
                   "--catalog-dir", str(catalog_dir))
    assert proc.returncode == 3
    assert "zeal" in proc.stderr


def test_sharding_without_launcher_is_infeasible(catalog_dir, tmp_path):
    cfg = tmp_path / "config.toml"
    cfg.write_text(FAST_CONFIG + 'sharding = "fsdp2"\n')
    proc = run_cli("--model", "tiny-dec", "--config", str(cfg),
                   "--out", str(tmp_path / "r.jsonl"), "--gpu", "a100",
                   "--catalog-dir", str(catalog_dir), "--device", "cpu",
                   "--n", "2")
    assert proc.returncode == 2
    assert "torchrun" in proc.stderr
    assert not (tmp_path / "r.jsonl").exists()   # failures leave no record
