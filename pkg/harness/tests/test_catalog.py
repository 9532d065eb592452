import pytest

from gpuharness import HarnessError, RunConfig, load_model_entry, load_run_config


def test_entry_found_by_id_field_not_filename(catalog_dir, tmp_path):
    # copy under an unrelated filename; lookup must still work
    src = (catalog_dir / "models" / "tiny-dec.toml").read_text()
    root = tmp_path / "cat"
    (root / "models").mkdir(parents=True)
    (root / "models" / "renamed.toml").write_text(src)
    assert load_model_entry(root, "tiny-dec").hidden_dim == 64


def test_unknown_model_id_raises(catalog_dir):
    with pytest.raises(HarnessError, match="no model with id"):
        load_model_entry(catalog_dir, "tiny-13b")


def test_missing_models_dir_raises(tmp_path):
    with pytest.raises(HarnessError, match="models/"):
        load_model_entry(tmp_path, "tiny-dec")


def test_extra_keys_in_model_file_are_ignored(catalog_dir, tmp_path):
    # the planner owns full validation; the harness reads its slice
    root = tmp_path / "cat"
    (root / "models").mkdir(parents=True)
    text = (catalog_dir / "models" / "tiny-dec.toml").read_text()
    (root / "models" / "tiny-dec.toml").write_text(text + 'note = "hi"\n')
    assert load_model_entry(root, "tiny-dec").family == "decoder"


def test_bad_family_rejected(catalog_dir, tmp_path):
    root = tmp_path / "cat"
    (root / "models").mkdir(parents=True)
    text = (catalog_dir / "models" / "tiny-dec.toml").read_text()
    (root / "models" / "m.toml").write_text(
        text.replace('family = "decoder"', 'family = "diffusion"'))
    with pytest.raises(HarnessError, match="unknown family"):
        load_model_entry(root, "tiny-dec")


def test_run_config_defaults(tmp_path):
    f = tmp_path / "run.toml"
    f.write_text("")
    cfg, over = load_run_config(f)
    assert cfg == RunConfig()
    assert cfg.micro_batch == 0 and cfg.grad_accum_steps == 1
    assert over == {}


def test_run_config_overrides_and_job_fields(tmp_path):
    f = tmp_path / "run.toml"
    f.write_text(
        'act_checkpointing = true\nsharding = "fsdp2"\ngrad_accum_steps = 8\n'
        "micro_batch = 4\nrepetitions = 5\nwarmup = 2\n")
    cfg, over = load_run_config(f)
    assert cfg.act_checkpointing and cfg.sharding == "fsdp2"
    assert cfg.micro_batch == 4 and cfg.grad_accum_steps == 8
    assert over == {"repetitions": 5, "warmup": 2}


def test_run_config_rejects_unknown_keys(tmp_path):
    f = tmp_path / "run.toml"
    f.write_text("batchsize = 4\n")
    with pytest.raises(HarnessError, match="unknown config keys"):
        load_run_config(f)


def test_run_config_rejects_bad_values(tmp_path):
    f = tmp_path / "run.toml"
    f.write_text("grad_accum_steps = 0\n")
    with pytest.raises(HarnessError):
        load_run_config(f)
    f.write_text('sharding = "zero9"\n')
    with pytest.raises(HarnessError, match="unknown sharding"):
        load_run_config(f)


def test_missing_config_file(tmp_path):
    with pytest.raises(HarnessError, match="no config file"):
        load_run_config(tmp_path / "absent.toml")
