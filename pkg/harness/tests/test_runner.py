import math
from dataclasses import replace

import pytest
import torch

import gpuharness.runner as runner
from gpuharness import (HarnessError, HarnessJob, RunConfig, find_max_batch,
                        load_model_entry, run_job, time_steps)


def _job(entry, cfg=None, **over):
    return HarnessJob(model=entry, config=cfg or RunConfig(), gpu_id="a100",
                      **over)


def test_job_invariants(tiny_decoder):
    with pytest.raises(HarnessError, match="repetitions"):
        _job(tiny_decoder, repetitions=0)
    with pytest.raises(HarnessError, match="warmup"):
        _job(tiny_decoder, warmup=-1)
    assert _job(tiny_decoder).repetitions == 3
    assert _job(tiny_decoder).warmup == 1


# --- max-batch search --------------------------------------------------------


def test_doubling_stops_at_last_fitting_power_of_two(tiny_decoder):
    calls = []

    def probe(b):
        calls.append(b)
        if b > 6:
            raise RuntimeError("CUDA out of memory. Tried to allocate 2 GiB")

    got = find_max_batch(_job(tiny_decoder), probe=probe)
    assert got == 4
    # the search itself verified the answer: 4 ran, 8 raised
    assert calls == [1, 2, 4, 8]


def test_cap_is_respected_when_memory_admits_more(tiny_decoder):
    calls = []
    got = find_max_batch(_job(tiny_decoder), cap=256, probe=calls.append)
    assert got == 256
    assert calls[-1] == 256   # never probed past the cap


def test_default_cap_is_replication_batch_per_gpu(tiny_decoder):
    # global batch 64 on 4 gpus: never probe above 16
    calls = []
    got = find_max_batch(_job(tiny_decoder, n_gpus=4), probe=calls.append)
    assert got == 16 and max(calls) == 16


def test_oom_at_one_returns_zero(tiny_decoder):
    def probe(b):
        raise torch.cuda.OutOfMemoryError()

    assert find_max_batch(_job(tiny_decoder), probe=probe) == 0


def test_non_oom_probe_errors_propagate(tiny_decoder):
    def probe(b):
        raise ValueError("shape mismatch")

    with pytest.raises(ValueError):
        find_max_batch(_job(tiny_decoder), probe=probe)


def test_real_probe_finds_a_power_of_two(tiny_decoder):
    got = find_max_batch(_job(tiny_decoder), device="cpu", cap=4)
    assert got == 4   # tiny model, cpu memory admits far more than the cap


# --- timing ------------------------------------------------------------------


def test_time_steps_emits_a_well_formed_record(tiny_decoder):
    cfg = RunConfig(grad_accum_steps=8)
    res = time_steps(_job(tiny_decoder, cfg), micro_batch=2)
    assert res.status == "ok"
    rec = res.record
    assert rec.pass_seconds > 0 and rec.update_seconds > 0
    assert rec.config.micro_batch == 2
    assert rec.config.grad_accum_steps == 8
    assert rec.n_gpus == 1 and rec.gpu_id == "a100"
    assert rec.timestamp   # stamped at measurement time


@pytest.mark.parametrize("model_id", ["tiny-enc", "tiny-vit", "tiny-conv"])
def test_other_families_build_and_time(catalog_dir, model_id):
    entry = load_model_entry(catalog_dir, model_id)
    res = time_steps(_job(entry), micro_batch=2)
    assert res.status == "ok"
    assert res.record.pass_seconds > 0


def test_missing_family_builder_fails_with_reason(catalog_dir):
    entry = load_model_entry(catalog_dir, "tiny-ssm")
    res = time_steps(_job(entry), micro_batch=2)
    assert res.status == "failed"
    assert "no builder" in res.reason


def test_sharding_without_process_group_fails_with_reason(tiny_decoder):
    res = time_steps(_job(tiny_decoder, RunConfig(sharding="fsdp2")),
                     micro_batch=2)
    assert res.status == "failed"
    assert "torchrun" in res.reason


def test_checkpointing_runs_and_still_trains(tiny_decoder):
    res = time_steps(_job(tiny_decoder, RunConfig(act_checkpointing=True)),
                     micro_batch=2)
    assert res.status == "ok"


def test_oom_while_timing_yields_oom_record(tiny_decoder, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("CUDA out of memory. Tried to allocate 3 GiB")

    monkeypatch.setattr(runner, "_forward_backward", boom)
    res = time_steps(_job(tiny_decoder), micro_batch=8)
    assert res.status == "oom"
    assert res.record.oom and res.record.pass_seconds is None
    assert res.record.config.micro_batch == 8


def test_run_job_searches_then_times(tiny_decoder):
    res = run_job(_job(tiny_decoder, RunConfig(grad_accum_steps=4)), "cpu")
    assert res.status == "ok"
    b = res.record.config.micro_batch
    assert b >= 1 and b & (b - 1) == 0   # found size is a power of two


def test_run_job_preset_micro_batch_skips_search(tiny_decoder, monkeypatch):
    def no_search(*a, **k):
        raise AssertionError("search should not run")

    monkeypatch.setattr(runner, "find_max_batch", no_search)
    res = run_job(_job(tiny_decoder, RunConfig(micro_batch=2)), "cpu")
    assert res.status == "ok" and res.record.config.micro_batch == 2


def test_run_job_oom_at_one_emits_oom_record(tiny_decoder, monkeypatch):
    monkeypatch.setattr(runner, "find_max_batch", lambda *a, **k: 0)
    res = run_job(_job(tiny_decoder), "cpu")
    assert res.status == "oom"
    assert res.record.oom and res.record.config.micro_batch == 1


# --- the stopwatch itself ----------------------------------------------------


def test_timed_regions_and_means_with_a_fake_clock(tiny_decoder, monkeypatch):
    """Two clock reads per timed region, warmup untimed, means over reps."""
    reads = []

    def fake_clock():
        reads.append(len(reads))
        return float(len(reads))

    syncs = []
    monkeypatch.setattr(runner, "_clock", fake_clock)
    monkeypatch.setattr(runner, "_sync", lambda device: syncs.append(device))
    res = time_steps(_job(tiny_decoder, repetitions=5, warmup=2), micro_batch=1)
    assert res.status == "ok"
    # each timed region is exactly one fake tick, so the means are 1.0
    assert res.record.pass_seconds == 1.0
    assert res.record.update_seconds == 1.0
    assert len(reads) == 4 * 5          # 2 reads per pass + 2 per update
    assert len(syncs) == 4 * 5          # a sync guards every read


def test_repeat_means_are_stable_on_cpu(tiny_decoder):
    """Coarse jitter bound; the <10% conformance bar is checked on real
    GPUs below, a shared CPU box cannot promise it."""
    entry = replace(tiny_decoder, num_layers=4, hidden_dim=256, seq_len=128)
    job = _job(entry, repetitions=5)
    a = time_steps(job, micro_batch=8).record.pass_seconds
    b = time_steps(job, micro_batch=8).record.pass_seconds
    assert math.isfinite(a) and math.isfinite(b)
    assert abs(a - b) / a < 0.35


@pytest.mark.skipif(not torch.cuda.is_available(), reason="needs a GPU")
def test_repeat_pass_variance_under_ten_percent_on_gpu(tiny_decoder):
    entry = replace(tiny_decoder, num_layers=4, hidden_dim=512, seq_len=512)
    job = _job(entry, repetitions=3)
    a = time_steps(job, micro_batch=8, device="cuda").record.pass_seconds
    b = time_steps(job, micro_batch=8, device="cuda").record.pass_seconds
    assert abs(a - b) / a < 0.10
