"""Build the cataloged model and time it.

Measurement protocol per record: find the largest power-of-two micro
batch that fits (compilation off during the search), warm up with one
pass and one update, then time a few forward/backward passes and a few
optimizer updates, synchronizing the device before every stopwatch
read. The timed passes are consecutive micro-batches inside one
accumulation window, so the update is timed with accumulated gradients
present. Inputs are pre-generated on the device; nothing in the timed
region loads data.
"""

from __future__ import annotations

import contextlib
import statistics
import time
from dataclasses import dataclass
from typing import Callable

import torch
import torch.distributed as dist
import torch.nn as nn
import torch.nn.functional as F

from .catalog import HarnessError, ModelEntry, RunConfig
from .records import Record, utc_stamp


@dataclass(frozen=True)
class HarnessJob:
    model: ModelEntry
    config: RunConfig
    gpu_id: str            # catalog gpu id stamped onto records
    n_gpus: int = 1
    repetitions: int = 3
    warmup: int = 1

    def __post_init__(self):
        if self.repetitions < 1:
            raise HarnessError("repetitions must be >= 1")
        if self.warmup < 0:
            raise HarnessError("warmup must be >= 0")
        if self.n_gpus < 1:
            raise HarnessError("n_gpus must be >= 1")


@dataclass(frozen=True)
class RunResult:
    status: str                    # ok | oom | failed
    record: Record | None = None   # oom results carry an oom record
    reason: str = ""


# --- model builders ---------------------------------------------------------


class _TokenBlock(nn.Module):
    def __init__(self, dim: int, heads: int, causal: bool):
        super().__init__()
        self.heads = max(1, heads)
        self.causal = causal
        self.norm1 = nn.LayerNorm(dim)
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, 4 * dim), nn.GELU(),
                                 nn.Linear(4 * dim, dim))

    def forward(self, x):
        b, s, d = x.shape
        h = self.norm1(x)
        q, k, v = self.qkv(h).chunk(3, dim=-1)
        shape = (b, s, self.heads, d // self.heads)
        q, k, v = (t.view(shape).transpose(1, 2) for t in (q, k, v))
        a = F.scaled_dot_product_attention(q, k, v, is_causal=self.causal)
        x = x + self.proj(a.transpose(1, 2).reshape(b, s, d))
        return x + self.mlp(self.norm2(x))


class _TokenStack(nn.Module):
    """Embedding, attention blocks, vocabulary head. Used for both the
    causal and the bidirectional families; only the mask differs."""

    def __init__(self, entry: ModelEntry, causal: bool):
        super().__init__()
        if entry.vocab_size < 2:
            raise HarnessError(f"{entry.id}: token model needs vocab_size >= 2")
        if entry.hidden_dim % max(1, entry.num_heads):
            raise HarnessError(f"{entry.id}: hidden_dim must divide by num_heads")
        self.embed = nn.Embedding(entry.vocab_size, entry.hidden_dim)
        self.blocks = nn.ModuleList(
            _TokenBlock(entry.hidden_dim, entry.num_heads, causal)
            for _ in range(entry.num_layers))
        self.head = nn.Linear(entry.hidden_dim, entry.vocab_size)
        self.checkpointing = False

    def forward(self, tokens):
        x = self.embed(tokens)
        for blk in self.blocks:
            if self.checkpointing and x.requires_grad is not False and self.training:
                x = torch.utils.checkpoint.checkpoint(blk, x, use_reentrant=False)
            else:
                x = blk(x)
        return self.head(x)


class _PatchStack(nn.Module):
    def __init__(self, entry: ModelEntry):
        super().__init__()
        patch = next(p for p in (16, 8, 4, 2, 1) if entry.image_size % p == 0)
        self.embed = nn.Conv2d(3, entry.hidden_dim, patch, stride=patch)
        self.blocks = nn.ModuleList(
            _TokenBlock(entry.hidden_dim, entry.num_heads, causal=False)
            for _ in range(entry.num_layers))
        self.head = nn.Linear(entry.hidden_dim, max(2, entry.num_classes))
        self.checkpointing = False

    def forward(self, images):
        x = self.embed(images).flatten(2).transpose(1, 2)
        for blk in self.blocks:
            if self.checkpointing and self.training:
                x = torch.utils.checkpoint.checkpoint(blk, x, use_reentrant=False)
            else:
                x = blk(x)
        return self.head(x.mean(dim=1))


class _ConvStack(nn.Module):
    def __init__(self, entry: ModelEntry):
        super().__init__()
        dim = entry.hidden_dim
        self.stem = nn.Conv2d(3, dim, 4, stride=4)
        self.blocks = nn.ModuleList(
            nn.Sequential(nn.Conv2d(dim, dim, 7, padding=3, groups=dim),
                          nn.Conv2d(dim, 4 * dim, 1), nn.GELU(),
                          nn.Conv2d(4 * dim, dim, 1))
            for _ in range(entry.num_layers))
        self.head = nn.Linear(dim, max(2, entry.num_classes))
        self.checkpointing = False

    def forward(self, images):
        x = self.stem(images)
        for blk in self.blocks:
            if self.checkpointing and self.training:
                y = torch.utils.checkpoint.checkpoint(blk, x, use_reentrant=False)
            else:
                y = blk(x)
            x = x + y
        return self.head(x.mean(dim=(2, 3)))


def _build_decoder(entry): return _TokenStack(entry, causal=True)
def _build_encoder(entry): return _TokenStack(entry, causal=False)
def _build_vit(entry): return _PatchStack(entry)
def _build_conv(entry): return _ConvStack(entry)


# No reference selective-scan implementation ships with the harness;
# register a builder here before timing that family.
MODEL_BUILDERS: dict[str, Callable[[ModelEntry], nn.Module]] = {
    "decoder": _build_decoder,
    "encoder": _build_encoder,
    "vit": _build_vit,
    "conv": _build_conv,
}


# --- plumbing ---------------------------------------------------------------


_clock = time.perf_counter   # patchable in tests


def _is_oom(exc: BaseException) -> bool:
    if isinstance(exc, (MemoryError, torch.cuda.OutOfMemoryError)):
        return True
    msg = str(exc).lower()
    return isinstance(exc, RuntimeError) and (
        "out of memory" in msg or "can't allocate" in msg
        or "not enough memory" in msg)


def _sync(device: str) -> None:
    if device.startswith("cuda"):
        torch.cuda.synchronize()


def _autocast(entry: ModelEntry, device: str):
    kind = "cuda" if device.startswith("cuda") else "cpu"
    if entry.precision == "bf16_mixed":
        return torch.autocast(kind, dtype=torch.bfloat16)
    if entry.precision == "fp16_mixed" and kind == "cuda":
        return torch.autocast("cuda", dtype=torch.float16)
    # fp32, or fp16 without cuda autocast support: run plain
    return contextlib.nullcontext()


def _apply_methods(module: nn.Module, cfg: RunConfig, device: str) -> nn.Module:
    if cfg.act_checkpointing:
        if not hasattr(module, "checkpointing"):
            raise HarnessError("model has no checkpointing hook")
        module.checkpointing = True
    if cfg.tf32 and device.startswith("cuda"):
        torch.backends.cuda.matmul.allow_tf32 = True
        torch.backends.cudnn.allow_tf32 = True
    world = dist.get_world_size() if dist.is_initialized() else 1
    if cfg.sharding != "none" or cfg.offload:
        if world < 2:
            raise HarnessError(
                f"sharding {cfg.sharding!r} needs a multi-process "
                "data-parallel launch (torchrun)")
        if cfg.sharding in ("fsdp2", "fsdp3"):
            from torch.distributed.fsdp import (CPUOffload, FullyShardedDataParallel,
                                                ShardingStrategy)
            strategy = (ShardingStrategy.SHARD_GRAD_OP if cfg.sharding == "fsdp2"
                        else ShardingStrategy.FULL_SHARD)
            return FullyShardedDataParallel(
                module, sharding_strategy=strategy,
                cpu_offload=CPUOffload(offload_params=cfg.offload))
        raise HarnessError(f"sharding {cfg.sharding!r} has no framework "
                           "backend in this harness; use fsdp2/fsdp3")
    if world > 1:
        from torch.nn.parallel import DistributedDataParallel
        return DistributedDataParallel(module)
    return module


def _build(job: HarnessJob, device: str, compile_enabled: bool):
    entry, cfg = job.model, job.config
    if entry.family not in MODEL_BUILDERS:
        raise HarnessError(f"{entry.id}: no builder for family {entry.family!r}; "
                           "register one in MODEL_BUILDERS")
    torch.manual_seed(0)
    module = MODEL_BUILDERS[entry.family](entry).to(device)
    module.train()
    module = _apply_methods(module, cfg, device)
    if entry.optimizer == "sgd":
        optimizer = torch.optim.SGD(module.parameters(), lr=1e-3, momentum=0.9)
    else:
        optimizer = torch.optim.Adam(module.parameters(), lr=1e-4)
    if cfg.compile and compile_enabled:
        module = torch.compile(module)
    return module, optimizer


def _random_batch(entry: ModelEntry, b: int, device: str):
    if entry.seq_len > 0:
        x = torch.randint(0, entry.vocab_size, (b, entry.seq_len), device=device)
        y = torch.randint(0, entry.vocab_size, (b, entry.seq_len), device=device)
    else:
        x = torch.randn(b, 3, entry.image_size, entry.image_size, device=device)
        y = torch.randint(0, max(2, entry.num_classes), (b,), device=device)
    return x, y


def _forward_backward(entry: ModelEntry, module: nn.Module, batch, device: str):
    x, y = batch
    with _autocast(entry, device):
        out = module(x)
        if entry.seq_len > 0:
            loss = F.cross_entropy(out.reshape(-1, out.shape[-1]), y.reshape(-1))
        else:
            loss = F.cross_entropy(out, y)
    # fp16 loss scaling is deliberately not in the timed path; it is a
    # constant-factor wrapper and this harness measures time, not loss
    loss.backward()


# --- the two operations -----------------------------------------------------


def find_max_batch(job: HarnessJob, device: str = "cpu", cap: int | None = None,
                   probe: Callable[[int], None] | None = None) -> int:
    """Largest power-of-two micro batch that survives one training step.

    Doubles from 1 until a step raises out-of-memory or the cap is hit,
    so the returned size is verified by the run itself: it succeeded,
    and twice it failed (unless capped). Returns 0 when batch 1 already
    does not fit. Compilation stays off during the search. The default
    cap is the replication setting, global batch over the GPU count.

    probe(b) runs one step at micro batch b; the default builds the
    model once and reuses it. Injectable for tests.
    """
    if cap is None:
        cap = max(1, job.model.global_batch_size // job.n_gpus)
    if probe is None:
        built: dict = {}   # lazy so a build-time OOM counts as oom-at-one

        def probe(b: int) -> None:
            if not built:
                built["module"], built["opt"] = _build(job, device,
                                                       compile_enabled=False)
            _forward_backward(job.model, built["module"],
                              _random_batch(job.model, b, device), device)
            built["opt"].step()
            built["opt"].zero_grad(set_to_none=True)

    limit = 1 << (cap.bit_length() - 1)   # largest power of two within the cap
    try:
        probe(1)
    except Exception as e:
        if _is_oom(e):
            return 0
        raise
    b = 1
    while b < limit:
        try:
            probe(2 * b)
        except Exception as e:
            if _is_oom(e):
                return b
            raise
        b *= 2
    return b


def oom_record(job: HarnessJob, micro_batch: int) -> Record:
    return Record(model_id=job.model.id, gpu_id=job.gpu_id, n_gpus=job.n_gpus,
                  config=job.config.with_micro_batch(micro_batch),
                  oom=True, timestamp=utc_stamp())


def time_steps(job: HarnessJob, micro_batch: int, device: str = "cpu") -> RunResult:
    """Time repetitions passes and updates at the given micro batch."""
    if micro_batch < 1:
        raise HarnessError("micro_batch must be >= 1")
    entry, cfg = job.model, job.config
    try:
        module, optimizer = _build(job, device, compile_enabled=True)
        batches = [_random_batch(entry, micro_batch, device)
                   for _ in range(job.warmup + job.repetitions)]
        for i in range(job.warmup):
            _forward_backward(entry, module, batches[i], device)
            optimizer.step()
        optimizer.zero_grad(set_to_none=True)

        pass_times = []
        for i in range(job.repetitions):
            _sync(device)
            t0 = _clock()
            _forward_backward(entry, module, batches[job.warmup + i], device)
            _sync(device)
            pass_times.append(_clock() - t0)

        update_times = []
        for _ in range(job.repetitions):
            _sync(device)
            t0 = _clock()
            optimizer.step()
            _sync(device)
            update_times.append(_clock() - t0)
        optimizer.zero_grad(set_to_none=True)
    except Exception as e:
        if _is_oom(e):
            return RunResult(status="oom", record=oom_record(job, micro_batch))
        return RunResult(status="failed", reason=f"{type(e).__name__}: {e}")

    record = Record(
        model_id=entry.id, gpu_id=job.gpu_id, n_gpus=job.n_gpus,
        config=cfg.with_micro_batch(micro_batch),
        pass_seconds=statistics.mean(pass_times),
        update_seconds=statistics.mean(update_times),
        timestamp=utc_stamp(),
    )
    return RunResult(status="ok", record=record)


def run_job(job: HarnessJob, device: str = "cpu") -> RunResult:
    """find_max_batch then time_steps; honors a preset micro batch."""
    b = job.config.micro_batch
    if b == 0:
        try:
            b = find_max_batch(job, device)
        except Exception as e:
            return RunResult(status="failed", reason=f"{type(e).__name__}: {e}")
        if b == 0:
            return RunResult(status="oom", record=oom_record(job, 1))
    return time_steps(job, b, device)
