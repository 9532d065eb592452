"""Config search: enumerate memory-method combinations, time each, pick.

The search space is the cross product of activation checkpointing, sharding
stage/implementation and offloading, minus the invalid corners (offload
needs sharding; sharding without offload is a no-op on one GPU): 12 combos
on a single GPU, 22 on more. Free-lunch flags are not searched; each combo
gets them as high as the model and GPU allow. Micro batch per combo is the
largest power of two that fits, which is also the fastest under the step
model (per-pass overhead amortizes, compute does not change).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from .core import (
    GpuGeneration,
    MachineSpec,
    ModelSpec,
    PerfParams,
    SHARDING_ORDER,
    Sharding,
    TrainConfig,
    config_hash,
)
from .memory import fits, max_micro_batch
from .steptime import StepEstimate, step_estimate


def enumerate_configs(model: ModelSpec, machine: MachineSpec) -> list[TrainConfig]:
    """Combo templates in canonical order, free-lunch flags filled in,
    micro_batch/grad_accum_steps left at 1 for optimize() to set.

    Capabilities change flag values, never the combo count: a model that
    cannot compile still has the same 12 or 22 rows, with compile off.
    """
    kernels = model.supports_custom_kernels
    tf32 = machine.gpu.generation is not GpuGeneration.pre_ampere
    out = []
    for ckpt in (False, True):
        for sharding in SHARDING_ORDER:
            for offload in (False, True):
                if offload and sharding is Sharding.none:
                    continue
                if (sharding is not Sharding.none and not offload
                        and machine.n_gpus == 1):
                    continue
                compile_ = model.supports_compile and not sharding.is_deepspeed
                out.append(TrainConfig(
                    compile=compile_, custom_kernels=kernels, tf32=tf32,
                    act_checkpointing=ckpt, sharding=sharding, offload=offload,
                    micro_batch=1, grad_accum_steps=1,
                ))
    return out


def _fill_batch(model: ModelSpec, machine: MachineSpec, combo: TrainConfig,
                params: PerfParams) -> TrainConfig | None:
    mb = max_micro_batch(model, combo, machine, params)
    if mb < 1:
        return None
    gas = model.global_batch_size // (mb * machine.n_gpus)
    return TrainConfig(
        compile=combo.compile, custom_kernels=combo.custom_kernels,
        tf32=combo.tf32, act_checkpointing=combo.act_checkpointing,
        sharding=combo.sharding, offload=combo.offload,
        micro_batch=mb, grad_accum_steps=gas,
    )


def feasible_candidates(model: ModelSpec, machine: MachineSpec,
                        params: PerfParams) -> list[TrainConfig]:
    """Every searchable combo that fits, batch fields set, canonical order."""
    out = []
    for combo in enumerate_configs(model, machine):
        cfg = _fill_batch(model, machine, combo, params)
        if cfg is not None:
            out.append(cfg)
    return out


def naive_template(model: ModelSpec) -> TrainConfig:
    """Replication settings: original precision, no efficiency methods."""
    return TrainConfig()


def naive_candidates(model: ModelSpec, machine: MachineSpec,
                     params: PerfParams) -> list[TrainConfig]:
    cfg = _fill_batch(model, machine, naive_template(model), params)
    return [cfg] if cfg is not None else []


@dataclass(frozen=True)
class ConfigOutcome:
    config: TrainConfig
    feasible: bool
    limiting: str                  # "" when feasible; gpu / host / batch
    estimate: StepEstimate | None

    @property
    def days(self) -> float | None:
        return self.estimate.days if self.estimate else None


@dataclass
class SearchOutcome:
    model_id: str
    machine_id: str
    table: list[ConfigOutcome]     # canonical combo order
    best: ConfigOutcome | None     # None when nothing fits
    naive: ConfigOutcome

    @property
    def speedup_vs_naive(self) -> float | None:
        if self.best is None or not self.naive.feasible:
            return None
        return self.naive.estimate.days / self.best.estimate.days

    def to_json_dict(self) -> dict:
        def enc(o: ConfigOutcome) -> dict:
            d = {
                "config": {
                    "compile": o.config.compile,
                    "custom_kernels": o.config.custom_kernels,
                    "tf32": o.config.tf32,
                    "act_checkpointing": o.config.act_checkpointing,
                    "sharding": o.config.sharding.value,
                    "offload": o.config.offload,
                    "micro_batch": o.config.micro_batch,
                    "grad_accum_steps": o.config.grad_accum_steps,
                },
                "config_hash": config_hash(o.config),
                "feasible": o.feasible,
            }
            if o.feasible:
                d["days"] = o.estimate.days
                d["step_seconds"] = o.estimate.step_seconds
            else:
                d["limiting"] = o.limiting
            return d

        return {
            "model_id": self.model_id,
            "machine_id": self.machine_id,
            "best": enc(self.best) if self.best else None,
            "naive": enc(self.naive),
            "speedup_vs_naive": self.speedup_vs_naive,
            "table": [enc(o) for o in self.table],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        """Aligned table for terminals; one row per combo, best marked."""
        rows = []
        for o in self.table:
            mark = "*" if o is self.best else " "
            if o.feasible:
                tail = (f"{o.config.micro_batch:>4} {o.config.grad_accum_steps:>4} "
                        f"{o.estimate.days:>9.2f} {o.estimate.step_seconds:>9.2f}")
            else:
                tail = f"{'-':>4} {'-':>4} {'-':>9} {'-':>9}  {o.limiting}"
            rows.append(f" {mark} {o.config.flags_label():<40}{tail}")
        head = (f"{self.model_id} on {self.machine_id}\n"
                f"   {'config':<40}{'mb':>4} {'gas':>4} {'days':>9} {'step_s':>9}")
        if self.best is None:
            foot = "no feasible configuration"
        else:
            foot = (f"best: {self.best.config.label()} "
                    f"({self.best.estimate.days:.2f} days)")
            if self.naive.feasible:
                foot += (f"\nnaive: {self.naive.config.label()} "
                         f"({self.naive.estimate.days:.2f} days, "
                         f"best is {self.speedup_vs_naive:.2f}x faster)")
            else:
                foot += f"\nnaive: infeasible ({self.naive.limiting})"
        return head + "\n" + "\n".join(rows) + "\n" + foot + "\n"

    def to_csv(self) -> str:
        rows = ["compile,custom_kernels,tf32,act_checkpointing,sharding,offload,"
                "micro_batch,grad_accum_steps,feasible,days,step_seconds,limiting"]
        for o in self.table:
            c = o.config
            days = f"{o.estimate.days:.6g}" if o.feasible else ""
            step = f"{o.estimate.step_seconds:.6g}" if o.feasible else ""
            rows.append(f"{int(c.compile)},{int(c.custom_kernels)},{int(c.tf32)},"
                        f"{int(c.act_checkpointing)},{c.sharding.value},{int(c.offload)},"
                        f"{c.micro_batch},{c.grad_accum_steps},"
                        f"{int(o.feasible)},{days},{step},{o.limiting}")
        return "\n".join(rows) + "\n"


def _outcome(model: ModelSpec, machine: MachineSpec, combo: TrainConfig,
             params: PerfParams) -> ConfigOutcome:
    cfg = _fill_batch(model, machine, combo, params)
    if cfg is None:
        per_gpu_ok = (model.global_batch_size % machine.n_gpus == 0
                      and model.global_batch_size >= machine.n_gpus)
        if not per_gpu_ok:
            limiting = "batch"
        else:
            probe = fits(model, TrainConfig(
                compile=combo.compile, custom_kernels=combo.custom_kernels,
                tf32=combo.tf32, act_checkpointing=combo.act_checkpointing,
                sharding=combo.sharding, offload=combo.offload,
                micro_batch=1, grad_accum_steps=1), machine, params)
            limiting = probe.limiting
        return ConfigOutcome(config=combo, feasible=False,
                             limiting=limiting, estimate=None)
    return ConfigOutcome(config=cfg, feasible=True, limiting="",
                         estimate=step_estimate(model, cfg, machine, params))


def optimize(model: ModelSpec, machine: MachineSpec,
             params: PerfParams) -> SearchOutcome:
    """Time every searchable combo and pick the fastest feasible one.

    Ties break toward fewer memory-saving methods, then canonical order,
    so results are stable across runs and platforms.
    """
    table = [_outcome(model, machine, combo, params)
             for combo in enumerate_configs(model, machine)]
    best = None
    best_key = None
    for idx, o in enumerate(table):
        if not o.feasible:
            continue
        key = (o.estimate.days, o.config.memory_methods(), idx)
        if best_key is None or key < best_key:
            best, best_key = o, key
    return SearchOutcome(
        model_id=model.id, machine_id=machine.id,
        table=table, best=best,
        naive=naive_estimate(model, machine, params),
    )


def naive_estimate(model: ModelSpec, machine: MachineSpec,
                   params: PerfParams) -> ConfigOutcome:
    """Time the replication config (no methods, largest fitting batch)."""
    return _outcome(model, machine, naive_template(model), params)


__all__ = [
    "enumerate_configs", "feasible_candidates", "naive_template",
    "naive_candidates", "ConfigOutcome", "SearchOutcome",
    "optimize", "naive_estimate",
]
