"""Static per-GPU memory accounting.

Model states follow the standard mixed-precision layout: a half-precision
working copy and half-precision gradients (2 + 2 bytes per parameter) plus
fp32 master weights and two Adam moments in the optimizer (12 bytes). Full
fp32 training keeps 4-byte weights and gradients and an 8-byte optimizer.
Sharding divides the targeted shares across GPUs; offloading relocates the
sharded optimizer state (and, at stage 3, the weight shard) to host RAM.

Activations are a per-family linear coefficient on layer count, batch,
token (or pixel) count and width. Two naive-mode surcharges matter for
feasibility: materialized attention grows with seq_len * heads / hidden
until custom kernels remove it, and the unfused SSM scan keeps its state
expansion resident. Checkpointing stores per-layer inputs and one layer's
working set, never more than storing everything.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .core import (
    Family,
    MachineSpec,
    ModelSpec,
    OptimizerKind,
    PerfParams,
    Precision,
    Sharding,
    TrainConfig,
)


def _optimizer_bytes_per_param(precision: Precision, optimizer: OptimizerKind) -> float:
    # fp32 master copy only needed under mixed precision
    master = 4.0 if precision is not Precision.fp32 else 0.0
    moments = 4.0 if optimizer is OptimizerKind.sgd else 8.0
    return master + moments


@dataclass(frozen=True)
class MemoryBreakdown:
    """Per-GPU bytes. host_offloaded_bytes is this GPU's share of host RAM."""

    weights_bytes: float
    grads_bytes: float
    optimizer_bytes: float
    activation_bytes: float
    overhead_bytes: float
    host_offloaded_bytes: float

    @property
    def gpu_total_bytes(self) -> float:
        return (self.weights_bytes + self.grads_bytes + self.optimizer_bytes
                + self.activation_bytes + self.overhead_bytes)


def model_state_bytes(model: ModelSpec, config: TrainConfig, n_gpus: int,
                      params: PerfParams | None = None) -> MemoryBreakdown:
    """Weights, gradients and optimizer state per GPU after sharding and
    offload. Activations and overhead are zero here; fits() fills them in."""
    params = params or PerfParams()
    p = model.param_count
    elem = float(model.precision.elem_bytes)
    weights = elem * p
    grads = elem * p
    optimizer = _optimizer_bytes_per_param(model.precision, model.optimizer) * p

    stage = config.sharding.stage
    n = float(n_gpus)
    if stage >= 1:
        optimizer /= n
    if stage >= 2:
        grads /= n
    if stage >= 3:
        weights /= n

    host = 0.0
    if config.offload and stage >= 1:
        host += optimizer
        optimizer = 0.0
        if stage >= 3:
            host += weights
            weights = 0.0

    return MemoryBreakdown(
        weights_bytes=weights,
        grads_bytes=grads,
        optimizer_bytes=optimizer,
        activation_bytes=0.0,
        overhead_bytes=0.0,
        host_offloaded_bytes=host,
    )


def _effective_act_coeff(model: ModelSpec, params: PerfParams,
                         custom_kernels: bool) -> tuple[float, float]:
    """Returns (coefficient, token_count) for the linear activation formula."""
    base = params.act_coefficient(model.family)
    if model.family is Family.conv:
        return base, float(model.image_size) ** 2
    if model.family is Family.vit:
        tokens = float(model.image_size // 16) ** 2
    else:
        tokens = float(model.seq_len)
    if model.family is Family.ssm:
        if not custom_kernels:
            base += params.ssm_naive_extra_coeff
        return base, tokens
    if model.num_heads > 0 and not custom_kernels:
        base += params.attn_naive_quad_coeff * tokens * model.num_heads / model.hidden_dim
    return base, tokens


def activation_bytes(model: ModelSpec, micro_batch: int, act_checkpointing: bool,
                     params: PerfParams | None = None, *,
                     custom_kernels: bool = False) -> float:
    """Activation memory per GPU for one micro batch."""
    params = params or PerfParams()
    coeff, tokens = _effective_act_coeff(model, params, custom_kernels)
    width = model.hidden_dim if model.family is not Family.conv else 1
    unit = float(micro_batch) * tokens * width * model.precision.elem_bytes
    full = coeff * model.num_layers * unit
    if not act_checkpointing:
        return full
    # stored layer inputs plus one layer's live working set; recomputing
    # can never require more than keeping everything
    return min(full, (2.0 * model.num_layers + coeff) * unit)


@dataclass(frozen=True)
class FitsResult:
    fits: bool
    breakdown: MemoryBreakdown
    limiting: str  # "gpu", "host", or "none"


def fits(model: ModelSpec, config: TrainConfig, machine: MachineSpec,
         params: PerfParams | None = None) -> FitsResult:
    params = params or PerfParams()
    states = model_state_bytes(model, config, machine.n_gpus, params)
    act = activation_bytes(model, config.micro_batch, config.act_checkpointing,
                           params, custom_kernels=config.custom_kernels)
    breakdown = replace(states, activation_bytes=act,
                        overhead_bytes=params.framework_overhead_bytes)
    gpu_budget = machine.gpu.mem_bytes * (1.0 - params.mem_headroom_frac)
    host_total = breakdown.host_offloaded_bytes * machine.n_gpus
    if breakdown.gpu_total_bytes > gpu_budget:
        return FitsResult(False, breakdown, "gpu")
    if host_total > machine.host_ram_bytes:
        return FitsResult(False, breakdown, "host")
    return FitsResult(True, breakdown, "none")


def max_micro_batch(model: ModelSpec, config: TrainConfig, machine: MachineSpec,
                    params: PerfParams | None = None) -> int:
    """Largest power-of-two micro batch that fits and divides the per-GPU
    batch. 0 means nothing fits (or the global batch cannot be split this
    way). The config's own micro_batch/grad_accum_steps are ignored."""
    params = params or PerfParams()
    if model.global_batch_size % machine.n_gpus:
        return 0
    per_gpu = model.global_batch_size // machine.n_gpus
    if per_gpu < 1:
        return 0
    cap = per_gpu & -per_gpu  # largest power of two dividing per_gpu
    best = 0
    b = 1
    while b <= cap:
        if not fits(model, replace(config, micro_batch=b), machine, params).fits:
            break
        best = b
        b *= 2
    return best


__all__ = ["MemoryBreakdown", "model_state_bytes", "activation_bytes",
           "FitsResult", "fits", "max_micro_batch"]
