"""First-pass training-time estimates from compute totals alone.

The estimate here deliberately ignores memory limits, communication and
utilization: it divides total training FLOPs by aggregate peak throughput.
It answers "could this ever be fast enough", not "how fast will it be";
the step-time model owns the realistic number.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import MachineSpec, ModelSpec, NoFlopsEstimateError, NotATokenModelError

SECONDS_PER_DAY = 86400.0


def tokens_processed(model: ModelSpec) -> float:
    """Total tokens consumed over the full run: batch * seq_len * steps."""
    if not model.is_token_model:
        raise NotATokenModelError(
            f"{model.id} has no sequence length; token count is undefined")
    return float(model.global_batch_size) * model.seq_len * model.training_steps


def training_flops(model: ModelSpec) -> float:
    """Total training compute.

    A positive training_flops_est on the model wins; it is there for models
    whose published counts account for architecture details the 6*P*T rule
    misses. Token models without an estimate fall back to 6*P*T. Vision
    models have no token count, so for them the estimate is mandatory.
    """
    if model.training_flops_est > 0:
        return model.training_flops_est
    if not model.is_token_model:
        raise NoFlopsEstimateError(
            f"{model.id}: vision models need an explicit training_flops_est")
    return 6.0 * model.param_count * tokens_processed(model)


@dataclass(frozen=True)
class AnalyticEstimate:
    total_flops: float
    aggregate_peak_flops: float
    seconds: float

    @property
    def days(self) -> float:
        return self.seconds / SECONDS_PER_DAY


def analytic_days(model: ModelSpec, machine: MachineSpec) -> AnalyticEstimate:
    """Ideal-utilization lower bound on training time for this machine."""
    total = training_flops(model)
    aggregate = machine.gpu.peak_flops * machine.n_gpus
    return AnalyticEstimate(
        total_flops=total,
        aggregate_peak_flops=aggregate,
        seconds=total / aggregate,
    )


__all__ = ["SECONDS_PER_DAY", "tokens_processed", "training_flops",
           "AnalyticEstimate", "analytic_days"]
