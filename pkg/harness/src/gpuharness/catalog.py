"""Read the planner's catalog and run-config files.

The harness shares catalog files with the planning package but parses
them independently: it needs only the architecture fields required to
build a module, and it must not import planner internals. Extra keys in
a model file are therefore ignored here (the planner validates them).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

FAMILIES = ("decoder", "encoder", "ssm", "conv", "vit")
PRECISIONS = ("fp32", "fp16_mixed", "bf16_mixed")
OPTIMIZERS = ("adam", "sgd")

SHARDINGS = ("none", "zero1", "zero2", "zero3", "fsdp2", "fsdp3")


class HarnessError(Exception):
    pass


@dataclass(frozen=True)
class ModelEntry:
    """The slice of a catalog model file the harness builds from."""

    id: str
    family: str
    num_layers: int
    hidden_dim: int
    num_heads: int
    seq_len: int
    image_size: int
    vocab_size: int
    num_classes: int
    global_batch_size: int
    training_steps: int
    precision: str
    optimizer: str

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise HarnessError(f"{self.id}: unknown family {self.family!r}")
        if self.precision not in PRECISIONS:
            raise HarnessError(f"{self.id}: unknown precision {self.precision!r}")
        if self.optimizer not in OPTIMIZERS:
            raise HarnessError(f"{self.id}: unknown optimizer {self.optimizer!r}")
        if self.seq_len == 0 and self.image_size == 0:
            raise HarnessError(f"{self.id}: need seq_len or image_size")


_ENTRY_INTS = ("num_layers", "hidden_dim", "num_heads", "seq_len", "image_size",
               "vocab_size", "num_classes", "global_batch_size", "training_steps")


def load_model_entry(catalog_dir: Path | str, model_id: str) -> ModelEntry:
    """Find models/<*>.toml whose id field matches and parse the harness slice."""
    models_dir = Path(catalog_dir) / "models"
    if not models_dir.is_dir():
        raise HarnessError(f"{catalog_dir}: no models/ directory")
    for path in sorted(models_dir.glob("*.toml")):
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        if data.get("id") != model_id:
            continue
        try:
            return ModelEntry(
                id=model_id,
                family=str(data["family"]),
                precision=str(data["precision"]),
                optimizer=str(data["optimizer"]),
                **{k: int(data.get(k, 0)) for k in _ENTRY_INTS},
            )
        except KeyError as e:
            raise HarnessError(f"{path}: missing field {e}") from e
    raise HarnessError(f"no model with id {model_id!r} under {models_dir}")


@dataclass(frozen=True)
class RunConfig:
    """Method flags plus accumulation, as stamped onto emitted records.

    micro_batch 0 means "not chosen yet"; the runner fills it in, either
    from the file or from the doubling search.
    """

    compile: bool = False
    custom_kernels: bool = False
    tf32: bool = False
    act_checkpointing: bool = False
    sharding: str = "none"
    offload: bool = False
    micro_batch: int = 0
    grad_accum_steps: int = 1

    def __post_init__(self):
        if self.sharding not in SHARDINGS:
            raise HarnessError(f"unknown sharding {self.sharding!r}")
        if self.grad_accum_steps < 1:
            raise HarnessError("grad_accum_steps must be >= 1")
        if self.micro_batch < 0:
            raise HarnessError("micro_batch must be >= 0")

    def with_micro_batch(self, b: int) -> "RunConfig":
        return replace(self, micro_batch=b)


_CONFIG_KEYS = {"compile", "custom_kernels", "tf32", "act_checkpointing",
                "sharding", "offload", "micro_batch", "grad_accum_steps",
                "repetitions", "warmup"}


def load_run_config(path: Path | str) -> tuple[RunConfig, dict]:
    """Parse a run-config TOML.

    Returns the config plus a dict of job overrides (repetitions, warmup)
    when the file carries them.
    """
    path = Path(path)
    if not path.is_file():
        raise HarnessError(f"no config file at {path}")
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise HarnessError(f"{path}: unknown config keys {sorted(unknown)}")
    job_over = {k: int(data.pop(k)) for k in ("repetitions", "warmup") if k in data}
    try:
        return RunConfig(**data), job_over
    except TypeError as e:
        raise HarnessError(f"{path}: {e}") from e
