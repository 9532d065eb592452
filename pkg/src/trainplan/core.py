"""Domain types and catalog plumbing.

Everything downstream (memory accounting, step timing, search, cost) works
off four frozen input records: ModelSpec, GpuSpec, MachineSpec, TrainConfig.
Catalogs live on disk as one TOML file per entry; loading is fail-closed,
an unknown key is an error rather than a silent default.

Sizes are bytes, bandwidths are bytes/second, throughput is FLOP/s.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

GIB = 1 << 30

FIXTURES_DIR = Path(__file__).resolve().parent / "fixtures"


class PlannerError(Exception):
    """Base error. `code` is a stable machine-readable slug."""

    code = "planner-error"

    def __init__(self, message: str):
        super().__init__(message)
        self.message = message


class CatalogError(PlannerError):
    code = "bad-catalog"


class NotATokenModelError(PlannerError):
    code = "not-a-token-model"


class NoFlopsEstimateError(PlannerError):
    code = "no-flops-estimate"


class InfeasibleConfigError(PlannerError):
    code = "infeasible-config"


class DegenerateFitError(PlannerError):
    code = "degenerate-fit"


class Family(str, Enum):
    decoder = "decoder"
    encoder = "encoder"
    ssm = "ssm"
    conv = "conv"
    vit = "vit"


class Precision(str, Enum):
    fp32 = "fp32"
    fp16_mixed = "fp16_mixed"
    bf16_mixed = "bf16_mixed"

    @property
    def elem_bytes(self) -> int:
        # activation / gradient element width
        return 4 if self is Precision.fp32 else 2


class OptimizerKind(str, Enum):
    adam = "adam"
    adamw = "adamw"
    sgd = "sgd"


class Sharding(str, Enum):
    """State-sharding strategy. zero* and fsdp* with the same stage number
    shard the same tensors; they differ only in which flags they tolerate
    (compile does not work under the zero implementations)."""

    none = "none"
    zero1 = "zero1"
    zero2 = "zero2"
    zero3 = "zero3"
    fsdp2 = "fsdp2"
    fsdp3 = "fsdp3"

    @property
    def stage(self) -> int:
        return {"none": 0, "zero1": 1, "zero2": 2, "zero3": 3,
                "fsdp2": 2, "fsdp3": 3}[self.value]

    @property
    def is_deepspeed(self) -> bool:
        return self.value.startswith("zero")


SHARDING_ORDER = [Sharding.none, Sharding.zero1, Sharding.zero2,
                  Sharding.zero3, Sharding.fsdp2, Sharding.fsdp3]


class GpuGeneration(str, Enum):
    pre_ampere = "pre_ampere"
    ampere = "ampere"
    hopper = "hopper"


@dataclass(frozen=True)
class ModelSpec:
    id: str
    family: Family
    param_count: float
    num_layers: int
    hidden_dim: int
    num_heads: int            # 0 for headless families (ssm, conv)
    seq_len: int              # 0 for pure-vision models
    image_size: int           # 0 for token models
    vocab_size: int
    num_classes: int
    global_batch_size: int
    training_steps: int
    precision: Precision
    optimizer: OptimizerKind
    supports_compile: bool = True
    supports_custom_kernels: bool = True
    training_flops_est: float = 0.0   # 0 means derive from 6 * P * tokens

    def __post_init__(self):
        if self.param_count <= 0:
            raise CatalogError(f"{self.id}: param_count must be positive")
        if self.num_layers < 1:
            raise CatalogError(f"{self.id}: num_layers must be >= 1")
        if self.global_batch_size < 1 or self.training_steps < 1:
            raise CatalogError(f"{self.id}: batch size and step count must be >= 1")
        if self.seq_len == 0 and self.image_size == 0:
            raise CatalogError(f"{self.id}: need seq_len or image_size")

    @property
    def is_token_model(self) -> bool:
        return self.seq_len > 0


@dataclass(frozen=True)
class GpuSpec:
    id: str
    mem_bytes: int
    peak_flops: float          # dense half-precision tensor peak
    mem_bw_bytes_per_s: float
    generation: GpuGeneration
    price_usd: float

    def __post_init__(self):
        if self.mem_bytes <= 0 or self.peak_flops <= 0 or self.mem_bw_bytes_per_s <= 0:
            raise CatalogError(f"{self.id}: memory, peak flops and bandwidth must be positive")
        if self.price_usd < 0:
            raise CatalogError(f"{self.id}: price must be >= 0")


@dataclass(frozen=True)
class MachineSpec:
    id: str
    gpu: GpuSpec
    n_gpus: int
    host_ram_bytes: int
    intra_bw_bytes_per_s: float       # effective all-reduce link bandwidth
    host_device_bw_bytes_per_s: float
    system_price_usd: float           # everything that is not the GPUs

    def __post_init__(self):
        if self.n_gpus < 1:
            raise CatalogError(f"{self.id}: n_gpus must be >= 1")
        if self.host_ram_bytes <= 0:
            raise CatalogError(f"{self.id}: host_ram_bytes must be positive")
        if self.intra_bw_bytes_per_s <= 0 or self.host_device_bw_bytes_per_s <= 0:
            raise CatalogError(f"{self.id}: bandwidths must be positive")

    @property
    def total_price_usd(self) -> float:
        return self.n_gpus * self.gpu.price_usd + self.system_price_usd


@dataclass(frozen=True)
class TrainConfig:
    compile: bool = False
    custom_kernels: bool = False
    tf32: bool = False
    act_checkpointing: bool = False
    sharding: Sharding = Sharding.none
    offload: bool = False
    micro_batch: int = 1
    grad_accum_steps: int = 1

    def memory_methods(self) -> int:
        """Number of memory-saving methods enabled (checkpointing, sharding,
        offload count; the free-lunch flags do not)."""
        return int(self.act_checkpointing) + int(self.sharding is not Sharding.none) + int(self.offload)

    def flags_label(self) -> str:
        bits = []
        if self.compile:
            bits.append("compile")
        if self.custom_kernels:
            bits.append("kernels")
        if self.tf32:
            bits.append("tf32")
        if self.act_checkpointing:
            bits.append("ckpt")
        if self.sharding is not Sharding.none:
            bits.append(self.sharding.value)
        if self.offload:
            bits.append("offload")
        return "+".join(bits) if bits else "plain"

    def label(self) -> str:
        return f"{self.flags_label()} mb{self.micro_batch} ga{self.grad_accum_steps}"


def config_sort_key(config: TrainConfig) -> tuple:
    """Canonical ordering for configs, used for tie-breaks and stable output."""
    return (
        config.act_checkpointing,
        SHARDING_ORDER.index(config.sharding),
        config.offload,
        config.compile,
        config.custom_kernels,
        config.tf32,
        config.micro_batch,
        config.grad_accum_steps,
    )


def config_hash(config: TrainConfig) -> str:
    """Stable 10-hex-char digest of a config, for residual reports and logs."""
    canon = (
        f"compile={int(config.compile)};kernels={int(config.custom_kernels)};"
        f"tf32={int(config.tf32)};ckpt={int(config.act_checkpointing)};"
        f"sharding={config.sharding.value};offload={int(config.offload)};"
        f"micro={config.micro_batch};accum={config.grad_accum_steps}"
    )
    return hashlib.sha256(canon.encode()).hexdigest()[:10]


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


def validate(model: ModelSpec, machine: MachineSpec, config: TrainConfig) -> list[Violation]:
    """Check TrainConfig invariants for this model/machine pair.

    Returns an empty list when the config is valid. Violations are data,
    not exceptions, so callers can filter search spaces without try/except.
    """
    out: list[Violation] = []
    n = machine.n_gpus
    if config.micro_batch < 1:
        out.append(Violation("nonpositive-micro-batch",
                             f"micro_batch must be >= 1, got {config.micro_batch}"))
    if config.grad_accum_steps < 1:
        out.append(Violation("nonpositive-grad-accum",
                             f"grad_accum_steps must be >= 1, got {config.grad_accum_steps}"))
    if config.offload and config.sharding is Sharding.none:
        out.append(Violation("offload-requires-sharding",
                             "offloading relocates sharded state; enable a sharding stage"))
    if config.sharding is not Sharding.none and not config.offload and n == 1:
        out.append(Violation("sharding-noop-on-1gpu",
                             f"{config.sharding.value} on a single GPU without offload changes nothing"))
    if config.micro_batch >= 1 and config.grad_accum_steps >= 1:
        got = config.micro_batch * config.grad_accum_steps * n
        if got != model.global_batch_size:
            out.append(Violation("batch-split-mismatch",
                                 f"micro_batch * grad_accum_steps * n_gpus = {got}, "
                                 f"global batch is {model.global_batch_size}"))
    if config.compile and config.sharding.is_deepspeed and config.sharding is not Sharding.none:
        out.append(Violation("compile-incompatible-sharding",
                             f"compile does not run under {config.sharding.value}"))
    if config.tf32 and machine.gpu.generation is GpuGeneration.pre_ampere:
        out.append(Violation("tf32-requires-ampere",
                             f"{machine.gpu.id} predates tf32 support"))
    return out


# ---------------------------------------------------------------------------
# Performance parameters

# priors, not measurements: rough achieved-fraction-of-peak magnitudes for
# an uncalibrated GPU. Dense transformers sustain roughly half of peak;
# selective-scan models are launch-bound an order of magnitude below that.
DEFAULT_MFU = {
    "decoder": 0.45, "encoder": 0.55, "ssm": 0.05, "conv": 0.30, "vit": 0.13,
}

DEFAULT_ACT_COEFF = {
    "decoder": 16.0, "encoder": 16.0, "ssm": 6.0, "conv": 16.0, "vit": 16.0,
}


@dataclass(frozen=True)
class PerfParams:
    """Calibratable constants of the step-time and memory models.

    Throughput knobs (fitted by calibrate):
      mfu_base               achieved fraction of peak, per (gpu, family);
                             nested map gpu_id -> family -> fraction with a
                             "default" gpu entry as fallback
      mult_compile/kernels/tf32   speed multipliers for the free-lunch flags
                             (tf32 only bites on fp32-precision models)
      pass_overhead_seconds  fixed per-pass launch/framework cost, per gpu_id
                             with a "default" fallback; this is what bends
                             small-micro-batch throughput down
      comm_efficiency        achieved fraction of link bandwidth
      host_efficiency        achieved fraction of host-device bandwidth
      update_bytes_per_param traffic per parameter in the optimizer step

    Memory-shape constants (carried, not fitted):
      act_coeff              per-family linear activation coefficient
      attn_naive_quad_coeff  extra activation share from materialized
                             attention, removed by custom kernels
      ssm_naive_extra_coeff  extra share from the unfused scan, same idea
      ckpt_recompute_frac    extra forward fraction under checkpointing
      framework_overhead_bytes, mem_headroom_frac   what the allocator and
                             runtime keep off the table
    """

    mfu_base: Mapping[str, Mapping[str, float]] = field(
        default_factory=lambda: {"default": dict(DEFAULT_MFU)})
    mult_compile: float = 1.10
    mult_kernels: float = 1.25
    mult_tf32: float = 1.08
    pass_overhead_seconds: Mapping[str, float] = field(
        default_factory=lambda: {"default": 0.15})
    comm_efficiency: float = 0.70
    host_efficiency: float = 0.80
    update_bytes_per_param: float = 24.0
    act_coeff: Mapping[str, float] = field(
        default_factory=lambda: dict(DEFAULT_ACT_COEFF))
    attn_naive_quad_coeff: float = 4.0
    ssm_naive_extra_coeff: float = 20.0
    ckpt_recompute_frac: float = 1.0 / 3.0
    framework_overhead_bytes: float = 1.5 * GIB
    mem_headroom_frac: float = 0.08

    def __post_init__(self):
        for gpu, byfam in self.mfu_base.items():
            for fam, v in byfam.items():
                if not (0.0 < v <= 1.0):
                    raise CatalogError(f"mfu_base[{gpu}][{fam}] out of (0, 1]: {v}")
        for name in ("mult_compile", "mult_kernels", "mult_tf32"):
            if getattr(self, name) < 1.0:
                raise CatalogError(f"{name} must be >= 1")
        for gpu, v in self.pass_overhead_seconds.items():
            if v < 0:
                raise CatalogError(f"pass_overhead_seconds[{gpu}] must be >= 0")
        for name in ("comm_efficiency", "host_efficiency"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise CatalogError(f"{name} out of (0, 1]: {v}")
        if self.update_bytes_per_param < 0:
            raise CatalogError("update_bytes_per_param must be >= 0")
        for fam, v in self.act_coeff.items():
            if v <= 0:
                raise CatalogError(f"act_coeff[{fam}] must be positive")
        if self.attn_naive_quad_coeff < 0 or self.ssm_naive_extra_coeff < 0:
            raise CatalogError("naive activation coefficients must be >= 0")
        if not (0.0 <= self.ckpt_recompute_frac <= 1.0):
            raise CatalogError("ckpt_recompute_frac out of [0, 1]")
        if self.framework_overhead_bytes < 0:
            raise CatalogError("framework_overhead_bytes must be >= 0")
        if not (0.0 <= self.mem_headroom_frac < 1.0):
            raise CatalogError("mem_headroom_frac out of [0, 1)")

    def mfu(self, gpu_id: str, family: Family | str) -> float:
        fam = family.value if isinstance(family, Family) else family
        for key in (gpu_id, "default"):
            byfam = self.mfu_base.get(key)
            if byfam and fam in byfam:
                return byfam[fam]
        return DEFAULT_MFU[fam]

    def pass_overhead(self, gpu_id: str) -> float:
        if gpu_id in self.pass_overhead_seconds:
            return self.pass_overhead_seconds[gpu_id]
        return self.pass_overhead_seconds.get("default", 0.0)

    def act_coefficient(self, family: Family | str) -> float:
        fam = family.value if isinstance(family, Family) else family
        if fam not in self.act_coeff:
            raise CatalogError(f"no act_coeff for family {fam}")
        return self.act_coeff[fam]

    @classmethod
    def ideal(cls) -> "PerfParams":
        """Limit parameters: full peak, free everything. Under these,
        step time collapses to pure compute and training_days matches
        analytic_days on a single GPU."""
        return cls(
            mfu_base={"default": {f.value: 1.0 for f in Family}},
            mult_compile=1.0, mult_kernels=1.0, mult_tf32=1.0,
            pass_overhead_seconds={"default": 0.0},
            comm_efficiency=1.0, host_efficiency=1.0,
            update_bytes_per_param=0.0,
        )


# ---------------------------------------------------------------------------
# Measurement records (JSONL)


@dataclass(frozen=True)
class MeasurementRecord:
    """One timed step on real hardware: mean seconds per forward/backward
    pass at the given micro batch, and per optimizer update. An oom record
    marks the setting as not measurable; it carries no timings."""

    model_id: str
    gpu_id: str
    n_gpus: int
    config: TrainConfig
    pass_seconds: float | None = None
    update_seconds: float | None = None
    oom: bool = False
    timestamp: str = ""

    def __post_init__(self):
        if self.oom:
            if self.pass_seconds is not None or self.update_seconds is not None:
                raise CatalogError(f"{self.model_id}: oom record must not carry timings")
        else:
            if self.pass_seconds is None or self.update_seconds is None:
                raise CatalogError(f"{self.model_id}: record needs pass and update seconds")
            if self.pass_seconds <= 0 or self.update_seconds <= 0:
                raise CatalogError(f"{self.model_id}: timings must be positive")

    def to_json_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "model_id": self.model_id,
            "gpu_id": self.gpu_id,
            "n_gpus": self.n_gpus,
            "config": {
                "compile": self.config.compile,
                "custom_kernels": self.config.custom_kernels,
                "tf32": self.config.tf32,
                "act_checkpointing": self.config.act_checkpointing,
                "sharding": self.config.sharding.value,
                "offload": self.config.offload,
                "micro_batch": self.config.micro_batch,
                "grad_accum_steps": self.config.grad_accum_steps,
            },
            "oom": self.oom,
            "timestamp": self.timestamp,
        }
        if not self.oom:
            d["pass_seconds"] = self.pass_seconds
            d["update_seconds"] = self.update_seconds
        return d

    @classmethod
    def from_json_dict(cls, d: Mapping[str, Any]) -> "MeasurementRecord":
        known = {"model_id", "gpu_id", "n_gpus", "config",
                 "pass_seconds", "update_seconds", "oom", "timestamp"}
        extra = set(d) - known
        if extra:
            raise CatalogError(f"measurement record has unknown fields: {sorted(extra)}")
        cfg = dict(d["config"])
        cfg_extra = set(cfg) - {"compile", "custom_kernels", "tf32", "act_checkpointing",
                                "sharding", "offload", "micro_batch", "grad_accum_steps"}
        if cfg_extra:
            raise CatalogError(f"record config has unknown fields: {sorted(cfg_extra)}")
        cfg["sharding"] = Sharding(cfg.get("sharding", "none"))
        oom = bool(d.get("oom", False))
        return cls(
            model_id=str(d["model_id"]),
            gpu_id=str(d["gpu_id"]),
            n_gpus=int(d["n_gpus"]),
            config=TrainConfig(**cfg),
            pass_seconds=None if oom else float(d["pass_seconds"]),
            update_seconds=None if oom else float(d["update_seconds"]),
            oom=oom,
            timestamp=str(d.get("timestamp", "")),
        )


def read_records(path: Path | str) -> list[MeasurementRecord]:
    records = []
    for i, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            records.append(MeasurementRecord.from_json_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError, CatalogError) as e:
            raise CatalogError(f"{path}:{i}: bad measurement record ({e})") from e
    return records


def write_records(path: Path | str, records: Iterable[MeasurementRecord]) -> None:
    lines = [json.dumps(r.to_json_dict(), sort_keys=True) for r in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


# ---------------------------------------------------------------------------
# Catalog loading

_MODEL_FIELDS = {f.name for f in fields(ModelSpec)}
_GPU_FIELDS = {f.name for f in fields(GpuSpec)}
_MACHINE_KEYS = {"id", "gpu", "n_gpus", "host_ram_bytes", "intra_bw_bytes_per_s",
                 "host_device_bw_bytes_per_s", "system_price_usd"}


def _check_keys(data: Mapping[str, Any], allowed: set[str], what: str, path: Path) -> None:
    extra = set(data) - allowed
    if extra:
        raise CatalogError(f"{path}: unknown {what} fields: {sorted(extra)}")
    missing = allowed - set(data)
    if missing:
        raise CatalogError(f"{path}: missing {what} fields: {sorted(missing)}")


def _read_toml(path: Path) -> dict[str, Any]:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise CatalogError(f"{path}: not valid TOML ({e})") from e


def load_model(path: Path) -> ModelSpec:
    data = _read_toml(path)
    optional = {"supports_compile", "supports_custom_kernels", "training_flops_est"}
    _check_keys({k: v for k, v in data.items() if k not in optional},
                _MODEL_FIELDS - optional, "model", path)
    try:
        data["family"] = Family(data["family"])
        data["precision"] = Precision(data["precision"])
        data["optimizer"] = OptimizerKind(data["optimizer"])
        return ModelSpec(**data)
    except (ValueError, TypeError) as e:
        raise CatalogError(f"{path}: {e}") from e


def load_gpu(path: Path) -> GpuSpec:
    data = _read_toml(path)
    _check_keys(data, _GPU_FIELDS, "gpu", path)
    try:
        data["generation"] = GpuGeneration(data["generation"])
        return GpuSpec(**data)
    except (ValueError, TypeError) as e:
        raise CatalogError(f"{path}: {e}") from e


def load_machine(path: Path, gpus: Mapping[str, GpuSpec]) -> MachineSpec:
    data = _read_toml(path)
    _check_keys(data, _MACHINE_KEYS, "machine", path)
    gpu_id = data.pop("gpu")
    if gpu_id not in gpus:
        raise CatalogError(f"{path}: references unknown gpu {gpu_id!r}")
    try:
        return MachineSpec(gpu=gpus[gpu_id], **data)
    except (ValueError, TypeError) as e:
        raise CatalogError(f"{path}: {e}") from e


@dataclass
class Catalog:
    models: dict[str, ModelSpec]
    gpus: dict[str, GpuSpec]
    machines: dict[str, MachineSpec]
    root: Path

    def model(self, model_id: str) -> ModelSpec:
        if model_id not in self.models:
            raise CatalogError(f"unknown model {model_id!r}; have {sorted(self.models)}")
        return self.models[model_id]

    def gpu(self, gpu_id: str) -> GpuSpec:
        if gpu_id not in self.gpus:
            raise CatalogError(f"unknown gpu {gpu_id!r}; have {sorted(self.gpus)}")
        return self.gpus[gpu_id]

    def machine_for(self, gpu_id: str, n_gpus: int) -> MachineSpec:
        for m in self.machines.values():
            if m.gpu.id == gpu_id and m.n_gpus == n_gpus:
                return m
        raise CatalogError(f"no machine with {n_gpus} x {gpu_id} in catalog")


def load_catalog(root: Path | str) -> Catalog:
    root = Path(root)
    for sub in ("models", "gpus", "machines"):
        if not (root / sub).is_dir():
            raise CatalogError(f"catalog root {root} has no {sub}/ directory")
    gpus: dict[str, GpuSpec] = {}
    for path in sorted((root / "gpus").glob("*.toml")):
        gpu = load_gpu(path)
        if gpu.id in gpus:
            raise CatalogError(f"duplicate gpu id {gpu.id!r}")
        gpus[gpu.id] = gpu
    models: dict[str, ModelSpec] = {}
    for path in sorted((root / "models").glob("*.toml")):
        model = load_model(path)
        if model.id in models:
            raise CatalogError(f"duplicate model id {model.id!r}")
        models[model.id] = model
    machines: dict[str, MachineSpec] = {}
    for path in sorted((root / "machines").glob("*.toml")):
        machine = load_machine(path, gpus)
        if machine.id in machines:
            raise CatalogError(f"duplicate machine id {machine.id!r}")
        machines[machine.id] = machine
    return Catalog(models=models, gpus=gpus, machines=machines, root=root)


def bundled_catalog() -> Catalog:
    return load_catalog(FIXTURES_DIR)


# ---------------------------------------------------------------------------
# Minimal TOML emission. Only what catalogs and PerfParams need: one level
# of nesting, str/bool/int/float values. Reading uses the real parser.


def _toml_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, Enum):
        v = v.value
    if isinstance(v, str):
        return json.dumps(v)
    raise TypeError(f"cannot emit {type(v).__name__} as TOML")


def toml_dumps(data: Mapping[str, Any]) -> str:
    scalars = {k: v for k, v in data.items() if not isinstance(v, Mapping)}
    tables = {k: v for k, v in data.items() if isinstance(v, Mapping)}
    lines = [f"{k} = {_toml_value(v)}" for k, v in scalars.items()]
    for name, table in tables.items():
        sub_tables = {k: v for k, v in table.items() if isinstance(v, Mapping)}
        sub_scalars = {k: v for k, v in table.items() if not isinstance(v, Mapping)}
        if sub_scalars or not sub_tables:
            lines.append("")
            lines.append(f"[{name}]")
            lines.extend(f"{k} = {_toml_value(v)}" for k, v in sub_scalars.items())
        for sub_name, sub in sub_tables.items():
            lines.append("")
            lines.append(f"[{name}.{sub_name}]")
            lines.extend(f"{k} = {_toml_value(v)}" for k, v in sub.items())
    return "\n".join(lines) + "\n"


_PERFPARAMS_SCALARS = {
    "mult_compile", "mult_kernels", "mult_tf32", "comm_efficiency",
    "host_efficiency", "update_bytes_per_param", "attn_naive_quad_coeff",
    "ssm_naive_extra_coeff", "ckpt_recompute_frac", "framework_overhead_bytes",
    "mem_headroom_frac",
}


def dump_perfparams(params: PerfParams) -> str:
    data: dict[str, Any] = {"schema": "perfparams-v1"}
    for name in sorted(_PERFPARAMS_SCALARS):
        data[name] = getattr(params, name)
    data["pass_overhead_seconds"] = {k: params.pass_overhead_seconds[k]
                                     for k in sorted(params.pass_overhead_seconds)}
    data["act_coeff"] = {k: params.act_coeff[k] for k in sorted(params.act_coeff)}
    data["mfu_base"] = {g: {f: params.mfu_base[g][f] for f in sorted(params.mfu_base[g])}
                        for g in sorted(params.mfu_base)}
    return toml_dumps(data)


def load_perfparams(path: Path | str) -> PerfParams:
    path = Path(path)
    data = _read_toml(path)
    schema = data.pop("schema", None)
    if schema != "perfparams-v1":
        raise CatalogError(f"{path}: unknown perfparams schema {schema!r}")
    allowed = _PERFPARAMS_SCALARS | {"mfu_base", "pass_overhead_seconds", "act_coeff"}
    extra = set(data) - allowed
    if extra:
        raise CatalogError(f"{path}: unknown perfparams fields: {sorted(extra)}")
    try:
        return PerfParams(**data)
    except TypeError as e:
        raise CatalogError(f"{path}: {e}") from e


def save_perfparams(path: Path | str, params: PerfParams) -> None:
    Path(path).write_text(dump_perfparams(params))


def bundled_perfparams() -> PerfParams:
    return load_perfparams(FIXTURES_DIR / "perfparams.toml")


def file_sha256(path: Path | str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


__all__ = [
    "GIB", "FIXTURES_DIR",
    "PlannerError", "CatalogError", "NotATokenModelError", "NoFlopsEstimateError",
    "InfeasibleConfigError", "DegenerateFitError",
    "Family", "Precision", "OptimizerKind", "Sharding", "GpuGeneration",
    "SHARDING_ORDER",
    "ModelSpec", "GpuSpec", "MachineSpec", "TrainConfig", "PerfParams",
    "Violation", "validate", "config_sort_key", "config_hash",
    "MeasurementRecord", "read_records", "write_records",
    "Catalog", "load_catalog", "bundled_catalog",
    "load_model", "load_gpu", "load_machine",
    "toml_dumps", "dump_perfparams", "load_perfparams", "save_perfparams",
    "bundled_perfparams", "file_sha256",
]
