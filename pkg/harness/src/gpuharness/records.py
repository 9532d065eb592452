"""Measurement records and their JSONL form.

The JSON layout is the planner's measurement-record schema, field for
field, so emitted files feed straight into its calibrate command. Keep
the two in sync by hand; the harness deliberately does not import the
planner to get it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

from .catalog import HarnessError, RunConfig


def utc_stamp() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class Record:
    model_id: str
    gpu_id: str
    n_gpus: int
    config: RunConfig
    pass_seconds: float | None = None
    update_seconds: float | None = None
    oom: bool = False
    timestamp: str = ""

    def __post_init__(self):
        # mirror the consumer's invariants so a bad record dies here,
        # not at calibration time on someone else's machine
        if self.oom:
            if self.pass_seconds is not None or self.update_seconds is not None:
                raise HarnessError(f"{self.model_id}: oom record must not carry timings")
        else:
            if not self.pass_seconds or not self.update_seconds:
                raise HarnessError(f"{self.model_id}: record needs positive timings")
            if self.pass_seconds <= 0 or self.update_seconds <= 0:
                raise HarnessError(f"{self.model_id}: record needs positive timings")

    def to_json_dict(self) -> dict:
        d = {
            "model_id": self.model_id,
            "gpu_id": self.gpu_id,
            "n_gpus": self.n_gpus,
            "config": {
                "compile": self.config.compile,
                "custom_kernels": self.config.custom_kernels,
                "tf32": self.config.tf32,
                "act_checkpointing": self.config.act_checkpointing,
                "sharding": self.config.sharding,
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


def write_records(path: Path | str, records: Iterable[Record]) -> None:
    lines = [json.dumps(r.to_json_dict(), sort_keys=True) for r in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def append_records(path: Path | str, records: Iterable[Record]) -> None:
    """Add records to an existing JSONL file (sweeps share one file)."""
    with open(path, "a") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json_dict(), sort_keys=True) + "\n")
