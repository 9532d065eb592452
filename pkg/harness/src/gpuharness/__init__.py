"""Step-timing harness: probe the largest fitting micro batch, time
passes and updates on the actual hardware, and emit measurement JSONL
the planning package calibrates against."""

from .catalog import HarnessError, ModelEntry, RunConfig, load_model_entry, \
    load_run_config
from .records import Record, append_records, write_records
from .runner import (MODEL_BUILDERS, HarnessJob, RunResult, find_max_batch,
                     oom_record, run_job, time_steps)

__all__ = [
    "HarnessError", "ModelEntry", "RunConfig", "load_model_entry",
    "load_run_config", "Record", "write_records", "append_records",
    "HarnessJob", "RunResult", "MODEL_BUILDERS", "find_max_batch",
    "time_steps", "oom_record", "run_job",
]
