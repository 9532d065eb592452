"""harness run: measure one (model, config) setting and append the record."""

from __future__ import annotations

import argparse
import os
import sys

from .catalog import HarnessError, load_model_entry, load_run_config
from .records import append_records
from .runner import HarnessJob, run_job

CATALOG_ENV = "TRAINPLAN_CATALOG_DIR"

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_BAD_INPUT = 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="harness",
        description="time training passes and optimizer updates, emit "
                    "measurement JSONL for the planner")
    sub = p.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="measure one model under one config")
    r.add_argument("--model", required=True, help="catalog model id")
    r.add_argument("--config", required=True, help="run-config TOML")
    r.add_argument("--out", required=True, help="JSONL file, appended to")
    r.add_argument("--catalog-dir",
                   help=f"catalog directory (default ${CATALOG_ENV})")
    r.add_argument("--gpu", required=True,
                   help="catalog gpu id stamped onto the record")
    r.add_argument("--n", type=int, default=None,
                   help="gpu count for the record (default: world size)")
    r.add_argument("--device", default=None,
                   help="torch device (default: cuda if available, else cpu)")
    r.add_argument("--repetitions", type=int, default=None)
    r.add_argument("--warmup", type=int, default=None)
    return p


def _world_size() -> int:
    return int(os.environ.get("WORLD_SIZE", "1"))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        catalog_dir = args.catalog_dir or os.environ.get(CATALOG_ENV)
        if not catalog_dir:
            raise HarnessError(f"give --catalog-dir or set ${CATALOG_ENV}")
        entry = load_model_entry(catalog_dir, args.model)
        config, job_over = load_run_config(args.config)
        if args.repetitions is not None:
            job_over["repetitions"] = args.repetitions
        if args.warmup is not None:
            job_over["warmup"] = args.warmup
        job = HarnessJob(model=entry, config=config, gpu_id=args.gpu,
                         n_gpus=args.n or _world_size(), **job_over)
    except HarnessError as e:
        print(f"harness: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT

    if args.device:
        device = args.device
    else:
        import torch
        device = "cuda" if torch.cuda.is_available() else "cpu"

    result = run_job(job, device)
    if result.status == "failed":
        print(f"harness: {args.model} not measurable under this config: "
              f"{result.reason}", file=sys.stderr)
        return EXIT_INFEASIBLE
    append_records(args.out, [result.record])
    cfg = result.record.config
    if result.status == "oom":
        print(f"{args.model}: out of memory at micro batch {cfg.micro_batch}; "
              "oom record written")
    else:
        print(f"{args.model}: micro batch {cfg.micro_batch}, pass "
              f"{result.record.pass_seconds:.4f}s, update "
              f"{result.record.update_seconds:.4f}s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
