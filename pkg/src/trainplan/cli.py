"""Command-line front end.

Results go to stdout, diagnostics to stderr. With --out DIR every command
additionally writes its result as a human-readable .txt and a machine
.json, plus a manifest recording what was written from which inputs.
Result payloads carry no timestamps, so identical invocations over
identical files produce identical bytes; the manifest holds the clock.

Exit codes: 0 success, 2 the requested thing is infeasible, 3 bad input
or configuration, 4 degenerate calibration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import cost as cost_mod
from . import report as report_mod
from . import search as search_mod
from .analytic import analytic_days
from .core import (
    FIXTURES_DIR,
    Catalog,
    CatalogError,
    DegenerateFitError,
    MachineSpec,
    PerfParams,
    PlannerError,
    bundled_perfparams,
    dump_perfparams,
    file_sha256,
    load_catalog,
    load_perfparams,
    read_records,
    save_perfparams,
)
from .steptime import bundled_day_cells, calibrate

CATALOG_ENV = "TRAINPLAN_CATALOG_DIR"

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_BAD_INPUT = 3
EXIT_DEGENERATE = 4


class _Run:
    """Collects outputs so one manifest can reference them all."""

    def __init__(self, args: argparse.Namespace, argv: list[str]):
        self.argv = argv
        self.out_dir: Path | None = Path(args.out) if args.out else None
        self.catalog_dir = Path(
            args.catalog_dir or os.environ.get(CATALOG_ENV) or FIXTURES_DIR)
        self._catalog: Catalog | None = None
        self._params: PerfParams | None = None
        self._params_path: Path | None = Path(args.params) if getattr(
            args, "params", None) else None
        self.outputs: list[Path] = []

    @property
    def catalog(self) -> Catalog:
        if self._catalog is None:
            self._catalog = load_catalog(self.catalog_dir)
        return self._catalog

    @property
    def params(self) -> PerfParams:
        if self._params is None:
            if self._params_path is not None:
                self._params = load_perfparams(self._params_path)
            else:
                self._params = bundled_perfparams()
        return self._params

    def model(self, model_id: str):
        try:
            return self.catalog.models[model_id]
        except KeyError:
            raise CatalogError(f"unknown model {model_id!r}; have "
                               f"{sorted(self.catalog.models)}")

    def machine(self, args: argparse.Namespace) -> MachineSpec:
        if getattr(args, "machine", None):
            try:
                return self.catalog.machines[args.machine]
            except KeyError:
                raise CatalogError(f"unknown machine {args.machine!r}; have "
                                   f"{sorted(self.catalog.machines)}")
        if not (getattr(args, "gpu", None) and getattr(args, "n", None)):
            raise CatalogError("need --machine ID or --gpu and --n")
        for m in sorted(self.catalog.machines.values(), key=lambda m: m.id):
            if m.gpu.id == args.gpu and m.n_gpus == args.n:
                return m
        raise CatalogError(f"no cataloged machine with gpu={args.gpu!r} "
                           f"n_gpus={args.n}")

    def emit(self, name: str, text: str, payload: dict | None = None) -> None:
        """Print the human form; mirror both forms under --out."""
        sys.stdout.write(text)
        if self.out_dir is None:
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        txt = self.out_dir / f"{name}.txt"
        txt.write_text(text)
        self.outputs.append(txt)
        if payload is not None:
            js = self.out_dir / f"{name}.json"
            js.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
            self.outputs.append(js)

    def emit_file(self, name: str, content: str) -> Path:
        assert self.out_dir is not None
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        path.write_text(content)
        self.outputs.append(path)
        return path

    def write_manifest(self) -> None:
        if self.out_dir is None or not self.outputs:
            return
        catalog_files = sorted(p for p in self.catalog_dir.rglob("*")
                               if p.is_file() and p.suffix in (".toml", ".csv"))
        manifest = {
            "command": self.argv,
            "catalog_dir": str(self.catalog_dir),
            "catalog_versions": {str(p.relative_to(self.catalog_dir)):
                                 file_sha256(p) for p in catalog_files},
            "perfparams_sha256": _params_hash(self.params)
            if self._params is not None else None,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "outputs": sorted(str(p.relative_to(self.out_dir))
                              for p in self.outputs),
        }
        (self.out_dir / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _params_hash(params: PerfParams) -> str:
    import hashlib
    return hashlib.sha256(dump_perfparams(params).encode()).hexdigest()


def _cmd_analytic(run: _Run, args) -> int:
    model = run.model(args.model)
    machine = run.machine(args)
    est = analytic_days(model, machine)
    text = (f"{model.id} on {machine.id}: {est.days:.1f} days at ideal "
            f"utilization ({est.total_flops:.3g} FLOPs over "
            f"{est.aggregate_peak_flops:.3g} FLOP/s)\n")
    run.emit("analytic", text, {
        "model_id": model.id, "machine_id": machine.id,
        "days": est.days, "total_flops": est.total_flops,
        "aggregate_peak_flops": est.aggregate_peak_flops,
    })
    return EXIT_OK


def _cmd_search(run: _Run, args) -> int:
    model = run.model(args.model)
    machine = run.machine(args)
    outcome = search_mod.optimize(model, machine, run.params)
    run.emit("search", outcome.to_text(), outcome.to_json_dict())
    if run.out_dir is not None:
        run.emit_file("search.csv", outcome.to_csv())
    return EXIT_OK if outcome.best is not None else EXIT_INFEASIBLE


def _cmd_naive(run: _Run, args) -> int:
    model = run.model(args.model)
    machine = run.machine(args)
    o = search_mod.naive_estimate(model, machine, run.params)
    if o.feasible:
        text = (f"{model.id} on {machine.id}, replication settings: "
                f"{o.estimate.days:.2f} days "
                f"(mb={o.config.micro_batch}, gas={o.config.grad_accum_steps}, "
                f"step {o.estimate.step_seconds:.2f}s)\n")
    else:
        text = (f"{model.id} on {machine.id}, replication settings: "
                f"infeasible ({o.limiting})\n")
    payload = {
        "model_id": model.id, "machine_id": machine.id,
        "feasible": o.feasible,
        "days": o.estimate.days if o.feasible else None,
        "step_seconds": o.estimate.step_seconds if o.feasible else None,
        "limiting": o.limiting,
    }
    run.emit("naive", text, payload)
    return EXIT_OK if o.feasible else EXIT_INFEASIBLE


def _cmd_calibrate(run: _Run, args) -> int:
    records = []
    for path in args.records or ():
        records.extend(read_records(path))
    cells = bundled_day_cells() if args.bundled_days else []
    if not records and not cells:
        raise CatalogError("nothing to fit: give --records and/or --bundled-days")
    result = calibrate(records, cells, catalog=run.catalog,
                       base_params=run.params if args.params else None)
    lines = [f"observations: {len(result.residuals)}",
             f"rms log residual: {result.rms_log:.4f}",
             f"fitted: {len(result.fitted_names)} parameters",
             f"sweeps: {result.sweeps_run}"]
    if result.dropped_cells:
        lines.append(f"dropped cells: {len(result.dropped_cells)}")
    if result.degenerate:
        lines.append(f"DEGENERATE: froze {len(result.frozen_names)} "
                     f"parameters ({', '.join(result.frozen_names)})")
    text = "\n".join(lines) + "\n"
    payload = {
        "observations": len(result.residuals),
        "rms_log": result.rms_log,
        "objective": result.objective,
        "fitted": list(result.fitted_names),
        "frozen": list(result.frozen_names),
        "degenerate": result.degenerate,
        "dropped_cells": list(result.dropped_cells),
    }
    run.emit("calibrate", text, payload)
    if args.params_out:
        save_perfparams(args.params_out, result.params)
        out = Path(args.params_out)
        if run.out_dir is not None and out.parent == run.out_dir:
            run.outputs.append(out)
    elif run.out_dir is not None:
        run.emit_file("perfparams.toml", dump_perfparams(result.params))
    if run.out_dir is not None:
        run.emit_file("residuals.csv", result.residual_csv())
    return EXIT_DEGENERATE if result.degenerate else EXIT_OK


def _grid_days_for(run: _Run, model_id: str) -> dict[str, float]:
    grid = report_mod.bundled_grid("optimal")
    days: dict[str, float] = {}
    for m in run.catalog.machines.values():
        d = grid.get(model_id, m.gpu.id, m.n_gpus)
        if d is not None:
            days[m.id] = d
    return days


def _budget_text(result: cost_mod.BudgetResult, budget: float | None) -> str:
    cap = f"${budget:,.0f}" if budget is not None else "unbounded"
    lines = [f"budget {cap}"]
    if result.best is None:
        lines.append("no machine is both affordable and able to train the model")
    else:
        b = result.best
        lines.append(f"pick: {b.machine_id} ({b.n_gpus}x {b.gpu_id}) "
                     f"{b.days:.1f} days, machine ${b.machine_cost_usd:,.2f}, "
                     f"run ${b.experiment_cost_usd:,.2f}")
    for c in result.choices:
        lines.append(f"  {c.machine_id:<12} {c.days:>8.1f} days  "
                     f"${c.machine_cost_usd:>12,.2f}")
    if result.over_budget:
        lines.append("over budget: " + ", ".join(result.over_budget))
    if result.infeasible:
        lines.append("infeasible: " + ", ".join(result.infeasible))
    return "\n".join(lines) + "\n"


def _cmd_cost_budget(run: _Run, args) -> int:
    machines = sorted(run.catalog.machines.values(), key=lambda m: m.id)
    if args.from_grid:
        days = _grid_days_for(run, args.model)
        result = cost_mod.best_under_budget_from_days(
            days, machines, budget_usd=args.budget)
    else:
        model = run.model(args.model)
        result = cost_mod.best_under_budget(
            model, machines, run.params, budget_usd=args.budget)
    run.emit("cost_budget", _budget_text(result, args.budget),
             result.to_json_dict())
    return EXIT_OK if result.best is not None else EXIT_INFEASIBLE


def _cmd_cost_pareto(run: _Run, args) -> int:
    machines = sorted(run.catalog.machines.values(), key=lambda m: m.id)
    if args.from_grid:
        days = _grid_days_for(run, args.model)
        ranked = cost_mod.best_under_budget_from_days(days, machines)
    else:
        ranked = cost_mod.best_under_budget(
            run.model(args.model), machines, run.params)
    frontier_pts = set(cost_mod.pareto_frontier(
        (c.machine_cost_usd, c.days) for c in ranked.choices))
    rows = sorted((c for c in ranked.choices
                   if (c.machine_cost_usd, c.days) in frontier_pts),
                  key=lambda c: c.machine_cost_usd)
    lines = [f"cost/time frontier for {args.model}"]
    for c in rows:
        lines.append(f"  ${c.machine_cost_usd:>12,.2f}  {c.days:>8.1f} days  "
                     f"{c.machine_id}")
    run.emit("cost_pareto", "\n".join(lines) + "\n",
             {"model_id": args.model,
              "frontier": [c.to_json_dict() for c in rows]})
    return EXIT_OK if rows else EXIT_INFEASIBLE


def _cmd_cost_experiment(run: _Run, args) -> int:
    machine = run.machine(args)
    usd = cost_mod.experiment_cost(machine, args.days)
    text = (f"{args.days:g} days on {machine.id}: ${usd:,.2f} "
            f"(machine ${cost_mod.machine_cost(machine):,.2f} over "
            f"{cost_mod.DEFAULT_LIFESPAN_DAYS:g}-day life)\n")
    run.emit("cost_experiment", text, {
        "machine_id": machine.id, "days": args.days,
        "machine_cost_usd": cost_mod.machine_cost(machine),
        "experiment_cost_usd": usd,
    })
    return EXIT_OK


def _report_filter(args) -> report_mod.GridFilter | None:
    kw = {}
    if getattr(args, "model_prefix", None):
        kw["model_prefix"] = args.model_prefix
    if getattr(args, "min_gpus", None):
        kw["min_gpus"] = args.min_gpus
    if getattr(args, "max_gpus", None):
        kw["max_gpus"] = args.max_gpus
    return report_mod.GridFilter(**kw) if kw else None


def _cmd_report_speedups(run: _Run, args) -> int:
    naive = report_mod.bundled_grid("naive")
    optimal = report_mod.bundled_grid("optimal")
    s = report_mod.speedup_summary(naive, optimal, _report_filter(args))
    text = (f"tuned vs replication settings over {s.count} observed cells: "
            f"mean {s.mean:.2f}x faster "
            f"(95% CI {s.ci.lo:.2f}-{s.ci.hi:.2f})\n")
    run.emit("report_speedups", text, s.to_json_dict())
    return EXIT_OK


def _cmd_report_combos(run: _Run, args) -> int:
    flt = _report_filter(args)
    groups = []
    for model_id in sorted(run.catalog.models):
        for machine_id in sorted(run.catalog.machines):
            machine = run.catalog.machines[machine_id]
            key = (model_id, machine.gpu.id, machine.n_gpus)
            if flt is not None and not flt.admits(key):
                continue
            outcome = search_mod.optimize(
                run.catalog.models[model_id], machine, run.params)
            groups.append(report_mod.ComboGroup.from_search(outcome))
    spread = report_mod.combo_spread(groups)
    text = (f"memory-method combination spread over {spread.groups} settings: "
            f"median combo {spread.best_vs_median:.2f}x the best, "
            f"worst {spread.best_vs_worst:.2f}x, "
            f"median {spread.median_vs_freelunch:.2f}x the free-lunch config\n")
    run.emit("report_combos", text, spread.to_json_dict())
    return EXIT_OK


def _cmd_report_gpudays(run: _Run, args) -> int:
    originals = report_mod.load_original_footprints()
    ours = report_mod.bundled_grid("optimal")
    cmp = report_mod.gpu_days_comparison(originals, ours,
                                         gpu_id=args.gpu, n_gpus=args.n)
    lines = [f"original vs our GPU-days on {args.n}x {args.gpu} "
             f"(mean ratio {cmp.mean_ratio:.2f})"]
    for r in cmp.rows:
        lines.append(f"  {r.model_id:<14} original {r.original_gpu_days:>9.1f} "
                     f"ours {r.ours_gpu_days:>8.1f}  ratio {r.ratio:.2f}")
    if cmp.excluded:
        lines.append("no comparison: " + ", ".join(cmp.excluded))
    run.emit("report_gpudays", "\n".join(lines) + "\n", cmp.to_json_dict())
    return EXIT_OK


def _cmd_report_feasibility(run: _Run, args) -> int:
    naive = report_mod.bundled_grid("naive")
    optimal = report_mod.bundled_grid("optimal")
    m = report_mod.feasibility_matrix(naive, optimal, _report_filter(args))
    counts = m.counts()
    lines = [", ".join(f"{k}: {v}" for k, v in sorted(counts.items()))]
    for (model_id, gpu_id), cls in sorted(m.classes.items()):
        lines.append(f"  {model_id:<14} {gpu_id:<10} {cls}")
    run.emit("report_feasibility", "\n".join(lines) + "\n", m.to_json_dict())
    if run.out_dir is not None:
        run.emit_file("report_feasibility.csv", m.to_csv())
    return EXIT_OK


def _cmd_fixtures_export(run: _Run, args) -> int:
    if run.out_dir is None:
        raise CatalogError("fixtures export needs --out DIR")
    written = []
    for src in sorted(FIXTURES_DIR.rglob("*")):
        if not src.is_file() or src.suffix not in (".toml", ".csv"):
            continue
        rel = src.relative_to(FIXTURES_DIR)
        dest = run.out_dir / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_bytes(src.read_bytes())
        run.outputs.append(dest)
        written.append(str(rel))
    sys.stdout.write("\n".join(written) + "\n")
    return EXIT_OK


def _add_machine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--machine", help="machine id from the catalog")
    p.add_argument("--gpu", help="gpu id (with --n) as an alternative")
    p.add_argument("--n", type=int, help="gpu count (with --gpu)")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="trainplan",
        description="feasibility, time, and cost planning for pre-training "
                    "on small GPU clusters")
    p.add_argument("--catalog-dir",
                   help=f"catalog directory (default ${CATALOG_ENV} "
                        "or the bundled one)")
    p.add_argument("--params", help="PerfParams TOML (default: bundled "
                                    "calibrated parameters)")
    p.add_argument("--out", help="directory for result files and manifest")
    sub = p.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("analytic", help="ideal-utilization lower bound")
    sp.add_argument("--model", required=True)
    _add_machine_flags(sp)
    sp.set_defaults(fn=_cmd_analytic)

    sp = sub.add_parser("search", help="best feasible configuration")
    sp.add_argument("--model", required=True)
    _add_machine_flags(sp)
    sp.set_defaults(fn=_cmd_search)

    sp = sub.add_parser("naive", help="replication-settings estimate")
    sp.add_argument("--model", required=True)
    _add_machine_flags(sp)
    sp.set_defaults(fn=_cmd_naive)

    sp = sub.add_parser("calibrate", help="fit throughput parameters")
    sp.add_argument("--records", action="append",
                    help="measurement JSONL (repeatable)")
    sp.add_argument("--bundled-days", action="store_true",
                    help="include the bundled observed-days tables")
    sp.add_argument("--params-out", help="where to write the fitted TOML")
    sp.set_defaults(fn=_cmd_calibrate)

    cp = sub.add_parser("cost", help="purchase and run cost")
    csub = cp.add_subparsers(dest="cost_cmd", required=True)
    sp = csub.add_parser("budget", help="fastest machine under a budget")
    sp.add_argument("--model", required=True)
    sp.add_argument("--budget", type=float, help="price cap in USD")
    sp.add_argument("--from-grid", action="store_true",
                    help="rank by bundled observed days instead of predictions")
    sp.set_defaults(fn=_cmd_cost_budget)
    sp = csub.add_parser("pareto", help="cost/time frontier")
    sp.add_argument("--model", required=True)
    sp.add_argument("--from-grid", action="store_true")
    sp.set_defaults(fn=_cmd_cost_pareto)
    sp = csub.add_parser("experiment", help="amortized cost of a run")
    _add_machine_flags(sp)
    sp.add_argument("--days", type=float, required=True)
    sp.set_defaults(fn=_cmd_cost_experiment)

    rp = sub.add_parser("report", help="summaries over result grids")
    rsub = rp.add_subparsers(dest="report_cmd", required=True)
    sp = rsub.add_parser("speedups", help="tuned vs replication settings")
    sp.add_argument("--model-prefix")
    sp.add_argument("--min-gpus", type=int)
    sp.add_argument("--max-gpus", type=int)
    sp.set_defaults(fn=_cmd_report_speedups)
    sp = rsub.add_parser("combos", help="how much a bad combo costs")
    sp.add_argument("--model-prefix")
    sp.add_argument("--min-gpus", type=int)
    sp.add_argument("--max-gpus", type=int)
    sp.set_defaults(fn=_cmd_report_combos)
    sp = rsub.add_parser("gpudays", help="original vs our GPU-days")
    sp.add_argument("--gpu", default="a100")
    sp.add_argument("--n", type=int, default=8)
    sp.set_defaults(fn=_cmd_report_gpudays)
    sp = rsub.add_parser("feasibility", help="what runs at all, per GPU")
    sp.add_argument("--model-prefix")
    sp.add_argument("--min-gpus", type=int)
    sp.add_argument("--max-gpus", type=int)
    sp.set_defaults(fn=_cmd_report_feasibility)

    fp = sub.add_parser("fixtures", help="bundled data")
    fsub = fp.add_subparsers(dest="fixtures_cmd", required=True)
    sp = fsub.add_parser("export", help="copy bundled catalogs and grids")
    sp.set_defaults(fn=_cmd_fixtures_export)

    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse prints its own message; normalize usage errors to 3
        return EXIT_BAD_INPUT if e.code not in (0, None) else 0
    run = _Run(args, ["trainplan"] + argv)
    try:
        code = args.fn(run, args)
        run.write_manifest()
        return code
    except DegenerateFitError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (CatalogError, PlannerError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
