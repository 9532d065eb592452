"""Hardware cost accounting and purchase decisions.

Machine cost is the GPUs plus everything around them (board, CPU, RAM,
PSU, chassis), so doubling the GPU count less than doubles the price.
Experiment cost amortizes the whole machine linearly over its service
life: a run that ties up the box for a tenth of its life costs a tenth
of the box.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .core import MachineSpec, ModelSpec, PerfParams, TrainConfig
from .search import optimize

DEFAULT_LIFESPAN_DAYS = 1825.0  # five years


def machine_cost(machine: MachineSpec) -> float:
    """Purchase price: GPUs plus the surrounding system."""
    return machine.total_price_usd


def experiment_cost(machine: MachineSpec, days: float,
                    lifespan_days: float = DEFAULT_LIFESPAN_DAYS) -> float:
    """Amortized cost of occupying the machine for the given days."""
    if days < 0:
        raise ValueError("days must be >= 0")
    if lifespan_days <= 0:
        raise ValueError("lifespan_days must be positive")
    return machine_cost(machine) * days / lifespan_days


@dataclass(frozen=True)
class MachineChoice:
    machine_id: str
    gpu_id: str
    n_gpus: int
    days: float
    machine_cost_usd: float
    experiment_cost_usd: float
    config: TrainConfig | None   # None when days came from a measured grid

    def to_json_dict(self) -> dict:
        return {
            "machine_id": self.machine_id,
            "gpu_id": self.gpu_id,
            "n_gpus": self.n_gpus,
            "days": self.days,
            "machine_cost_usd": self.machine_cost_usd,
            "experiment_cost_usd": self.experiment_cost_usd,
            "config": self.config.label() if self.config else "observed",
        }


@dataclass
class BudgetResult:
    """Machines that can train the model, cheapest-feasible ranking first
    by time. best is None when nothing is both feasible and affordable."""

    choices: list[MachineChoice]   # affordable and feasible, fastest first
    best: MachineChoice | None
    over_budget: list[str]         # machine ids excluded by price
    infeasible: list[str]          # machine ids where nothing fits

    def to_json_dict(self) -> dict:
        return {
            "best": self.best.to_json_dict() if self.best else None,
            "choices": [c.to_json_dict() for c in self.choices],
            "over_budget": self.over_budget,
            "infeasible": self.infeasible,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"


def evaluate_machines(model: ModelSpec, machines: Sequence[MachineSpec],
                      params: PerfParams,
                      lifespan_days: float = DEFAULT_LIFESPAN_DAYS,
                      ) -> tuple[list[MachineChoice], list[str]]:
    """Best-config days and costs for each machine; second return lists the
    machines where no config fits."""
    choices, infeasible = [], []
    for machine in sorted(machines, key=lambda m: m.id):
        outcome = optimize(model, machine, params)
        if outcome.best is None:
            infeasible.append(machine.id)
            continue
        days = outcome.best.estimate.days
        choices.append(MachineChoice(
            machine_id=machine.id, gpu_id=machine.gpu.id, n_gpus=machine.n_gpus,
            days=days, machine_cost_usd=machine_cost(machine),
            experiment_cost_usd=experiment_cost(machine, days, lifespan_days),
            config=outcome.best.config,
        ))
    return choices, infeasible


def _rank(choices: Sequence[MachineChoice], infeasible: Sequence[str],
          budget_usd: float | None) -> BudgetResult:
    over_budget = []
    affordable = []
    for c in choices:
        if budget_usd is not None and c.machine_cost_usd > budget_usd:
            over_budget.append(c.machine_id)
        else:
            affordable.append(c)
    affordable.sort(key=lambda c: (c.days, c.machine_cost_usd, c.machine_id))
    return BudgetResult(
        choices=affordable,
        best=affordable[0] if affordable else None,
        over_budget=over_budget,
        infeasible=list(infeasible),
    )


def best_under_budget(model: ModelSpec, machines: Sequence[MachineSpec],
                      params: PerfParams, budget_usd: float | None = None,
                      lifespan_days: float = DEFAULT_LIFESPAN_DAYS) -> BudgetResult:
    """Fastest machine whose purchase price fits the budget (None = no cap).

    Ties on days break toward the cheaper machine, then lexicographic id.
    """
    all_choices, infeasible = evaluate_machines(model, machines, params, lifespan_days)
    return _rank(all_choices, infeasible, budget_usd)


def best_under_budget_from_days(days_by_machine: Mapping[str, float],
                                machines: Sequence[MachineSpec],
                                budget_usd: float | None = None,
                                lifespan_days: float = DEFAULT_LIFESPAN_DAYS,
                                ) -> BudgetResult:
    """best_under_budget ranking measured days instead of predictions.

    days_by_machine maps machine id to observed training days; machines
    absent from the map (or mapped to None) count as infeasible.
    """
    choices, infeasible = [], []
    for machine in sorted(machines, key=lambda m: m.id):
        days = days_by_machine.get(machine.id)
        if days is None:
            infeasible.append(machine.id)
            continue
        choices.append(MachineChoice(
            machine_id=machine.id, gpu_id=machine.gpu.id, n_gpus=machine.n_gpus,
            days=float(days), machine_cost_usd=machine_cost(machine),
            experiment_cost_usd=experiment_cost(machine, float(days), lifespan_days),
            config=None,
        ))
    return _rank(choices, infeasible, budget_usd)


def pareto_frontier(points: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Non-dominated (cost, days) pairs, ascending by cost.

    A point is dominated when another is no worse on both axes and better
    on at least one. Duplicate surviving points collapse to one.
    """
    pts = sorted(set(points))
    out: list[tuple[float, float]] = []
    best_days = float("inf")
    for cost, days in pts:
        if days < best_days:
            out.append((cost, days))
            best_days = days
    return out


def machine_frontier(model: ModelSpec, machines: Sequence[MachineSpec],
                     params: PerfParams,
                     lifespan_days: float = DEFAULT_LIFESPAN_DAYS) -> list[MachineChoice]:
    """The cost/time Pareto frontier over the given machines."""
    choices, _ = evaluate_machines(model, machines, params, lifespan_days)
    frontier = set(pareto_frontier((c.machine_cost_usd, c.days) for c in choices))
    picked: dict[tuple[float, float], MachineChoice] = {}
    for c in sorted(choices, key=lambda c: (c.machine_cost_usd, c.days, c.machine_id)):
        key = (c.machine_cost_usd, c.days)
        if key in frontier and key not in picked:
            picked[key] = c
    return [picked[k] for k in sorted(picked)]


__all__ = [
    "DEFAULT_LIFESPAN_DAYS", "machine_cost", "experiment_cost",
    "MachineChoice", "BudgetResult", "evaluate_machines",
    "best_under_budget", "best_under_budget_from_days", "pareto_frontier", "machine_frontier",
]
