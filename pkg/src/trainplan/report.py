"""Summary statistics over training-time grids.

A ResultGrid is days (or infeasible) per (model, gpu, n_gpus) cell. The
bundled fixtures carry two observed grids (replication settings and tuned
settings) plus the published footprints of the original training runs;
the same operations work on predicted grids built from the step model.

Averages are arithmetic means of per-cell ratios. Confidence intervals
are percentile bootstrap with a fixed seed, so reports are reproducible
to the byte.
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import Catalog, CatalogError, FIXTURES_DIR, PerfParams
from .search import SearchOutcome, optimize

Key = tuple[str, str, int]  # model_id, gpu_id, n_gpus

BOOTSTRAP_RESAMPLES = 10_000
BOOTSTRAP_SEED = 0


@dataclass
class ResultGrid:
    """days per cell; None marks an infeasible cell."""

    label: str
    cells: dict[Key, float | None] = field(default_factory=dict)

    def set(self, model_id: str, gpu_id: str, n_gpus: int, days: float | None) -> None:
        self.cells[(model_id, gpu_id, n_gpus)] = days

    def get(self, model_id: str, gpu_id: str, n_gpus: int) -> float | None:
        return self.cells.get((model_id, gpu_id, n_gpus))

    def __len__(self) -> int:
        return len(self.cells)

    @classmethod
    def from_csv(cls, path: Path | str, label: str | None = None) -> "ResultGrid":
        path = Path(path)
        grid = cls(label=label or path.stem)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            needed = {"model_id", "gpu_id", "n_gpus", "days"}
            if reader.fieldnames is None or not needed <= set(reader.fieldnames):
                raise CatalogError(f"{path}: grid needs columns {sorted(needed)}")
            for row in reader:
                raw = row["days"].strip()
                days = None if raw in ("inf", "", "?") else float(raw)
                if days is not None and days <= 0:
                    raise CatalogError(f"{path}: non-positive days in {row}")
                grid.set(row["model_id"], row["gpu_id"], int(row["n_gpus"]), days)
        return grid

    def to_csv(self) -> str:
        out = ["model_id,gpu_id,n_gpus,days"]
        for (m, g, n) in sorted(self.cells):
            v = self.cells[(m, g, n)]
            out.append(f"{m},{g},{n}," + ("inf" if v is None else f"{v:.6g}"))
        return "\n".join(out) + "\n"


def bundled_grid(kind: str) -> ResultGrid:
    if kind not in ("optimal", "naive"):
        raise CatalogError(f"no bundled grid named {kind!r}")
    return ResultGrid.from_csv(FIXTURES_DIR / "grids" / f"{kind}_days.csv", kind)


@dataclass(frozen=True)
class GridFilter:
    """Cell selector shared by the report operations."""

    models: tuple[str, ...] | None = None
    model_prefix: str | None = None
    gpus: tuple[str, ...] | None = None
    min_gpus: int | None = None
    max_gpus: int | None = None

    def admits(self, key: Key) -> bool:
        model_id, gpu_id, n = key
        if self.models is not None and model_id not in self.models:
            return False
        if self.model_prefix is not None and not model_id.startswith(self.model_prefix):
            return False
        if self.gpus is not None and gpu_id not in self.gpus:
            return False
        if self.min_gpus is not None and n < self.min_gpus:
            return False
        if self.max_gpus is not None and n > self.max_gpus:
            return False
        return True


def _shared_keys(a: ResultGrid, b: ResultGrid, flt: GridFilter | None) -> list[Key]:
    keys = sorted(set(a.cells) & set(b.cells))
    if flt is not None:
        keys = [k for k in keys if flt.admits(k)]
    return keys


@dataclass(frozen=True)
class BootstrapCI:
    mean: float
    lo: float
    hi: float
    resamples: int


def bootstrap_mean_ci(values: Sequence[float],
                      resamples: int = BOOTSTRAP_RESAMPLES,
                      seed: int = BOOTSTRAP_SEED) -> BootstrapCI:
    """95% percentile bootstrap CI of the mean. Fixed seed, reproducible."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("no values to bootstrap")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, arr.size, size=(resamples, arr.size))
    means = arr[idx].mean(axis=1)
    lo, hi = np.percentile(means, [2.5, 97.5])
    return BootstrapCI(mean=float(arr.mean()), lo=float(lo), hi=float(hi),
                       resamples=resamples)


@dataclass
class SpeedupSummary:
    """naive/optimal day ratios over cells feasible in both grids."""

    ratios: dict[Key, float]
    mean: float
    ci: BootstrapCI

    @property
    def count(self) -> int:
        return len(self.ratios)

    def to_json_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean,
            "ci95": [self.ci.lo, self.ci.hi],
            "ratios": {f"{m}/{g}/{n}": v for (m, g, n), v in sorted(self.ratios.items())},
        }


def speedup_summary(naive: ResultGrid, optimal: ResultGrid,
                    flt: GridFilter | None = None) -> SpeedupSummary:
    """How much faster tuned settings are than replication settings.

    Only cells feasible under both settings enter; a cell that naive cannot
    run at all has no finite speedup (that story belongs to the
    feasibility matrix, not to a mean).
    """
    ratios: dict[Key, float] = {}
    for key in _shared_keys(naive, optimal, flt):
        nv, ov = naive.cells[key], optimal.cells[key]
        if nv is None or ov is None:
            continue
        ratios[key] = nv / ov
    if not ratios:
        raise CatalogError("no cells feasible in both grids under this filter")
    values = [ratios[k] for k in sorted(ratios)]
    return SpeedupSummary(ratios=ratios, mean=float(np.mean(values)),
                          ci=bootstrap_mean_ci(values))


@dataclass(frozen=True)
class ComboGroup:
    """Feasible combo timings for one (model, machine) setting."""

    label: str
    days: tuple[float, ...]
    free_lunch_days: float | None

    @classmethod
    def from_search(cls, outcome: SearchOutcome) -> "ComboGroup":
        days = tuple(o.estimate.days for o in outcome.table if o.feasible)
        free = None
        for o in outcome.table:
            if o.feasible and o.config.memory_methods() == 0:
                free = o.estimate.days
                break
        return cls(label=f"{outcome.model_id}/{outcome.machine_id}",
                   days=days, free_lunch_days=free)


@dataclass
class ComboSpread:
    """How wrong an arbitrary memory-method combination can be."""

    best_vs_median: float
    best_vs_worst: float
    median_vs_freelunch: float
    groups: int

    def to_json_dict(self) -> dict:
        return {
            "best_vs_median": self.best_vs_median,
            "best_vs_worst": self.best_vs_worst,
            "median_vs_freelunch": self.median_vs_freelunch,
            "groups": self.groups,
        }


def combo_spread(groups: Iterable[ComboGroup]) -> ComboSpread:
    """Mean ratios of median/worst combo time to the best. Every group with
    a feasible combo contributes; the median-to-free-lunch ratio can only
    use groups where the free-lunch combo itself fits.
    """
    m_b, w_b, m_f = [], [], []
    used = 0
    for g in groups:
        if not g.days:
            continue
        best = min(g.days)
        med = statistics.median(g.days)
        m_b.append(med / best)
        w_b.append(max(g.days) / best)
        if g.free_lunch_days is not None:
            m_f.append(med / g.free_lunch_days)
        used += 1
    if not used:
        raise CatalogError("no groups with a feasible combo")
    return ComboSpread(
        best_vs_median=float(np.mean(m_b)),
        best_vs_worst=float(np.mean(w_b)),
        median_vs_freelunch=float(np.mean(m_f)) if m_f else 1.0,
        groups=used,
    )


@dataclass(frozen=True)
class GpuDaysRow:
    model_id: str
    original_n_gpus: int
    original_days: float
    original_gpu_days: float
    ours_days: float
    ours_n_gpus: int
    ours_gpu_days: float

    @property
    def ratio(self) -> float:
        return self.original_gpu_days / self.ours_gpu_days


@dataclass
class GpuDaysComparison:
    rows: list[GpuDaysRow]
    excluded: list[str]     # models missing a comparable entry
    mean_ratio: float

    def to_json_dict(self) -> dict:
        return {
            "mean_ratio": self.mean_ratio,
            "excluded": self.excluded,
            "rows": [{
                "model_id": r.model_id,
                "original_gpu_days": r.original_gpu_days,
                "ours_gpu_days": r.ours_gpu_days,
                "ratio": r.ratio,
            } for r in self.rows],
        }


def load_original_footprints(path: Path | str | None = None) -> dict[str, tuple[int, float]]:
    """model_id -> (n_gpus, days) of the original published runs. Rows with
    unknown footprints ("?") are dropped here and reported as excluded by
    the comparison."""
    path = Path(path) if path else FIXTURES_DIR / "grids" / "original_gpu_days.csv"
    out: dict[str, tuple[int, float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if "?" in (row["n_gpus"].strip(), row["days"].strip()):
                continue
            out[row["model_id"]] = (int(row["n_gpus"]), float(row["days"]))
    return out


def gpu_days_comparison(originals: Mapping[str, tuple[int, float]],
                        ours: ResultGrid, gpu_id: str = "a100",
                        n_gpus: int = 8) -> GpuDaysComparison:
    """GPU-days of the original training runs against ours on one machine
    tier. Ratios above 1 mean the originals spent more GPU-time."""
    rows, excluded = [], []
    models = sorted({m for (m, _, _) in ours.cells})
    for model_id in models:
        ours_days = ours.get(model_id, gpu_id, n_gpus)
        if model_id not in originals or ours_days is None:
            excluded.append(model_id)
            continue
        n_orig, d_orig = originals[model_id]
        rows.append(GpuDaysRow(
            model_id=model_id, original_n_gpus=n_orig, original_days=d_orig,
            original_gpu_days=n_orig * d_orig, ours_days=ours_days,
            ours_n_gpus=n_gpus, ours_gpu_days=n_gpus * ours_days,
        ))
    if not rows:
        raise CatalogError(f"no models comparable at {n_gpus} x {gpu_id}")
    return GpuDaysComparison(rows=rows, excluded=excluded,
                             mean_ratio=float(np.mean([r.ratio for r in rows])))


CATEGORIES = ("naive-feasible", "optimal-only", "infeasible")


@dataclass
class FeasibilityMatrix:
    """Per (model, gpu) combo: can replication settings run it, can any
    tuned config, or nothing at all (within the selected GPU counts)."""

    classes: dict[tuple[str, str], str]

    def counts(self) -> dict[str, int]:
        out = {c: 0 for c in CATEGORIES}
        for v in self.classes.values():
            out[v] += 1
        return out

    def to_json_dict(self) -> dict:
        return {
            "counts": self.counts(),
            "combos": {f"{m}/{g}": c for (m, g), c in sorted(self.classes.items())},
        }

    def to_csv(self) -> str:
        out = ["model_id,gpu_id,category"]
        for (m, g), c in sorted(self.classes.items()):
            out.append(f"{m},{g},{c}")
        return "\n".join(out) + "\n"


def feasibility_matrix(naive: ResultGrid, optimal: ResultGrid,
                       flt: GridFilter | None = None) -> FeasibilityMatrix:
    classes: dict[tuple[str, str], str] = {}
    keys = _shared_keys(naive, optimal, flt)
    combos = sorted({(m, g) for (m, g, _) in keys})
    for m, g in combos:
        ns = [n for (mm, gg, n) in keys if (mm, gg) == (m, g)]
        naive_ok = any(naive.get(m, g, n) is not None for n in ns)
        optimal_ok = any(optimal.get(m, g, n) is not None for n in ns)
        if naive_ok:
            classes[(m, g)] = "naive-feasible"
        elif optimal_ok:
            classes[(m, g)] = "optimal-only"
        else:
            classes[(m, g)] = "infeasible"
    return FeasibilityMatrix(classes=classes)


def predicted_grid(catalog: Catalog, params: PerfParams, kind: str,
                   flt: GridFilter | None = None) -> ResultGrid:
    """Build a grid from the step model instead of observations."""
    from .search import naive_estimate  # local alias for symmetry
    grid = ResultGrid(label=f"predicted-{kind}")
    for model_id in sorted(catalog.models):
        for machine_id in sorted(catalog.machines):
            machine = catalog.machines[machine_id]
            key = (model_id, machine.gpu.id, machine.n_gpus)
            if flt is not None and not flt.admits(key):
                continue
            model = catalog.models[model_id]
            if kind == "naive":
                o = naive_estimate(model, machine, params)
                grid.set(*key, o.estimate.days if o.feasible else None)
            elif kind == "optimal":
                best = optimize(model, machine, params).best
                grid.set(*key, best.estimate.days if best else None)
            else:
                raise CatalogError(f"unknown grid kind {kind!r}")
    return grid


__all__ = [
    "Key", "ResultGrid", "bundled_grid", "GridFilter",
    "BootstrapCI", "bootstrap_mean_ci",
    "SpeedupSummary", "speedup_summary",
    "ComboGroup", "ComboSpread", "combo_spread",
    "GpuDaysRow", "GpuDaysComparison", "load_original_footprints",
    "gpu_days_comparison",
    "FeasibilityMatrix", "feasibility_matrix", "CATEGORIES",
    "predicted_grid",
]
