"""Step-time model: prediction and calibration.

Prediction methodology
----------------------
A training step is grad_accum_steps forward/backward passes, one optimizer
update and the step's communication:

    step = gas * pass + update + comm

    pass   = ckpt_mult * pass_flops / (peak * mfu * multipliers) + overhead
    update = update_bytes_per_param * P / shard_div / update_bandwidth
    comm   = grad_reduce / link_bw + gas * stage3_gather / link_bw
             + offload_traffic / host_bw

Offloaded optimizer state crosses the host link once per step; offloaded
weights (sharding stage 3) cross it once per pass, which is what makes
that combination so slow on commodity interconnects.

Pass FLOPs come from the model's total training compute divided down to one
micro batch, so the ideal-parameter limit (mfu = 1, everything else free)
reproduces the analytic estimate exactly. The additive per-pass overhead is
what saturates throughput at small micro batches: effective rate follows
work / (work/rate + overhead), a Michaelis-Menten curve in work units whose
half-point scales with the GPU's speed. Checkpointing recomputes the
forward, multiplying the pass work (not the overhead) by
1 + ckpt_recompute_frac.

Calibration
-----------
calibrate() fits the throughput parameters (per gpu-family mfu, free-lunch
multipliers, per-GPU pass overhead, recompute fraction, link and host
efficiencies, update traffic) to measured pass/update times and to
end-to-end GPU-days tables.
Memory-shape parameters are carried through untouched; they decide which
configs are candidates, and fitting them would move the candidate sets
under the optimizer. The objective is the sum of squared log-ratios
between predicted and observed seconds. Minimization is deterministic
coordinate descent: observations are sorted canonically, each parameter
gets a fixed-size grid scan plus golden-section refinement, sweeps repeat
in registry order until the objective stops improving.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .analytic import SECONDS_PER_DAY, training_flops
from .core import (
    Catalog,
    CatalogError,
    FIXTURES_DIR,
    Family,
    InfeasibleConfigError,
    MachineSpec,
    MeasurementRecord,
    ModelSpec,
    PerfParams,
    Precision,
    Sharding,
    TrainConfig,
    config_hash,
    config_sort_key,
)
from .memory import fits, model_state_bytes


def per_sample_flops(model: ModelSpec) -> float:
    """Forward+backward compute for one sample, derived from the total."""
    return training_flops(model) / (float(model.training_steps) * model.global_batch_size)


@dataclass(frozen=True)
class _Static:
    """Parameter-independent pieces of the step-time formulas for one
    (model, config, machine) triple. Prediction and calibration both build
    on this, so they cannot drift apart."""

    w_base: float          # pass flops per GPU
    ckpt_mult: float
    gas: int
    peak: float
    use_compile: bool
    use_kernels: bool
    use_tf32: bool
    mfu_gpu: str
    family: str
    upd_base: float        # params per GPU touched by the update
    upd_on_host: bool
    mem_bw: float
    host_bw: float
    intra_bw: float
    comm_intra_bytes: float
    comm_host_bytes: float
    steps: int


def _static(model: ModelSpec, config: TrainConfig, machine: MachineSpec,
            params: PerfParams) -> _Static:
    n = machine.n_gpus
    stage = config.sharding.stage
    elem = float(model.precision.elem_bytes)
    p = model.param_count

    grad_reduce = 2.0 * elem * p * (n - 1) / n
    gather = elem * p * (n - 1) / n if stage >= 3 else 0.0
    states = model_state_bytes(model, config, n, params)
    offload_traffic = 2.0 * states.host_offloaded_bytes
    if config.offload and stage >= 3:
        # offloaded weights are fetched for every forward and backward pass,
        # not once per step like the optimizer shard
        w_shard = elem * p / n
        offload_traffic = (2.0 * (states.host_offloaded_bytes - w_shard)
                           + config.grad_accum_steps * 2.0 * w_shard)

    return _Static(
        w_base=per_sample_flops(model) * config.micro_batch,
        ckpt_mult=1.0 + (params.ckpt_recompute_frac if config.act_checkpointing else 0.0),
        gas=config.grad_accum_steps,
        peak=machine.gpu.peak_flops,
        use_compile=config.compile,
        use_kernels=config.custom_kernels,
        use_tf32=config.tf32 and model.precision is Precision.fp32,
        mfu_gpu=machine.gpu.id,
        family=model.family.value,
        upd_base=p / (n if stage >= 1 else 1),
        upd_on_host=config.offload,
        mem_bw=machine.gpu.mem_bw_bytes_per_s,
        host_bw=machine.host_device_bw_bytes_per_s,
        intra_bw=machine.intra_bw_bytes_per_s,
        comm_intra_bytes=grad_reduce + config.grad_accum_steps * gather,
        comm_host_bytes=offload_traffic,
        steps=model.training_steps,
    )


def _pass_seconds(s: _Static, params: PerfParams) -> float:
    mult = 1.0
    if s.use_compile:
        mult *= params.mult_compile
    if s.use_kernels:
        mult *= params.mult_kernels
    if s.use_tf32:
        mult *= params.mult_tf32
    rate = s.peak * params.mfu(s.mfu_gpu, s.family) * mult
    # recomputation repeats the work, not the fixed launch overhead
    return s.ckpt_mult * s.w_base / rate + params.pass_overhead(s.mfu_gpu)


def _update_seconds(s: _Static, params: PerfParams) -> float:
    bw = params.host_efficiency * s.host_bw if s.upd_on_host else s.mem_bw
    return params.update_bytes_per_param * s.upd_base / bw


def _comm_seconds(s: _Static, params: PerfParams) -> float:
    t = s.comm_intra_bytes / (params.comm_efficiency * s.intra_bw)
    t += s.comm_host_bytes / (params.host_efficiency * s.host_bw)
    return t


def pass_time(model: ModelSpec, config: TrainConfig, machine: MachineSpec,
              params: PerfParams) -> float:
    """Seconds for one forward/backward pass at config.micro_batch."""
    return _pass_seconds(_static(model, config, machine, params), params)


def update_time(model: ModelSpec, config: TrainConfig, machine: MachineSpec,
                params: PerfParams) -> float:
    """Seconds for the optimizer update. Sharding divides the touched
    parameters by N; offloading pushes the traffic over the host link."""
    return _update_seconds(_static(model, config, machine, params), params)


def comm_time(model: ModelSpec, config: TrainConfig, machine: MachineSpec,
              params: PerfParams) -> float:
    """Per-step communication: gradient reduction once per step, a stage-3
    weight gather per pass, and offload traffic over the host link (optimizer
    shard once per step, stage-3 weight shard once per pass)."""
    return _comm_seconds(_static(model, config, machine, params), params)


@dataclass(frozen=True)
class StepEstimate:
    pass_seconds: float
    update_seconds: float
    comm_seconds: float
    step_seconds: float
    days: float


def step_estimate(model: ModelSpec, config: TrainConfig, machine: MachineSpec,
                  params: PerfParams) -> StepEstimate:
    """Step time with no feasibility gate. training_days() is the checked
    entry point; this one exists for what-if arithmetic."""
    s = _static(model, config, machine, params)
    pt = _pass_seconds(s, params)
    ut = _update_seconds(s, params)
    ct = _comm_seconds(s, params)
    step = s.gas * pt + ut + ct
    return StepEstimate(
        pass_seconds=pt, update_seconds=ut, comm_seconds=ct,
        step_seconds=step, days=step * s.steps / SECONDS_PER_DAY,
    )


def training_days(model: ModelSpec, config: TrainConfig, machine: MachineSpec,
                  params: PerfParams) -> StepEstimate:
    fit = fits(model, config, machine, params)
    if not fit.fits:
        raise InfeasibleConfigError(
            f"{model.id} with {config.label()} does not fit on {machine.id} "
            f"(limited by {fit.limiting})")
    return step_estimate(model, config, machine, params)


# ---------------------------------------------------------------------------
# Calibration


@dataclass(frozen=True)
class DayCell:
    """One observed end-to-end training time: a (model, machine) cell of a
    GPU-days table, either under replication settings or the tuned optimum."""

    model_id: str
    gpu_id: str
    n_gpus: int
    kind: str        # "naive" or "optimal"
    days: float

    def __post_init__(self):
        if self.kind not in ("naive", "optimal"):
            raise CatalogError(f"day cell kind must be naive or optimal, got {self.kind!r}")
        if self.days <= 0:
            raise CatalogError("day cell needs a positive number of days")


def _read_day_grid(path: Path, kind: str) -> list[DayCell]:
    cells = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["days"].strip() in ("inf", "?", ""):
                continue
            cells.append(DayCell(model_id=row["model_id"], gpu_id=row["gpu_id"],
                                 n_gpus=int(row["n_gpus"]), kind=kind,
                                 days=float(row["days"])))
    return cells


def bundled_day_cells() -> list[DayCell]:
    """The packaged observation tables (optimal and naive GPU-days grids)."""
    grids = FIXTURES_DIR / "grids"
    return (_read_day_grid(grids / "optimal_days.csv", "optimal")
            + _read_day_grid(grids / "naive_days.csv", "naive"))


@dataclass(frozen=True)
class ResidualRow:
    model_id: str
    gpu_id: str
    n_gpus: int
    kind: str          # optimal | naive | pass | update
    config_hash: str
    observed: float    # seconds (per step for cells, per pass/update for records)
    predicted: float

    @property
    def log_ratio(self) -> float:
        return math.log(self.predicted / self.observed)


def residuals_to_csv(rows: Sequence[ResidualRow]) -> str:
    out = ["model_id,gpu_id,n_gpus,kind,config_hash,observed,predicted,log_ratio"]
    for r in rows:
        out.append(f"{r.model_id},{r.gpu_id},{r.n_gpus},{r.kind},{r.config_hash},"
                   f"{r.observed:.6g},{r.predicted:.6g},{r.log_ratio:.6g}")
    return "\n".join(out) + "\n"


@dataclass
class CalibrationResult:
    params: PerfParams
    residuals: list[ResidualRow]
    rms_log: float
    objective: float
    fitted_names: tuple[str, ...]
    frozen_names: tuple[str, ...]
    degenerate: bool
    dropped_cells: tuple[str, ...]
    sweeps_run: int

    def residual_csv(self) -> str:
        return residuals_to_csv(self.residuals)


@dataclass
class _ParamSpec:
    name: str
    lo: float
    hi: float
    init: float


@dataclass
class _Compiled:
    """Observation rows flattened to arrays. Each observation owns a
    contiguous run of candidate rows; day cells get their whole candidate
    config set, records get exactly one row."""

    # per-row arrays
    obs_idx: np.ndarray
    w_base: np.ndarray
    use_ckpt: np.ndarray
    gas: np.ndarray
    peak: np.ndarray
    use_compile: np.ndarray
    use_kernels: np.ndarray
    use_tf32: np.ndarray
    mfu_idx: np.ndarray
    ovh_idx: np.ndarray
    upd_base: np.ndarray
    upd_on_host: np.ndarray
    mem_bw: np.ndarray
    host_bw: np.ndarray
    intra_bw: np.ndarray
    comm_intra: np.ndarray
    comm_host: np.ndarray
    row_kind: np.ndarray       # 0 step, 1 pass, 2 update
    # per-observation arrays
    starts: np.ndarray
    observed: np.ndarray
    obs_meta: list[dict]
    row_configs: list[TrainConfig]
    # group tables
    mfu_groups: list[tuple[str, str]]
    ovh_groups: list[str]

    def n_obs(self) -> int:
        return len(self.observed)


def _compile_observations(records: Sequence[MeasurementRecord],
                          day_cells: Sequence[DayCell],
                          catalog: Catalog,
                          base: PerfParams) -> tuple[_Compiled, list[str]]:
    from . import search  # deferred: search imports this module at top level

    rows: list[tuple[int, _Static, TrainConfig, int]] = []
    obs_meta: list[dict] = []
    observed: list[float] = []
    dropped: list[str] = []

    cells = sorted(day_cells, key=lambda c: (c.model_id, c.gpu_id, c.n_gpus, c.kind))
    recs = sorted(records, key=lambda r: (r.model_id, r.gpu_id, r.n_gpus,
                                          config_sort_key(r.config)))

    for cell in cells:
        model = catalog.model(cell.model_id)
        machine = catalog.machine_for(cell.gpu_id, cell.n_gpus)
        if cell.kind == "naive":
            cands = search.naive_candidates(model, machine, base)
        else:
            cands = search.feasible_candidates(model, machine, base)
        if not cands:
            dropped.append(f"{cell.model_id}/{cell.gpu_id}/{cell.n_gpus}/{cell.kind}")
            continue
        idx = len(obs_meta)
        for cfg in cands:
            rows.append((idx, _static(model, cfg, machine, base), cfg, 0))
        obs_meta.append({"model_id": cell.model_id, "gpu_id": cell.gpu_id,
                         "n_gpus": cell.n_gpus, "kind": cell.kind})
        observed.append(cell.days * SECONDS_PER_DAY / model.training_steps)

    for rec in recs:
        if rec.oom:
            continue   # feasibility signal, not a timing observation
        model = catalog.model(rec.model_id)
        machine = catalog.machine_for(rec.gpu_id, rec.n_gpus)
        st = _static(model, rec.config, machine, base)
        for kind_code, value in ((1, rec.pass_seconds), (2, rec.update_seconds)):
            if value is None or value <= 0:
                continue
            idx = len(obs_meta)
            rows.append((idx, st, rec.config, kind_code))
            obs_meta.append({"model_id": rec.model_id, "gpu_id": rec.gpu_id,
                             "n_gpus": rec.n_gpus,
                             "kind": "pass" if kind_code == 1 else "update"})
            observed.append(value)

    if not rows:
        raise CatalogError("nothing to calibrate against: no records, no day cells")

    mfu_groups = sorted({(s.mfu_gpu, s.family) for _, s, _, _ in rows})
    ovh_groups = sorted({s.mfu_gpu for _, s, _, _ in rows})
    mfu_pos = {g: i for i, g in enumerate(mfu_groups)}
    ovh_pos = {g: i for i, g in enumerate(ovh_groups)}

    def arr(fn, dtype=float):
        return np.array([fn(s) for _, s, _, _ in rows], dtype=dtype)

    obs_idx = np.array([i for i, _, _, _ in rows], dtype=np.int64)
    order = np.argsort(obs_idx, kind="stable")
    # rows were appended observation-by-observation, so obs_idx is already
    # sorted; argsort keeps that explicit and cheap
    starts = np.searchsorted(obs_idx[order], np.arange(len(obs_meta)))

    compiled = _Compiled(
        obs_idx=obs_idx[order],
        w_base=arr(lambda s: s.w_base)[order],
        use_ckpt=arr(lambda s: s.ckpt_mult > 1.0, bool)[order],
        gas=arr(lambda s: float(s.gas))[order],
        peak=arr(lambda s: s.peak)[order],
        use_compile=arr(lambda s: s.use_compile, bool)[order],
        use_kernels=arr(lambda s: s.use_kernels, bool)[order],
        use_tf32=arr(lambda s: s.use_tf32, bool)[order],
        mfu_idx=np.array([mfu_pos[(s.mfu_gpu, s.family)] for _, s, _, _ in rows],
                         dtype=np.int64)[order],
        ovh_idx=np.array([ovh_pos[s.mfu_gpu] for _, s, _, _ in rows],
                         dtype=np.int64)[order],
        upd_base=arr(lambda s: s.upd_base)[order],
        upd_on_host=arr(lambda s: s.upd_on_host, bool)[order],
        mem_bw=arr(lambda s: s.mem_bw)[order],
        host_bw=arr(lambda s: s.host_bw)[order],
        intra_bw=arr(lambda s: s.intra_bw)[order],
        comm_intra=arr(lambda s: s.comm_intra_bytes)[order],
        comm_host=arr(lambda s: s.comm_host_bytes)[order],
        row_kind=np.array([k for _, _, _, k in rows], dtype=np.int64)[order],
        starts=starts,
        observed=np.array(observed),
        obs_meta=obs_meta,
        row_configs=[rows[i][2] for i in order],
        mfu_groups=list(mfu_groups),
        ovh_groups=list(ovh_groups),
    )
    return compiled, dropped


def _registry(comp: _Compiled, base: PerfParams) -> list[_ParamSpec]:
    specs = [
        _ParamSpec(f"mfu:{g}:{f}", 0.01, 1.0, base.mfu(g, f))
        for g, f in comp.mfu_groups
    ]
    # bounded near the arithmetic traffic of an optimizer step; host-side
    # slowness belongs in host_efficiency, not here
    specs.append(_ParamSpec("update_bytes_per_param", 0.5, 100.0,
                            max(0.5, base.update_bytes_per_param)))
    specs.extend(_ParamSpec(f"overhead:{g}", 0.0, 3.0, base.pass_overhead(g))
                 for g in comp.ovh_groups)
    specs.append(_ParamSpec("ckpt_recompute_frac", 0.0, 1.0,
                            base.ckpt_recompute_frac))
    specs.append(_ParamSpec("mult_kernels", 1.0, 2.5, base.mult_kernels))
    specs.append(_ParamSpec("mult_compile", 1.0, 2.5, base.mult_compile))
    specs.append(_ParamSpec("mult_tf32", 1.0, 8.0, base.mult_tf32))
    specs.append(_ParamSpec("comm_efficiency", 0.01, 1.0, base.comm_efficiency))
    specs.append(_ParamSpec("host_efficiency", 0.01, 1.0, base.host_efficiency))
    return specs


def _identifiable(comp: _Compiled, specs: list[_ParamSpec]) -> list[bool]:
    """A parameter is fit only when the observations can tell it apart from
    the others; everything else stays at its incoming value.

    The rules are deliberately conservative. mfu needs one observation of
    its (gpu, family) group. The pass overhead needs two different amounts
    of pass work on its GPU, otherwise it trades off freely against mfu.
    A flag multiplier needs both flag states represented. Update traffic
    needs either two timed updates or two end-to-end cells. Efficiencies
    need their term exercised and company to separate against.
    """
    n_obs = comp.n_obs()
    free = []
    for spec in specs:
        kind, _, rest = spec.name.partition(":")
        if kind == "mfu":
            gpu, fam = rest.split(":")
            gi = comp.mfu_groups.index((gpu, fam))
            ok = bool(np.any(comp.mfu_idx == gi))
        elif kind == "overhead":
            mask = np.array([g == rest for g in
                             (comp.ovh_groups[i] for i in comp.ovh_idx)])
            ok = n_obs >= 2 and len(np.unique(comp.w_base[mask].round(3))) >= 2
        elif spec.name == "update_bytes_per_param":
            n_upd = int(np.sum(comp.row_kind == 2))
            n_cells = int(np.sum(comp.row_kind[comp.starts] == 0))
            ok = n_upd >= 2 or n_cells >= 2
        elif spec.name == "ckpt_recompute_frac":
            ok = (n_obs >= 2 and bool(comp.use_ckpt.any())
                  and not bool(comp.use_ckpt.all()))
        elif spec.name == "mult_compile":
            ok = n_obs >= 2 and bool(comp.use_compile.any()) and not bool(comp.use_compile.all())
        elif spec.name == "mult_kernels":
            ok = n_obs >= 2 and bool(comp.use_kernels.any()) and not bool(comp.use_kernels.all())
        elif spec.name == "mult_tf32":
            ok = n_obs >= 2 and bool(comp.use_tf32.any()) and not bool(comp.use_tf32.all())
        elif spec.name == "comm_efficiency":
            # comm only enters step-level predictions; a timed pass on a
            # multi-GPU machine says nothing about the interconnect
            step_row = comp.row_kind == 0
            ok = n_obs >= 2 and bool((step_row & (comp.comm_intra > 0)).any())
        elif spec.name == "host_efficiency":
            touches_host = (comp.comm_host > 0) | comp.upd_on_host
            ok = n_obs >= 2 and bool((touches_host & (comp.row_kind != 1)).any())
        else:  # pragma: no cover
            ok = False
        free.append(ok)
    return free


class _Objective:
    def __init__(self, comp: _Compiled, specs: list[_ParamSpec]):
        self.comp = comp
        n_mfu = len(comp.mfu_groups)
        n_ovh = len(comp.ovh_groups)
        self.sl_mfu = slice(0, n_mfu)
        self.i_ubp = n_mfu
        self.sl_ovh = slice(n_mfu + 1, n_mfu + 1 + n_ovh)
        base = n_mfu + 1 + n_ovh
        self.i_cf = base
        self.i_mk, self.i_mc, self.i_mt = base + 1, base + 2, base + 3
        self.i_ce, self.i_he = base + 4, base + 5
        assert len(specs) == base + 6

    def row_values(self, vec: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = self.comp
        mfu = vec[self.sl_mfu][c.mfu_idx]
        ovh = vec[self.sl_ovh][c.ovh_idx]
        mult = np.where(c.use_compile, vec[self.i_mc], 1.0)
        mult = mult * np.where(c.use_kernels, vec[self.i_mk], 1.0)
        mult = mult * np.where(c.use_tf32, vec[self.i_mt], 1.0)
        ckpt = 1.0 + np.where(c.use_ckpt, vec[self.i_cf], 0.0)
        pass_t = ckpt * c.w_base / (c.peak * mfu * mult) + ovh
        upd_bw = np.where(c.upd_on_host, vec[self.i_he] * c.host_bw, c.mem_bw)
        upd_t = vec[self.i_ubp] * c.upd_base / upd_bw
        comm_t = (c.comm_intra / (vec[self.i_ce] * c.intra_bw)
                  + c.comm_host / (vec[self.i_he] * c.host_bw))
        step_t = c.gas * pass_t + upd_t + comm_t
        return pass_t, upd_t, step_t

    def predictions(self, vec: np.ndarray) -> np.ndarray:
        c = self.comp
        pass_t, upd_t, step_t = self.row_values(vec)
        value = np.where(c.row_kind == 1, pass_t,
                         np.where(c.row_kind == 2, upd_t, step_t))
        return np.minimum.reduceat(value, c.starts)

    def __call__(self, vec: np.ndarray) -> float:
        res = np.log(self.predictions(vec) / self.comp.observed)
        return float(res @ res)


def _golden(fn, lo: float, hi: float, iters: int = 40) -> tuple[float, float]:
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fn(d)
    x = c if fc <= fd else d
    return x, min(fc, fd)


def _line_search(obj, vec: np.ndarray, i: int, lo: float, hi: float,
                 grid_points: int) -> None:
    def fn(x: float) -> float:
        vec[i] = x
        return obj(vec)

    current = vec[i]
    xs = np.linspace(lo, hi, grid_points)
    vals = [fn(x) for x in xs]
    k = int(np.argmin(vals))
    g_lo = xs[max(0, k - 1)]
    g_hi = xs[min(grid_points - 1, k + 1)]
    x_best, f_best = _golden(fn, g_lo, g_hi)
    if fn(current) <= f_best:   # never make things worse
        vec[i] = current
    else:
        vec[i] = x_best


def _params_from_vector(base: PerfParams, comp: _Compiled,
                        specs: list[_ParamSpec], vec: np.ndarray) -> PerfParams:
    mfu_base = {g: dict(v) for g, v in base.mfu_base.items()}
    for (gpu, fam), v in zip(comp.mfu_groups, vec[:len(comp.mfu_groups)]):
        mfu_base.setdefault(gpu, {})[fam] = float(v)
    i_ubp = len(comp.mfu_groups)
    overheads = dict(base.pass_overhead_seconds)
    for gpu, v in zip(comp.ovh_groups,
                      vec[i_ubp + 1:i_ubp + 1 + len(comp.ovh_groups)]):
        overheads[gpu] = float(v)
    tail = i_ubp + 1 + len(comp.ovh_groups)
    return replace(
        base,
        mfu_base=mfu_base,
        update_bytes_per_param=float(vec[i_ubp]),
        pass_overhead_seconds=overheads,
        ckpt_recompute_frac=float(vec[tail]),
        mult_kernels=float(vec[tail + 1]),
        mult_compile=float(vec[tail + 2]),
        mult_tf32=float(vec[tail + 3]),
        comm_efficiency=float(vec[tail + 4]),
        host_efficiency=float(vec[tail + 5]),
    )


def _start_points(base: PerfParams) -> list[PerfParams]:
    """Deterministic descent starts: the caller's priors plus two spreads.

    Coordinate descent moves one axis at a time, so a prior far from the
    data can strand it against a bound. Restarting from the middle of the
    scalar boxes (arithmetic and roughly geometric) costs a couple of
    seconds and the lowest objective wins.
    """
    mid = replace(base,
                  update_bytes_per_param=50.25, ckpt_recompute_frac=0.5,
                  mult_kernels=1.75, mult_compile=1.75, mult_tf32=4.5,
                  comm_efficiency=0.505, host_efficiency=0.505)
    wide = replace(base,
                   update_bytes_per_param=math.sqrt(0.5 * 100.0),
                   ckpt_recompute_frac=0.25,
                   mult_kernels=math.sqrt(2.5), mult_compile=math.sqrt(2.5),
                   mult_tf32=math.sqrt(8.0),
                   comm_efficiency=0.1, host_efficiency=0.1)
    return [base, mid, wide]


def calibrate(records: Sequence[MeasurementRecord] = (),
              day_cells: Sequence[DayCell] = (),
              *,
              catalog: Catalog,
              base_params: PerfParams | None = None,
              max_sweeps: int = 8,
              grid_points: int = 25) -> CalibrationResult:
    """Fit throughput parameters to measurements and/or GPU-days tables.

    Deterministic: observations are sorted canonically before compiling,
    and each descent uses fixed grids, fixed iteration counts, and a
    fixed set of start points. A degenerate fit (more identifiable
    parameters than observations) is not an exception; the
    lowest-priority parameters are frozen, the result is flagged, and
    the caller decides how loudly to complain.
    """
    base = base_params or PerfParams()
    comp, dropped = _compile_observations(records, day_cells, catalog, base)
    specs = _registry(comp, base)
    free = _identifiable(comp, specs)

    degenerate = sum(free) > comp.n_obs()
    if degenerate:
        # freeze from the back of the registry until the count fits
        budget = comp.n_obs()
        kept = 0
        for i, spec in enumerate(specs):
            if free[i]:
                if kept < budget:
                    kept += 1
                else:
                    free[i] = False

    obj = _Objective(comp, specs)
    best = math.inf
    vec = None
    sweeps = 0
    for start in _start_points(base):
        start_specs = _registry(comp, start)
        v = np.array([s.init for s in start_specs])
        score = obj(v)
        n = 0
        for _ in range(max_sweeps):
            n += 1
            before = score
            for i, spec in enumerate(specs):
                if free[i]:
                    _line_search(obj, v, i, spec.lo, spec.hi, grid_points)
            score = obj(v)
            if before - score <= 1e-7 * max(1.0, before):
                break
        if score < best:
            best, vec, sweeps = score, v, n

    params = _params_from_vector(base, comp, specs, vec)
    residuals = _residual_rows(comp, obj, vec)
    rms = math.sqrt(sum(r.log_ratio ** 2 for r in residuals) / len(residuals))
    return CalibrationResult(
        params=params,
        residuals=residuals,
        rms_log=rms,
        objective=best,
        fitted_names=tuple(s.name for s, f in zip(specs, free) if f),
        frozen_names=tuple(s.name for s, f in zip(specs, free) if not f),
        degenerate=degenerate,
        dropped_cells=tuple(dropped),
        sweeps_run=sweeps,
    )


def _residual_rows(comp: _Compiled, obj: _Objective, vec: np.ndarray) -> list[ResidualRow]:
    pass_t, upd_t, step_t = obj.row_values(vec)
    value = np.where(comp.row_kind == 1, pass_t,
                     np.where(comp.row_kind == 2, upd_t, step_t))
    rows = []
    ends = np.append(comp.starts[1:], len(value))
    for i, meta in enumerate(comp.obs_meta):
        lo, hi = comp.starts[i], ends[i]
        k = lo + int(np.argmin(value[lo:hi]))
        rows.append(ResidualRow(
            model_id=meta["model_id"], gpu_id=meta["gpu_id"],
            n_gpus=meta["n_gpus"], kind=meta["kind"],
            config_hash=config_hash(comp.row_configs[k]),
            observed=float(comp.observed[i]), predicted=float(value[k]),
        ))
    return rows


class TrainingTimeModel:
    """Estimator-style façade over the step-time model.

    Construct with PerfParams (or none for defaults), predict() step
    estimates, or fit() to measurements and day cells to calibrate. After
    fitting, params_, residuals_, rms_log_ and degenerate_ hold the
    outcome, and predict() uses the fitted parameters.
    """

    def __init__(self, params: PerfParams | None = None,
                 max_sweeps: int = 8, grid_points: int = 25):
        self.params = params
        self.max_sweeps = max_sweeps
        self.grid_points = grid_points

    def get_params(self, deep: bool = True) -> dict:
        return {"params": self.params, "max_sweeps": self.max_sweeps,
                "grid_points": self.grid_points}

    def set_params(self, **kw) -> "TrainingTimeModel":
        for name, value in kw.items():
            if name not in self.get_params():
                raise ValueError(f"unknown parameter {name!r}")
            setattr(self, name, value)
        return self

    def _effective(self) -> PerfParams:
        fitted = getattr(self, "params_", None)
        if fitted is not None:
            return fitted
        return self.params or PerfParams()

    def fit(self, records: Sequence[MeasurementRecord] = (),
            day_cells: Sequence[DayCell] = (), *,
            catalog: Catalog) -> "TrainingTimeModel":
        result = calibrate(records, day_cells, catalog=catalog,
                           base_params=self.params,
                           max_sweeps=self.max_sweeps,
                           grid_points=self.grid_points)
        self.params_ = result.params
        self.residuals_ = result.residuals
        self.rms_log_ = result.rms_log
        self.degenerate_ = result.degenerate
        self.result_ = result
        return self

    def predict(self, model: ModelSpec, config: TrainConfig,
                machine: MachineSpec) -> StepEstimate:
        return training_days(model, config, machine, self._effective())


__all__ = [
    "per_sample_flops", "pass_time", "update_time", "comm_time",
    "StepEstimate", "step_estimate", "training_days",
    "DayCell", "bundled_day_cells", "ResidualRow", "residuals_to_csv",
    "CalibrationResult", "calibrate", "TrainingTimeModel",
]
