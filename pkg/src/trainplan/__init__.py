"""Feasibility, training-time and cost planning for pre-training runs on
small GPU machines: what fits, how long it takes, what it costs to buy or
to occupy, and which efficiency-method combination to run."""

from .core import (
    Catalog,
    CatalogError,
    DegenerateFitError,
    Family,
    GIB,
    GpuGeneration,
    GpuSpec,
    InfeasibleConfigError,
    MachineSpec,
    MeasurementRecord,
    ModelSpec,
    NoFlopsEstimateError,
    NotATokenModelError,
    OptimizerKind,
    PerfParams,
    PlannerError,
    Precision,
    Sharding,
    TrainConfig,
    Violation,
    bundled_catalog,
    bundled_perfparams,
    config_hash,
    load_catalog,
    load_perfparams,
    read_records,
    save_perfparams,
    validate,
    write_records,
)
from .analytic import AnalyticEstimate, analytic_days, tokens_processed, training_flops
from .memory import (
    FitsResult,
    MemoryBreakdown,
    activation_bytes,
    fits,
    max_micro_batch,
    model_state_bytes,
)
from .steptime import (
    CalibrationResult,
    DayCell,
    ResidualRow,
    StepEstimate,
    TrainingTimeModel,
    bundled_day_cells,
    calibrate,
    comm_time,
    pass_time,
    step_estimate,
    training_days,
    update_time,
)
from .search import (
    ConfigOutcome,
    SearchOutcome,
    enumerate_configs,
    naive_estimate,
    optimize,
)
from .cost import (
    BudgetResult,
    MachineChoice,
    best_under_budget,
    experiment_cost,
    machine_cost,
    machine_frontier,
    pareto_frontier,
)
from .report import (
    ComboGroup,
    ComboSpread,
    FeasibilityMatrix,
    GpuDaysComparison,
    GridFilter,
    ResultGrid,
    SpeedupSummary,
    bundled_grid,
    combo_spread,
    feasibility_matrix,
    gpu_days_comparison,
    load_original_footprints,
    predicted_grid,
    speedup_summary,
)

__version__ = "0.1.0"
