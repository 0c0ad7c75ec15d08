"""Tiled sparse attention with persistent, temporally evolving skip masks."""

from .attention import (
    AttentionOperand,
    SequenceResult,
    SkipMode,
    SkipVariant,
    TileGeometry,
    TileReport,
    TiledResult,
    dense_attention,
    run_timestep_sequence,
    skip_condition,
    tile_scores,
    tiled_attention,
)
from .bench import (
    ExecutedRun,
    FlopCount,
    RunReport,
    execute_run,
    flop_model,
    length_sweep,
    ordering_skip_comparison,
    sparsity_runtime_tradeoff,
)
from .calibration import (
    CalibrationResult,
    ErrorBoundSpec,
    ThresholdSchedule,
    calibrate,
    load_schedule,
    relative_l1_error,
    save_schedule,
    segment_bounds,
)
from .errors import ValidationError
from .harness import (
    BoundCheck,
    PersistenceReport,
    PersistenceSample,
    TrajectoryConfig,
    forward_bound_check,
    generate_trajectory,
    persistence_experiment,
    perturbation_experiment,
    stationary_trajectory,
)
from .ordering import OrderingStrategy, visit_order
from .skipmask import (
    MaskSlice,
    SkipList,
    SkipMask,
    compile_skip_list,
    mark_skip,
    sparsity,
)
from .trajectory import Trajectory, read_latn, write_latn

__version__ = "0.1.0"

__all__ = [
    "AttentionOperand", "SequenceResult", "SkipMode", "SkipVariant",
    "TileGeometry", "TileReport", "TiledResult", "dense_attention",
    "run_timestep_sequence", "skip_condition", "tile_scores", "tiled_attention",
    "ExecutedRun", "FlopCount", "RunReport", "execute_run", "flop_model",
    "length_sweep", "ordering_skip_comparison", "sparsity_runtime_tradeoff",
    "CalibrationResult", "ErrorBoundSpec", "ThresholdSchedule", "calibrate",
    "load_schedule", "relative_l1_error", "save_schedule", "segment_bounds",
    "ValidationError",
    "BoundCheck", "PersistenceReport", "PersistenceSample", "TrajectoryConfig",
    "forward_bound_check", "generate_trajectory", "persistence_experiment",
    "perturbation_experiment", "stationary_trajectory",
    "OrderingStrategy", "visit_order",
    "MaskSlice", "SkipList", "SkipMask", "compile_skip_list", "mark_skip",
    "sparsity",
    "Trajectory", "read_latn", "write_latn",
]
