"""Block-pipelined device-to-edge offloading: simulation, optimality-gap
bounds, and block-size optimization for time-limited edge SGD training."""

from .backend import BACKEND
from .bounds import (
    BoundConstants,
    MCBoundResult,
    OptimizationResult,
    compute_gamma,
    corollary_bound,
    noise_floor,
    optimize_block_size,
    pilot_diameter,
    theorem_bound_mc,
)
from .data import Dataset, Sample, SyntheticSpec, load_csv, preprocess, split, synthesize
from .errors import ConfigurationError, DataError, EdgePipeError, NumericalConditionError
from .learner import (
    LossSpec,
    estimate_noise_constants,
    estimate_smoothness_constants,
    point_gradient,
    point_loss,
    sgd_step,
    solve_erm,
    subset_loss,
)
from .schedule import (
    GridPolicy,
    PipelineSchedule,
    ProtocolConfig,
    Regime,
    candidate_block_sizes,
    compute_schedule,
)
from .simulator import (
    AveragedTrace,
    TrainingTrace,
    TransmissionLog,
    average_runs,
    experimental_optimum,
    offload_then_train,
    run_pipeline,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AveragedTrace",
    "BoundConstants",
    "ConfigurationError",
    "DataError",
    "Dataset",
    "EdgePipeError",
    "GridPolicy",
    "LossSpec",
    "MCBoundResult",
    "NumericalConditionError",
    "OptimizationResult",
    "PipelineSchedule",
    "ProtocolConfig",
    "Regime",
    "Sample",
    "SyntheticSpec",
    "TrainingTrace",
    "TransmissionLog",
    "average_runs",
    "candidate_block_sizes",
    "compute_gamma",
    "compute_schedule",
    "corollary_bound",
    "estimate_noise_constants",
    "estimate_smoothness_constants",
    "experimental_optimum",
    "load_csv",
    "noise_floor",
    "offload_then_train",
    "optimize_block_size",
    "pilot_diameter",
    "point_gradient",
    "point_loss",
    "preprocess",
    "run_pipeline",
    "sgd_step",
    "solve_erm",
    "split",
    "subset_loss",
    "synthesize",
    "theorem_bound_mc",
]
