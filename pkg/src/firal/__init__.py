"""Fisher-information-ratio query selection for softmax classifiers."""
from .errors import ConfigError, ConvergenceError, DimensionError, SolverError
from .fisher import (
    DEFAULT_DELTA,
    FisherMatrix,
    ScoreKernelCache,
    conditional_fisher_bank,
    fir_trace,
    fisher_mc,
    g_kernel,
    trace_bound_check,
    v_vector,
)
from .model import (
    FitResult,
    LabeledSet,
    ModelParams,
    fit_mle,
    hessian,
    log_likelihood,
    predict,
    predict_proba,
    score,
)
from .simplex import SimplexResult, fw_gap, solve_weights
from .strategies import QueryResult, StrategyConfig, select
from .submodular import QuerySet, SurrogateObjective, brute_force_max, check_submodularity, f_eval, greedy_maximize

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DimensionError",
    "SolverError",
    "DEFAULT_DELTA",
    "FisherMatrix",
    "ScoreKernelCache",
    "conditional_fisher_bank",
    "fir_trace",
    "fisher_mc",
    "g_kernel",
    "trace_bound_check",
    "v_vector",
    "FitResult",
    "LabeledSet",
    "ModelParams",
    "fit_mle",
    "hessian",
    "log_likelihood",
    "predict",
    "predict_proba",
    "score",
    "SimplexResult",
    "fw_gap",
    "solve_weights",
    "QueryResult",
    "StrategyConfig",
    "select",
    "QuerySet",
    "SurrogateObjective",
    "brute_force_max",
    "check_submodularity",
    "f_eval",
    "greedy_maximize",
]
