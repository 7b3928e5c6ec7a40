"""blocksel: block-structured selection and two-step sparse estimation
for multi-response linear models."""

__version__ = "0.1.0"

from .linalg import QRFactor, ols_solve, project, standardize, thin_qr
from .solver import (LassoFit, MultiResponseFit, PenaltySpec, cv_lasso,
                     lambda_max, lambda_path, lasso_cd, multi_response_lasso,
                     soft_threshold)
from .blocks import (BlockStats, GroupSpec, IndicatorMatrix, ScreenPolicy,
                     all_block_stats, block_stats, er_bound,
                     indicator_from_gamma, select_threshold,
                     select_threshold_centered)
from .estimators import (FitResult, Standardization, baseline_fit,
                         nbslasso_fit, single_block_ols,
                         single_block_screened, unstandardize)
from .simbench import (GroundTruth, MetricsReport, SimulationSpec, evaluate,
                       generate, run_benchmark, aggregate, aggregate_table)

__all__ = [
    "QRFactor", "ols_solve", "project", "standardize", "thin_qr",
    "LassoFit", "MultiResponseFit", "PenaltySpec", "cv_lasso", "lambda_max",
    "lambda_path", "lasso_cd", "multi_response_lasso", "soft_threshold",
    "BlockStats", "GroupSpec", "IndicatorMatrix", "ScreenPolicy",
    "all_block_stats", "block_stats", "er_bound", "indicator_from_gamma",
    "select_threshold", "select_threshold_centered",
    "FitResult", "Standardization", "baseline_fit", "nbslasso_fit",
    "single_block_ols", "single_block_screened", "unstandardize",
    "GroundTruth", "MetricsReport", "SimulationSpec", "evaluate", "generate",
    "run_benchmark", "aggregate", "aggregate_table",
    "__version__",
]
