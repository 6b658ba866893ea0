"""Sparse autologistic models for dynamic directed binary networks.

Fits, for every node pair, a four-outcome dyad model whose linear
predictors are built from the previous network slice, with an L1 penalty
on all non-intercept coefficients.  Includes BIC penalty selection,
orthogonal-complement significance screening, one-step-ahead link
prediction with ROC/AUC scoring, and a synthetic-network generator with
known ground truth.
"""

from .analysis import EffectTable, PairSignificance, aggregate_table, classify_effects
from .design import (
    CoefficientBlock,
    DyadDesign,
    EffectCategory,
    EffectFamily,
    EffectTag,
    build_design,
    covariate_width,
    effect_counts,
    load_coefficients,
    save_coefficients,
    total_parameter_count,
)
from .errors import ConfigError, DataError, LagnetError, NumericalError
from .likelihood import (
    gradient_and_curvature,
    log_normalizer,
    marginal_probs,
    outcome_probs,
    pair_loglik,
)
from .network import (
    DyadOutcome,
    NetworkSeries,
    load_dense_slices,
    load_edge_list,
    save_dense_slices,
    save_edge_list,
)
from .optimizer import (
    BatchResult,
    FitConfig,
    PairFit,
    fit_all_pairs,
    fit_pair,
    global_penalty_ceiling,
    intercept_only_fit,
    kkt_violation,
    pair_penalty_ceiling,
    soft_threshold,
)
from .prediction import (
    EvaluationResult,
    PredictionSet,
    RocCurve,
    auc,
    predict_next,
    roc_curve,
    rolling_evaluation,
)
from .selection import (
    PathResult,
    PenaltyGrid,
    active_submatrix,
    bic_path,
    default_grid,
    numeric_rank,
    recompute_bic,
)
from .simulate import GroundTruth, SimDesign, forward_sample, generate_coefficients, simulate

__version__ = "0.1.0"

__all__ = [
    "BatchResult",
    "CoefficientBlock",
    "ConfigError",
    "DataError",
    "DyadDesign",
    "DyadOutcome",
    "EffectCategory",
    "EffectFamily",
    "EffectTable",
    "EffectTag",
    "EvaluationResult",
    "FitConfig",
    "GroundTruth",
    "LagnetError",
    "NetworkSeries",
    "NumericalError",
    "PairFit",
    "PairSignificance",
    "PathResult",
    "PenaltyGrid",
    "PredictionSet",
    "RocCurve",
    "SimDesign",
    "active_submatrix",
    "aggregate_table",
    "auc",
    "bic_path",
    "build_design",
    "classify_effects",
    "covariate_width",
    "default_grid",
    "effect_counts",
    "fit_all_pairs",
    "fit_pair",
    "forward_sample",
    "generate_coefficients",
    "global_penalty_ceiling",
    "gradient_and_curvature",
    "intercept_only_fit",
    "kkt_violation",
    "load_coefficients",
    "load_dense_slices",
    "load_edge_list",
    "log_normalizer",
    "marginal_probs",
    "numeric_rank",
    "outcome_probs",
    "pair_loglik",
    "pair_penalty_ceiling",
    "predict_next",
    "recompute_bic",
    "roc_curve",
    "rolling_evaluation",
    "save_coefficients",
    "save_dense_slices",
    "save_edge_list",
    "simulate",
    "soft_threshold",
    "total_parameter_count",
]
