"""Per-tuple Shapley-value data valuation.

Computes how much each training tuple contributes to a model's test
accuracy, under three marginal-contribution aggregation rules (original,
zero-clamped, absolute), with exact enumeration for small player counts and
permutation Monte Carlo at scale.
"""

__version__ = "0.1.0"

from .datasets import (
    CsvFormatError,
    Dataset,
    SplitConfig,
    filter_iris_2d,
    iris_path,
    load_csv,
    load_iris,
    save_csv,
    subset,
    train_test_split,
)
from .evaluation import (
    EvaluationReport,
    SelectionDirection,
    aggregate_reports,
    compare_modes,
    rank_topk,
    retrain_with_selection,
    support_vector_overlap,
)
from .models import (
    CoalitionUtility,
    ModelKind,
    ModelSpec,
    TrainedModel,
    accuracy,
    default_spec,
    predict,
    support_vectors,
    train,
    training_loss_curve,
    utility,
)
from .shapley import (
    AggregationMode,
    McConfig,
    ShapleyEstimate,
    UtilityEvaluationError,
    exact_shapley,
    has_converged,
    loo_values,
    monte_carlo_shapley,
    sample_permutation,
    transform_marginal,
)

__all__ = [
    "AggregationMode",
    "CoalitionUtility",
    "CsvFormatError",
    "Dataset",
    "EvaluationReport",
    "McConfig",
    "ModelKind",
    "ModelSpec",
    "SelectionDirection",
    "ShapleyEstimate",
    "SplitConfig",
    "TrainedModel",
    "UtilityEvaluationError",
    "accuracy",
    "aggregate_reports",
    "compare_modes",
    "default_spec",
    "exact_shapley",
    "filter_iris_2d",
    "has_converged",
    "iris_path",
    "load_csv",
    "load_iris",
    "loo_values",
    "monte_carlo_shapley",
    "predict",
    "rank_topk",
    "retrain_with_selection",
    "sample_permutation",
    "save_csv",
    "subset",
    "support_vector_overlap",
    "support_vectors",
    "train",
    "train_test_split",
    "training_loss_curve",
    "transform_marginal",
    "utility",
]
