"""Hierarchical pairwise interaction selection with an overlapped group lasso."""

__version__ = "0.1.0"

from .data import Column, DataError, Dataset, StandardizationRecord, load_csv, parse_schema, standardize
from .groups import FeatureGroup, GroupCoefficients, GroupSpace, enumerate_groups
from .hierarchy import (
    EffectDecomposition,
    InteractionModel,
    decompose_cat_cat,
    decompose_cat_cont,
    decompose_cont_cont,
    extract_model,
)
from .screening import ScreenAudit, ScreenConfig, ScreeningError
from .simulate import SimDesign, classification_metrics, fdr_curve, generate
from .solver import (
    ConvergenceError,
    ModelFit,
    PathResult,
    SolverConfig,
    fit_path,
    fit_single,
    lambda_max,
    predict,
)

__all__ = [
    "Column", "DataError", "Dataset", "StandardizationRecord", "load_csv", "parse_schema",
    "standardize", "FeatureGroup", "GroupCoefficients", "GroupSpace", "enumerate_groups",
    "EffectDecomposition", "InteractionModel", "decompose_cat_cat", "decompose_cat_cont",
    "decompose_cont_cont", "extract_model", "ScreenAudit", "ScreenConfig", "ScreeningError",
    "SimDesign", "classification_metrics", "fdr_curve", "generate", "ConvergenceError",
    "ModelFit", "PathResult", "SolverConfig", "fit_path", "fit_single", "lambda_max", "predict",
]
