"""Learning co-sparse analysis operators with separable structure by geometric SGD."""
from ._kernels import BACKEND
from .errors import (BadMagicError, DataFormatError, InvariantError, NumericalError,
                     RankDeficiencyError, SaolError, TrainingError, TruncatedFileError)
from .evaluation import (BoundInputs, complexity_bound, confusion_matrix, estimation_error_bound,
                         hungarian_min_assignment, recovery_error)
from .objective import ObjectiveParams, SignalSet, cost_and_gradient, euclidean_gradient, sample_cost
from .oblique import AnalysisOperator, geodesic_step, project_to_tangent, random_oblique
from .synthetic import CosparseSpec, generate_cosparse, random_tight_operator
from .tensor import kron_compose, mode_fold, mode_product, mode_unfold, unvec, vec
from .trainer import TrainerConfig, TrainReport, train

__version__ = "0.1.0"

__all__ = [
    "AnalysisOperator", "BACKEND", "BadMagicError", "BoundInputs", "CosparseSpec",
    "DataFormatError", "InvariantError", "NumericalError", "ObjectiveParams",
    "RankDeficiencyError", "SaolError", "SignalSet", "TrainReport", "TrainerConfig",
    "TrainingError", "TruncatedFileError", "complexity_bound", "confusion_matrix",
    "cost_and_gradient", "estimation_error_bound", "euclidean_gradient", "generate_cosparse",
    "geodesic_step", "hungarian_min_assignment", "kron_compose", "mode_fold", "mode_product",
    "mode_unfold", "project_to_tangent", "random_oblique", "random_tight_operator",
    "recovery_error", "sample_cost", "train", "unvec", "vec"
]
