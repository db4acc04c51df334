"""Semi-supervised generative learners in paired original/unbiased weighted
forms, misspecification detection from their disagreement, and adaptive
cluster growth to recover from a misspecified structure."""

from .askkm import AskkmModel, AskkmOptions, fit_askkm
from .core import Dataset, InputError, SolverOptions, derive_seed, validate_dataset
from .datagen import CsvSchema, GenSpec, generate, load_csv, sample_eval_set, write_csv
from .evalx import LearningCurve, average_precision, learning_curve, mean_ap
from .kernels import KernelMatrix, KernelSpec, check_psd, gram_matrix, kernel_eval
from .misspec import (
    CriterionReport,
    LabelMap,
    default_threshold,
    disagreement_criterion,
    modify_structure,
)
from .semgmm import GmmModel, KlEstimate, bayes_classify, class_posteriors, fit_sem, kl_mc, loglik
from .sskkm import (
    Assignments,
    ClusterModel,
    class_scores,
    classify_point,
    fit_sskkm,
    init_assignments,
    point_cluster_dist,
)

__all__ = [
    "AskkmModel",
    "AskkmOptions",
    "Assignments",
    "ClusterModel",
    "CriterionReport",
    "CsvSchema",
    "Dataset",
    "GenSpec",
    "GmmModel",
    "InputError",
    "KernelMatrix",
    "KernelSpec",
    "KlEstimate",
    "LabelMap",
    "LearningCurve",
    "SolverOptions",
    "average_precision",
    "bayes_classify",
    "check_psd",
    "class_posteriors",
    "class_scores",
    "classify_point",
    "default_threshold",
    "derive_seed",
    "disagreement_criterion",
    "fit_askkm",
    "fit_sem",
    "fit_sskkm",
    "generate",
    "gram_matrix",
    "init_assignments",
    "kernel_eval",
    "kl_mc",
    "learning_curve",
    "load_csv",
    "loglik",
    "mean_ap",
    "modify_structure",
    "point_cluster_dist",
    "sample_eval_set",
    "validate_dataset",
    "write_csv",
]
