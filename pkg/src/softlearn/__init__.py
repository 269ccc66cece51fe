"""Convex ensembling of heterogeneous specialists with honest CV weights.

The pieces compose in training order: datasets supply the material,
specialists wrap the individual learners, cv assembles the out-of-fold
prediction tensor, simplexopt solves for the mixing weights, ensemble
ties the phases together into a deployable model, stats and bench cover
evaluation and benchmarking.
"""

from .core import (
    ConfigError,
    DataValidationError,
    Dataset,
    DimensionError,
    LabelVector,
    SoftlearnError,
    StandardizerParams,
    TaskKind,
    TaskMismatchError,
    apply_standardizer,
    fit_standardizer,
    make_classification_dataset,
    make_regression_dataset,
    one_hot,
)
from .cv import (
    FoldAssignment,
    OofPredictionTensor,
    assemble_oof,
    inner_fold_count,
    kfold,
    make_folds,
    stratified_kfold,
)
from .datasets import (
    SyntheticSpec,
    default_manifest,
    full_manifest,
    generate,
    load_csv,
    load_manifest,
    save_manifest,
    write_csv,
)
from .ensemble import (
    DiversityReport,
    ImmunityReport,
    SelectivePrediction,
    SoftLearner,
    diversity_report,
    fit_soft_learner,
    immunity_probe,
    kv_decomposition,
    load_soft_learner,
    predict,
    predict_proba,
    save_soft_learner,
    selective_predict,
    selective_sweep,
    slim,
    uncertainty,
    uncertainty_deciles,
)
from .simplexopt import (
    SolveReport,
    WeightVector,
    flatten,
    objective_value,
    project_simplex,
    solve_simplex_ls,
)
from .specialists import (
    ExternalPredictions,
    SpecialistConfig,
    SpecialistLibrary,
    default_library,
    derive_seed,
    family_of,
    fit,
)
from .stats import (
    FriedmanResult,
    RankTable,
    ScoreMatrix,
    WilcoxonResult,
    accuracy,
    friedman_test,
    nemenyi_cd,
    r_squared,
    rank_methods,
    wilcoxon_signed_rank,
    win_tie_loss,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataValidationError",
    "Dataset",
    "DimensionError",
    "DiversityReport",
    "ExternalPredictions",
    "FoldAssignment",
    "FriedmanResult",
    "ImmunityReport",
    "LabelVector",
    "OofPredictionTensor",
    "RankTable",
    "ScoreMatrix",
    "SelectivePrediction",
    "SoftLearner",
    "SoftlearnError",
    "SolveReport",
    "SpecialistConfig",
    "SpecialistLibrary",
    "StandardizerParams",
    "SyntheticSpec",
    "TaskKind",
    "TaskMismatchError",
    "WeightVector",
    "WilcoxonResult",
    "accuracy",
    "apply_standardizer",
    "assemble_oof",
    "default_library",
    "default_manifest",
    "derive_seed",
    "diversity_report",
    "family_of",
    "fit",
    "fit_soft_learner",
    "fit_standardizer",
    "flatten",
    "friedman_test",
    "full_manifest",
    "generate",
    "immunity_probe",
    "inner_fold_count",
    "kfold",
    "kv_decomposition",
    "load_csv",
    "load_manifest",
    "load_soft_learner",
    "make_classification_dataset",
    "make_folds",
    "make_regression_dataset",
    "nemenyi_cd",
    "objective_value",
    "one_hot",
    "predict",
    "predict_proba",
    "project_simplex",
    "r_squared",
    "rank_methods",
    "save_manifest",
    "save_soft_learner",
    "selective_predict",
    "selective_sweep",
    "slim",
    "solve_simplex_ls",
    "stratified_kfold",
    "uncertainty",
    "uncertainty_deciles",
    "wilcoxon_signed_rank",
    "win_tie_loss",
    "write_csv",
]
