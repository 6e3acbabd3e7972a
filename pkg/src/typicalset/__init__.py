"""Typicality-based goodness-of-fit testing for learned density models.

Gaussian-mixture densities with log-space evaluation, typical-set
membership tests with calibrated radii, maximum-likelihood training
(gradient or EM), ensembles with multi-typicality filtering, and the
analytic bounds governing when such tests can work.
"""

from .bounds import (
    Lemma0Result,
    Theorem2Result,
    estimate_volume_ratio,
    estimate_volume_ratio_mc,
    rel_entropy_typicality_score,
    theorem1_beta_bound,
    theorem2_conditions,
    theorem3_condition,
    theorem3_threshold,
    validate_lemma0_mc,
)
from .cli import ExperimentConfig, main
from .density import (
    MODEL_FORMAT_VERSION,
    DimensionMismatchError,
    EntropyEstimate,
    GaussianComponent,
    KlEstimate,
    MixtureModel,
    SampleBatch,
    avg_neg_log_density,
    closed_form_kl_gaussian,
    estimate_entropy,
    estimate_kl,
    gaussian_entropy,
    load_model,
    log_density,
    log_density_batch,
    model_from_dict,
    model_to_dict,
    random_base_distribution,
    sample,
    save_model,
)
from .ensemble import (
    Ensemble,
    IntersectionMatrix,
    MemberFailure,
    MtildeReport,
    MultiTestOutcome,
    RejectionReport,
    check_mtilde_normalization,
    intersection_matrix,
    is_multi_typical,
    min_typicality_log_density,
    min_typicality_log_density_batch,
    multi_typicality_score,
    rejection_sample_multi_typical,
    train_ensemble,
)
from .grids import GridResolutionError, midpoint_grid, model_box
from .rng import derive_seed, make_rng
from .training import (
    InitConfig,
    LearningCurve,
    TrainConfig,
    TrainingDivergedError,
    effective_mode_count,
    em_step,
    fit_mle,
)
from .typicality import (
    ErrorRates,
    TestOutcome,
    TypicalityConfig,
    calibrate_epsilon,
    estimate_error_rates,
    export_outcomes,
    is_typical,
    sequence_scores,
    typicality_score,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "DimensionMismatchError",
    "GaussianComponent",
    "MixtureModel",
    "SampleBatch",
    "EntropyEstimate",
    "KlEstimate",
    "MODEL_FORMAT_VERSION",
    "log_density",
    "log_density_batch",
    "avg_neg_log_density",
    "sample",
    "gaussian_entropy",
    "estimate_entropy",
    "estimate_kl",
    "closed_form_kl_gaussian",
    "random_base_distribution",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
    "TypicalityConfig",
    "TestOutcome",
    "ErrorRates",
    "typicality_score",
    "sequence_scores",
    "is_typical",
    "calibrate_epsilon",
    "estimate_error_rates",
    "export_outcomes",
    "InitConfig",
    "TrainConfig",
    "LearningCurve",
    "TrainingDivergedError",
    "em_step",
    "fit_mle",
    "effective_mode_count",
    "Ensemble",
    "MemberFailure",
    "MultiTestOutcome",
    "IntersectionMatrix",
    "RejectionReport",
    "MtildeReport",
    "train_ensemble",
    "multi_typicality_score",
    "is_multi_typical",
    "intersection_matrix",
    "rejection_sample_multi_typical",
    "min_typicality_log_density",
    "min_typicality_log_density_batch",
    "check_mtilde_normalization",
    "GridResolutionError",
    "midpoint_grid",
    "model_box",
    "make_rng",
    "derive_seed",
    "theorem1_beta_bound",
    "theorem2_conditions",
    "theorem3_threshold",
    "theorem3_condition",
    "rel_entropy_typicality_score",
    "validate_lemma0_mc",
    "estimate_volume_ratio",
    "estimate_volume_ratio_mc",
    "Theorem2Result",
    "Lemma0Result",
    "ExperimentConfig",
    "main",
]
