"""Penalized logistic regression over categorical covariates.

The estimator combines a group-lasso penalty, which removes whole factors,
with a weighted count of distinct level pairs, which fuses levels whose
effects do not differ.  Two solvers are provided (penalized IRLS and block
coordinate descent with quasi-Newton block solves), plus two-step
cross-validation, goodness-of-fit measures, and the Monte-Carlo study
harness with its built-in designs.
"""

from .bcd import BcdSettings, approx_g, bcd_fit, block_surrogate, inner_quasi_newton
from .exceptions import (
    DegenerateWeightsError,
    DimensionError,
    FuselogitError,
    SchemaError,
    TuningError,
)
from .likelihood import (
    FitResult,
    LikelihoodState,
    fit_ml,
    gradient,
    hessian,
    log_likelihood,
    predict_proba,
    working_response,
)
from .metrics import EvalReport, evaluate, fusion_rates, msec, selection_rates, sparsity
from .penalty import (
    PenaltyConfig,
    WeightSet,
    build_weights,
    fusion_curvature_block,
    gl_smooth,
    l0_smooth,
    l0_smooth_deriv,
    penalty_curvature,
    penalty_exact,
    penalty_smooth,
    weights_adaptive,
    weights_plain,
)
from .pirls import PirlsSettings, pirls_fit, threshold_solution
from .schema import (
    CoefVector,
    Dataset,
    FactorSpec,
    ModelSchema,
    difference_set,
    encode,
    load_dataset_csv,
    load_schema_json,
    save_dataset_csv,
)
from .simulation import (
    DesignSpec,
    MethodSummary,
    ReplicationReport,
    design_b8,
    design_highdim,
    run_study,
    simulate_dataset,
)
from .tuning import (
    CvPlan,
    CvResult,
    cv_fusion_only,
    cv_two_step,
    deviance,
    find_lambda_max,
    fit_path,
    fit_penalized,
    predictive_deviance_heldout,
    stratified_folds,
)

__version__ = "0.1.0"

__all__ = [
    "BcdSettings", "CoefVector", "CvPlan", "CvResult", "Dataset",
    "DegenerateWeightsError", "DesignSpec", "DimensionError", "EvalReport",
    "FactorSpec", "FitResult", "FuselogitError", "LikelihoodState",
    "MethodSummary", "ModelSchema", "PenaltyConfig", "PirlsSettings",
    "ReplicationReport", "SchemaError", "TuningError", "WeightSet",
    "approx_g", "bcd_fit", "block_surrogate", "build_weights", "cv_fusion_only",
    "cv_two_step", "design_b8", "design_highdim", "deviance", "difference_set",
    "encode", "evaluate", "find_lambda_max", "fit_ml", "fit_path",
    "fit_penalized", "fusion_curvature_block", "fusion_rates", "gl_smooth",
    "gradient", "hessian", "inner_quasi_newton", "l0_smooth", "l0_smooth_deriv",
    "load_dataset_csv", "load_schema_json", "log_likelihood", "msec",
    "penalty_curvature", "penalty_exact", "penalty_smooth", "pirls_fit",
    "predict_proba", "predictive_deviance_heldout", "run_study",
    "save_dataset_csv", "selection_rates", "simulate_dataset", "sparsity",
    "stratified_folds", "threshold_solution", "weights_adaptive",
    "weights_plain", "working_response",
]
