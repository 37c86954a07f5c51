"""Multilevel latent-class IRT models for binary test data.

Estimates discrete-ability IRT models with students nested in schools:
latent classes at the student level, latent types at the school level,
multinomial-logit covariate effects on both memberships, EM-based maximum
marginal likelihood, BIC model selection, MAP classification, and a
simulation harness for parameter-recovery checks.
"""

from .data import MISSING, ResponseDataset, SchoolGroup, validate_dataset
from .em import (
    FitControls,
    FitResult,
    MStepError,
    MultistartError,
    PosteriorTables,
    e_step,
    fit,
    initialize,
    m_step,
    multistart_fit,
)
from .likelihood import (
    EnumerationCapError,
    NonFiniteLikelihoodError,
    brute_force_loglik,
    group_conditional_loglik,
    marginal_loglik,
    student_conditional_loglik,
)
from .model import (
    ItemBank,
    ModelSpec,
    ParameterSet,
    Parameterization,
    apply_identifiability,
    count_free_parameters,
    item_success_prob,
    validate_params,
    validate_spec,
)
from .selection import (
    ClassificationResult,
    SweepResult,
    SweepRow,
    assign_schools,
    assign_students,
    average_class_weights,
    bic,
    classify,
    school_support_points,
    standardize_abilities,
    sweep_school_types,
    type_probabilities_by_profile,
)
from .simulate import (
    CategoricalCovariate,
    CyclicCovariate,
    LatentLabels,
    RecoveryReport,
    SimulationDesign,
    align_labels,
    generate_dataset,
    permute_parameters,
    recovery_report,
    simulate_full,
)
from .weights import (
    log_school_type_weights,
    log_student_class_weights,
    school_type_weights,
    student_class_weights,
)

__version__ = "0.1.0"

__all__ = [
    "MISSING",
    "CategoricalCovariate",
    "ClassificationResult",
    "CyclicCovariate",
    "EnumerationCapError",
    "FitControls",
    "FitResult",
    "ItemBank",
    "LatentLabels",
    "MStepError",
    "ModelSpec",
    "MultistartError",
    "NonFiniteLikelihoodError",
    "ParameterSet",
    "Parameterization",
    "PosteriorTables",
    "RecoveryReport",
    "ResponseDataset",
    "SchoolGroup",
    "SimulationDesign",
    "SweepResult",
    "SweepRow",
    "align_labels",
    "apply_identifiability",
    "assign_schools",
    "assign_students",
    "average_class_weights",
    "bic",
    "brute_force_loglik",
    "classify",
    "count_free_parameters",
    "e_step",
    "fit",
    "generate_dataset",
    "group_conditional_loglik",
    "initialize",
    "item_success_prob",
    "log_school_type_weights",
    "log_student_class_weights",
    "m_step",
    "marginal_loglik",
    "multistart_fit",
    "permute_parameters",
    "recovery_report",
    "school_support_points",
    "school_type_weights",
    "simulate_full",
    "standardize_abilities",
    "student_class_weights",
    "student_conditional_loglik",
    "sweep_school_types",
    "type_probabilities_by_profile",
    "validate_dataset",
    "validate_params",
    "validate_spec",
]
