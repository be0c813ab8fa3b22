"""Ordinal Gaussian-process models on chemical space.

Fits cumulative-link models whose latent compound effects follow a GP
with Tanimoto-based kernels, predicts class probabilities for untested
compounds, and searches fingerprint space for promising compounds with a
genetic algorithm.
"""

from . import errors
from .chemspace import (
    ChemicalSpace,
    Fingerprint,
    build_space,
    counterexample_space,
    embeddability_gram,
    naive_gaussian_counterexample,
    read_fingerprint_csv,
    sqrt_distance_gram_rank,
    tanimoto_distance,
    tanimoto_similarity,
    write_fingerprint_csv,
)
from .discover import GAConfig, GAResult, exhaustive_best, fitness, run_ga
from .evalcv import CVReport, cross_validate, log_loss, spherical_loss, stratified_folds
from .fit import (
    FittedModel,
    fit_mle,
    from_unconstrained,
    load_model,
    save_model,
    standard_errors,
    to_unconstrained,
)
from .kernel import Covariance, KernelSpec, correlation, covariance_matrix, cross_covariance
from .laplace import (
    Dataset,
    LaplaceState,
    ModelParams,
    approx_loglik,
    categorical_loglik,
    eta,
    find_mode,
    score_and_psi,
)
from .link import LinkSpec, b_terms, inv_link, inv_link_d1, inv_link_d2
from .predict import (
    Prediction,
    class_probabilities,
    corrected_variance,
    posterior_u,
    predict_one,
    probit_class_probabilities,
    probit_closed_form,
)
from .simstudy import (
    SimDesign,
    simulate_dataset,
    study_estimation,
    study_ga,
    study_variance,
)

__version__ = "0.1.0"
