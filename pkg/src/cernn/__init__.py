"""Covariance estimation regularized by nuclear norms, with baselines and applications."""

__version__ = "0.1.0"

from .errors import (
    CernnError,
    InvalidInputError,
    SingularMatrixError,
    StratificationError,
    UnderdeterminedError,
)
from .selection import (
    cv_select_kappa,
    cv_select_lambda,
    cv_select_supervised,
    lambda_grid,
    make_folds,
    predictive_negloglik,
    stratified_folds,
)
from .shrinkage import (
    CernnParams,
    CovarianceEstimate,
    alpha_hat,
    cernn_eigenvalue,
    cernn_estimate,
    cnr_estimate,
    lambda_max_bound,
    linear_shrinkage,
    lw_estimate,
    sample_estimate,
)
from .spectral import SpectralDecomposition, condition_number, eig_sym, pooled_covariance, sample_covariance

__all__ = [
    "CernnError",
    "InvalidInputError",
    "SingularMatrixError",
    "StratificationError",
    "UnderdeterminedError",
    "SpectralDecomposition",
    "eig_sym",
    "sample_covariance",
    "pooled_covariance",
    "condition_number",
    "CernnParams",
    "CovarianceEstimate",
    "alpha_hat",
    "cernn_eigenvalue",
    "cernn_estimate",
    "lambda_max_bound",
    "sample_estimate",
    "linear_shrinkage",
    "lw_estimate",
    "cnr_estimate",
    "make_folds",
    "stratified_folds",
    "lambda_grid",
    "predictive_negloglik",
    "cv_select_lambda",
    "cv_select_kappa",
    "cv_select_supervised",
]
