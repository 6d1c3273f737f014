"""Classifiers and clustering built on the covariance estimators."""

from .clustering import (
    MixtureState,
    Responsibilities,
    adjusted_rand_index,
    em_cluster,
    kmeanspp_init,
    penalized_objective,
)
from .discriminant import (
    GaussianClass,
    QdaModel,
    fit_qda,
    fit_qda_pinv,
    fit_rda,
    predict_qda,
    qda_lambda_grids,
    select_qda,
    select_rda,
)

__all__ = [
    "GaussianClass",
    "QdaModel",
    "fit_qda",
    "fit_rda",
    "fit_qda_pinv",
    "predict_qda",
    "qda_lambda_grids",
    "select_qda",
    "select_rda",
    "MixtureState",
    "Responsibilities",
    "kmeanspp_init",
    "em_cluster",
    "penalized_objective",
    "adjusted_rand_index",
]
