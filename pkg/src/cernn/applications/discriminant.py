"""Quadratic discriminant analysis with shrunken class covariances."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..errors import InvalidInputError, SingularMatrixError
from ..selection import SupervisedCvResult, cv_select_supervised, lambda_grid
from ..shrinkage import CernnParams, CovarianceEstimate, alpha_hat, cernn_estimate, sample_estimate
from ..spectral import as_data, eig_sym, pooled_covariance, sample_covariance

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
]

FORMS = ("full", "displayed")


@dataclass(frozen=True)
class GaussianClass:
    prior: float
    mean: NDArray[np.float64]
    covariance: CovarianceEstimate
    lam: float = 0.0
    alpha: float | None = None

    def __post_init__(self):
        if not 0 < self.prior <= 1:
            raise InvalidInputError(f"class prior must lie in (0, 1], got {self.prior}")


@dataclass(frozen=True)
class QdaModel:
    """Per-class Gaussians plus the original label values.

    ``form="full"`` scores with the Gaussian log-posterior
    ``log pi_k - 1/2 log det S_k - 1/2 (x - mu_k)^T S_k^-1 (x - mu_k)``.
    ``form="displayed"`` uses the linear score
    ``x^T S_k^-1 mu_k - mu_k^T S_k^-1 mu_k + log pi_k`` for comparison.
    ``pseudo_inverse`` restricts both terms to the positive eigenvalues of
    each covariance (unregularized QDA on rank-deficient classes).
    """

    classes: list[GaussianClass]
    labels: NDArray
    form: str = "full"
    pseudo_inverse: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.form not in FORMS:
            raise InvalidInputError(f"form must be one of {FORMS}")

    @property
    def p(self) -> int:
        return self.classes[0].mean.shape[0]

    def decision_function(self, x: ArrayLike) -> NDArray[np.float64]:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.p:
            raise InvalidInputError("feature dimension does not match the model")
        out = np.empty((x.shape[0], len(self.classes)))
        for k, cls in enumerate(self.classes):
            spec = cls.covariance.spectrum
            e = spec.eigenvalues
            if self.pseudo_inverse:
                keep = e > 1e-10 * max(e[0], 1e-300)
            else:
                if not e[-1] > 0:
                    raise SingularMatrixError(f"class {k} covariance is singular")
                keep = np.ones(e.size, dtype=bool)
            u, e = spec.eigenvectors[:, keep], e[keep]
            log_prior = np.log(cls.prior)
            if self.form == "full":
                z = (x - cls.mean) @ u
                out[:, k] = log_prior - 0.5 * np.sum(np.log(e)) - 0.5 * np.sum(z * z / e, axis=1)
            else:
                w = u @ ((u.T @ cls.mean) / e)
                out[:, k] = x @ w - cls.mean @ w + log_prior
        return out

    def predict(self, x: ArrayLike) -> NDArray:
        """Label with the largest score per row; ties go to the first class."""
        return self.labels[np.argmax(self.decision_function(x), axis=1)]


def _classes(features, labels):
    x = as_data(features)
    y = np.asarray(labels)
    if y.shape != (x.shape[0],):
        raise InvalidInputError("labels must have one entry per row")
    values, index = np.unique(y, return_inverse=True)
    return x, values, index


def _per_class(values, lambdas) -> NDArray[np.float64]:
    lam = np.asarray(lambdas, dtype=np.float64)
    if lam.ndim == 0:
        lam = np.full(len(values), float(lam))
    if lam.shape != (len(values),):
        raise InvalidInputError(f"expected {len(values)} per-class penalties, got {lam.shape}")
    if np.any(lam < 0):
        raise InvalidInputError("penalties must be nonnegative")
    return lam


def fit_qda(features: ArrayLike, labels: ArrayLike, lambdas, *, form: str = "full") -> QdaModel:
    """QDA with a CERNN covariance per class.

    Class ``k`` gets ``cernn_estimate(S_k; n=|C_k|, lambda_k, alpha_hat(S_k))``
    with ``S_k`` its maximum likelihood covariance and prior ``|C_k| / n``.
    ``lambdas`` is a scalar or one value per class (in sorted label order).
    """
    x, values, index = _classes(features, labels)
    lam = _per_class(values, lambdas)
    n = x.shape[0]
    classes = []
    for k in range(len(values)):
        rows = x[index == k]
        if rows.shape[0] < 2:
            raise InvalidInputError(f"class {values[k]!r} needs at least two samples")
        spec = eig_sym(sample_covariance(rows))
        if lam[k] > 0:
            a = alpha_hat(spec)
            est = cernn_estimate(spec, CernnParams(rows.shape[0], float(lam[k]), a))
        else:
            a = None
            est = sample_estimate(spec)
        if not est.eigenvalues[-1] > 0:
            raise SingularMatrixError(f"covariance of class {values[k]!r} is singular; use a positive penalty")
        classes.append(GaussianClass(rows.shape[0] / n, rows.mean(axis=0), est, float(lam[k]), a))
    return QdaModel(classes, values, form)


def qda_lambda_grids(features: ArrayLike, labels: ArrayLike, size: int = 10) -> list[NDArray[np.float64]]:
    """One penalty grid per class from :func:`lambda_grid` on that class's spectrum."""
    x, values, index = _classes(features, labels)
    grids = []
    for k in range(len(values)):
        rows = x[index == k]
        spec = eig_sym(sample_covariance(rows))
        d = np.maximum(spec.eigenvalues, 0.0)
        grids.append(lambda_grid(d, rows.shape[0], alpha_hat(spec), size=size))
    return grids


def select_qda(
    features: ArrayLike,
    labels: ArrayLike,
    K: int = 5,
    seed=None,
    *,
    grid_size: int = 10,
    form: str = "full",
    threads: int = 1,
) -> tuple[QdaModel, SupervisedCvResult]:
    """Tune one penalty per class by stratified CV, then refit on all rows."""
    grids = qda_lambda_grids(features, labels, grid_size)
    cv = cv_select_supervised(
        features, labels, K, grids, seed, lambda x, y, lam: fit_qda(x, y, lam, form=form), threads=threads
    )
    return fit_qda(features, labels, cv.params, form=form), cv


def select_rda(
    features: ArrayLike,
    labels: ArrayLike,
    K: int = 5,
    seed=None,
    *,
    grid: ArrayLike | None = None,
    form: str = "full",
    threads: int = 1,
) -> tuple[QdaModel, SupervisedCvResult]:
    """Tune the RDA mixing weight by stratified CV (default grid 0, 0.1, ..., 1)."""
    grid = np.linspace(0.0, 1.0, 11) if grid is None else grid
    cv = cv_select_supervised(
        features, labels, K, [grid], seed, lambda x, y, g: fit_rda(x, y, g[0], form=form), threads=threads
    )
    return fit_rda(features, labels, cv.params[0], form=form), cv


def fit_rda(features: ArrayLike, labels: ArrayLike, gamma: float, *, form: str = "full") -> QdaModel:
    """Friedman's compromise ``gamma S_k + (1 - gamma) S_pooled`` per class.

    Raises :class:`SingularMatrixError` when a blended covariance is singular.
    """
    if not 0.0 <= gamma <= 1.0:
        raise InvalidInputError(f"gamma must lie in [0, 1], got {gamma}")
    x, values, index = _classes(features, labels)
    pooled = pooled_covariance(x, index, len(values))
    n = x.shape[0]
    classes = []
    for k in range(len(values)):
        rows = x[index == k]
        cov = gamma * sample_covariance(rows) + (1.0 - gamma) * pooled
        spec = eig_sym(cov)
        e = spec.eigenvalues
        if not e[-1] > 1e-12 * max(e[0], 1e-300):
            raise SingularMatrixError(f"blended covariance of class {values[k]!r} is singular")
        est = CovarianceEstimate(spec.reconstruct(), "rda", {"gamma": gamma}, spec)
        classes.append(GaussianClass(rows.shape[0] / n, rows.mean(axis=0), est))
    return QdaModel(classes, values, form, meta={"gamma": gamma})


def fit_qda_pinv(features: ArrayLike, labels: ArrayLike) -> QdaModel:
    """Unregularized QDA using pseudo-inverses and pseudo-determinants."""
    x, values, index = _classes(features, labels)
    n = x.shape[0]
    classes = []
    for k in range(len(values)):
        rows = x[index == k]
        est = sample_estimate(eig_sym(sample_covariance(rows)))
        classes.append(GaussianClass(rows.shape[0] / n, rows.mean(axis=0), est))
    return QdaModel(classes, values, pseudo_inverse=True)


def predict_qda(model: QdaModel, x: ArrayLike):
    """Class label for a single feature vector, or an array of labels for a matrix."""
    arr = np.asarray(x, dtype=np.float64)
    out = model.predict(arr)
    return out[0] if arr.ndim == 1 else out
