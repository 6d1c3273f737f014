"""Eigenvalue shrinkage estimators of a covariance matrix.

All estimators here are rotation invariant: they keep the eigenvectors of
the sample covariance ``S`` and replace its eigenvalues ``d`` by shrunken
values ``e``.

* CERNN: MAP estimate under the prior
  ``exp(-lambda/2 * [alpha * ||Sigma||_* + (1 - alpha) * ||Sigma^-1||_*])``.
  Each ``e_i`` is the positive root of
  ``lambda*alpha*e^2 + n*e - n*d_i - lambda*(1 - alpha) = 0``.
* Linear shrinkage ``(1 - gamma) S + gamma rho I`` and the Ledoit-Wolf
  data-driven choice of ``gamma``.
* CNR: the likelihood maximizer under a condition number ceiling
  ``kappa_max``, which clamps ``d`` to ``[tau*, kappa_max tau*]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidInputError, UnderdeterminedError
from .spectral import SpectralDecomposition, as_data, as_symmetric, eig_sym, sample_covariance

__all__ = [
    "CernnParams",
    "CovarianceEstimate",
    "prior_mode",
    "cernn_eigenvalue",
    "cernn_map",
    "cernn_estimate",
    "alpha_hat",
    "lambda_max_bound",
    "sample_estimate",
    "linear_shrinkage",
    "lw_estimate",
    "cnr_eigenvalues",
    "cnr_estimate",
]

METHODS = ("sample", "cernn", "linear", "lw", "cnr", "rda")


@dataclass(frozen=True)
class CernnParams:
    """Effective sample weight ``n``, penalty strength ``lam`` and mixture constant ``alpha``."""

    n: float
    lam: float
    alpha: float

    def __post_init__(self):
        if not (math.isfinite(self.n) and self.n >= 0):
            raise InvalidInputError(f"n must be a nonnegative real, got {self.n}")
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise InvalidInputError(f"lambda must be a nonnegative real, got {self.lam}")
        if not (0.0 < self.alpha < 1.0):
            raise InvalidInputError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def mode(self) -> float:
        return prior_mode(self.alpha)


@dataclass(frozen=True)
class CovarianceEstimate:
    """A covariance estimate together with how it was produced.

    ``spectrum`` shares its eigenvectors with the input sample covariance;
    its eigenvalues are the shrunken values in descending order.
    """

    matrix: NDArray[np.float64]
    method: str
    params: dict[str, Any] = field(default_factory=dict)
    spectrum: SpectralDecomposition | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown method {self.method!r}")
        if self.spectrum is None:
            object.__setattr__(self, "spectrum", eig_sym(self.matrix))

    @property
    def eigenvalues(self) -> NDArray[np.float64]:
        return self.spectrum.eigenvalues

    @property
    def is_spd(self) -> bool:
        return bool(self.spectrum.eigenvalues[-1] > 0)


def prior_mode(alpha: float) -> float:
    """Common eigenvalue ``sqrt((1 - alpha) / alpha)`` at which the prior peaks."""
    return math.sqrt((1.0 - alpha) / alpha)


def cernn_map(d: ArrayLike, n: ArrayLike, lam: ArrayLike, alpha: ArrayLike) -> NDArray[np.float64]:
    """Broadcasting CERNN eigenvalue map without parameter-object validation.

    Uses the cancellation-free form
    ``e = 2(n d + lam (1 - alpha)) / (n + sqrt(n^2 + 4 lam alpha [n d + lam (1 - alpha)]))``.
    ``lam == 0`` returns ``d`` itself and ``n == 0`` returns the prior mode.
    """
    d, n, lam, alpha = np.broadcast_arrays(
        *(np.asarray(v, dtype=np.float64) for v in (d, n, lam, alpha))
    )
    if np.any((n == 0) & (lam == 0)):
        raise UnderdeterminedError("n = 0 and lambda = 0: no data and no prior")
    c = n * d + lam * (1.0 - alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        e = 2.0 * c / (n + np.sqrt(n * n + 4.0 * lam * alpha * c))
        mode = np.sqrt((1.0 - alpha) / alpha)
    e = np.where(n == 0, mode, e)
    e = np.where(lam == 0, d, e)
    return e if e.ndim else e[()]


def cernn_eigenvalue(d, params: CernnParams):
    """Shrink sample eigenvalue(s) ``d`` to the CERNN estimate.

    Parameters
    ----------
    d : float or array_like
        Nonnegative sample eigenvalue(s).
    params : CernnParams

    Returns
    -------
    float or ndarray
        The unique positive root of
        ``lam*alpha*e^2 + n*e - n*d - lam*(1 - alpha) = 0``.
    """
    arr = np.asarray(d, dtype=np.float64)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise InvalidInputError("sample eigenvalues must be finite and nonnegative")
    out = cernn_map(arr, params.n, params.lam, params.alpha)
    return float(out) if np.ndim(out) == 0 else out


def _spectral_input(s) -> SpectralDecomposition:
    if isinstance(s, SpectralDecomposition):
        return s
    return eig_sym(as_symmetric(s))


def _unchanged(s, spec: SpectralDecomposition) -> NDArray[np.float64]:
    # hand back the caller's matrix bit-for-bit when no shrinkage applies
    if isinstance(s, SpectralDecomposition):
        return spec.reconstruct()
    return as_symmetric(s)


def _clip_psd(vals: NDArray[np.float64]) -> NDArray[np.float64]:
    # eigh returns tiny negatives for singular PSD input
    scale = max(float(np.max(np.abs(vals))), 1.0)
    if np.min(vals) < -1e-10 * scale:
        raise InvalidInputError("matrix is not positive semidefinite")
    return np.maximum(vals, 0.0)


def _from_spectrum(spec: SpectralDecomposition, e, method: str, params: dict) -> CovarianceEstimate:
    new = SpectralDecomposition(e, spec.eigenvectors)
    return CovarianceEstimate(new.reconstruct(), method, params, new)


def cernn_estimate(s, params: CernnParams) -> CovarianceEstimate:
    """CERNN covariance estimate: eigenvectors of ``s``, eigenvalues mapped by :func:`cernn_eigenvalue`.

    ``s`` may be a symmetric PSD matrix or its :class:`SpectralDecomposition`.
    """
    spec = _spectral_input(s)
    d = _clip_psd(spec.eigenvalues)
    info = {"lambda": params.lam, "alpha": params.alpha, "n": params.n}
    if params.lam == 0:
        return CovarianceEstimate(_unchanged(s, spec), "cernn", info, spec)
    return _from_spectrum(spec, cernn_eigenvalue(d, params), "cernn", info)


def alpha_hat(s) -> float:
    """Mixture constant that puts the prior mode at ``tr(S)/p``: ``1 / (1 + (tr(S)/p)^2)``."""
    if isinstance(s, SpectralDecomposition):
        sigma = float(np.mean(s.eigenvalues))
    else:
        a = as_symmetric(s)
        sigma = float(np.trace(a)) / a.shape[0]
    if not sigma > 0:
        raise InvalidInputError("alpha_hat needs a matrix with positive trace")
    return 1.0 / (1.0 + sigma * sigma)


def lambda_max_bound(d: ArrayLike, n: float, alpha: float, epsilon: float = 1e-2) -> float:
    """Smallest penalty whose first-order deviation from the prior mode is within ``epsilon * mode``.

    Uses the large-``lambda`` expansion
    ``e_i ~ mode + [mode * n d_i / (2 (1 - alpha)) - n / (2 alpha)] / lambda``.
    """
    if not epsilon > 0:
        raise InvalidInputError("epsilon must be positive")
    if not 0 < alpha < 1:
        raise InvalidInputError("alpha must lie in (0, 1)")
    m = prior_mode(alpha)
    d = np.asarray(d, dtype=np.float64)
    dev = np.abs(m * n * d / (2.0 * (1.0 - alpha)) - n / (2.0 * alpha))
    return float(np.max(dev)) / (epsilon * m)


def sample_estimate(s) -> CovarianceEstimate:
    spec = _spectral_input(s)
    return CovarianceEstimate(_unchanged(s, spec), "sample", {}, spec)


def linear_shrinkage(s, gamma: float, rho: float | None = None) -> CovarianceEstimate:
    """``(1 - gamma) S + gamma rho I``; ``rho`` defaults to ``tr(S)/p``."""
    if not 0.0 <= gamma <= 1.0:
        raise InvalidInputError(f"gamma must lie in [0, 1], got {gamma}")
    spec = _spectral_input(s)
    d = spec.eigenvalues
    if rho is None:
        rho = float(np.mean(d))
    if not rho > 0:
        raise InvalidInputError("rho must be positive")
    e = (1.0 - gamma) * d + gamma * rho
    return _from_spectrum(spec, e, "linear", {"gamma": gamma, "rho": rho})


def lw_estimate(data: ArrayLike) -> CovarianceEstimate:
    """Ledoit-Wolf (2004) shrinkage toward ``(tr(S)/p) I`` with data-driven weight.

    Norms are the scaled Frobenius norm ``||A||^2 = tr(A A^T) / p``::

        m    = tr(S) / p
        d2   = ||S - m I||^2
        bbar = (1/n^2) sum_j ||x_j x_j^T - S||^2      (x_j centered rows)
        b2   = min(bbar, d2)
        est  = (b2/d2) m I + (1 - b2/d2) S
    """
    x = as_data(data)
    n, p = x.shape
    if n < 2:
        raise InvalidInputError("Ledoit-Wolf needs at least two observations")
    xc = x - x.mean(axis=0)
    s = sample_covariance(x)
    spec = eig_sym(s)
    m = float(np.trace(s)) / p
    s_fro2 = float(np.sum(s * s))
    d2 = float(np.sum((s - m * np.eye(p)) ** 2)) / p
    if d2 <= 1e-24 * m * m:
        return _from_spectrum(spec, spec.eigenvalues.copy(), "lw", {"gamma": 0.0, "rho": m})
    # ||x x^T - S||_F^2 = |x|^4 - 2 x^T S x + ||S||_F^2
    sq = np.einsum("ij,ij->i", xc, xc)
    quad = np.einsum("ij,jk,ik->i", xc, s, xc)
    bbar = float(np.sum(sq * sq - 2.0 * quad + s_fro2)) / (n * n * p)
    b2 = min(max(bbar, 0.0), d2)
    gamma = b2 / d2
    e = (1.0 - gamma) * spec.eigenvalues + gamma * m
    return _from_spectrum(spec, e, "lw", {"gamma": gamma, "rho": m})


def _cnr_h(tau, d, kappa):
    e = np.clip(d[:, None], tau, kappa * tau)
    return np.sum(np.log(e) + d[:, None] / e, axis=0)


def cnr_eigenvalues(
    d: ArrayLike, kappa_max: float, *, allow_singular: bool = False
) -> tuple[NDArray[np.float64], float]:
    """Condition-number-regularized eigenvalues.

    Minimizes ``h(tau) = sum_i [log e_i + d_i / e_i]`` with
    ``e_i = clip(d_i, tau, kappa_max * tau)``. On every interval between
    consecutive breakpoints ``{d_i, d_i / kappa_max}`` the clamped index
    sets are fixed and ``h`` has the closed-form stationary point
    ``tau = (sum_low d_i + sum_high d_i / kappa_max) / (#low + #high)``,
    so the global minimizer is found by checking each interval.

    Parameters
    ----------
    d : array_like
        Sample eigenvalues, descending.
    kappa_max : float
        Condition number ceiling, ``>= 1``.
    allow_singular : bool
        Accept zero eigenvalues (rank-deficient ``S``); at least one must be
        positive. Off by default.

    Returns
    -------
    e : ndarray
        Clamped eigenvalues, same order as ``d``.
    tau_star : float
        Lower clamp level.
    """
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 1 or d.size == 0 or not np.all(np.isfinite(d)):
        raise InvalidInputError("eigenvalues must be a non-empty finite vector")
    if not kappa_max >= 1.0:
        raise InvalidInputError(f"kappa_max must be >= 1, got {kappa_max}")
    if allow_singular:
        d = _clip_psd(d)
        if not np.max(d) > 0:
            raise InvalidInputError("CNR needs at least one positive eigenvalue")
    elif np.any(d <= 0):
        raise InvalidInputError("CNR needs strictly positive eigenvalues")
    d_hi, d_lo = float(np.max(d)), float(np.min(d))
    if d_lo > 0 and kappa_max * d_lo >= d_hi:
        return d.copy(), d_lo

    pos = d[d > 0]
    bps = np.unique(np.concatenate([pos, pos / kappa_max]))
    lo = np.concatenate([[0.0], bps])
    hi = np.concatenate([bps, [2.0 * bps[-1]]])
    mid = 0.5 * (lo + hi)
    low = d[:, None] <= mid[None, :]
    high = d[:, None] >= kappa_max * mid[None, :]
    count = low.sum(axis=0) + high.sum(axis=0)
    num = (d[:, None] * low).sum(axis=0) + (d[:, None] * high).sum(axis=0) / kappa_max
    with np.errstate(divide="ignore", invalid="ignore"):
        cand = np.where(count > 0, num / count, mid)
    cand = np.clip(cand, np.maximum(lo, np.nextafter(0.0, 1.0)), hi)
    vals = _cnr_h(cand, d, kappa_max)
    best = int(np.argmin(vals))
    tau = float(cand[best])
    return np.clip(d, tau, kappa_max * tau), tau


def cnr_estimate(s, kappa_max: float, *, allow_singular: bool = False) -> CovarianceEstimate:
    spec = _spectral_input(s)
    d = spec.eigenvalues
    if allow_singular:
        d = _clip_psd(d)
    e, tau = cnr_eigenvalues(d, kappa_max, allow_singular=allow_singular)
    return _from_spectrum(spec, e, "cnr", {"kappa_max": kappa_max, "tau_star": tau})
