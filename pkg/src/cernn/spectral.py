"""Dense symmetric linear algebra: covariances, spectra, norms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidInputError, SingularMatrixError

__all__ = [
    "SpectralDecomposition",
    "as_symmetric",
    "as_data",
    "sample_covariance",
    "pooled_covariance",
    "eig_sym",
    "condition_number",
    "nuclear_norm",
    "frobenius_norm",
    "trace",
]

_SYM_RTOL = 1e-8


def as_data(data: ArrayLike) -> NDArray[np.float64]:
    """Validate an observations matrix (rows = samples) and return it as float64."""
    x = np.asarray(data, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise InvalidInputError("data must be a non-empty n x p matrix")
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("data contains non-finite values")
    return x


def as_symmetric(m: ArrayLike) -> NDArray[np.float64]:
    """Return ``m`` as an exactly symmetric float64 matrix.

    Small asymmetries from floating point round-off are averaged away;
    anything beyond a relative tolerance of 1e-8 is rejected.
    """
    a = np.asarray(m, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise InvalidInputError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("matrix contains non-finite entries")
    scale = max(float(np.max(np.abs(a))), 1e-300)
    if np.max(np.abs(a - a.T)) > _SYM_RTOL * scale:
        raise InvalidInputError("matrix is not symmetric")
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues in descending order with matching orthonormal eigenvectors.

    Column ``i`` of ``eigenvectors`` belongs to ``eigenvalues[i]``.
    """

    eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.float64]

    def __post_init__(self):
        for name in ("eigenvalues", "eigenvectors"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    def reconstruct(self, eigenvalues: ArrayLike | None = None) -> NDArray[np.float64]:
        """Rebuild ``Q diag(values) Q^T``, by default with the stored eigenvalues."""
        vals = self.eigenvalues if eigenvalues is None else np.asarray(eigenvalues, dtype=np.float64)
        q = self.eigenvectors
        out = (q * vals) @ q.T
        return 0.5 * (out + out.T)


def sample_covariance(data: ArrayLike) -> NDArray[np.float64]:
    """Maximum likelihood covariance ``(1/n) sum (y_j - ybar)(y_j - ybar)^T``."""
    x = as_data(data)
    centered = x - x.mean(axis=0)
    s = centered.T @ centered / x.shape[0]
    return 0.5 * (s + s.T)


def pooled_covariance(data: ArrayLike, labels: ArrayLike, c: int | None = None) -> NDArray[np.float64]:
    """Within-class pooled covariance with divisor ``n - c``.

    Parameters
    ----------
    data : (n, p) array_like
        Observations.
    labels : (n,) array_like of int
        Class ids in ``0..c-1``.
    c : int, optional
        Number of classes. Inferred from ``labels`` when omitted.
    """
    x = as_data(data)
    y = np.asarray(labels)
    if y.shape != (x.shape[0],):
        raise InvalidInputError("labels must have one entry per row of data")
    classes = np.unique(y) if c is None else np.arange(c)
    c = len(classes)
    n = x.shape[0]
    if n <= c:
        raise InvalidInputError(f"pooled covariance needs n > c (n={n}, c={c})")
    scatter = np.zeros((x.shape[1], x.shape[1]))
    for k in classes:
        rows = x[y == k]
        if rows.shape[0] == 0:
            raise InvalidInputError(f"class {k} has no observations")
        dev = rows - rows.mean(axis=0)
        scatter += dev.T @ dev
    s = scatter / (n - c)
    return 0.5 * (s + s.T)


def eig_sym(m: ArrayLike) -> SpectralDecomposition:
    """Spectral decomposition of a symmetric matrix, eigenvalues descending."""
    a = as_symmetric(m)
    vals, vecs = np.linalg.eigh(a)
    return SpectralDecomposition(vals[::-1], vecs[:, ::-1])


def _spectrum(m) -> NDArray[np.float64]:
    if isinstance(m, SpectralDecomposition):
        return m.eigenvalues
    return eig_sym(m).eigenvalues


def condition_number(d: SpectralDecomposition | ArrayLike) -> float:
    """Ratio of largest to smallest eigenvalue of a positive definite matrix.

    Accepts a :class:`SpectralDecomposition`, a symmetric matrix, or a
    1-D vector of eigenvalues.
    """
    if isinstance(d, SpectralDecomposition):
        vals = d.eigenvalues
    else:
        arr = np.asarray(d, dtype=np.float64)
        vals = arr if arr.ndim == 1 else _spectrum(arr)
    lo = float(np.min(vals))
    if lo <= 0.0:
        raise SingularMatrixError("condition number undefined: smallest eigenvalue is not positive")
    return float(np.max(vals)) / lo


def nuclear_norm(m: ArrayLike) -> float:
    """Sum of singular values (the trace, for positive semidefinite input)."""
    return float(np.sum(np.abs(_spectrum(m))))


def frobenius_norm(m: ArrayLike) -> float:
    return float(np.linalg.norm(np.asarray(m, dtype=np.float64), "fro"))


def trace(m: ArrayLike) -> float:
    return float(np.trace(np.asarray(m, dtype=np.float64)))
