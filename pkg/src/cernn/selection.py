"""Model selection by K-fold cross-validation.

Unsupervised selection scores each candidate on the held-out predictive
negative loglikelihood; supervised selection (discriminant analysis) scores
held-out misclassification.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidInputError, SingularMatrixError, StratificationError
from .shrinkage import (
    CovarianceEstimate,
    alpha_hat,
    cernn_map,
    cnr_eigenvalues,
    lambda_max_bound,
)
from .spectral import SpectralDecomposition, as_data, eig_sym, sample_covariance

__all__ = [
    "FoldPlan",
    "CvResult",
    "SupervisedCvResult",
    "make_folds",
    "stratified_folds",
    "predictive_negloglik",
    "lambda_grid",
    "kappa_grid",
    "cv_scores",
    "cv_select_lambda",
    "cv_select_kappa",
    "cv_select_supervised",
]

CENTER_MODES = ("train", "zero")


@dataclass(frozen=True)
class FoldPlan:
    """Fold id (``0..K-1``) for every observation."""

    assignments: NDArray[np.int64]
    K: int
    seed: int | None = None

    def __post_init__(self):
        a = np.array(self.assignments, dtype=np.int64)
        if a.ndim != 1 or self.K < 2:
            raise InvalidInputError("need a 1-D assignment vector and K >= 2")
        if a.size and (a.min() < 0 or a.max() >= self.K):
            raise InvalidInputError(f"fold ids must lie in 0..{self.K - 1}")
        if np.any(np.bincount(a, minlength=self.K) == 0):
            raise InvalidInputError("every fold must be nonempty")
        a.setflags(write=False)
        object.__setattr__(self, "assignments", a)

    def split(self, k: int) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
        """Row indices ``(train, heldout)`` for fold ``k``."""
        mask = self.assignments == k
        return np.flatnonzero(~mask), np.flatnonzero(mask)

    def sizes(self) -> NDArray[np.int64]:
        return np.bincount(self.assignments, minlength=self.K)


@dataclass(frozen=True)
class CvResult:
    grid: NDArray[np.float64]
    mean_scores: NDArray[np.float64]
    chosen: float
    fold_scores: NDArray[np.float64] = field(repr=False, default=None)

    @property
    def chosen_index(self) -> int:
        return int(np.flatnonzero(self.grid == self.chosen)[0])


@dataclass(frozen=True)
class SupervisedCvResult:
    params: tuple[float, ...]
    cv_error: float


def make_folds(n: int, K: int, seed=None) -> FoldPlan:
    """Random balanced partition of ``n`` rows into ``K`` folds."""
    if not 2 <= K <= n:
        raise InvalidInputError(f"need 2 <= K <= n, got K={K}, n={n}")
    rng = np.random.default_rng(seed)
    assignments = np.empty(n, dtype=np.int64)
    assignments[rng.permutation(n)] = np.arange(n) % K
    return FoldPlan(assignments, K, seed)


def stratified_folds(labels: ArrayLike, K: int, seed=None) -> FoldPlan:
    """Balanced folds that spread every class round-robin over the folds.

    Raises :class:`StratificationError` if a class would be absent from
    some training fold.
    """
    y = np.asarray(labels)
    n = y.shape[0]
    if not 2 <= K <= n:
        raise InvalidInputError(f"need 2 <= K <= n, got K={K}, n={n}")
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise StratificationError("supervised cross-validation needs at least two classes")
    if np.any(counts < 2):
        bad = classes[counts < 2].tolist()
        raise StratificationError(f"classes {bad} have fewer than two members")
    rng = np.random.default_rng(seed)
    assignments = np.empty(n, dtype=np.int64)
    offset = 0
    for k in classes:
        idx = rng.permutation(np.flatnonzero(y == k))
        assignments[idx] = (offset + np.arange(len(idx))) % K
        offset += len(idx)
    return FoldPlan(assignments, K, seed)


def predictive_negloglik(estimate, heldout: ArrayLike, center: ArrayLike | None = None) -> float:
    """Gaussian negative loglikelihood of held-out rows, constants dropped.

    ``(n_k/2) log det Sigma + (1/2) sum_j (y_j - center)^T Sigma^-1 (y_j - center)``

    Parameters
    ----------
    estimate : CovarianceEstimate or (p, p) array_like
        Positive definite covariance.
    heldout : (n_k, p) array_like
    center : (p,) array_like, optional
        Location the held-out rows are centered at; zero when omitted.
    """
    if isinstance(estimate, CovarianceEstimate):
        spec = estimate.spectrum
    elif isinstance(estimate, SpectralDecomposition):
        spec = estimate
    else:
        spec = eig_sym(estimate)
    y = np.asarray(heldout, dtype=np.float64)
    if y.ndim == 1:
        y = y[None, :]
    if y.shape[1] != spec.dim:
        raise InvalidInputError("held-out rows do not match the estimate's dimension")
    if center is not None:
        y = y - np.asarray(center, dtype=np.float64)
    e = spec.eigenvalues
    if not e[-1] > 0:
        raise SingularMatrixError("predictive loglikelihood needs a positive definite estimate")
    q = np.sum((y @ spec.eigenvectors) ** 2, axis=0)
    return 0.5 * y.shape[0] * float(np.sum(np.log(e))) + 0.5 * float(np.sum(q / e))


def lambda_grid(d: ArrayLike, n: float, alpha: float, epsilon: float = 1e-2, size: int = 30) -> NDArray[np.float64]:
    """``0`` followed by ``size - 1`` log-spaced penalties over ``[1e-4 lam_max, lam_max]``."""
    if size < 2:
        raise InvalidInputError("grid size must be at least 2")
    lam_max = lambda_max_bound(d, n, alpha, epsilon)
    if not lam_max > 0:
        warnings.warn("spectrum sits at the prior mode; lambda grid degenerates to {0}", RuntimeWarning)
        return np.zeros(1)
    if size == 2:
        return np.array([0.0, lam_max])
    tail = np.geomspace(lam_max * 1e-4, lam_max, size - 1)
    tail[-1] = lam_max
    return np.concatenate([[0.0], tail])


def kappa_grid(d: ArrayLike, size: int = 30, cap: float = 1e8) -> NDArray[np.float64]:
    """Log-spaced condition-number ceilings from 1 up to the sample condition number.

    Zero eigenvalues are ignored when forming the sample condition number,
    which is capped at ``cap``.
    """
    d = np.asarray(d, dtype=np.float64)
    top = float(np.max(d))
    if not top > 0:
        raise InvalidInputError("spectrum has no positive eigenvalue")
    pos = d[d > 1e-12 * top]
    hi = min(top / float(np.min(pos)), cap)
    if hi <= 1.0 or size < 2:
        return np.ones(1)
    g = np.geomspace(1.0, hi, size)
    g[0], g[-1] = 1.0, hi
    return g


# A shrinker maps (training spectrum, training size, grid value) -> eigenvalues.
Shrinker = Callable[[SpectralDecomposition, int, float], NDArray[np.float64]]


def _cernn_shrinker(alpha: float | None = None) -> Shrinker:
    def shrink(spec: SpectralDecomposition, n: int, lam: float) -> NDArray[np.float64]:
        d = np.maximum(spec.eigenvalues, 0.0)
        if lam == 0:
            return d
        return cernn_map(d, n, lam, alpha_hat(spec) if alpha is None else alpha)

    return shrink


def _cnr_shrinker(spec: SpectralDecomposition, n: int, kappa: float) -> NDArray[np.float64]:
    return cnr_eigenvalues(np.maximum(spec.eigenvalues, 0.0), kappa, allow_singular=True)[0]


def _fold_scores(x, train, test, grid, shrink: Shrinker, center: str) -> NDArray[np.float64]:
    xtr, xte = x[train], x[test]
    spec = eig_sym(sample_covariance(xtr))
    y = xte - xtr.mean(axis=0) if center == "train" else xte
    q = np.sum((y @ spec.eigenvectors) ** 2, axis=0)
    n_k = xte.shape[0]
    out = np.empty(len(grid))
    for j, g in enumerate(grid):
        e = shrink(spec, xtr.shape[0], g)
        if not np.min(e) > 0:
            out[j] = np.inf
            continue
        out[j] = 0.5 * n_k * np.sum(np.log(e)) + 0.5 * np.sum(q / e)
    return out


def cv_scores(
    data: ArrayLike,
    plan: FoldPlan,
    grid: ArrayLike,
    shrink: Shrinker,
    *,
    center: str = "train",
    threads: int = 1,
) -> NDArray[np.float64]:
    """Held-out negative loglikelihood for every (fold, grid value), shape ``(K, len(grid))``.

    Singular fits score ``+inf``.
    """
    x = as_data(data)
    if center not in CENTER_MODES:
        raise InvalidInputError(f"center must be one of {CENTER_MODES}")
    if plan.assignments.shape[0] != x.shape[0]:
        raise InvalidInputError("fold plan does not match the number of rows")
    grid = np.asarray(grid, dtype=np.float64)

    def one(k):
        train, test = plan.split(k)
        return _fold_scores(x, train, test, grid, shrink, center)

    if threads == 1:
        rows = [one(k) for k in range(plan.K)]
    else:
        with ThreadPoolExecutor(max_workers=threads or None) as pool:
            rows = list(pool.map(one, range(plan.K)))
    return np.vstack(rows)


def _argmin(scores: NDArray[np.float64], prefer_last: bool = False) -> int:
    best = np.min(scores)
    hits = np.flatnonzero(scores == best)
    return int(hits[-1] if prefer_last else hits[0])


def _plan_for(x, K, seed, folds):
    if folds is not None:
        return folds
    return make_folds(x.shape[0], K, seed)


def cv_select_lambda(
    data: ArrayLike,
    K: int = 5,
    grid: ArrayLike | None = None,
    seed=None,
    *,
    folds: FoldPlan | None = None,
    center: str = "train",
    alpha: float | None = None,
    epsilon: float = 1e-2,
    grid_size: int = 30,
    threads: int = 1,
) -> CvResult:
    """Choose the CERNN penalty minimizing the average held-out negative loglikelihood.

    Each training fold gets its own ``alpha_hat`` unless a fixed ``alpha`` is
    given. The criterion is ``(1/n) sum_k l_k``; ties go to the smaller
    penalty. Without an explicit ``grid`` one is built by
    :func:`lambda_grid` from the full data.
    """
    x = as_data(data)
    if alpha is not None and not 0 < alpha < 1:
        raise InvalidInputError("alpha must lie in (0, 1)")
    if grid is None:
        spec = eig_sym(sample_covariance(x))
        a = alpha_hat(spec) if alpha is None else alpha
        grid = lambda_grid(np.maximum(spec.eigenvalues, 0.0), x.shape[0], a, epsilon, grid_size)
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise InvalidInputError("grid is empty")
    if np.any(np.diff(grid) <= 0):
        raise InvalidInputError("grid must be strictly ascending")
    plan = _plan_for(x, K, seed, folds)
    folds_ = cv_scores(x, plan, grid, _cernn_shrinker(alpha), center=center, threads=threads)
    mean = folds_.sum(axis=0) / x.shape[0]
    return CvResult(grid, mean, float(grid[_argmin(mean)]), folds_)


def cv_select_kappa(
    data: ArrayLike,
    K: int = 5,
    grid: ArrayLike | None = None,
    seed=None,
    *,
    folds: FoldPlan | None = None,
    center: str = "train",
    grid_size: int = 30,
    threads: int = 1,
) -> CvResult:
    """Choose the CNR ceiling ``kappa_max`` by held-out negative loglikelihood.

    Ties go to the larger ceiling, i.e. the weaker regularization.
    """
    x = as_data(data)
    if grid is None:
        grid = kappa_grid(eig_sym(sample_covariance(x)).eigenvalues, grid_size)
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0 or np.any(grid < 1):
        raise InvalidInputError("kappa grid must be non-empty with values >= 1")
    if np.any(np.diff(grid) <= 0):
        raise InvalidInputError("grid must be strictly ascending")
    plan = _plan_for(x, K, seed, folds)
    folds_ = cv_scores(x, plan, grid, _cnr_shrinker, center=center, threads=threads)
    mean = folds_.sum(axis=0) / x.shape[0]
    return CvResult(grid, mean, float(grid[_argmin(mean, prefer_last=True)]), folds_)


def cv_select_supervised(
    features: ArrayLike,
    labels: ArrayLike,
    K: int,
    grids: Sequence[ArrayLike],
    seed,
    fitter: Callable,
    *,
    threads: int = 1,
) -> SupervisedCvResult:
    """Pick classifier parameters by stratified K-fold misclassification rate.

    One coordinate per entry of ``grids`` (one penalty per class for CERNN
    discriminant analysis, a single mixing weight for RDA). Coordinates are
    optimized in a single pass, each over its own grid with the others held
    at their current values, starting from the grid midpoints. Ties go to
    the smaller value.

    Parameters
    ----------
    fitter : callable
        ``fitter(X, y, params) -> model`` where ``model.predict(X)`` returns
        labels. A :class:`SingularMatrixError` from ``fitter`` scores as
        error rate ``+inf``.
    """
    x = as_data(features)
    y = np.asarray(labels)
    if y.shape != (x.shape[0],):
        raise InvalidInputError("labels must have one entry per row")
    plan = stratified_folds(y, K, seed)
    classes = np.unique(y)
    splits = [plan.split(k) for k in range(plan.K)]
    for train, _ in splits:
        if len(np.unique(y[train])) != len(classes):
            raise StratificationError("a class is missing from a training fold")
    grids = [np.sort(np.asarray(g, dtype=np.float64)) for g in grids]
    if not grids or any(g.size == 0 for g in grids):
        raise InvalidInputError("every coordinate needs a non-empty grid")

    cache: dict[tuple, float] = {}

    def fold_errors(params, split):
        train, test = split
        try:
            model = fitter(x[train], y[train], params)
        except SingularMatrixError:
            return np.inf
        return float(np.sum(model.predict(x[test]) != y[test]))

    def error(params: tuple) -> float:
        if params not in cache:
            if threads == 1:
                errs = [fold_errors(params, s) for s in splits]
            else:
                with ThreadPoolExecutor(max_workers=threads or None) as pool:
                    errs = list(pool.map(lambda s: fold_errors(params, s), splits))
            cache[params] = float(sum(errs)) / x.shape[0]
        return cache[params]

    current = [float(g[len(g) // 2]) for g in grids]
    for j, g in enumerate(grids):
        scores = np.array([error(tuple(current[:j] + [float(v)] + current[j + 1:])) for v in g])
        current[j] = float(g[_argmin(scores)])
    best = tuple(current)
    return SupervisedCvResult(best, error(best))
