"""Loss metrics, Gaussian sampling and the simulation harnesses.

Every harness emits long-format rows ``(scenario, trial, method, metric,
value)``. Trials draw from independent random streams keyed on
``(seed, trial)``, so results do not depend on how trials are scheduled
across threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidInputError, SingularMatrixError
from .selection import cv_select_kappa, cv_select_lambda, lambda_grid, make_folds
from .shrinkage import (
    CernnParams,
    alpha_hat,
    cernn_estimate,
    cernn_map,
    cnr_eigenvalues,
    cnr_estimate,
    lw_estimate,
)
from .spectral import as_symmetric, eig_sym, sample_covariance

__all__ = [
    "LossReport",
    "Row",
    "entropy_loss",
    "quadratic_loss",
    "loss_report",
    "sample_mvn",
    "DispersionSpec",
    "DispersionResult",
    "dispersion_experiment",
    "PathResult",
    "path_at_condition_number",
    "BimodalSpec",
    "BimodalResult",
    "bimodal_experiment",
    "summarize",
]

Row = tuple[str, int, str, str, float]


def _map_trials(fn, trials: int, threads: int):
    if threads == 1:
        return [fn(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=threads or None) as pool:
        return list(pool.map(fn, range(trials)))


def _trial_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([seed, *keys])


# ---------------------------------------------------------------- losses


@dataclass(frozen=True)
class LossReport:
    entropy: float
    quadratic: float


def _whitened_spectrum(estimate, truth) -> NDArray[np.float64]:
    """Eigenvalues of ``Sigma^-1/2 Sigma_hat Sigma^-1/2`` (those of ``Sigma^-1 Sigma_hat``)."""
    t = as_symmetric(truth)
    e = as_symmetric(estimate)
    try:
        chol = np.linalg.cholesky(t)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("truth must be positive definite") from None
    half = np.linalg.solve(chol, e)
    w = np.linalg.solve(chol, half.T)
    return np.linalg.eigvalsh(0.5 * (w + w.T))


def entropy_loss(estimate: ArrayLike, truth: ArrayLike) -> float:
    """Stein's entropy loss ``tr(Sigma^-1 Sigma_hat) - log det(Sigma^-1 Sigma_hat) - p``."""
    mu = _whitened_spectrum(estimate, truth)
    if not np.min(mu) > 0:
        raise SingularMatrixError("estimate must be positive definite")
    return float(np.sum(mu - np.log(mu) - 1.0))


def quadratic_loss(estimate: ArrayLike, truth: ArrayLike) -> float:
    """``||Sigma_hat Sigma^-1 - I||_F^2``."""
    t = as_symmetric(truth)
    e = as_symmetric(estimate)
    try:
        chol = np.linalg.cholesky(t)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("truth must be positive definite") from None
    # Sigma^-1 Sigma_hat is the transpose of Sigma_hat Sigma^-1
    b = np.linalg.solve(chol.T, np.linalg.solve(chol, e))
    b[np.diag_indices_from(b)] -= 1.0
    return float(np.sum(b * b))


def loss_report(estimate: ArrayLike, truth: ArrayLike) -> LossReport:
    return LossReport(entropy_loss(estimate, truth), quadratic_loss(estimate, truth))


def sample_mvn(mean: ArrayLike, cov: ArrayLike, n: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """``n`` rows i.i.d. ``N(mean, cov)`` through the spectral square root of ``cov``."""
    c = as_symmetric(cov)
    p = c.shape[0]
    mu = np.broadcast_to(np.asarray(mean, dtype=np.float64), (p,))
    vals, vecs = np.linalg.eigh(c)
    if np.min(vals) < -1e-10 * max(1.0, float(np.max(np.abs(vals)))):
        raise InvalidInputError("covariance is not positive semidefinite")
    root = vecs * np.sqrt(np.maximum(vals, 0.0))
    z = rng.standard_normal((n, p))
    return mu + z @ root.T


# ------------------------------------------------------ sorted-eigenvalue spread


@dataclass(frozen=True)
class DispersionSpec:
    p: int = 10
    n_list: tuple[int, ...] = (5, 10, 20, 50, 100, 500)
    trials: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.p < 1 or self.trials < 1:
            raise InvalidInputError("p and trials must be positive")
        if any(n < 2 for n in self.n_list):
            raise InvalidInputError("every sample size must be at least 2")


@dataclass(frozen=True)
class DispersionResult:
    spec: DispersionSpec
    eigenvalues: NDArray[np.float64]  # (trials, len(n_list), p), descending

    def rows(self) -> list[Row]:
        out = []
        for j, n in enumerate(self.spec.n_list):
            for t in range(self.spec.trials):
                for r, v in enumerate(self.eigenvalues[t, j]):
                    out.append((f"n={n}", t, "sample", f"eig{r + 1}", float(v)))
        return out


def dispersion_experiment(spec: DispersionSpec, threads: int = 1) -> DispersionResult:
    """Sorted sample-covariance eigenvalues of ``N(0, I_p)`` draws for each sample size."""
    eye = np.eye(spec.p)

    def trial(t):
        rng = _trial_rng(spec.seed, t)
        out = np.empty((len(spec.n_list), spec.p))
        for j, n in enumerate(spec.n_list):
            x = sample_mvn(np.zeros(spec.p), eye, n, rng)
            out[j] = np.maximum(eig_sym(sample_covariance(x)).eigenvalues, 0.0)
        return out

    return DispersionResult(spec, np.stack(_map_trials(trial, spec.trials, threads)))


# ------------------------------------------------------------ solution paths


@dataclass(frozen=True)
class PathResult:
    kappas: NDArray[np.float64]
    paths: dict[str, NDArray[np.float64]]  # method -> (len(kappas), p)
    params: dict[str, NDArray[np.float64]]  # method -> tuning parameter per kappa

    def rows(self) -> list[Row]:
        out = []
        for i, k in enumerate(self.kappas):
            for method, vals in self.paths.items():
                scen = f"kappa={k:.17g}"
                out.append((scen, 0, method, "param", float(self.params[method][i])))
                for r, v in enumerate(vals[i]):
                    out.append((scen, 0, method, f"e{r + 1}", float(v)))
        return out


def _bisect_decreasing(f, target, lo, hi, max_iter=80, rtol=1e-9):
    """Root of a decreasing ``f`` with ``f(lo) >= target > f(hi)``."""
    for _ in range(max_iter):
        if hi - lo <= rtol * hi:
            break
        mid = 0.5 * (lo + hi)
        if f(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def path_at_condition_number(d: ArrayLike, kappa_targets: Iterable[float]) -> PathResult:
    """Eigenvalues of CERNN, CNR and linear shrinkage tuned to common condition numbers.

    CERNN uses ``alpha_hat`` and linear shrinkage targets ``rho = mean(d)``.
    The CERNN penalty and the linear weight are found by bisection (the
    condition number is continuous and decreasing in both); CNR uses the
    target directly as its ceiling.
    """
    d = np.sort(np.asarray(d, dtype=np.float64))[::-1]
    if d.size == 0 or not np.all(d > 0):
        raise InvalidInputError("eigenvalues must be positive")
    kappas = np.asarray(list(kappa_targets), dtype=np.float64)
    top = d[0] / d[-1]
    if np.any(kappas <= 1.0) or np.any(kappas > top * (1 + 1e-12)):
        raise InvalidInputError(f"condition number targets must lie in (1, {top:.6g}]")
    sigma = float(np.mean(d))
    alpha = 1.0 / (1.0 + sigma * sigma)

    def cond_cernn(lam):
        e = cernn_map(d, 1.0, lam, alpha) if lam > 0 else d
        return e[0] / e[-1]

    def cond_linear(g):
        e = (1.0 - g) * d + g * sigma
        return e[0] / e[-1]

    paths = {m: np.empty((len(kappas), d.size)) for m in ("cernn", "cnr", "linear")}
    params = {m: np.empty(len(kappas)) for m in paths}
    for i, k in enumerate(kappas):
        if k >= top:
            lam = gamma = 0.0
        else:
            hi = 1.0
            while cond_cernn(hi) > k:
                hi *= 2.0
            while cond_cernn(hi / 2.0) <= k:
                hi /= 2.0
            lam = _bisect_decreasing(cond_cernn, k, hi / 2.0, hi)
            gamma = _bisect_decreasing(cond_linear, k, 0.0, 1.0)
        paths["cernn"][i] = cernn_map(d, 1.0, lam, alpha) if lam > 0 else d
        params["cernn"][i] = lam
        paths["linear"][i] = (1.0 - gamma) * d + gamma * sigma
        params["linear"][i] = gamma
        paths["cnr"][i] = cnr_eigenvalues(d, float(k))[0]
        params["cnr"][i] = k
    return PathResult(kappas, paths, params)


# ------------------------------------------------------- bimodal loss study


@dataclass(frozen=True)
class BimodalSpec:
    """Diagonal population with ``k`` eigenvalues ``1 - u + u p`` and the rest ``1 - u``.

    ``fraction_high`` is a fraction of ``p`` in ``[0, 0.4]`` or the string
    ``"singleton"`` for a single high eigenvalue; ``n = round(p / ratio)``.
    ``alpha`` is CERNN's mixture constant; the default ``0.5`` puts the prior
    mode at the identity, and ``None`` uses ``alpha_hat`` of each sample
    (and of each training fold).
    """

    p: int = 125
    fraction_high: float | str = "singleton"
    upsilon: float = 0.1
    ratio: float = 4.0
    trials: int = 20
    seed: int = 0
    alpha: float | None = 0.5

    def __post_init__(self):
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise InvalidInputError("alpha must lie in (0, 1) or be None")
        if self.fraction_high != "singleton":
            f = float(self.fraction_high)
            if not 0.0 <= f <= 0.4:
                raise InvalidInputError("fraction_high must lie in [0, 0.4] or be 'singleton'")
        if self.n < 2:
            raise InvalidInputError("derived sample size round(p/ratio) must be at least 2")
        if not 0 < self.low < self.high:
            raise InvalidInputError("need 0 < 1 - upsilon < 1 - upsilon + upsilon * p")
        if self.trials < 1:
            raise InvalidInputError("trials must be positive")

    @property
    def n(self) -> int:
        return int(round(self.p / self.ratio))

    @property
    def high(self) -> float:
        return 1.0 - self.upsilon + self.upsilon * self.p

    @property
    def low(self) -> float:
        return 1.0 - self.upsilon

    @property
    def n_high(self) -> int:
        if self.fraction_high == "singleton":
            return 1
        return int(round(float(self.fraction_high) * self.p))

    @property
    def omega(self) -> NDArray[np.float64]:
        w = np.full(self.p, self.low)
        w[: self.n_high] = self.high
        return w

    @property
    def scenario(self) -> str:
        f = self.fraction_high
        tag = "singleton" if f == "singleton" else f"high{round(100 * float(f))}"
        return f"p{self.p}_{tag}_r{self.ratio:g}"


BIMODAL_METHODS = ("cernn", "cnr", "lw")


@dataclass(frozen=True)
class BimodalResult:
    spec: BimodalSpec
    rows: list[Row] = field(repr=False)

    def values(self, method: str, metric: str) -> NDArray[np.float64]:
        return np.array([r[4] for r in self.rows if r[2] == method and r[3] == metric])

    def summary(self) -> list[tuple[str, str, str, float, float]]:
        return summarize(self.rows)


def summarize(rows: Sequence[Row]) -> list[tuple[str, str, str, float, float]]:
    """Mean and sample standard deviation per (scenario, method, metric), in first-seen order."""
    groups: dict[tuple[str, str, str], list[float]] = {}
    for scen, trial, method, metric, value in rows:
        groups.setdefault((scen, method, metric), []).append(value)
    out = []
    for (scen, method, metric), vals in groups.items():
        v = np.asarray(vals)
        sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        out.append((scen, method, metric, float(np.mean(v)), sd))
    return out


def bimodal_experiment(
    spec: BimodalSpec,
    methods: Iterable[str] = BIMODAL_METHODS,
    cv_folds: int = 10,
    *,
    grid_size: int = 30,
    threads: int = 1,
) -> BimodalResult:
    """Monte-Carlo comparison of shrinkage estimators on a bimodal population spectrum.

    Each trial draws ``n`` rows from ``N(0, diag(omega))``, tunes CERNN's
    penalty and CNR's ceiling by ``cv_folds``-fold cross-validation on the
    same folds, and records entropy and quadratic losses together with
    their ratios to CERNN's.
    """
    methods = tuple(dict.fromkeys(methods))
    unknown = set(methods) - set(BIMODAL_METHODS)
    if unknown:
        raise InvalidInputError(f"unknown methods {sorted(unknown)}")
    if "cernn" not in methods:
        raise InvalidInputError("loss ratios are relative to cernn, which must be included")
    omega = spec.omega
    truth = np.diag(omega)
    scen = spec.scenario

    def trial(t) -> list[Row]:
        rng = _trial_rng(spec.seed, t)
        x = sample_mvn(np.zeros(spec.p), truth, spec.n, rng)
        plan = make_folds(spec.n, cv_folds, int(rng.integers(2**63)))
        s_spec = eig_sym(sample_covariance(x))
        fits = {}
        for m in methods:
            if m == "cernn":
                alpha = alpha_hat(s_spec) if spec.alpha is None else spec.alpha
                grid = lambda_grid(np.maximum(s_spec.eigenvalues, 0.0), spec.n, alpha, size=grid_size)
                lam = cv_select_lambda(x, cv_folds, grid, folds=plan, alpha=spec.alpha).chosen
                fits[m] = (cernn_estimate(s_spec, CernnParams(spec.n, lam, alpha)), "lambda", lam)
            elif m == "cnr":
                kap = cv_select_kappa(x, cv_folds, folds=plan, grid_size=grid_size).chosen
                fits[m] = (cnr_estimate(s_spec, kap, allow_singular=True), "kappa_max", kap)
            else:
                est = lw_estimate(x)
                fits[m] = (est, "gamma", est.params["gamma"])
        losses = {m: loss_report(fits[m][0].matrix, truth) for m in methods}
        base = losses["cernn"]
        out: list[Row] = []
        for m in methods:
            est, pname, pval = fits[m]
            rep = losses[m]
            out.append((scen, t, m, pname, float(pval)))
            out.append((scen, t, m, "entropy", rep.entropy))
            out.append((scen, t, m, "quadratic", rep.quadratic))
            out.append((scen, t, m, "entropy_ratio", rep.entropy / base.entropy))
            out.append((scen, t, m, "quadratic_ratio", rep.quadratic / base.quadratic))
        return out

    rows = [r for block in _map_trials(trial, spec.trials, threads) for r in block]
    for r in rows:
        if not math.isfinite(r[4]):
            raise SingularMatrixError(f"non-finite value in {r[:4]}")
    return BimodalResult(spec, rows)
