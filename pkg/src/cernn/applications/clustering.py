"""Gaussian mixture clustering by MAP-EM with CERNN-penalized covariances."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp

from ..errors import InvalidInputError, SingularMatrixError
from ..shrinkage import CovarianceEstimate, cernn_map
from ..spectral import SpectralDecomposition, as_data
from .discriminant import GaussianClass

__all__ = [
    "Responsibilities",
    "MixtureState",
    "kmeanspp_init",
    "em_cluster",
    "penalized_objective",
    "adjusted_rand_index",
]

EMPTY_WEIGHT = 1e-12
COLLAPSE_RTOL = 1e-10
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Responsibilities:
    w: NDArray[np.float64]
    column_sums: NDArray[np.float64]

    @property
    def labels(self) -> NDArray[np.int64]:
        """Hard assignment: most probable cluster per row."""
        return np.argmax(self.w, axis=1)


@dataclass
class MixtureState:
    """Mixture parameters. Covariances are kept as eigenpairs.

    ``eigenvalues`` is ``(c, p)`` and ``eigenvectors`` is ``(c, p, p)``;
    column ``j`` of ``eigenvectors[k]`` pairs with ``eigenvalues[k, j]``.
    """

    pi: NDArray[np.float64]
    means: NDArray[np.float64]
    eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.float64]
    alphas: NDArray[np.float64]
    lam: float
    iteration: int = 0
    objective: float = -np.inf
    history: list[float] = field(default_factory=list)

    @property
    def c(self) -> int:
        return self.pi.shape[0]

    @property
    def covariances(self) -> NDArray[np.float64]:
        q = self.eigenvectors
        return np.einsum("kij,kj,klj->kil", q, self.eigenvalues, q)

    @property
    def classes(self) -> list[GaussianClass]:
        """Components with positive weight as :class:`GaussianClass` records."""
        out = []
        for k in range(self.c):
            if self.pi[k] <= 0:
                continue
            order = np.argsort(self.eigenvalues[k])[::-1]
            spec = SpectralDecomposition(self.eigenvalues[k][order], self.eigenvectors[k][:, order])
            params = {"n": None, "lambda": self.lam, "alpha": float(self.alphas[k])}
            est = CovarianceEstimate(spec.reconstruct(), "cernn", params, spec)
            out.append(GaussianClass(float(self.pi[k]), self.means[k].copy(), est, self.lam, float(self.alphas[k])))
        return out


def kmeanspp_init(data: ArrayLike, c: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """k-means++ seeding: each new center drawn with probability proportional to D^2."""
    x = as_data(data)
    n = x.shape[0]
    if not 1 <= c <= n:
        raise InvalidInputError(f"need 1 <= c <= n (c={c}, n={n})")
    chosen = [int(rng.integers(n))]
    d2 = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for _ in range(1, c):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            # every point coincides with a center; fall back to an unused row
            idx = int(rng.choice(np.setdiff1d(np.arange(n), chosen)))
        chosen.append(idx)
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return x[chosen].copy()


def _log_joint(state: MixtureState, x: NDArray[np.float64]) -> NDArray[np.float64]:
    """``log pi_k + log phi(y_i | mu_k, Sigma_k)`` as an ``(n, c)`` array."""
    p = x.shape[1]
    z = np.einsum("nkp,kpj->nkj", x[:, None, :] - state.means[None], state.eigenvectors)
    maha = np.sum(z * z / state.eigenvalues[None], axis=2)
    logdet = np.sum(np.log(state.eigenvalues), axis=1)
    with np.errstate(divide="ignore"):
        log_pi = np.log(state.pi)
    return log_pi[None] - 0.5 * (p * _LOG_2PI + logdet[None] + maha)


def _penalty(state: MixtureState) -> float:
    if state.lam == 0:
        return 0.0
    e = state.eigenvalues
    a = state.alphas[:, None]
    return 0.5 * state.lam * float(np.sum(a * e + (1.0 - a) / e))


def penalized_objective(state: MixtureState, data: ArrayLike) -> float:
    """Observed-data log-likelihood minus the nuclear-norm penalty on each covariance."""
    x = as_data(data)
    return float(np.sum(logsumexp(_log_joint(state, x), axis=1))) - _penalty(state)


def _e_step(state: MixtureState, x) -> tuple[Responsibilities, NDArray[np.float64]]:
    lj = _log_joint(state, x)
    norm = logsumexp(lj, axis=1, keepdims=True)
    w = np.exp(lj - norm)
    w /= w.sum(axis=1, keepdims=True)
    return Responsibilities(w, w.sum(axis=0)), lj


def _expected_loglik(w, lj) -> float:
    mask = w > 0
    return float(np.sum(w[mask] * lj[mask]))


def _m_step(state: MixtureState, x, resp: Responsibilities, update_alpha: bool, floor: float) -> bool:
    """Update parameters in place. Returns False if a component collapsed."""
    n, p = x.shape
    wk = resp.column_sums
    state.pi = wk / n
    for k in np.flatnonzero(wk >= EMPTY_WEIGHT):
        wcol = resp.w[:, k]
        mu = wcol @ x / wk[k]
        dev = x - mu
        s = (dev * wcol[:, None]).T @ dev / wk[k]
        s = 0.5 * (s + s.T)
        tr = float(np.trace(s))
        if tr <= floor:
            return False
        vals, vecs = np.linalg.eigh(s)
        vals = np.clip(vals, 0.0, None)
        if update_alpha:
            state.alphas[k] = 1.0 / (1.0 + (tr / p) ** 2)
        e = cernn_map(vals, wk[k], state.lam, state.alphas[k]) if state.lam > 0 else vals
        state.means[k] = mu
        state.eigenvalues[k] = e
        state.eigenvectors[k] = vecs
    return bool(state.eigenvalues.min() > floor)


def _em_run(x, c, lam, rng, max_iter, tol, freeze_alpha_after):
    """One EM run. Returns ``(state, resp, expected loglik, degenerate)``."""
    n, p = x.shape
    scale = float(np.trace(np.cov(x.T, bias=True).reshape(p, p))) / p
    if scale <= 0:
        raise InvalidInputError("data has zero variance")
    floor = COLLAPSE_RTOL * scale
    means = kmeanspp_init(x, c, rng)
    state = MixtureState(
        pi=np.full(c, 1.0 / c),
        means=means,
        eigenvalues=np.full((c, p), scale),
        eigenvectors=np.broadcast_to(np.eye(p), (c, p, p)).copy(),
        alphas=np.full(c, 1.0 / (1.0 + scale**2)),
        lam=float(lam),
    )
    prev = -np.inf
    for it in range(1, max_iter + 1):
        resp, _ = _e_step(state, x)
        update_alpha = freeze_alpha_after is None or it <= freeze_alpha_after
        ok = _m_step(state, x, resp, update_alpha, floor)
        state.iteration = it
        if not ok:
            # a component shrank onto a point or a line; its likelihood is unbounded
            return state, resp, -np.inf, True
        state.objective = penalized_objective(state, x)
        state.history.append(state.objective)
        if np.isfinite(prev) and abs(state.objective - prev) < tol * abs(prev):
            break
        prev = state.objective
    resp, lj = _e_step(state, x)
    return state, resp, _expected_loglik(resp.w, lj), False


def em_cluster(
    data: ArrayLike,
    c: int,
    lam: float,
    restarts: int = 10,
    max_iter: int = 500,
    tol: float = 1e-7,
    seed: int = 0,
    *,
    threads: int = 1,
    freeze_alpha_after: int | None = None,
) -> tuple[MixtureState, Responsibilities]:
    """Fit a ``c``-component mixture, keeping the best of ``restarts`` runs.

    Restart ``r`` draws its k-means++ seeds from ``default_rng([seed, r])``,
    so the result does not depend on ``threads``. The winner has the
    largest expected complete-data log-likelihood; ties go to the lower
    restart index. Restarts in which a component collapses (an eigenvalue
    below ``1e-10`` times the data's average variance) are discarded, since
    their likelihood is unbounded.

    ``freeze_alpha_after`` stops re-estimating the per-cluster prior
    constants after that many iterations, making the iteration a plain
    MAP-EM with a fixed objective.
    """
    x = as_data(data)
    if not 1 <= c <= x.shape[0]:
        raise InvalidInputError(f"need 1 <= c <= n (c={c}, n={x.shape[0]})")
    if lam < 0 or not np.isfinite(lam):
        raise InvalidInputError("lambda must be finite and nonnegative")
    if restarts < 1 or max_iter < 1:
        raise InvalidInputError("restarts and max_iter must be positive")

    def one(r):
        return _em_run(x, c, lam, np.random.default_rng([seed, r]), max_iter, tol, freeze_alpha_after)

    if threads > 1 and restarts > 1:
        with ThreadPoolExecutor(threads) as pool:
            runs = list(pool.map(one, range(restarts)))
    else:
        runs = [one(r) for r in range(restarts)]
    usable = [r for r in range(restarts) if not runs[r][3]]
    if not usable:
        raise SingularMatrixError("every restart collapsed a component onto a point; increase lambda")
    best = max(usable, key=lambda r: (runs[r][2], -r))
    state, resp, _, _ = runs[best]
    return state, resp


def adjusted_rand_index(a: ArrayLike, b: ArrayLike) -> float:
    """Hubert-Arabie adjusted Rand index between two labelings."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise InvalidInputError("labelings must be 1-D and equally long")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(table, (ia, ib), 1)

    def pairs(v):
        return float(np.sum(v * (v - 1) / 2))

    total = pairs(table)
    ra, rb = pairs(table.sum(axis=1)), pairs(table.sum(axis=0))
    all_pairs = a.size * (a.size - 1) / 2
    expected = ra * rb / all_pairs if all_pairs else 0.0
    top = 0.5 * (ra + rb)
    if top == expected:
        return 1.0
    return (total - expected) / (top - expected)

