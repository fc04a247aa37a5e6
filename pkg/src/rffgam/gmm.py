"""Full-covariance Gaussian mixtures fitted by expectation-maximization."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .errors import InvalidArgumentError, NumericalFailureError

logger = logging.getLogger(__name__)

# Diagonal ridge added after every covariance update, relative to trace/d.
COVARIANCE_RIDGE = 1e-6


@dataclass(frozen=True)
class GmmModel:
    """Mixture weights, component means and covariances.

    Attributes
    ----------
    weights : ndarray of shape (L,)
    means : ndarray of shape (L, d)
    covariances : ndarray of shape (L, d, d)
    log_likelihood : list of float
        Mean training log-likelihood per EM iteration.
    converged : bool
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood: list = field(default_factory=list, compare=False)
    converged: bool = True

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def subset(self, keep) -> "GmmModel":
        """Mixture restricted to ``keep`` with weights renormalized."""
        keep = np.asarray(keep, dtype=int)
        w = self.weights[keep]
        return GmmModel(weights=w / w.sum(), means=self.means[keep].copy(),
                        covariances=self.covariances[keep].copy(),
                        log_likelihood=list(self.log_likelihood),
                        converged=self.converged)


def _ridge(cov: np.ndarray) -> np.ndarray:
    d = cov.shape[0]
    tr = np.trace(cov)
    eps = COVARIANCE_RIDGE * (tr / d if tr > 0 else 1.0)
    out = 0.5 * (cov + cov.T)
    out[np.diag_indices(d)] += eps
    return out


def _log_gauss(Z: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """``log N(z_i; mu_l, Sigma_l)`` as an (N, L) array."""
    N, d = Z.shape
    out = np.empty((N, means.shape[0]))
    for l in range(means.shape[0]):
        try:
            chol = linalg.cholesky(covs[l], lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalFailureError(f"covariance {l} is not positive definite") from exc
        sol = linalg.solve_triangular(chol, (Z - means[l]).T, lower=True)
        out[:, l] = (-0.5 * np.sum(sol**2, axis=0)
                     - np.sum(np.log(np.diag(chol))) - 0.5 * d * np.log(2.0 * np.pi))
    return out


def _weighted_log_density(model: GmmModel, Z: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        log_w = np.log(model.weights)
    return _log_gauss(Z, model.means, model.covariances) + log_w


def _kmeans_pp(Z: np.ndarray, L: int, rng) -> np.ndarray:
    N = Z.shape[0]
    centers = [Z[rng.integers(N)]]
    d2 = np.sum((Z - centers[0]) ** 2, axis=1)
    for _ in range(1, L):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(N, p=d2 / total)
        else:
            idx = rng.integers(N)
        centers.append(Z[idx])
        d2 = np.minimum(d2, np.sum((Z - Z[idx]) ** 2, axis=1))
    return np.array(centers)


def _initialize(Z: np.ndarray, L: int, rng):
    N, d = Z.shape
    centers = _kmeans_pp(Z, L, rng)
    dist = np.sum((Z[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    labels = np.argmin(dist, axis=1)
    global_cov = np.atleast_2d(np.cov(Z.T, bias=True))
    weights = np.empty(L)
    means = np.empty((L, d))
    covs = np.empty((L, d, d))
    for l in range(L):
        members = Z[labels == l]
        weights[l] = max(len(members), 1)
        if len(members) > d:
            means[l] = members.mean(axis=0)
            covs[l] = _ridge(np.atleast_2d(np.cov(members.T, bias=True)))
        else:
            means[l] = centers[l]
            covs[l] = _ridge(global_cov)
    return weights / weights.sum(), means, covs


def fit_em(Z, L: int, seed=None, tol: float = 1e-6, max_iter: int = 500) -> GmmModel:
    """Fit an ``L``-component full-covariance mixture to the rows of ``Z``.

    Initialization uses k-means++ seeding; the loop stops once the relative
    change in mean log-likelihood drops below ``tol`` or after ``max_iter``
    iterations.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim == 1:
        Z = Z[:, None]
    N, d = Z.shape
    L = int(L)
    if L < 1:
        raise InvalidArgumentError(f"L must be positive, got {L}")
    if N < L:
        raise InvalidArgumentError(f"need at least L={L} rows, got {N}")
    if not np.all(np.isfinite(Z)):
        raise InvalidArgumentError("non-finite latent coordinates")

    rng = np.random.default_rng(seed)
    weights, means, covs = _initialize(Z, L, rng)
    history = []
    converged = False
    for it in range(int(max_iter)):
        log_prob = _log_gauss(Z, means, covs) + np.log(weights)
        log_norm = logsumexp(log_prob, axis=1)
        history.append(float(log_norm.mean()))
        if it > 0 and abs(history[-1] - history[-2]) <= tol * abs(history[-2]):
            converged = True
            break
        resp = np.exp(log_prob - log_norm[:, None])
        nk = resp.sum(axis=0) + 10 * np.finfo(float).eps
        weights = nk / N
        means = (resp.T @ Z) / nk[:, None]
        for l in range(L):
            diff = Z - means[l]
            covs[l] = _ridge((resp[:, l, None] * diff).T @ diff / nk[l])

    if not converged:
        log_prob = _log_gauss(Z, means, covs) + np.log(weights)
        history.append(float(logsumexp(log_prob, axis=1).mean()))
        logger.warning("EM stopped after %d iterations without converging", max_iter)
    return GmmModel(weights=weights, means=means, covariances=covs.copy(),
                    log_likelihood=history, converged=converged)


def log_responsibilities(model: GmmModel, Z) -> np.ndarray:
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if Z.shape[1] != model.dim:
        raise InvalidArgumentError(f"expected {model.dim} latent dims, got {Z.shape[1]}")
    log_prob = _weighted_log_density(model, Z)
    return log_prob - logsumexp(log_prob, axis=1)[:, None]


def responsibilities(model: GmmModel, z) -> np.ndarray:
    """Posterior component probabilities, normalized in log space.

    A single vector gives shape (L,); a batch of rows gives (N, L).
    """
    z = np.asarray(z, dtype=np.float64)
    gamma = np.exp(log_responsibilities(model, z))
    return gamma[0] if z.ndim == 1 else gamma


def hard_assign(model: GmmModel, Z) -> np.ndarray:
    """Index of the most responsible component; ties go to the lowest index."""
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    return np.argmax(_weighted_log_density(model, Z), axis=1)


def mean_log_likelihood(model: GmmModel, Z) -> float:
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    return float(logsumexp(_weighted_log_density(model, Z), axis=1).mean())
