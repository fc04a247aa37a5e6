"""Perturbation augmentation with a Mahalanobis acceptance filter.

Synthetic inputs are Gaussian perturbations of standardized training rows.
Candidates far from the bulk of the data, as judged by a chi-squared
quantile of the squared Mahalanobis distance, are rejected, and the
survivors are labelled by a trained random Fourier feature model.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.optimize import brentq
from scipy.special import gammainc

from .errors import InvalidArgumentError, NumericalFailureError
from .mixture import MixtureModel, PipelineConfig, assemble, fit_rff_stage
from .rff import RffModel, Standardizer, predict_rff

logger = logging.getLogger(__name__)

SINGULAR_RIDGE = 1e-8


@dataclass(frozen=True)
class AugmentConfig:
    """``epsilon`` is the perturbation variance per standardized coordinate."""

    n_per_point: int = 10
    epsilon: float = 0.05
    chi2_quantile: float = 0.99
    seed: int = 0
    synthetic_in_locals: bool = True

    def __post_init__(self):
        if int(self.n_per_point) < 1:
            raise InvalidArgumentError("n_per_point must be positive")
        if not self.epsilon > 0:
            raise InvalidArgumentError("epsilon must be positive")
        if not 0.0 < self.chi2_quantile < 1.0:
            raise InvalidArgumentError("chi2_quantile must lie in (0, 1)")


@dataclass
class AugmentedData:
    """Original rows first, in order, followed by the accepted synthetic rows."""

    X: np.ndarray
    y: np.ndarray
    is_synthetic: np.ndarray
    threshold: float
    n_candidates: int

    @property
    def n_accepted(self) -> int:
        return int(self.is_synthetic.sum())

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / self.n_candidates if self.n_candidates else 0.0

    def to_frame(self, feature_names, target_name: str):
        import pandas as pd

        frame = pd.DataFrame(self.X, columns=list(feature_names))
        frame[target_name] = self.y
        frame["is_synthetic"] = self.is_synthetic.astype(int)
        return frame


def chi2_threshold(p: int, quantile: float) -> float:
    """Inverse chi-squared CDF with ``p`` degrees of freedom.

    The CDF is the regularized lower incomplete gamma function
    ``P(p/2, x/2)``; its root is bracketed by doubling and refined with
    Brent's method.
    """
    if int(p) < 1:
        raise InvalidArgumentError(f"degrees of freedom must be positive, got {p}")
    if not 0.0 < quantile < 1.0:
        raise InvalidArgumentError(f"quantile must lie in (0, 1), got {quantile}")
    a = 0.5 * int(p)

    def f(x):
        return gammainc(a, 0.5 * x) - quantile

    hi = max(1.0, float(p))
    while f(hi) < 0:
        hi *= 2.0
    return float(brentq(f, 0.0, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=500))


def _whitener(Zs: np.ndarray):
    mean = Zs.mean(axis=0)
    cov = np.atleast_2d(np.cov(Zs, rowvar=False))
    try:
        chol = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        logger.warning("singular input covariance; adding a %g ridge", SINGULAR_RIDGE)
        cov = cov + SINGULAR_RIDGE * np.eye(cov.shape[0])
        try:
            chol = linalg.cholesky(cov, lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalFailureError("input covariance is singular even after ridge") from exc
    return mean, chol


def mahalanobis_sq(points, mean, chol) -> np.ndarray:
    sol = linalg.solve_triangular(chol, (np.atleast_2d(points) - mean).T, lower=True)
    return np.sum(sol**2, axis=0)


def augment_dataset(X, y, labeler: RffModel, config: AugmentConfig = AugmentConfig(),
                    feature_columns=None) -> AugmentedData:
    """Enlarge ``(X, y)`` with filtered, model-labelled perturbations.

    Parameters
    ----------
    X : ndarray of shape (N, p)
        Raw training inputs.
    y : ndarray of shape (N,)
    labeler : RffModel
        Produces the synthetic responses.
    config : AugmentConfig
    feature_columns : sequence of int, optional
        Columns of ``X`` the labeler was trained on; all columns by default.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    N, p = X.shape
    cols = list(range(p)) if feature_columns is None else list(feature_columns)
    if labeler.n_features != len(cols):
        raise InvalidArgumentError(
            f"labeler expects {labeler.n_features} columns, got {len(cols)}")

    st = Standardizer.fit(X)
    Zs = st.transform(X)
    mean, chol = _whitener(Zs)
    threshold = chi2_threshold(p, config.chi2_quantile)

    rng = np.random.default_rng(config.seed)
    n = int(config.n_per_point)
    noise = rng.standard_normal((N, n, p)) * np.sqrt(config.epsilon)
    candidates = (Zs[:, None, :] + noise).reshape(N * n, p)
    accept = mahalanobis_sq(candidates, mean, chol) <= threshold
    X_syn = st.inverse_transform(candidates[accept])
    y_syn = predict_rff(labeler, X_syn[:, cols]) if X_syn.shape[0] else np.empty(0)
    logger.info("augmentation kept %d of %d candidates (threshold %.4f)",
                int(accept.sum()), N * n, threshold)

    return AugmentedData(X=np.vstack([X, X_syn]), y=np.concatenate([y, y_syn]),
                         is_synthetic=np.concatenate([np.zeros(N, bool), np.ones(len(y_syn), bool)]),
                         threshold=threshold, n_candidates=N * n)


def train_augmented(X, y, config: PipelineConfig, augment_config: AugmentConfig = AugmentConfig(),
                    rff: RffModel | None = None):
    """Stage 1 on the original rows, then augmentation and a refit of Stages 2-3.

    Returns
    -------
    model : MixtureModel
    data : AugmentedData
    """
    X = np.asarray(X, dtype=np.float64)
    history = None
    if rff is None:
        rff, history = fit_rff_stage(X, y, config)
    cols = config.clustering_columns(X.shape[1])
    data = augment_dataset(X, y, rff, augment_config, feature_columns=cols)
    local_rows = None if augment_config.synthetic_in_locals else ~data.is_synthetic
    model = assemble(data.X, data.y, config, rff=rff, local_rows=local_rows, history=history)
    return model, data
