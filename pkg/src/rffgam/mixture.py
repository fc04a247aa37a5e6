"""Mixture of local additive models gated by a latent-space Gaussian mixture.

Training runs four stages: a random Fourier feature fit, PCA of its
intermediate features, EM clustering of the latent coordinates, and one
local model per cluster on the hard-assigned rows.  Prediction mixes the
local models with the posterior responsibilities of each input.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError
from .gam import GamModel, fit_gam, predict_gam
from .gmm import GmmModel, fit_em, hard_assign, responsibilities
from .latent import LatentProjector, fit_pca, project
from .rff import RffModel, Standardizer, intermediate_features, train_rff

logger = logging.getLogger(__name__)

ABLATION_MODES = ("none", "raw_cluster", "pca_input_cluster", "local_linear")


@dataclass(frozen=True)
class PipelineConfig:
    """Hyperparameters of the full pipeline.

    ``sigma=None`` means ``sqrt(p)`` on the clustering features, and
    ``min_cluster_size=None`` means ``max(50, 5 p)``.  ``feature_subset``
    lists the columns fed to the RFF and clustering stages; local models
    always see every column.
    """

    K: int = 2000
    sigma: float | None = None
    lam: float = 0.1
    delta: float = 0.1
    resample_iters: int = 10
    d: int = 3
    L: int = 8
    n_knots: int = 10
    degree: int = 3
    smooth_lambda: float = 1.0
    seed: int = 0
    min_cluster_size: int | None = None
    ablation_mode: str = "none"
    feature_subset: tuple | None = None
    ridge_lambda: float = 1e-3
    validation_fraction: float = 0.1
    weight_power: float = 2.0

    def __post_init__(self):
        if self.feature_subset is not None:
            object.__setattr__(self, "feature_subset",
                               tuple(int(i) for i in self.feature_subset))
        self.validate()

    def validate(self) -> None:
        for name in ("K", "d", "L", "n_knots", "degree"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be positive")
        if self.resample_iters < 0:
            raise ConfigurationError("resample_iters must be non-negative")
        if self.d > self.K:
            raise ConfigurationError(f"d={self.d} exceeds K={self.K}")
        for name in ("lam", "delta", "smooth_lambda", "ridge_lambda"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.sigma is not None and not self.sigma > 0:
            raise ConfigurationError("sigma must be positive")
        if self.min_cluster_size is not None and self.min_cluster_size < 1:
            raise ConfigurationError("min_cluster_size must be positive")
        if self.ablation_mode not in ABLATION_MODES:
            raise ConfigurationError(
                f"ablation_mode must be one of {ABLATION_MODES}, got {self.ablation_mode!r}")
        if self.feature_subset is not None:
            if len(self.feature_subset) == 0 or len(set(self.feature_subset)) != len(self.feature_subset):
                raise ConfigurationError("feature_subset must be non-empty without repeats")
            if min(self.feature_subset) < 0:
                raise ConfigurationError("feature_subset indices must be non-negative")

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def clustering_columns(self, p: int) -> list:
        if self.feature_subset is None:
            return list(range(p))
        if max(self.feature_subset) >= p:
            raise ConfigurationError(f"feature_subset index out of range for {p} columns")
        return list(self.feature_subset)

    def resolved_sigma(self, p_cluster: int) -> float:
        return float(self.sigma) if self.sigma is not None else float(np.sqrt(p_cluster))

    def resolved_min_cluster_size(self, p: int) -> int:
        if self.min_cluster_size is not None:
            return int(self.min_cluster_size)
        return max(50, 5 * p)


@dataclass(frozen=True)
class RidgeModel:
    """Linear model on standardized inputs with an unpenalized intercept."""

    standardizer: Standardizer
    coef: np.ndarray
    intercept: float
    lam: float


def fit_ridge(X, y, lam: float) -> RidgeModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    st = Standardizer.fit(X)
    Z = st.transform(X)
    Zc = Z - Z.mean(axis=0)
    A = Zc.T @ Zc
    A[np.diag_indices_from(A)] += lam
    coef = np.linalg.solve(A, Zc.T @ (y - y.mean()))
    intercept = float(y.mean() - Z.mean(axis=0) @ coef)
    return RidgeModel(standardizer=st, coef=coef, intercept=intercept, lam=float(lam))


def predict_ridge(model: RidgeModel, X) -> np.ndarray:
    return model.intercept + model.standardizer.transform(X) @ model.coef


def predict_local(local, X) -> np.ndarray:
    if isinstance(local, GamModel):
        return predict_gam(local, X)
    return predict_ridge(local, X)


@dataclass(frozen=True)
class MixtureModel:
    """Trained pipeline.

    Attributes
    ----------
    config : PipelineConfig
    n_features : int
        Column count of the raw inputs.
    rff : RffModel or None
        Absent for the clustering ablations that bypass the Fourier stage.
    input_standardizer : Standardizer or None
        Used instead of ``rff`` by the clustering ablations.
    projector : LatentProjector or None
        ``None`` only for ``raw_cluster``.
    gmm : GmmModel
        Restricted to the surviving components.
    locals : list
        One :class:`GamModel` or :class:`RidgeModel` per surviving component.
    components : ndarray of int
        Original GMM indices of the surviving components.
    cluster_sizes : ndarray of int
        Training rows hard-assigned to each surviving component.
    """

    config: PipelineConfig
    n_features: int
    rff: RffModel | None
    input_standardizer: Standardizer | None
    projector: LatentProjector | None
    gmm: GmmModel
    locals: list
    components: np.ndarray
    cluster_sizes: np.ndarray
    rff_history: dict = field(default_factory=dict, compare=False)

    @property
    def clustering_columns(self) -> list:
        return self.config.clustering_columns(self.n_features)


def _as_inputs(X, p=None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :] if p is not None and X.shape[0] == p else X[:, None]
    if p is not None and X.shape[1] != p:
        raise InvalidArgumentError(f"expected {p} columns, got {X.shape[1]}")
    return X


def _gmm_seed(seed):
    return np.random.SeedSequence(seed).spawn(3)[2]


def fit_rff_stage(X, y, config: PipelineConfig):
    """Stage 1 on the clustering columns; returns ``(RffModel, ResampleHistory)``."""
    X = _as_inputs(X)
    cols = config.clustering_columns(X.shape[1])
    return train_rff(X[:, cols], y, config.K, config.resolved_sigma(len(cols)),
                     config.lam, config.delta, config.resample_iters, config.seed,
                     validation_fraction=config.validation_fraction,
                     weight_power=config.weight_power)


def latent_coordinates(model: MixtureModel, X) -> np.ndarray:
    """Coordinates in which the gating mixture lives, one row per input."""
    X = _as_inputs(X, model.n_features)
    mode = model.config.ablation_mode
    if mode == "raw_cluster":
        return model.input_standardizer.transform(X)
    if mode == "pca_input_cluster":
        return project(model.projector, model.input_standardizer.transform(X))
    S = intermediate_features(model.rff, X[:, model.clustering_columns])
    return project(model.projector, S)


def _fit_locals(X, y, labels, kept, config: PipelineConfig) -> list:
    out = []
    for comp in kept:
        rows = labels == comp
        if config.ablation_mode == "local_linear":
            out.append(fit_ridge(X[rows], y[rows], config.ridge_lambda))
        else:
            local = fit_gam(X[rows], y[rows], n_knots=config.n_knots, degree=config.degree,
                            smooth_lambda=config.smooth_lambda)
            if not local.converged:
                logger.warning("local GAM for cluster %d did not converge", comp)
            out.append(local)
    return out


def assemble(X, y, config: PipelineConfig, rff: RffModel | None = None,
             cluster_X=None, cluster_rff_rows=None, local_rows=None,
             history=None) -> MixtureModel:
    """Stages 2 and 3 given the inputs and, where needed, a trained RFF model.

    ``local_rows`` optionally restricts which rows may train local models
    (all rows still take part in clustering).
    """
    X = _as_inputs(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    N, p = X.shape
    if N == 0:
        raise InvalidArgumentError("empty training set")
    mode = config.ablation_mode
    cols = config.clustering_columns(p)
    input_st = None
    projector = None

    if mode in ("raw_cluster", "pca_input_cluster"):
        input_st = Standardizer.fit(X)
        Z = input_st.transform(X)
        if mode == "pca_input_cluster":
            if config.d > p:
                raise ConfigurationError(f"d={config.d} exceeds the {p} input columns")
            projector = fit_pca(Z, config.d)
            Z = project(projector, Z)
        rff = None
    else:
        if rff is None:
            rff, history = fit_rff_stage(X, y, config)
        if rff.n_features != len(cols):
            raise ConfigurationError("RFF model does not match the clustering columns")
        S = intermediate_features(rff, X[:, cols])
        projector = fit_pca(S, config.d)
        Z = project(projector, S)
        del S

    gmm = fit_em(Z, config.L, seed=_gmm_seed(config.seed))
    labels = hard_assign(gmm, Z)
    eligible = np.ones(N, dtype=bool) if local_rows is None else np.asarray(local_rows, bool)
    sizes = np.bincount(labels[eligible], minlength=config.L)
    min_size = config.resolved_min_cluster_size(p)
    kept = np.nonzero(sizes >= min_size)[0]
    if kept.size == 0:
        raise ConfigurationError(
            f"every cluster has fewer than min_cluster_size={min_size} rows")
    if kept.size < config.L:
        logger.warning("dropping %d of %d clusters smaller than %d rows",
                       config.L - kept.size, config.L, min_size)
    lab = np.where(eligible, labels, -1)
    locals_ = _fit_locals(X, y, lab, kept, config)
    gmm_kept = gmm if kept.size == config.L else gmm.subset(kept)
    hist = {}
    if history is not None:
        hist = {"train_rmse": list(history.train_rmse), "val_rmse": list(history.val_rmse),
                "best_iteration": int(history.best_iteration)}
    return MixtureModel(config=config, n_features=p, rff=rff, input_standardizer=input_st,
                        projector=projector, gmm=gmm_kept, locals=locals_,
                        components=kept, cluster_sizes=sizes[kept], rff_history=hist)


def train_pipeline(X, y, config: PipelineConfig, rff: RffModel | None = None) -> MixtureModel:
    """Train the mixture of local GAMs.

    Parameters
    ----------
    X : ndarray of shape (N, p)
        Raw training inputs.
    y : ndarray of shape (N,)
    config : PipelineConfig
    rff : RffModel, optional
        A Stage 1 model already trained with this config on these rows;
        lets several runs share the most expensive stage.
    """
    if config.ablation_mode != "none":
        raise ConfigurationError("use train_ablation for ablation modes")
    return assemble(X, y, config, rff=rff)


def train_ablation(X, y, config: PipelineConfig, rff: RffModel | None = None) -> MixtureModel:
    """Train one of the ablation variants named by ``config.ablation_mode``.

    ``raw_cluster`` clusters standardized inputs directly,
    ``pca_input_cluster`` clusters their ``d``-dimensional PCA projection and
    ``local_linear`` keeps the Fourier clustering but fits ridge models.
    """
    if config.ablation_mode == "none":
        raise ConfigurationError("train_ablation needs an ablation_mode")
    return assemble(X, y, config, rff=rff)


def local_predictions(model: MixtureModel, X) -> np.ndarray:
    """Predictions of every local model, shape (M, L)."""
    X = _as_inputs(X, model.n_features)
    return np.column_stack([predict_local(m, X) for m in model.locals])


def predict_mixture(model: MixtureModel, X) -> np.ndarray:
    """Responsibility-weighted combination of the local models."""
    X = _as_inputs(X, model.n_features)
    if X.shape[0] == 0:
        return np.empty(0)
    gamma = responsibilities(model.gmm, latent_coordinates(model, X))
    return np.sum(gamma * local_predictions(model, X), axis=1)


def training_assignments(model: MixtureModel, X) -> np.ndarray:
    """Hard cluster index (among surviving components) for each row."""
    return hard_assign(model.gmm, latent_coordinates(model, X))


def spatial_cluster_report(model: MixtureModel, X, feature_names=None):
    """Hard assignments together with the two spatial coordinates.

    Returns a DataFrame with columns ``row``, ``cluster`` and one column per
    spatial feature, ready to be written as CSV for scatter plots.
    """
    import pandas as pd

    subset = model.config.feature_subset
    if subset is None or len(subset) != 2:
        raise InvalidArgumentError("spatial report needs a two-column feature_subset")
    X = _as_inputs(X, model.n_features)
    labels = training_assignments(model, X)
    names = feature_names or [f"x{j}" for j in range(model.n_features)]
    frame = pd.DataFrame({"row": np.arange(X.shape[0]),
                          "cluster": model.components[labels]})
    for j in subset:
        frame[names[j]] = X[:, j]
    return frame
