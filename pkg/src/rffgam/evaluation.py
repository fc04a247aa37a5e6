"""Metrics, confidence intervals, hyperparameter grids and model diagnostics."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
import pandas as pd

from .errors import InvalidArgumentError
from .gmm import responsibilities
from .mixture import (MixtureModel, PipelineConfig, assemble, fit_rff_stage,
                      latent_coordinates, predict_mixture)

logger = logging.getLogger(__name__)

NORMAL_975 = 1.959963984540054


def rmse(pred, truth) -> float:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise InvalidArgumentError(f"length mismatch: {pred.shape[0]} vs {truth.shape[0]}")
    if pred.size == 0:
        raise InvalidArgumentError("rmse of empty vectors")
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


class ConfidenceInterval(NamedTuple):
    low: float
    high: float

    @property
    def half_width(self) -> float:
        return 0.5 * (self.high - self.low)


def bootstrap_ci(residuals, B: int = 1000, level: float = 0.95, seed=0) -> ConfidenceInterval:
    """Bootstrap interval for the RMSE of ``residuals``.

    The spread between the empirical ``(1-level)/2`` and ``(1+level)/2``
    quantiles of the resampled RMSEs is halved and placed symmetrically
    around the point estimate, matching a "value +/- half-width" report.
    """
    r = np.asarray(residuals, dtype=np.float64).ravel()
    if r.size == 0:
        raise InvalidArgumentError("no residuals")
    if int(B) < 1:
        raise InvalidArgumentError("B must be positive")
    if not 0.0 < level < 1.0:
        raise InvalidArgumentError("level must lie in (0, 1)")
    point = float(np.sqrt(np.mean(r**2)))
    rng = np.random.default_rng(seed)
    sq = r**2
    stats = np.empty(int(B))
    for b in range(int(B)):
        stats[b] = np.sqrt(np.mean(sq[rng.integers(0, r.size, r.size)]))
    lo, hi = np.quantile(stats, [(1 - level) / 2, (1 + level) / 2])
    half = 0.5 * float(hi - lo)
    return ConfidenceInterval(point - half, point + half)


@dataclass
class EvalReport:
    """Scores of one train/test run; ``protocol`` names how the CI was made."""

    train_rmse: float
    test_rmse: float
    ci_low: float
    ci_high: float
    runtime_seconds: float
    label: str = "mixture"
    protocol: str = "bootstrap-test-residuals"
    config: dict = field(default_factory=dict)

    def row(self) -> dict:
        out = {"label": self.label, "train_rmse": self.train_rmse, "test_rmse": self.test_rmse,
               "ci_low": self.ci_low, "ci_high": self.ci_high,
               "ci_half_width": 0.5 * (self.ci_high - self.ci_low),
               "protocol": self.protocol, "runtime_seconds": self.runtime_seconds}
        out.update({f"config.{k}": v for k, v in self.config.items()})
        return out


def make_report(pred_train, y_train, pred_test, y_test, runtime: float, label: str = "mixture",
                config: dict | None = None, B: int = 1000, seed=0) -> EvalReport:
    ci = bootstrap_ci(np.asarray(pred_test) - np.asarray(y_test), B=B, seed=seed)
    return EvalReport(train_rmse=rmse(pred_train, y_train), test_rmse=rmse(pred_test, y_test),
                      ci_low=ci.low, ci_high=ci.high, runtime_seconds=float(runtime),
                      label=label, config=dict(config or {}))


def write_reports(reports, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame([r.row() for r in reports]).to_csv(path, index=False)
    return path


def default_fit_predict(X_train, y_train, X_test, config: PipelineConfig):
    model = assemble(X_train, y_train, config)
    return predict_mixture(model, X_test)


@dataclass
class MonteCarloResult:
    mean: float
    ci_low: float
    ci_high: float
    rmses: np.ndarray
    failures: int
    protocol: str = "monte-carlo-cv-normal"


def monte_carlo_cv(X, y, config: PipelineConfig, repeats: int = 100, split: float = 0.8,
                   seed=0, fit_predict: Callable | None = None) -> MonteCarloResult:
    """Repeated random train/test splits with a normal-approximation 95% CI.

    Run ``r`` uses a split and a pipeline seed drawn from child ``r`` of
    ``SeedSequence(seed)``.  Runs that raise are logged, excluded and counted.
    """
    if int(repeats) < 2:
        raise InvalidArgumentError("repeats must be at least 2")
    if not 0.0 < split < 1.0:
        raise InvalidArgumentError("split must lie in (0, 1)")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    fit_predict = fit_predict or default_fit_predict
    n = X.shape[0]
    n_train = int(round(split * n))
    scores, failures = [], 0
    for r, child in enumerate(np.random.SeedSequence(seed).spawn(int(repeats))):
        split_seed, run_seed = (int(v) for v in child.generate_state(2))
        perm = np.random.default_rng(split_seed).permutation(n)
        tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
        try:
            pred = fit_predict(X[tr], y[tr], X[te], config.replace(seed=run_seed))
            scores.append(rmse(pred, y[te]))
        except Exception as exc:  # one bad split must not sink the whole study
            failures += 1
            logger.warning("Monte Carlo run %d failed: %s", r, exc)
    scores = np.asarray(scores)
    if scores.size == 0:
        return MonteCarloResult(np.nan, np.nan, np.nan, scores, failures)
    mean = float(np.mean(scores))
    half = NORMAL_975 * float(np.std(scores, ddof=1)) / np.sqrt(scores.size) if scores.size > 1 else 0.0
    return MonteCarloResult(mean, mean - half, mean + half, scores, failures)


@dataclass
class GridResult:
    """Test RMSE per ``(L, d)`` cell; failed cells hold NaN."""

    L_values: list
    d_values: list
    rmse: dict
    models: dict = field(default_factory=dict, repr=False)

    def to_frame(self) -> pd.DataFrame:
        rows = [{"L": L, "d": d, "rmse": self.rmse[(L, d)]}
                for L in self.L_values for d in self.d_values]
        return pd.DataFrame(rows)

    def best(self):
        finite = {k: v for k, v in self.rmse.items() if np.isfinite(v)}
        return min(finite, key=finite.get) if finite else None

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path


def grid_search(X_train, y_train, X_test, y_test, base_config: PipelineConfig,
                L_values, d_values, rff=None, keep_models: bool = False) -> GridResult:
    """Train and score every ``(L, d)`` combination on a fixed split.

    The Fourier stage depends on neither ``L`` nor ``d``, so it is trained
    once (or taken from ``rff``) and shared by all cells.
    """
    L_values, d_values = list(L_values), list(d_values)
    if not L_values or not d_values:
        raise InvalidArgumentError("empty grid")
    if rff is None and base_config.ablation_mode in ("none", "local_linear"):
        rff, _ = fit_rff_stage(X_train, y_train, base_config)
    scores, models = {}, {}
    for L in L_values:
        for d in d_values:
            try:
                cfg = base_config.replace(L=int(L), d=int(d))
                model = assemble(X_train, y_train, cfg, rff=rff)
                scores[(L, d)] = rmse(predict_mixture(model, X_test), y_test)
                if keep_models:
                    models[(L, d)] = model
            except Exception as exc:  # record the cell as missing and move on
                logger.warning("grid cell L=%s d=%s failed: %s", L, d, exc)
                scores[(L, d)] = float("nan")
            logger.info("grid L=%s d=%s rmse=%.5g", L, d, scores[(L, d)])
    return GridResult(L_values, d_values, scores, models)


@dataclass
class PartialDependence:
    feature: int
    grid: np.ndarray
    values: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.grid, "pd": self.values})


def pd_grid(x_col, grid_size: int = 50, quantiles=(0.01, 0.99)) -> np.ndarray:
    lo, hi = np.quantile(np.asarray(x_col, dtype=np.float64), quantiles)
    return np.linspace(lo, hi, int(grid_size))


def partial_dependence(predict: Callable, X, j: int, grid_size: int = 50, grid=None,
                       quantiles=(0.01, 0.99)) -> PartialDependence:
    """Average prediction as feature ``j`` sweeps a grid, other columns as observed.

    The default grid has ``grid_size`` evenly spaced points between the 1%
    and 99% quantiles of the feature.
    """
    X = np.asarray(X, dtype=np.float64)
    if not 0 <= int(j) < X.shape[1]:
        raise InvalidArgumentError(f"feature index {j} out of range")
    if grid is None:
        if int(grid_size) < 2:
            raise InvalidArgumentError("grid_size must be at least 2")
        grid = pd_grid(X[:, j], grid_size, quantiles)
    grid = np.asarray(grid, dtype=np.float64)
    values = np.empty(grid.shape[0])
    Xm = X.copy()
    for g, v in enumerate(grid):
        Xm[:, j] = v
        values[g] = float(np.mean(predict(Xm)))
    return PartialDependence(int(j), grid, values)


def responsibility_profile(model: MixtureModel, X, categories) -> pd.DataFrame:
    """Mean posterior responsibilities per category.

    ``categories`` is either an integer vector aligned with ``X`` or a
    callable mapping a row to an integer.  Rows of the result are sorted
    categories; columns ``gamma_<l>`` follow the surviving components.
    """
    X = np.asarray(X, dtype=np.float64)
    if callable(categories):
        cats = np.array([int(categories(row)) for row in X])
    else:
        cats = np.asarray(categories).astype(int).ravel()
    if cats.shape[0] != X.shape[0]:
        raise InvalidArgumentError("one category per row is required")
    if cats.size == 0:
        raise InvalidArgumentError("no rows to profile")
    gamma = responsibilities(model.gmm, latent_coordinates(model, X))
    frame = pd.DataFrame(gamma, columns=[f"gamma_{c}" for c in model.components])
    frame.insert(0, "category", cats)
    return frame.groupby("category", sort=True).mean().reset_index()


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start
        return False
