"""Tabular dataset ingestion, splitting and benchmark preparation."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

CALIFORNIA_COLUMNS = ["MedInc", "HouseAge", "AveRooms", "AveBedrms", "Population",
                      "AveOccup", "Latitude", "Longitude", "MedHouseVal"]
AIRFOIL_COLUMNS = ["log_frequency", "angle_of_attack", "chord_length",
                   "free_stream_velocity", "displacement_thickness",
                   "sound_pressure"]


@dataclass
class TabularDataset:
    """Numeric feature matrix plus target, with ingestion bookkeeping."""

    feature_names: list
    X: np.ndarray
    y: np.ndarray
    target_name: str
    source: str = ""
    rows_read: int = 0
    rows_dropped: int = 0

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def columns(self, names) -> list:
        """Indices of ``names`` within the feature columns."""
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise InvalidArgumentError(f"unknown feature columns: {missing}")
        return [self.feature_names.index(n) for n in names]

    def subset(self, rows) -> "TabularDataset":
        rows = np.asarray(rows)
        return TabularDataset(list(self.feature_names), self.X[rows], self.y[rows],
                              self.target_name, self.source, len(rows), 0)


def _to_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return np.nan


def parse_numeric(frame: pd.DataFrame) -> np.ndarray:
    """Correctly rounded float parse of string cells; bad cells become NaN."""
    out = np.empty(frame.shape, dtype=np.float64)
    for j, col in enumerate(frame.columns):
        out[:, j] = [_to_float(v) for v in frame[col].str.strip()]
    return out


def load_csv(path, target: str, features=None, delimiter: str = ",") -> TabularDataset:
    """Read a headed CSV into a :class:`TabularDataset`.

    Rows with a missing or unparseable value in any used column are dropped,
    never imputed.  ``rows_read == rows_kept + rows_dropped`` always holds.
    """
    path = Path(path)
    frame = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False)
    if target not in frame.columns:
        raise InvalidArgumentError(f"target column '{target}' not found in {path}")
    if features is None:
        features = [c for c in frame.columns if c != target]
    else:
        features = list(features)
        missing = [c for c in features if c not in frame.columns]
        if missing:
            raise InvalidArgumentError(f"feature columns not found in {path}: {missing}")
        if target in features:
            raise InvalidArgumentError("target column listed as a feature")
    used = features + [target]
    numeric = parse_numeric(frame[used])
    keep = np.isfinite(numeric).all(axis=1)
    n_read = len(frame)
    n_drop = int((~keep).sum())
    if n_drop:
        logger.warning("%s: dropped %d of %d rows with missing/unparseable values",
                       path, n_drop, n_read)
    logger.info("%s: rows read %d, kept %d, dropped %d", path, n_read, n_read - n_drop, n_drop)
    values = numeric[keep]
    return TabularDataset(feature_names=features, X=values[:, :-1].copy(),
                          y=values[:, -1].copy(), target_name=target,
                          source=str(path), rows_read=n_read, rows_dropped=n_drop)


def train_test_indices(n: int, test_fraction: float, seed):
    """Random split of ``range(n)`` into sorted train and test index arrays."""
    if not 0.0 < test_fraction < 1.0:
        raise InvalidArgumentError("test_fraction must lie in (0, 1)")
    n_test = int(round(test_fraction * n))
    if n_test < 1 or n_test >= n:
        raise InvalidArgumentError(f"cannot split {n} rows with test_fraction={test_fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def _california_frame() -> pd.DataFrame:
    try:
        from sklearn.datasets import fetch_california_housing
        bunch = fetch_california_housing(as_frame=True)
        return bunch.frame
    except Exception as exc:  # offline, or sklearn's mirror unreachable
        logger.info("sklearn fetch failed (%s); trying the pytorch-widedeep copy", exc)
    import importlib.util
    import zipfile

    spec = importlib.util.find_spec("pytorch_widedeep")
    if spec is not None and spec.submodule_search_locations:
        base = Path(list(spec.submodule_search_locations)[0])
        return pd.read_parquet(base / "datasets" / "data" / "california_housing.parquet.brotli")
    for wheel in Path(".").glob("pytorch_widedeep-*.whl"):
        with zipfile.ZipFile(wheel) as zf:
            raw = zf.read("pytorch_widedeep/datasets/data/california_housing.parquet.brotli")
        return pd.read_parquet(io.BytesIO(raw))
    raise InvalidArgumentError(
        "California Housing unavailable: needs network access for scikit-learn, "
        "an installed pytorch-widedeep, or its wheel in the working directory")


def prepare_california(out_path) -> Path:
    """Write California Housing as CSV (target ``MedHouseVal`` in 1e5 USD)."""
    frame = _california_frame()[CALIFORNIA_COLUMNS]
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out_path, index=False, float_format="%.17g")
    return out_path


def prepare_airfoil(raw_path, out_path) -> Path:
    """Convert the UCI ``airfoil_self_noise.dat`` file into the canonical CSV.

    The raw file is whitespace separated with columns frequency [Hz], angle of
    attack [deg], chord length [m], free-stream velocity [m/s], suction-side
    displacement thickness [m] and scaled sound pressure level [dB].  The
    frequency column spans several decades and is replaced by its natural log.
    """
    raw = pd.read_csv(raw_path, sep=r"\s+", header=None)
    if raw.shape[1] != 6:
        raise InvalidArgumentError(f"expected 6 columns in {raw_path}, found {raw.shape[1]}")
    raw.columns = ["frequency"] + AIRFOIL_COLUMNS[1:]
    if (raw["frequency"] <= 0).any():
        raise InvalidArgumentError("airfoil frequencies must be positive")
    raw.insert(0, "log_frequency", np.log(raw.pop("frequency")))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    raw[AIRFOIL_COLUMNS].to_csv(out_path, index=False, float_format="%.17g")
    return out_path
