"""Flat JSON run configuration for the command-line tool."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .augment import AugmentConfig
from .errors import ConfigurationError
from .mixture import PipelineConfig

# keys that map straight onto PipelineConfig fields ("lambda" is stored as lam)
PIPELINE_KEYS = {
    "K": int, "sigma": float, "lambda": float, "delta": float, "resample_iters": int,
    "d": int, "L": int, "n_knots": int, "degree": int, "smooth_lambda": float,
    "seed": int, "min_cluster_size": int, "ablation_mode": str, "ridge_lambda": float,
    "validation_fraction": float, "weight_power": float,
}
RUN_KEYS = {
    "data": str, "target": str, "features": list, "spatial_features": list,
    "delimiter": str, "test_fraction": float, "output_dir": str,
    "augment_n_per_point": int, "augment_epsilon": float, "augment_chi2_quantile": float,
    "synthetic_in_locals": bool, "pd_grid_size": int, "grid_L": list, "grid_d": list,
    "bootstrap_B": int, "mc_repeats": int, "profile_feature": str,
}
REQUIRED_KEYS = ("data", "target")


@dataclass
class RunConfig:
    """Dataset location, split and analysis settings plus the pipeline config."""

    data: str
    target: str
    pipeline: PipelineConfig
    features: list | None = None
    spatial_features: list | None = None
    delimiter: str = ","
    test_fraction: float = 0.2
    output_dir: str = "out"
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    pd_grid_size: int = 50
    grid_L: list = field(default_factory=lambda: list(range(3, 9)))
    grid_d: list = field(default_factory=lambda: list(range(2, 9)))
    bootstrap_B: int = 1000
    mc_repeats: int = 0
    profile_feature: str | None = None
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def data_path(self) -> Path:
        path = Path(self.data)
        return path if path.is_absolute() else self.base_dir / path

    def with_seed(self, seed: int) -> "RunConfig":
        from dataclasses import replace

        return replace(self, pipeline=self.pipeline.replace(seed=int(seed)),
                       augment=replace(self.augment, seed=int(seed)))


def _coerce(key: str, value, kind):
    if value is None:
        return None
    if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if kind in (str, list, bool) and isinstance(value, kind):
        return value
    raise ConfigurationError(f"config key '{key}' expects {kind.__name__}, got {value!r}")


def parse_config(doc: dict, base_dir=None) -> RunConfig:
    """Validate a flat key-value mapping; unknown keys are an error."""
    if not isinstance(doc, dict):
        raise ConfigurationError("config must be a JSON object")
    unknown = sorted(set(doc) - set(PIPELINE_KEYS) - set(RUN_KEYS))
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(unknown)}")
    missing = [k for k in REQUIRED_KEYS if k not in doc]
    if missing:
        raise ConfigurationError(f"missing required config keys: {', '.join(missing)}")

    pipe = {}
    for key, kind in PIPELINE_KEYS.items():
        if key in doc:
            pipe["lam" if key == "lambda" else key] = _coerce(key, doc[key], kind)
    run = {key: _coerce(key, doc[key], kind) for key, kind in RUN_KEYS.items() if key in doc}
    augment = AugmentConfig(
        n_per_point=run.pop("augment_n_per_point", 10),
        epsilon=run.pop("augment_epsilon", 0.05),
        chi2_quantile=run.pop("augment_chi2_quantile", 0.99),
        seed=pipe.get("seed", 0),
        synthetic_in_locals=run.pop("synthetic_in_locals", True),
    )
    try:
        pipeline = PipelineConfig(**pipe)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc
    return RunConfig(pipeline=pipeline, augment=augment,
                     base_dir=Path(base_dir) if base_dir is not None else Path.cwd(), **run)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(doc, base_dir=path.parent)
