"""Lossless JSON persistence of trained pipelines.

Every real number is written with 17 significant digits so that a
save/load cycle reproduces the arrays bit for bit.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .gam import GamModel, SplineBasis
from .gmm import GmmModel
from .latent import LatentProjector
from .mixture import MixtureModel, PipelineConfig, RidgeModel
from .rff import RffModel, Standardizer

SCHEMA_VERSION = 1
FORMAT_NAME = "rffgam-mixture"


def _emit(obj, out: list) -> None:
    if isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(",")
            out.append(json.dumps(str(k)))
            out.append(":")
            _emit(v, out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(",")
            _emit(v, out)
        out.append("]")
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), out)
    elif obj is None or isinstance(obj, (bool, np.bool_)):
        out.append(json.dumps(None if obj is None else bool(obj)))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError("cannot serialize non-finite value")
        text = format(x, ".17g")
        if not any(c in text for c in ".en"):
            text += ".0"
        out.append(text)
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_json(obj) -> str:
    parts: list = []
    _emit(obj, parts)
    return "".join(parts)


def _arr(values, dtype=np.float64) -> np.ndarray:
    return np.asarray(values, dtype=dtype)


def _standardizer(st: Standardizer | None):
    return None if st is None else {"mean": st.mean, "std": st.std}


def _load_standardizer(doc):
    return None if doc is None else Standardizer(mean=_arr(doc["mean"]), std=_arr(doc["std"]))


def config_to_dict(config: PipelineConfig) -> dict:
    doc = {}
    for f in PipelineConfig.__dataclass_fields__:
        value = getattr(config, f)
        doc[f] = list(value) if isinstance(value, tuple) else value
    return doc


def config_from_dict(doc: dict) -> PipelineConfig:
    doc = dict(doc)
    if doc.get("feature_subset") is not None:
        doc["feature_subset"] = tuple(doc["feature_subset"])
    return PipelineConfig(**doc)


def _local_to_dict(local) -> dict:
    if isinstance(local, GamModel):
        return {
            "type": "gam",
            "alpha": local.alpha,
            "smooth_lambda": local.smooth_lambda,
            "converged": local.converged,
            "n_sweeps": local.n_sweeps,
            "offsets": local.offsets,
            "bases": [{"feature_index": b.feature_index, "kind": b.kind, "degree": b.degree,
                       "boundary": list(b.boundary), "interior_knots": b.interior_knots}
                      for b in local.bases],
            "theta": list(local.theta),
        }
    return {"type": "ridge", "standardizer": _standardizer(local.standardizer),
            "coef": local.coef, "intercept": local.intercept, "lam": local.lam}


def _local_from_dict(doc: dict):
    if doc["type"] == "gam":
        bases = [SplineBasis(feature_index=int(b["feature_index"]),
                             interior_knots=_arr(b["interior_knots"]),
                             boundary=(float(b["boundary"][0]), float(b["boundary"][1])),
                             degree=int(b["degree"]), kind=b["kind"])
                 for b in doc["bases"]]
        return GamModel(alpha=float(doc["alpha"]), bases=bases,
                        theta=[_arr(t) for t in doc["theta"]], offsets=_arr(doc["offsets"]),
                        smooth_lambda=float(doc["smooth_lambda"]),
                        converged=bool(doc["converged"]), n_sweeps=int(doc["n_sweeps"]))
    if doc["type"] == "ridge":
        return RidgeModel(standardizer=_load_standardizer(doc["standardizer"]),
                          coef=_arr(doc["coef"]), intercept=float(doc["intercept"]),
                          lam=float(doc["lam"]))
    raise ConfigurationError(f"unknown local model type {doc['type']!r}")


def model_to_dict(model: MixtureModel, metadata: dict | None = None) -> dict:
    rff = None
    if model.rff is not None:
        r = model.rff
        rff = {"sigma": r.sigma, "lam": r.lam, "y_mean": r.y_mean,
               "standardizer": _standardizer(r.standardizer),
               "omega": r.omega,
               "beta": np.column_stack([r.beta.real, r.beta.imag])}
    projector = None
    if model.projector is not None:
        projector = {"s_mean": model.projector.s_mean, "v_d": model.projector.v_d,
                     "singular_values": model.projector.singular_values}
    g = model.gmm
    return {
        "format": FORMAT_NAME,
        "schema_version": SCHEMA_VERSION,
        "config": config_to_dict(model.config),
        "n_features": model.n_features,
        "rff": rff,
        "input_standardizer": _standardizer(model.input_standardizer),
        "projector": projector,
        "gmm": {"weights": g.weights, "means": g.means, "covariances": g.covariances,
                "converged": g.converged},
        "components": model.components,
        "cluster_sizes": model.cluster_sizes,
        "locals": [_local_to_dict(m) for m in model.locals],
        "metadata": dict(metadata or {}),
    }


def model_from_dict(doc: dict) -> MixtureModel:
    if doc.get("format") != FORMAT_NAME:
        raise ConfigurationError("not a serialized mixture model")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported schema_version {doc.get('schema_version')}")
    rff = None
    if doc["rff"] is not None:
        r = doc["rff"]
        b = _arr(r["beta"]).reshape(-1, 2)
        rff = RffModel(omega=_arr(r["omega"]).reshape(b.shape[0], -1),
                       beta=b[:, 0] + 1j * b[:, 1], sigma=float(r["sigma"]),
                       lam=float(r["lam"]), standardizer=_load_standardizer(r["standardizer"]),
                       y_mean=float(r["y_mean"]))
    projector = None
    if doc["projector"] is not None:
        pr = doc["projector"]
        projector = LatentProjector(s_mean=_arr(pr["s_mean"]), v_d=np.atleast_2d(_arr(pr["v_d"])),
                                    singular_values=_arr(pr["singular_values"]))
    g = doc["gmm"]
    weights = _arr(g["weights"])
    L = weights.shape[0]
    means = _arr(g["means"]).reshape(L, -1)
    d = means.shape[1]
    gmm = GmmModel(weights=weights, means=means,
                   covariances=_arr(g["covariances"]).reshape(L, d, d),
                   converged=bool(g["converged"]))
    return MixtureModel(config=config_from_dict(doc["config"]), n_features=int(doc["n_features"]),
                        rff=rff, input_standardizer=_load_standardizer(doc["input_standardizer"]),
                        projector=projector, gmm=gmm,
                        locals=[_local_from_dict(m) for m in doc["locals"]],
                        components=_arr(doc["components"], int),
                        cluster_sizes=_arr(doc["cluster_sizes"], int))


def dumps_model(model: MixtureModel, metadata: dict | None = None) -> str:
    return to_json(model_to_dict(model, metadata)) + "\n"


def loads_model(text: str) -> MixtureModel:
    return model_from_dict(json.loads(text))


def save_model(model: MixtureModel, path, metadata: dict | None = None) -> Path:
    """Write ``model`` plus free-form ``metadata`` (column names and the like)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_model(model, metadata), encoding="utf-8")
    return path


def read_model_file(path):
    """Load a model file; returns ``(MixtureModel, metadata dict)``."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return model_from_dict(doc), dict(doc.get("metadata", {}))
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"cannot read model file {path}: {exc}") from exc


def load_model(path) -> MixtureModel:
    return read_model_file(path)[0]
