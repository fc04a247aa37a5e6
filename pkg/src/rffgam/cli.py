"""Command-line interface: ``rffgam <subcommand> [options]``.

Exit codes are 0 on success, 2 for usage, configuration or schema problems
and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .augment import train_augmented
from .config import RunConfig, load_config
from .data import load_csv, parse_numeric, prepare_airfoil, prepare_california, train_test_indices
from .errors import ConfigurationError, InvalidArgumentError, NumericalFailureError
from .evaluation import (Timer, grid_search, make_report, monte_carlo_cv, partial_dependence,
                         responsibility_profile, write_reports)
from .gam import fit_gam, predict_gam
from .latent import weighted_frequency_pca
from .mixture import assemble, fit_rff_stage, predict_mixture, spatial_cluster_report
from .rff import predict_rff
from .serialize import read_model_file, save_model

logger = logging.getLogger("rffgam")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3


def _load_run(args) -> RunConfig:
    run = load_config(args.config)
    if args.seed is not None:
        run = run.with_seed(args.seed)
    return run


def _dataset(run: RunConfig):
    ds = load_csv(run.data_path, run.target, run.features, run.delimiter)
    pipeline = run.pipeline
    if run.spatial_features:
        pipeline = pipeline.replace(feature_subset=tuple(ds.columns(run.spatial_features)))
    return ds, pipeline


def _split(run: RunConfig, ds, seed):
    return train_test_indices(ds.n_rows, run.test_fraction, seed)


def _out_dir(args, run: RunConfig | None = None) -> Path:
    out = Path(args.out) if args.out else Path(run.output_dir if run else ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _metadata(ds, run: RunConfig) -> dict:
    return {"feature_names": list(ds.feature_names), "target": ds.target_name,
            "data": str(run.data), "test_fraction": run.test_fraction}


def cmd_train(args) -> int:
    run = _load_run(args)
    ds, cfg = _dataset(run)
    out = _out_dir(args, run)
    tr, te = _split(run, ds, cfg.seed)
    with Timer() as t:
        model = assemble(ds.X[tr], ds.y[tr], cfg)
    save_model(model, out / "model.json", _metadata(ds, run))
    reports = [make_report(predict_mixture(model, ds.X[tr]), ds.y[tr],
                           predict_mixture(model, ds.X[te]), ds.y[te], t.seconds,
                           label=f"mixture[{cfg.ablation_mode}]", config=_flat(cfg),
                           B=run.bootstrap_B, seed=cfg.seed)]
    if model.rff is not None and cfg.feature_subset is None:
        reports.append(make_report(predict_rff(model.rff, ds.X[tr]), ds.y[tr],
                                   predict_rff(model.rff, ds.X[te]), ds.y[te], t.seconds,
                                   label="rff", config=_flat(cfg), B=run.bootstrap_B,
                                   seed=cfg.seed))
    write_reports(reports, out / "report.csv")
    for r in reports:
        logger.info("%s: test RMSE %.4f +/- %.4f", r.label, r.test_rmse,
                    0.5 * (r.ci_high - r.ci_low))
    return EXIT_OK


def _flat(cfg) -> dict:
    from .serialize import config_to_dict

    return {k: (",".join(map(str, v)) if isinstance(v, list) else v)
            for k, v in config_to_dict(cfg).items()}


def _predict_path(args) -> Path:
    out = Path(args.out) if args.out else Path("predictions.csv")
    if out.suffix.lower() != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "predictions.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def cmd_predict(args) -> int:
    if not args.model or not args.input:
        raise ConfigurationError("predict needs --model and --in")
    model, meta = read_model_file(args.model)
    names = meta.get("feature_names") or [f"x{j}" for j in range(model.n_features)]
    frame = pd.read_csv(args.input, dtype=str, keep_default_na=False)
    missing = [c for c in names if c not in frame.columns]
    if missing:
        raise ConfigurationError(f"input is missing feature columns: {missing}")
    X = parse_numeric(frame[names]).reshape(len(frame), len(names))
    bad = ~np.isfinite(X).all(axis=1)
    if bad.any():
        raise ConfigurationError(f"{int(bad.sum())} input rows have missing or non-numeric features")
    pred = predict_mixture(model, X)
    path = _predict_path(args)
    pd.DataFrame({"prediction": pred}).to_csv(path, index=False, float_format="%.17g")
    logger.info("wrote %d predictions to %s", len(pred), path)
    return EXIT_OK


def cmd_eval(args) -> int:
    """Bootstrap report on the held-out split, optionally with Monte Carlo CV."""
    run = _load_run(args)
    ds, cfg = _dataset(run)
    out = _out_dir(args, run)
    tr, te = _split(run, ds, cfg.seed)
    reports = []
    with Timer() as t:
        model = assemble(ds.X[tr], ds.y[tr], cfg)
    reports.append(make_report(predict_mixture(model, ds.X[tr]), ds.y[tr],
                               predict_mixture(model, ds.X[te]), ds.y[te], t.seconds,
                               label=f"mixture[{cfg.ablation_mode}]", config=_flat(cfg),
                               B=run.bootstrap_B, seed=cfg.seed))
    with Timer() as t:
        gam = fit_gam(ds.X[tr], ds.y[tr], n_knots=cfg.n_knots, degree=cfg.degree,
                      smooth_lambda=cfg.smooth_lambda)
    reports.append(make_report(predict_gam(gam, ds.X[tr]), ds.y[tr], predict_gam(gam, ds.X[te]),
                               ds.y[te], t.seconds, label="global_gam", config=_flat(cfg),
                               B=run.bootstrap_B, seed=cfg.seed))
    if model.rff is not None and cfg.feature_subset is None:
        reports.append(make_report(predict_rff(model.rff, ds.X[tr]), ds.y[tr],
                                   predict_rff(model.rff, ds.X[te]), ds.y[te], 0.0,
                                   label="rff", config=_flat(cfg), B=run.bootstrap_B,
                                   seed=cfg.seed))
    if run.mc_repeats >= 2:
        with Timer() as t:
            mc = monte_carlo_cv(ds.X, ds.y, cfg, repeats=run.mc_repeats,
                                split=1.0 - run.test_fraction, seed=cfg.seed)
        reports.append(_mc_report(mc, t.seconds, cfg))
    write_reports(reports, out / "report.csv")
    if run.profile_feature:
        j = ds.columns([run.profile_feature])[0]
        prof = responsibility_profile(model, ds.X[tr], np.rint(ds.X[tr, j]).astype(int))
        prof.to_csv(out / "responsibility_profile.csv", index=False)
    return EXIT_OK


def _mc_report(mc, seconds, cfg):
    from .evaluation import EvalReport

    return EvalReport(train_rmse=float("nan"), test_rmse=mc.mean, ci_low=mc.ci_low,
                      ci_high=mc.ci_high, runtime_seconds=seconds,
                      label=f"mixture[{cfg.ablation_mode}] x{mc.rmses.size} failures={mc.failures}",
                      protocol=mc.protocol, config=_flat(cfg))


def cmd_grid(args) -> int:
    run = _load_run(args)
    ds, cfg = _dataset(run)
    out = _out_dir(args, run)
    tr, te = _split(run, ds, cfg.seed)
    result = grid_search(ds.X[tr], ds.y[tr], ds.X[te], ds.y[te], cfg, run.grid_L, run.grid_d)
    result.to_csv(out / "grid_rmse.csv")
    logger.info("best cell (L, d) = %s", result.best())
    return EXIT_OK


def _training_rows(args, meta):
    """Rows to analyse: ``--in`` if given, else the dataset named in ``--config``."""
    if args.input:
        path = args.input
    elif args.config:
        path = _load_run(args).data_path
    else:
        raise ConfigurationError("pass --in or --config to locate the data rows")
    if "target" not in meta:
        raise ConfigurationError("model file lacks column metadata")
    return load_csv(path, meta["target"], meta["feature_names"])


def cmd_pd(args) -> int:
    if not args.model:
        raise ConfigurationError("pd needs --model")
    model, meta = read_model_file(args.model)
    ds = _training_rows(args, meta)
    if ds.X.shape[1] != model.n_features:
        raise ConfigurationError("data columns do not match the model")
    out = _out_dir(args)
    grid_size = args.grid_size
    for j in range(model.n_features):
        curve = partial_dependence(lambda Z: predict_mixture(model, Z), ds.X, j, grid_size)
        curve.to_frame().to_csv(out / f"pd_feature_{j}.csv", index=False)
    return EXIT_OK


def cmd_augment(args) -> int:
    run = _load_run(args)
    ds, cfg = _dataset(run)
    out = _out_dir(args, run)
    tr, te = _split(run, ds, cfg.seed)
    with Timer() as t:
        rff, _ = fit_rff_stage(ds.X[tr], ds.y[tr], cfg)
        base = assemble(ds.X[tr], ds.y[tr], cfg, rff=rff)
        model, data = train_augmented(ds.X[tr], ds.y[tr], cfg, run.augment, rff=rff)
    data.to_frame(ds.feature_names, ds.target_name).to_csv(out / "augmented.csv", index=False)
    save_model(model, out / "model.json", _metadata(ds, run))
    reports = []
    for label, m in (("mixture", base), ("mixture_augmented", model)):
        reports.append(make_report(predict_mixture(m, ds.X[tr]), ds.y[tr],
                                   predict_mixture(m, ds.X[te]), ds.y[te], t.seconds,
                                   label=label, config=_flat(cfg), B=run.bootstrap_B,
                                   seed=cfg.seed))
    write_reports(reports, out / "report.csv")
    logger.info("accepted %d of %d synthetic candidates", data.n_accepted, data.n_candidates)
    return EXIT_OK


def cmd_freq_analysis(args) -> int:
    if not args.model:
        raise ConfigurationError("freq-analysis needs --model")
    model, meta = read_model_file(args.model)
    if model.rff is None:
        raise ConfigurationError("model has no Fourier stage")
    fa = weighted_frequency_pca(model.rff.omega, args.bandwidth)
    names = meta.get("feature_names")
    cols = model.clustering_columns
    labels = [names[j] for j in cols] if names else [f"x{j}" for j in cols]
    out = _out_dir(args)
    frame = pd.DataFrame(fa.principal_directions.T, columns=labels)
    frame.insert(0, "weighted_eigenvalue", fa.weighted_eigenvalues)
    frame.insert(0, "component", np.arange(1, len(labels) + 1))
    frame["kde_bandwidth"] = fa.kde_bandwidth
    frame.to_csv(out / "frequency_analysis.csv", index=False, float_format="%.17g")
    pd.DataFrame(model.rff.omega, columns=labels).assign(weight=fa.weights).to_csv(
        out / "frequencies.csv", index=False)
    return EXIT_OK


def cmd_spatial_report(args) -> int:
    if not args.model:
        raise ConfigurationError("spatial-report needs --model")
    model, meta = read_model_file(args.model)
    ds = _training_rows(args, meta)
    if args.config:
        run = _load_run(args)
        tr, _ = _split(run, ds, model.config.seed)
        ds = ds.subset(tr)
    frame = spatial_cluster_report(model, ds.X, ds.feature_names)
    out = _out_dir(args)
    frame.to_csv(out / "clusters_spatial.csv", index=False)
    return EXIT_OK


def cmd_prepare_data(args) -> int:
    out = Path(args.out or "data")
    if args.dataset == "california":
        path = prepare_california(out / "california_housing.csv")
    else:
        if not args.input:
            raise ConfigurationError("airfoil preparation needs --in airfoil_self_noise.dat")
        path = prepare_airfoil(args.input, out / "airfoil.csv")
    logger.info("wrote %s", path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rffgam", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_, config=False, model=False, inp=False):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=config, help="flat JSON run configuration")
        p.add_argument("--model", required=model, help="model file written by train")
        p.add_argument("--in", dest="input", required=inp, help="input CSV")
        p.add_argument("--out", help="output directory (predict also accepts a .csv path)")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.set_defaults(func=func)
        return p

    add("train", cmd_train, "train the pipeline and write model.json + report.csv", config=True)
    add("predict", cmd_predict, "predict with a saved model", model=True, inp=True)
    add("eval", cmd_eval, "score mixture, global GAM and RFF; optional Monte Carlo CV", config=True)
    add("grid", cmd_grid, "(L, d) grid search to grid_rmse.csv", config=True)
    pd_p = add("pd", cmd_pd, "partial dependence curves pd_feature_<j>.csv", model=True)
    pd_p.add_argument("--grid-size", type=int, default=50)
    add("augment", cmd_augment, "perturbation augmentation and retraining", config=True)
    fa = add("freq-analysis", cmd_freq_analysis, "density-weighted PCA of learned frequencies",
             model=True)
    fa.add_argument("--bandwidth", type=float, default=None)
    add("spatial-report", cmd_spatial_report, "cluster membership with spatial coordinates",
        model=True)
    prep = sub.add_parser("prepare-data", help="write a benchmark dataset as canonical CSV")
    prep.add_argument("dataset", choices=["california", "airfoil"])
    prep.add_argument("--in", dest="input", help="raw airfoil_self_noise.dat")
    prep.add_argument("--out", help="output directory (default data/)")
    prep.set_defaults(func=cmd_prepare_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, InvalidArgumentError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailureError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
