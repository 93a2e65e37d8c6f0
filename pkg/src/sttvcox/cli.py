"""Command-line front end.

Four subcommands: ``fit`` estimates effect curves from a survival CSV,
``cv`` selects the segment count by cross-validation, ``simulate`` runs a
seeded replication study, and ``score`` computes the metric battery for
an externally produced curve file.

Settings come from an optional JSON config file plus flags; flags win.
Every command writes ``manifest.json`` into the output directory before
any result file, and all files are written atomically (temp file plus
rename).  Outputs are deterministic given inputs and seed, except for the
manifest timestamp.

Exit codes: 0 success, 2 validation problems, 3 numeric failure, 4
non-convergence.  The environment variable STTV_LOG sets the log level.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import replace
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .coxph import fit_coxph
from .dataset import load_csv, make_dataset
from .errors import ConvergenceError, NumericError, ValidationError
from .inference import CurveEstimate, normal_quantile
from .model_selection import DEFAULT_CANDIDATES, cross_validate
from .optimizer import VARIANTS, FitConfig, estimate_curves, fit
from .reporting import (
    CURVE_COLUMNS,
    build_summary,
    metric_rows,
    metrics_header,
    read_curve_table,
    render_markdown,
    report_row,
)
from .simulation import Scenario, replicate, score

logger = logging.getLogger(__name__)

_DEFAULT_K = 5
_DEFAULT_GRID_POINTS = 200


def _setup_logging() -> None:
    name = os.environ.get("STTV_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s"
    )


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ValidationError(f"config {path} must hold a JSON object")
    return doc


def _merged(args, config: dict, key: str, default):
    """Flag value if given, else config value, else default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    value = config.get(key)
    return default if value is None else value


def _require(value, what: str):
    if value is None:
        raise ValidationError(f"{what} is required")
    return value


def _jsonable(obj):
    """Recursively convert arrays and numpy scalars; non-finite -> None."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else None
    return obj


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, doc) -> None:
    _atomic_write(path, json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def _prepare_outdir(args, config: dict) -> str:
    outdir = _require(_merged(args, config, "output", None), "--output")
    os.makedirs(outdir, exist_ok=True)
    return outdir


def _write_manifest(outdir: str, command: str, args, seed: int) -> None:
    doc = {
        "command": command,
        "config_path": getattr(args, "config", None),
        "input_path": getattr(args, "input", None),
        "output_dir": outdir,
        "seed": int(seed),
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    _write_json(os.path.join(outdir, "manifest.json"), doc)


def _curves_csv_text(curves: CurveEstimate, names, scales=None) -> str:
    """Long-format curve table; dividing by a positive scale when given."""
    lines = [",".join(CURVE_COLUMNS)]
    for j, name in enumerate(names):
        s = 1.0 if scales is None else float(scales[j])
        for g in range(curves.grid.size):
            lines.append(
                ",".join(
                    (
                        name,
                        repr(float(curves.grid[g])),
                        repr(float(curves.theta_hat[j, g]) / s),
                        repr(float(curves.beta_hat[j, g]) / s),
                        repr(float(curves.sigma_hat[j, g]) / s),
                        repr(float(curves.ci_lower[j, g]) / s),
                        repr(float(curves.ci_upper[j, g]) / s),
                        "true" if curves.zero_flags[j, g] else "false",
                    )
                )
            )
    return "\n".join(lines) + "\n"


def _fit_grid(tau: float, points: int) -> np.ndarray:
    """Midpoints of `points` equal subintervals of [0, tau]."""
    if points < 1:
        raise ValidationError(f"grid points must be >= 1, got {points}")
    return (np.arange(points) + 0.5) * (tau / points)


def _standardized(ds):
    """(dataset on the standardized scale, per-column scale divisors)."""
    Z = ds.covariates
    means = Z.mean(axis=0)
    scales = Z.std(axis=0)
    flat = np.flatnonzero(scales == 0)
    if flat.size:
        names = ds.covariate_names or tuple(f"z{k + 1}" for k in range(ds.p))
        raise ValidationError(
            f"cannot standardize constant covariate {names[flat[0]]!r}"
        )
    std = make_dataset(
        ds.time,
        ds.event,
        (Z - means) / scales,
        tau=ds.tau,
        covariate_names=ds.covariate_names,
    )
    return std, means, scales


def _fit_config(args, config: dict, p: int, seed: int, variant: str) -> FitConfig:
    override = _merged(args, config, "alpha_override", None)
    if override is not None:
        override = np.asarray(override, dtype=float).ravel()
        if override.size == 1:
            override = np.repeat(override, p)
        override = tuple(float(a) for a in override)
    rho = _merged(args, config, "rho", None)
    return FitConfig(
        K=int(_merged(args, config, "K", _DEFAULT_K)),
        eta=float(_merged(args, config, "eta", 1e-3)),
        rho=None if rho is None else float(rho),
        alpha_scale=float(_merged(args, config, "alpha_scale", 0.5)),
        alpha_override=override,
        variant=variant,
        multistart=int(_merged(args, config, "multistart", 1)),
        seed=seed,
    )


def _model_doc(model, standardize_doc) -> dict:
    warm = model.warm_start
    return {
        "variant": model.config.variant,
        "config": {
            "K": model.config.K,
            "degree": model.config.d,
            "eta": model.config.eta,
            "rho": model.rho,
            "alpha_scale": model.config.alpha_scale,
            "alpha_override": model.config.alpha_override,
            "tol_grad": model.config.tol_grad,
            "max_iter": model.config.max_iter,
            "multistart": model.config.multistart,
            "seed": model.config.seed,
        },
        "knots": model.basis.knots,
        "alphas": model.alphas,
        "gamma_hat": model.gamma_hat,
        "convergence": {
            "converged": model.converged,
            "iterations": model.n_iter,
            "final_grad_norm": model.final_grad_norm,
            "stop_reason": model.stop_reason,
            "final_objective": model.loglik_path[-1],
        },
        "warm_start": None
        if warm is None
        else {
            "beta": warm.beta,
            "loglik": warm.loglik,
            "iterations": warm.iterations,
            "converged": warm.converged,
        },
        "covariate_names": model.covariate_names,
        "n": model.n,
        "p": model.p,
        "tau": model.tau,
        "standardize": standardize_doc,
        "version": __version__,
    }


def _constant_curves(fitres, names, grid: np.ndarray, level: float = 0.95) -> CurveEstimate:
    """Constant-effect curve set from a proportional-hazards fit."""
    p = fitres.beta.shape[0]
    G = grid.size
    se = np.sqrt(np.diag(fitres.covariance))
    theta = np.repeat(fitres.beta[:, None], G, axis=1)
    sig = np.repeat(se[:, None], G, axis=1)
    z = normal_quantile(1.0 - (1.0 - level) / 2.0)
    return CurveEstimate(
        grid=grid,
        theta_hat=theta,
        beta_hat=theta,
        sigma_hat=sig,
        ci_lower=theta - z * sig,
        ci_upper=theta + z * sig,
        zero_flags=np.zeros((p, G), dtype=bool),
        level=level,
        fallback=np.zeros((p, G), dtype=bool),
        covariate_names=names,
    )


def _names(ds) -> tuple:
    return ds.covariate_names or tuple(f"z{k + 1}" for k in range(ds.p))


def cmd_fit(args) -> int:
    config = _load_config(args.config)
    input_path = _require(_merged(args, config, "input", None), "--input")
    seed = int(_merged(args, config, "seed", 0))
    variant = _merged(args, config, "variant", "sttv")
    tau = _merged(args, config, "tau", None)
    points = int(_merged(args, config, "grid_points", _DEFAULT_GRID_POINTS))
    standardize = bool(getattr(args, "standardize", False) or config.get("standardize", False))

    ds = load_csv(input_path, tau=None if tau is None else float(tau))
    names = _names(ds)
    means = scales = None
    ds_fit = ds
    if standardize:
        ds_fit, means, scales = _standardized(ds)
    standardize_doc = (
        None if scales is None else {"means": means, "scales": scales}
    )
    grid = _fit_grid(ds.tau, points)

    outdir = _prepare_outdir(args, config)
    _write_manifest(outdir, "fit", args, seed)

    if variant == "coxph":
        fitres = fit_coxph(ds_fit)
        curves = _constant_curves(fitres, names, grid)
        doc = {
            "variant": "coxph",
            "beta": fitres.beta,
            "covariance": fitres.covariance,
            "loglik": fitres.loglik,
            "iterations": fitres.iterations,
            "converged": fitres.converged,
            "zero_information": fitres.zero_information,
            "covariate_names": names,
            "n": ds.n,
            "p": ds.p,
            "tau": ds.tau,
            "standardize": standardize_doc,
            "version": __version__,
        }
    elif variant in VARIANTS:
        cfg = _fit_config(args, config, ds.p, seed, variant)
        model = fit(ds_fit, cfg)
        curves = estimate_curves(model, grid)
        doc = _model_doc(model, standardize_doc)
    else:
        raise ValidationError(
            f"variant must be one of {VARIANTS + ('coxph',)}, got {variant!r}"
        )

    _write_json(os.path.join(outdir, "model.json"), doc)
    _atomic_write(
        os.path.join(outdir, "curves.csv"), _curves_csv_text(curves, names, scales)
    )
    return 0


def cmd_cv(args) -> int:
    config = _load_config(args.config)
    input_path = _require(_merged(args, config, "input", None), "--input")
    seed = int(_merged(args, config, "seed", 0))
    folds = int(_merged(args, config, "folds", 10))
    variant = _merged(args, config, "variant", "sttv")
    tau = _merged(args, config, "tau", None)
    candidates = _merged(args, config, "candidates", DEFAULT_CANDIDATES)
    candidates = tuple(int(k) for k in candidates)
    if variant not in VARIANTS:
        raise ValidationError(
            f"cross-validation supports variants {VARIANTS}, got {variant!r}"
        )

    ds = load_csv(input_path, tau=None if tau is None else float(tau))
    cfg = _fit_config(args, config, ds.p, seed, variant)
    cfg = replace(cfg, K=candidates[0])

    outdir = _prepare_outdir(args, config)
    _write_manifest(outdir, "cv", args, seed)

    result = cross_validate(ds, cfg, candidates=candidates, folds=folds, seed=seed)
    _write_json(
        os.path.join(outdir, "cv.json"),
        {
            "candidates": result.candidates,
            "cv_error": result.cv_error,
            "per_fold": result.per_fold,
            "chosen_K": result.chosen_K,
            "failed": result.failed,
            "folds": folds,
            "seed": seed,
            "variant": variant,
            "version": __version__,
        },
    )

    if getattr(args, "refit", False) or config.get("refit", False):
        points = int(_merged(args, config, "grid_points", _DEFAULT_GRID_POINTS))
        model = fit(ds, replace(cfg, K=result.chosen_K))
        curves = estimate_curves(model, _fit_grid(ds.tau, points))
        _write_json(os.path.join(outdir, "model.json"), _model_doc(model, None))
        _atomic_write(
            os.path.join(outdir, "curves.csv"),
            _curves_csv_text(curves, _names(ds)),
        )
    return 0


def _study_pieces(args, config: dict):
    scenario_doc = config.get("scenario")
    if not isinstance(scenario_doc, dict):
        raise ValidationError('simulate config needs a "scenario" object')
    if "n" not in scenario_doc:
        raise ValidationError("scenario.n is required")
    covariance = str(scenario_doc.get("covariance", "ind")).lower()
    seed = int(
        args.seed if args.seed is not None else scenario_doc.get("seed", 0)
    )
    scenario_kwargs = {
        "n": int(scenario_doc["n"]),
        "covariance": covariance,
        "seed": seed,
    }
    for key in ("baseline_hazard", "censor_upper", "admin_censor"):
        if key in scenario_doc:
            scenario_kwargs[key] = float(scenario_doc[key])
    scenario = Scenario(**scenario_kwargs)

    if args.variant is not None:
        variants = [args.variant]
    else:
        variants = list(config.get("variants", list(VARIANTS)))
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise ValidationError(
            f"simulation studies support variants {VARIANTS}; got {bad} "
            "(the constant-effect model has no curve metrics)"
        )
    if len(set(variants)) != len(variants):
        raise ValidationError(f"duplicate variants: {variants}")

    fit_doc = config.get("fit", {})
    if not isinstance(fit_doc, dict):
        raise ValidationError('"fit" must be an object of fit settings')
    configs = [
        _fit_config(args, fit_doc, scenario.p, seed, variant) for variant in variants
    ]

    if "reps" not in config:
        raise ValidationError('simulate config needs "reps"')
    reps = int(config["reps"])
    level = float(config.get("level", 0.95))
    jobs = int(args.jobs if args.jobs is not None else config.get("jobs", 1))
    if jobs < 1:
        raise ValidationError(f"jobs must be >= 1, got {jobs}")
    dump = bool(config.get("dump_curves", False))
    return scenario, configs, reps, level, jobs, dump


def cmd_simulate(args) -> int:
    config = _load_config(_require(args.config, "--config"))
    scenario, configs, reps, level, jobs, dump = _study_pieces(args, config)

    outdir = _prepare_outdir(args, config)
    _write_manifest(outdir, "simulate", args, scenario.seed)

    result = replicate(
        scenario, configs, reps, level=level, jobs=jobs, keep_curves=dump
    )
    header, rows = metric_rows(result)
    metrics_path = os.path.join(outdir, "metrics.csv")
    _atomic_write(
        metrics_path,
        "\n".join([",".join(header)] + [",".join(r) for r in rows]) + "\n",
    )

    summary = build_summary([metrics_path])
    cells = [
        {
            "covariance": cov,
            "n": n,
            "variant": variant,
            "metric": metric,
            "coefficient": coef,
            "mean": mean,
            "sd": sd,
            "reps": used,
        }
        for cov, n, variant, metric, coef, mean, sd, used in summary.rows
    ]
    _write_json(
        os.path.join(outdir, "summary.json"),
        {
            "cells": cells,
            "footnotes": summary.footnotes,
            "failed_reps": [list(f) for f in result.failures],
            "coverage": {
                "grid": result.grid,
                **{v: result.coverage_mean[v] for v in result.variants},
            },
            "scenario": {
                "n": scenario.n,
                "covariance": scenario.covariance,
                "seed": scenario.seed,
                "baseline_hazard": scenario.baseline_hazard,
                "censor_upper": scenario.censor_upper,
                "admin_censor": scenario.admin_censor,
            },
            "reps": reps,
            "level": level,
            "variants": result.variants,
            "version": __version__,
        },
    )
    _atomic_write(os.path.join(outdir, "summary.md"), render_markdown(summary))

    if dump and result.curves is not None:
        names = tuple(f"z{j + 1}" for j in range(scenario.p))
        for variant in result.variants:
            for rep, curves in sorted(result.curves[variant].items()):
                path = os.path.join(outdir, f"curves_rep{rep:04d}_{variant}.csv")
                _atomic_write(path, _curves_csv_text(curves, names))
    return 0


def cmd_score(args) -> int:
    config = _load_config(_require(args.config, "--config"))
    input_path = _require(_merged(args, config, "input", None), "--input")
    if "covariance" not in config or "n" not in config:
        raise ValidationError('score config needs "covariance" and "n"')
    covariance = str(config["covariance"]).lower()
    n = int(config["n"])
    variant = str(config.get("variant", "external"))
    rep = int(config.get("rep", 0))
    seed = int(config.get("seed", 0))
    scenario_kwargs = {"n": n, "covariance": covariance, "seed": seed}
    if "baseline_hazard" in config:
        scenario_kwargs["baseline_hazard"] = float(config["baseline_hazard"])
    scenario = Scenario(**scenario_kwargs)

    table = read_curve_table(input_path)
    p = len(table["names"])
    curves = CurveEstimate(
        grid=table["grid"],
        theta_hat=table["theta_hat"],
        beta_hat=table["beta_hat"],
        sigma_hat=table["sigma_hat"],
        ci_lower=table["ci_lower"],
        ci_upper=table["ci_upper"],
        zero_flags=table["zero_flags"],
        level=float(config.get("level", 0.95)),
        fallback=np.zeros(table["beta_hat"].shape, dtype=bool),
        covariate_names=table["names"],
    )
    report = score(curves, scenario)

    outdir = _prepare_outdir(args, config)
    _write_manifest(outdir, "score", args, seed)
    header = metrics_header(p)
    row = report_row(report, covariance, n, variant, rep)
    _atomic_write(
        os.path.join(outdir, "metrics.csv"),
        ",".join(header) + "\n" + ",".join(row) + "\n",
    )
    return 0


def _parse_candidates(text: str):
    items = [s.strip() for s in text.split(",") if s.strip()]
    if not items:
        raise argparse.ArgumentTypeError("candidate list is empty")
    try:
        values = tuple(int(s) for s in items)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if any(v < 1 for v in values):
        raise argparse.ArgumentTypeError("candidates must be positive integers")
    return values


def _add_common(sp, *, data: bool, fitting: bool) -> None:
    sp.add_argument("--config", help="JSON config file; flags override its values")
    sp.add_argument("--output", help="output directory (created if missing)")
    sp.add_argument("--seed", type=int, help="base random seed")
    if data:
        sp.add_argument("--input", help="input CSV path")
        sp.add_argument("--tau", type=float, help="administrative horizon")
    if fitting:
        sp.add_argument("--K", type=int, help="spline segment count")
        sp.add_argument("--alpha-scale", type=float, help="threshold scale factor")
        sp.add_argument(
            "--alpha-override", type=float, help="explicit threshold for every covariate"
        )
        sp.add_argument("--eta", type=float, help="surrogate smoothing parameter")
        sp.add_argument("--rho", type=float, help="ridge penalty weight")
        sp.add_argument("--multistart", type=int, help="number of jittered starts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sttvcox",
        description="Sparse time-varying effect Cox models with zero-region detection",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("fit", help="fit effect curves on a survival CSV")
    _add_common(sp, data=True, fitting=True)
    sp.add_argument(
        "--variant", choices=VARIANTS + ("coxph",), help="model variant to fit"
    )
    sp.add_argument("--grid-points", type=int, help="points on the output curve grid")
    sp.add_argument(
        "--standardize",
        action="store_true",
        help="fit on standardized covariates, report on the original scale",
    )
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("cv", help="choose the segment count by cross-validation")
    _add_common(sp, data=True, fitting=True)
    sp.add_argument("--variant", choices=VARIANTS, help="model variant to tune")
    sp.add_argument(
        "--candidates", type=_parse_candidates, help="comma-separated segment counts"
    )
    sp.add_argument("--folds", type=int, help="number of folds")
    sp.add_argument("--grid-points", type=int, help="curve grid size for --refit")
    sp.add_argument(
        "--refit", action="store_true", help="fit at the chosen K and write curves"
    )
    sp.set_defaults(func=cmd_cv)

    sp = sub.add_parser("simulate", help="run a seeded replication study")
    _add_common(sp, data=False, fitting=True)
    sp.add_argument(
        "--variant", choices=VARIANTS, help="restrict the study to one variant"
    )
    sp.add_argument("--jobs", type=int, help="parallel worker processes")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("score", help="score an external curve file against the truth")
    _add_common(sp, data=False, fitting=False)
    sp.add_argument("--input", help="curves CSV to score")
    sp.set_defaults(func=cmd_score)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConvergenceError as exc:
        return _report_failure(exc, 4)
    except NumericError as exc:
        return _report_failure(exc, 3)
    except ValidationError as exc:
        return _report_failure(exc, 2)
    except OSError as exc:
        return _report_failure(exc, 2)


def _report_failure(exc: BaseException, code: int) -> int:
    print(f"error [{type(exc).__name__}] {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
