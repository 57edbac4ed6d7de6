"""Command-line front end.

CSV in, JSON out. Every report carries the seed, the accuracy settings,
the orthant relative errors actually achieved and the package version, so a
run can be reproduced exactly; apart from ``bench`` (which reports wall
times) repeated runs with the same arguments write byte-identical output.
"""

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import dataclass

import numpy as np

from . import __version__
from .errors import (
    ConstantColumn,
    DimensionMismatch,
    EmptyModelSet,
    IndexOutOfRange,
    InfeasibleRegion,
    NonBinaryResponse,
    NotPositiveDefinite,
    ParseError,
    RankDeficient,
)
from .mcmc import DEFAULT_BURN_IN, DEFAULT_DRAWS, compare_samplers, effective_sample_size
from .orthant import DEFAULT_ACCURACY
from .probit import (
    BinaryDataset,
    ModelSpec,
    credible_interval,
    fit_gaussian_prior,
    log_marginal_likelihood,
    model_posterior,
    posterior_mean,
    predict_prob,
    sample_posterior,
)

DEFAULT_PRIOR_SCALE = 16.0
INTERCEPT_NAME = "(Intercept)"
TARGET_SD = 0.5

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class Standardizer:
    """Column centring and scaling learned from training data."""

    columns: tuple
    center: np.ndarray
    scale: np.ndarray

    def apply(self, X):
        return (X - self.center) / self.scale


def _read_table(path):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise ParseError("missing header row", row=1)
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise ParseError("duplicate column names in header", row=1)
    body = []
    for i, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(row)}", row=i)
        vals = []
        for name, cell in zip(header, row):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"not a number: {cell!r}", row=i, column=name) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite value {cell!r}", row=i, column=name)
            vals.append(v)
        body.append(vals)
    return header, np.array(body, dtype=float).reshape(len(body), len(header))


def ingest_csv(path, response="y", intercept=False, standardize=False, return_transform=False):
    """Read a headered CSV into a :class:`BinaryDataset`.

    Non-response columns become the design matrix, in file order. With
    ``standardize`` each of them is centred and scaled to standard
    deviation 0.5; a constant column is left as is with a warning. With
    ``intercept`` a leading column of ones named ``(Intercept)`` is added
    after standardization.

    Raises
    ------
    ParseError
        Malformed file; the message names the row and column.
    NonBinaryResponse
        The response column holds a value other than 0 or 1.
    """
    header, table = _read_table(path)
    if response not in header:
        raise ParseError(f"response column {response!r} not found", row=1, column=response)
    j = header.index(response)
    y = table[:, j]
    bad = np.flatnonzero((y != 0) & (y != 1))
    if bad.size:
        raise NonBinaryResponse(
            f"response {response!r} has value {y[bad[0]]:g} at row {bad[0] + 2}; expected 0 or 1"
        )
    names = [h for k, h in enumerate(header) if k != j]
    X = np.delete(table, j, axis=1)
    if not names and not intercept:
        raise ParseError("no covariate columns and no intercept requested")
    transform = None
    if standardize and names:
        transform = _fit_standardizer(X, names)
        X = transform.apply(X)
    if intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
        names = [INTERCEPT_NAME] + names
    data = BinaryDataset(y.astype(int), X, names)
    return (data, transform) if return_transform else data


def _fit_standardizer(X, names):
    if X.shape[0] < 2:
        raise ParseError("standardization needs at least two rows")
    center = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    scale = np.ones_like(sd)
    for k, name in enumerate(names):
        if sd[k] > 0:
            scale[k] = sd[k] / TARGET_SD
        else:
            center[k] = 0.0
            warnings.warn(f"column {name!r} is constant and was not standardized", ConstantColumn)
    return Standardizer(tuple(names), center, scale)


def _read_new_data(path, names, transform, intercept):
    header, table = _read_table(path)
    raw_names = [n for n in names if not (intercept and n == INTERCEPT_NAME)]
    missing = [n for n in raw_names if n not in header]
    if missing:
        raise ParseError(f"new data lacks column {missing[0]!r}", row=1, column=missing[0])
    X = table[:, [header.index(n) for n in raw_names]] if raw_names else np.zeros((table.shape[0], 0))
    if transform is not None:
        X = transform.apply(X)
    if intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    return X


# -- prior -----------------------------------------------------------------


def _parse_mean(text, p):
    try:
        vals = [float(v) for v in str(text).split(",")]
    except ValueError:
        raise ConfigError(f"--prior-mean must be a number or comma list, got {text!r}") from None
    if len(vals) == 1:
        return np.full(p, vals[0])
    if len(vals) != p:
        raise ConfigError(f"--prior-mean has {len(vals)} entries but the design has {p} columns")
    return np.array(vals)


def _prior(args, p):
    xi = _parse_mean(args.prior_mean, p)
    if args.prior_cov_file:
        try:
            Omega = np.atleast_2d(np.loadtxt(args.prior_cov_file, delimiter=",", ndmin=2))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read --prior-cov-file: {exc}") from None
        if Omega.shape != (p, p):
            raise ConfigError(f"prior covariance must be {p}x{p}, got {Omega.shape[0]}x{Omega.shape[1]}")
        return xi, Omega, {"mean": xi.tolist(), "cov_file": args.prior_cov_file}
    scale = args.prior_scale
    if scale is None:
        scale = DEFAULT_PRIOR_SCALE
        print(f"note: no prior covariance given; using {scale:g} * I", file=sys.stderr)
    if not scale > 0:
        raise ConfigError("--prior-scale must be positive")
    return xi, scale * np.eye(p), {"mean": xi.tolist(), "scale": scale}


# -- reports ---------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _base_report(args, command):
    return {
        "command": command,
        "version": __version__,
        "seed": args.seed,
        "accuracy": args.accuracy,
    }


def _emit(report, out):
    text = json.dumps(_clean(report), indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _load(args):
    data, transform = ingest_csv(
        args.data, args.response, args.intercept, args.standardize, return_transform=True
    )
    print(f"read {args.data}: n={data.n}, p={data.p}", file=sys.stderr)
    return data, transform


# -- commands --------------------------------------------------------------


def cmd_fit(args):
    data, _ = _load(args)
    xi, Omega, prior = _prior(args, data.p)
    fit = fit_gaussian_prior(data, xi, Omega, accuracy=args.accuracy, seed=args.seed)
    mean, mean_err = posterior_mean(fit, return_error=True)
    draws = sample_posterior(fit, args.draws, args.seed).draws
    ci = [credible_interval(fit, j, 0.95, draws=draws) for j in range(data.p)]
    report = _base_report(args, "fit")
    report.update(
        n=data.n,
        p=data.p,
        features=list(data.feature_names),
        prior=prior,
        draws=args.draws,
        posterior={
            "latent_dim": fit.posterior.n,
            "xi": fit.posterior.xi,
            "omega_diag": np.diag(fit.posterior.omega_mat),
            "gamma": fit.posterior.gamma,
        },
        posterior_mean=mean,
        ci_level=0.95,
        ci_lo=[c[0] for c in ci],
        ci_hi=[c[1] for c in ci],
        log_evidence=fit.log_evidence,
        rel_err={"log_evidence": fit.evidence_rel_error, "posterior_mean_abs": mean_err},
    )
    return report


def cmd_sample(args):
    if not args.out_draws:
        raise ConfigError("sample needs --draws-file for the draws CSV")
    data, _ = _load(args)
    xi, Omega, prior = _prior(args, data.p)
    fit = fit_gaussian_prior(data, xi, Omega, accuracy=args.accuracy, seed=args.seed)
    batch = sample_posterior(fit, args.draws, args.seed)
    with open(args.out_draws, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(data.feature_names)
        for row in batch.draws:
            w.writerow([repr(float(v)) for v in row])
    ess = [effective_sample_size(batch.draws[:, j]) for j in range(data.p)]
    report = _base_report(args, "sample")
    report.update(
        n=data.n,
        p=data.p,
        prior=prior,
        draws=args.draws,
        draws_file=args.out_draws,
        acceptance_rate=batch.acceptance_rate,
        ess=ess,
        log_evidence=fit.log_evidence,
        rel_err={"log_evidence": fit.evidence_rel_error},
    )
    return report


def cmd_predict(args):
    if not args.new_data:
        raise ConfigError("predict needs --new-data")
    data, transform = _load(args)
    xi, Omega, prior = _prior(args, data.p)
    fit = fit_gaussian_prior(data, xi, Omega, accuracy=args.accuracy, seed=args.seed)
    X_new = _read_new_data(args.new_data, data.feature_names, transform, args.intercept)
    probs, probs0, errs = [], [], []
    for x in X_new:
        p1, e1 = predict_prob(fit, x, 1, return_error=True)
        p0, e0 = predict_prob(fit, x, 0, return_error=True)
        probs.append(p1)
        probs0.append(p0)
        errs.append(max(e1, e0))
    report = _base_report(args, "predict")
    report.update(
        n=data.n,
        p=data.p,
        prior=prior,
        prob=probs,
        prob_y0=probs0,
        rel_err=errs,
        log_evidence=fit.log_evidence,
    )
    return report


def _read_models(path, data, args):
    try:
        with open(path, encoding="utf-8") as fh:
            spec = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc.msg} (line {exc.lineno})") from None
    entries = spec.get("models") if isinstance(spec, dict) else spec
    if not isinstance(entries, list):
        raise ConfigError("models file must hold a list of models or {\"models\": [...]}")
    if not entries:
        raise EmptyModelSet("models file lists no models")
    names = list(data.feature_names)
    models = []
    for k, m in enumerate(entries):
        cols = []
        for c in m.get("columns", []):
            if isinstance(c, str):
                if c not in names:
                    raise ConfigError(f"model {k}: unknown column {c!r}")
                cols.append(names.index(c))
            else:
                cols.append(int(c))
        if any(c < 0 or c >= data.p for c in cols):
            raise ConfigError(f"model {k}: column index out of range")
        scale = float(m.get("prior_scale", args.prior_scale or DEFAULT_PRIOR_SCALE))
        models.append(
            ModelSpec(
                tuple(cols),
                float(m.get("prior_mean", 0.0)),
                scale,
                float(m.get("prior_prob", 1.0)),
                m.get("name", f"model_{k}"),
            )
        )
    return models


def cmd_evidence(args):
    data, _ = _load(args)
    report = _base_report(args, "evidence")
    if args.models_file:
        models = _read_models(args.models_file, data, args)
    else:
        xi, Omega, prior = _prior(args, data.p)
        models = [ModelSpec(tuple(range(data.p)), xi, Omega, 1.0, "full")]
        report["prior"] = prior
    out = []
    for m in models:
        lml, err = log_marginal_likelihood(m, data, args.accuracy, args.seed, return_error=True)
        out.append({"name": m.name, "columns": list(m.columns), "log_evidence": lml, "rel_err": err})
    report.update(n=data.n, p=data.p, models=out)
    return report


def cmd_select(args):
    if not args.models_file:
        raise ConfigError("select needs --models-file")
    data, _ = _load(args)
    models = _read_models(args.models_file, data, args)
    post = model_posterior(models, data, args.accuracy, args.seed)
    report = _base_report(args, "select")
    report.update(
        n=data.n,
        p=data.p,
        models=[
            {"name": nm, "columns": list(m.columns), "probability": pr, "log_evidence": le, "rel_err": er}
            for nm, m, pr, le, er in zip(
                post.names, models, post.probabilities, post.log_evidence, post.rel_errors
            )
        ],
        log_bayes_factors=post.log_bayes_factors,
        log_evidence=post.log_evidence,
        rel_err=post.rel_errors,
    )
    return report


def cmd_bench(args):
    data, _ = _load(args)
    xi, Omega, prior = _prior(args, data.p)
    rep = compare_samplers(
        data,
        xi,
        Omega,
        R=args.draws,
        burn_in=args.burn_in,
        seed=args.seed,
        accuracy=args.accuracy,
        closed_form=not args.skip_closed_form,
    )
    d = rep.to_dict()
    report = _base_report(args, "bench")
    report.update(d)
    report.update(
        prior=prior,
        samples_per_sec={"exact": d["exact"]["samples_per_sec"], "gibbs": d["gibbs"]["samples_per_sec"]},
        ess={"exact": d["exact"]["ess"], "gibbs": d["gibbs"]["ess"]},
        rel_err={"posterior_mean_abs": d["closed_form_err"]},
    )
    return report


COMMANDS = {
    "fit": cmd_fit,
    "sample": cmd_sample,
    "predict": cmd_predict,
    "evidence": cmd_evidence,
    "select": cmd_select,
    "bench": cmd_bench,
}
NEEDS_SEED = {"sample", "bench"}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", required=True, help="training CSV with a header row")
    common.add_argument("--response", default="y", help="name of the 0/1 response column")
    common.add_argument("--intercept", action="store_true", help="prepend a column of ones")
    common.add_argument(
        "--standardize", action="store_true", help="scale covariates to mean 0 and sd 0.5"
    )
    common.add_argument("--prior-scale", type=float, default=None, help="prior covariance c * I (default 16)")
    common.add_argument("--prior-mean", default="0", help="prior mean: scalar or comma-separated vector")
    common.add_argument("--prior-cov-file", default=None, help="CSV file holding a full prior covariance")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--draws", type=int, default=None, help="posterior draws R")
    common.add_argument("--accuracy", type=float, default=DEFAULT_ACCURACY, help="orthant relative-error target")
    common.add_argument("--out", default=None, help="write the JSON report here instead of stdout")

    parser = argparse.ArgumentParser(
        prog="sunprobit", description="Exact conjugate Bayesian probit regression."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fit", parents=[common], help="posterior means, 95%% intervals and evidence")
    p = sub.add_parser("sample", parents=[common], help="write exact posterior draws to CSV")
    p.add_argument("--draws-file", dest="out_draws", default=None, help="CSV file for the draws")
    p = sub.add_parser("predict", parents=[common], help="predictive probabilities for new rows")
    p.add_argument("--new-data", default=None, help="CSV with the same covariate columns")
    p = sub.add_parser("evidence", parents=[common], help="log marginal likelihood per model")
    p.add_argument("--models-file", default=None, help="JSON list of candidate models")
    p = sub.add_parser("select", parents=[common], help="posterior model probabilities")
    p.add_argument("--models-file", default=None, help="JSON list of candidate models")
    p = sub.add_parser("bench", parents=[common], help="exact sampler against the Gibbs baseline")
    p.add_argument("--burn-in", type=int, default=DEFAULT_BURN_IN)
    p.add_argument(
        "--skip-closed-form", action="store_true", help="do not compute the closed-form posterior mean"
    )
    return parser


def _validate(args):
    if args.command in NEEDS_SEED and args.seed is None:
        raise ConfigError(f"{args.command} requires --seed")
    if args.seed is None:
        args.seed = 0
    if args.seed < 0:
        raise ConfigError("--seed must be non-negative")
    if args.draws is None:
        args.draws = DEFAULT_DRAWS if args.command == "bench" else 10_000
    if args.draws < 1:
        raise ConfigError("--draws must be positive")
    if not 0 < args.accuracy <= 0.1:
        raise ConfigError("--accuracy must lie in (0, 0.1]")
    if getattr(args, "burn_in", 0) < 0:
        raise ConfigError("--burn-in must be non-negative")


CONFIG_ERRORS = (ConfigError, ParseError, NonBinaryResponse, DimensionMismatch, EmptyModelSet, IndexOutOfRange)
NUMERICAL_ERRORS = (
    NotPositiveDefinite,
    RankDeficient,
    InfeasibleRegion,
    np.linalg.LinAlgError,
    FloatingPointError,
    OverflowError,
    RuntimeError,
)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _validate(args)
        report = COMMANDS[args.command](args)
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        diag = {"command": args.command, "error": type(exc).__name__, "message": str(exc), "version": __version__}
        _emit(diag, None)
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _emit(report, args.out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
