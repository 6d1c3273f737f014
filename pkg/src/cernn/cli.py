"""Command-line entry point.

Every run writes its result to ``--output`` (CSV, or stdout for ``-``) and
a sidecar ``<output>.config.json`` holding the fully resolved argument list,
including the seed. Passing that sidecar back with ``--config`` replays the
run; any further arguments override the recorded ones.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import secrets
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .applications import em_cluster, fit_qda, fit_qda_pinv, fit_rda, select_qda, select_rda
from .errors import InvalidInputError, SingularMatrixError, UnderdeterminedError
from .io import dumps_json, format_float, model_to_dict, read_observations, write_long_csv, write_matrix, write_table
from .losses import BimodalSpec, DispersionSpec, bimodal_experiment, dispersion_experiment, path_at_condition_number
from .selection import CENTER_MODES, cv_select_kappa, cv_select_lambda
from .shrinkage import (
    CernnParams,
    alpha_hat,
    cernn_estimate,
    cnr_estimate,
    linear_shrinkage,
    lw_estimate,
    sample_estimate,
)
from .spectral import sample_covariance

__all__ = ["run", "main", "build_parser"]

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
THREADS_ENV = "CERNN_THREADS"


class UsageError(Exception):
    pass


# argument types ------------------------------------------------------------


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0 or not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _auto_or(conv):
    def parse(text: str):
        return "auto" if text == "auto" else conv(text)

    parse.__name__ = conv.__name__
    return parse


def _nonneg_float(text: str) -> float:
    v = float(text)
    if not v >= 0 or not np.isfinite(v):
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text}")
    return v


def _unit_float(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1], got {text}")
    return v


def _alpha(text: str):
    if text == "hat":
        return "hat"
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must be 'hat' or lie in (0, 1), got {text}")
    return v


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _int_list(text: str) -> list[int]:
    vals = _float_list(text)
    if any(v != int(v) or v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"expected comma-separated positive integers, got {text}")
    return [int(v) for v in vals]


def _lambda_list(text: str):
    return "auto" if text == "auto" else [_nonneg_float(t) for t in text.split(",")]


def _scenario(text: str):
    if text == "singleton":
        return text
    v = float(text)
    if not 0.0 <= v <= 0.4:
        raise argparse.ArgumentTypeError("scenario must be 'singleton' or a fraction in [0, 0.4]")
    return v


# parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--output", default="-", help="result file (default: stdout)")
    common.add_argument("--seed", type=_nonneg_int, help="random seed (default: drawn from OS entropy)")
    common.add_argument(
        "--threads", type=_nonneg_int, default=None, help=f"worker threads, 0 = all cores (default: ${THREADS_ENV} or 1)"
    )
    common.add_argument("--config", help="replay a sidecar config; later arguments override it")

    parser = argparse.ArgumentParser(prog="cernn", description="Nuclear-norm regularized covariance estimation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", parents=[common], help="estimate a covariance matrix from observations")
    est.add_argument("--input", required=True)
    est.add_argument("--method", choices=("sample", "cernn", "linear", "lw", "cnr"), default="cernn")
    est.add_argument("--lambda", dest="lam", type=_auto_or(_nonneg_float), default="auto")
    est.add_argument("--alpha", type=_alpha, default="hat")
    est.add_argument("--gamma", type=_unit_float, help="weight on the target for --method linear")
    est.add_argument("--kappa", type=_auto_or(_positive_float), default="auto", help="condition-number ceiling for cnr")
    _cv_flags(est)

    cv = sub.add_parser("cv", parents=[common], help="cross-validation curve for cernn or cnr")
    cv.add_argument("--input", required=True)
    cv.add_argument("--method", choices=("cernn", "cnr"), default="cernn")
    cv.add_argument("--alpha", type=_alpha, default="hat")
    _cv_flags(cv)

    disp = sub.add_parser("simulate-dispersion", parents=[common], help="sample eigenvalue dispersion under N(0, I)")
    disp.add_argument("--p", type=_positive_int, default=10)
    disp.add_argument("--n-list", type=_int_list, default=[5, 10, 20, 50, 100, 500])
    disp.add_argument("--trials", type=_positive_int, default=100)

    paths = sub.add_parser("simulate-paths", parents=[common], help="shrinkage paths at matched condition numbers")
    paths.add_argument("--eigenvalues", type=_float_list, default=[13.29, 5.73, 1.51, 0.55, 0.44])
    paths.add_argument("--kappas", type=_float_list, default=[25.0, 10.0, 5.0, 2.0])

    loss = sub.add_parser("simulate-loss", parents=[common], help="loss comparison on bimodal populations")
    loss.add_argument("--p", type=_positive_int, default=125)
    loss.add_argument("--scenario", type=_scenario, action="append", help="'singleton' or high fraction; repeatable")
    loss.add_argument("--ratio", type=_positive_float, action="append", help="p/n ratio; repeatable (default 4)")
    loss.add_argument("--upsilon", type=_positive_float, default=0.1)
    loss.add_argument("--trials", type=_positive_int, default=20)
    loss.add_argument("--full-scale", action="store_true", help="100 trials")
    loss.add_argument("--alpha", type=_alpha, default=0.5)
    loss.add_argument("--methods", default="cernn,cnr,lw")
    loss.add_argument("--folds", type=_positive_int, default=10)
    loss.add_argument("--grid-size", type=_positive_int, default=30)

    clus = sub.add_parser("cluster", parents=[common], help="Gaussian mixture clustering with penalized covariances")
    clus.add_argument("--input", required=True)
    clus.add_argument("--clusters", type=_positive_int, required=True)
    clus.add_argument("--lambda", dest="lam", type=_nonneg_float, required=True)
    clus.add_argument("--restarts", type=_positive_int, default=100)
    clus.add_argument("--max-iter", type=_positive_int, default=500)
    clus.add_argument("--tol", type=_positive_float, default=1e-7)
    clus.add_argument("--model", help="also write the fitted mixture as JSON")

    cls = sub.add_parser("classify", parents=[common], help="discriminant analysis; last training column is the label")
    cls.add_argument("--train", required=True)
    cls.add_argument("--test", required=True, help="features, optionally followed by a label column")
    cls.add_argument("--method", choices=("cernn", "rda", "pinv"), default="cernn")
    cls.add_argument("--lambda", dest="lam", type=_lambda_list, default="auto", help="'auto', one value, or one per class")
    cls.add_argument("--gamma", type=_auto_or(_unit_float), default="auto")
    cls.add_argument("--folds", type=_positive_int, default=5)
    cls.add_argument("--grid-size", type=_positive_int, default=10)
    cls.add_argument("--form", choices=("full", "displayed"), default="full")
    cls.add_argument("--model", help="also write the fitted classifier as JSON")
    return parser


def _cv_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--folds", type=_positive_int, default=5)
    p.add_argument("--grid-size", type=_positive_int, default=30)
    p.add_argument("--epsilon", type=_positive_float, default=1e-2)
    p.add_argument("--center", choices=CENTER_MODES, default="train")


# commands ------------------------------------------------------------------


def _alpha_value(args, spec_source):
    return alpha_hat(spec_source) if args.alpha == "hat" else args.alpha


def cmd_estimate(args, out):
    x = read_observations(args.input)
    s = sample_covariance(x)
    n = x.shape[0]
    result: dict = {"method": args.method, "n": n}
    if args.method == "sample":
        est = sample_estimate(s)
    elif args.method == "cernn":
        alpha = _alpha_value(args, s)
        lam = args.lam
        if lam == "auto":
            fixed = None if args.alpha == "hat" else args.alpha
            cv = cv_select_lambda(
                x, args.folds, seed=args.seed, center=args.center, alpha=fixed,
                epsilon=args.epsilon, grid_size=args.grid_size, threads=args.threads,
            )
            lam = cv.chosen
        est = cernn_estimate(s, CernnParams(n, lam, alpha))
        result.update({"lambda": lam, "alpha": alpha})
    elif args.method == "linear":
        if args.gamma is None:
            raise UsageError("--method linear requires --gamma")
        est = linear_shrinkage(s, args.gamma)
        result.update(est.params)
    elif args.method == "lw":
        est = lw_estimate(x)
        result.update(est.params)
    else:
        kappa = args.kappa
        if kappa == "auto":
            kappa = cv_select_kappa(
                x, args.folds, seed=args.seed, center=args.center, grid_size=args.grid_size, threads=args.threads
            ).chosen
        est = cnr_estimate(s, kappa)
        result.update(est.params)
    write_matrix(out, est.matrix)
    return result


def cmd_cv(args, out):
    x = read_observations(args.input)
    if args.method == "cernn":
        fixed = None if args.alpha == "hat" else args.alpha
        cv = cv_select_lambda(
            x, args.folds, seed=args.seed, center=args.center, alpha=fixed,
            epsilon=args.epsilon, grid_size=args.grid_size, threads=args.threads,
        )
        name = "lambda"
    else:
        cv = cv_select_kappa(x, args.folds, seed=args.seed, center=args.center, grid_size=args.grid_size, threads=args.threads)
        name = "kappa_max"
    write_table(out, (name, "score"), zip(cv.grid, cv.mean_scores))
    return {"method": args.method, name: cv.chosen}


def cmd_dispersion(args, out):
    spec = DispersionSpec(p=args.p, n_list=tuple(args.n_list), trials=args.trials, seed=args.seed)
    write_long_csv(out, dispersion_experiment(spec, threads=args.threads).rows())
    return {}


def cmd_paths(args, out):
    write_long_csv(out, path_at_condition_number(args.eigenvalues, args.kappas).rows())
    return {}


def cmd_loss(args, out):
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    trials = 100 if args.full_scale else args.trials
    alpha = None if args.alpha == "hat" else args.alpha
    rows = []
    for scenario in args.scenario or ["singleton"]:
        for ratio in args.ratio or [4.0]:
            spec = BimodalSpec(
                p=args.p, fraction_high=scenario, upsilon=args.upsilon, ratio=ratio,
                trials=trials, seed=args.seed, alpha=alpha,
            )
            rows.extend(bimodal_experiment(spec, methods, args.folds, grid_size=args.grid_size, threads=args.threads).rows)
    write_long_csv(out, rows)
    return {"trials": trials}


def _write_model(path, doc):
    Path(path).write_text(dumps_json(doc))


def cmd_cluster(args, out):
    x = read_observations(args.input)
    state, resp = em_cluster(
        x, args.clusters, args.lam, args.restarts, args.max_iter, args.tol, args.seed, threads=args.threads
    )
    header = ["label"] + [f"w{k + 1}" for k in range(args.clusters)]
    write_table(out, header, ([int(lab)] + list(w) for lab, w in zip(resp.labels, resp.w)))
    if args.model:
        _write_model(args.model, model_to_dict(state.classes, args.seed, {"objective": state.objective}))
    return {"objective": state.objective, "iterations": state.iteration, "pi": state.pi}


def _label_text(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else format_float(v)


def cmd_classify(args, out):
    train = read_observations(args.train)
    test = read_observations(args.test)
    if train.shape[1] < 2:
        raise InvalidInputError("training file needs at least one feature column and a label column")
    xtr, ytr = train[:, :-1], train[:, -1]
    p = xtr.shape[1]
    if test.shape[1] == p + 1:
        xte, yte = test[:, :-1], test[:, -1]
    elif test.shape[1] == p:
        xte, yte = test, None
    else:
        raise InvalidInputError(f"test file has {test.shape[1]} columns; expected {p} or {p + 1}")
    result: dict = {"method": args.method}
    if args.method == "cernn":
        if args.lam == "auto":
            model, cv = select_qda(
                xtr, ytr, args.folds, args.seed, grid_size=args.grid_size, form=args.form, threads=args.threads
            )
            result["cv_error"] = cv.cv_error
        else:
            lam = args.lam[0] if len(args.lam) == 1 else args.lam
            model = fit_qda(xtr, ytr, lam, form=args.form)
        result["lambda"] = [c.lam for c in model.classes]
    elif args.method == "rda":
        if args.gamma == "auto":
            model, cv = select_rda(xtr, ytr, args.folds, args.seed, form=args.form, threads=args.threads)
            result["cv_error"] = cv.cv_error
        else:
            model = fit_rda(xtr, ytr, args.gamma, form=args.form)
        result["gamma"] = model.meta["gamma"]
    else:
        model = fit_qda_pinv(xtr, ytr)
    pred = model.predict(xte)
    write_table(out, ("label",), ([_label_text(v)] for v in pred))
    if yte is not None:
        result["accuracy"] = float(np.mean(pred == yte))
    if args.model:
        extra = {"method": args.method, "labels": model.labels.astype(np.float64)}
        _write_model(args.model, model_to_dict(model.classes, args.seed, extra))
    return result


COMMANDS = {
    "estimate": cmd_estimate,
    "cv": cmd_cv,
    "simulate-dispersion": cmd_dispersion,
    "simulate-paths": cmd_paths,
    "simulate-loss": cmd_loss,
    "cluster": cmd_cluster,
    "classify": cmd_classify,
}


# driver --------------------------------------------------------------------


def _split_config(argv: list[str]) -> tuple[str | None, list[str]]:
    rest, path, i = [], None, 0
    while i < len(argv):
        a = argv[i]
        if a == "--config":
            if i + 1 >= len(argv):
                raise UsageError("--config needs a path")
            path, i = argv[i + 1], i + 2
            continue
        if a.startswith("--config="):
            path = a.split("=", 1)[1]
        else:
            rest.append(a)
        i += 1
    return path, rest


def _load_config(path: str) -> list[str]:
    try:
        doc = json.loads(Path(path).read_text())
        saved = doc["argv"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(saved, list) or not all(isinstance(a, str) for a in saved):
        raise UsageError(f"config {path}: 'argv' must be a list of strings")
    return saved


def _resolve_argv(argv: list[str]) -> list[str]:
    path, rest = _split_config(argv)
    if path is None:
        return rest
    saved = _load_config(path)
    # a bare override list has no subcommand; reuse the recorded one
    if rest and rest[0] in COMMANDS:
        rest = rest[1:]
    return saved + rest


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return 1
    try:
        v = int(raw)
    except ValueError as exc:
        raise UsageError(f"${THREADS_ENV} must be an integer, got {raw!r}") from exc
    if v < 0:
        raise UsageError(f"${THREADS_ENV} must be nonnegative")
    return v


def _sidecar(args, argv: list[str], result: dict) -> str:
    doc = {"command": args.command, "argv": argv, "seed": args.seed, "version": __version__, "result": result}
    return dumps_json(doc)


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _resolve_argv(argv)
        try:
            args = build_parser().parse_args(argv)
        except SystemExit as exc:
            return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
        if args.seed is None:
            args.seed = secrets.randbits(63)
            argv = argv + ["--seed", str(args.seed)]
        threads = _default_threads() if args.threads is None else args.threads
        args.threads = (os.cpu_count() or 1) if threads == 0 else threads

        buf = io.StringIO()
        result = COMMANDS[args.command](args, buf)
        sidecar = _sidecar(args, argv, result)
        if args.output == "-":
            sys.stdout.write(buf.getvalue())
            sys.stdout.flush()
            sys.stderr.write(sidecar)
        else:
            Path(args.output).write_text(buf.getvalue())
            Path(args.output + ".config.json").write_text(sidecar)
        return EXIT_OK
    except UsageError as exc:
        print(f"cernn: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SingularMatrixError, UnderdeterminedError, FloatingPointError) as exc:
        print(f"cernn: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InvalidInputError, OSError) as exc:
        print(f"cernn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())
