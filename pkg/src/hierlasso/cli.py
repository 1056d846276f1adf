"""Command-line interface: ``hierlasso fit | predict | simulate``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import FAMILIES, DataError, StandardizationRecord, load_csv, parse_schema, standardize
from .hierarchy import extract_model
from .losses import mean_response
from .screening import SCREEN_MODES, ScreenConfig, ScreeningError
from .simulate import REGIMES, SimDesign, benchmark_curve, run_benchmark
from .solver import ConvergenceError, ModelFit, SolverConfig, fit_path, predict

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 0, 1, 2, 3
THREADS_ENV = "HIERLASSO_THREADS"

log = logging.getLogger("hierlasso")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _header(config: dict) -> str:
    return "# config: " + json.dumps(config, sort_keys=True, separators=(",", ":")) + "\n"


def _write_csv(path: Path, config: dict, header: list[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(_header(config))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------


def _resolved_config(args, command: str) -> dict:
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}
    cfg.pop("threads", None)  # does not affect results; kept out so outputs are byte-stable
    cfg["command"] = command
    cfg["version"] = __version__
    # JSON has no infinity; keep the value readable and round-trippable through float()
    return {k: (str(v) if isinstance(v, float) and not np.isfinite(v) else v) for k, v in cfg.items()}


def cmd_fit(args) -> int:
    if args.top_k is not None and args.screen != "adaptive":
        raise UsageError("--top-k requires --screen adaptive")
    schema = parse_schema(args.schema)
    raw = load_csv(args.data, schema, args.response, args.family)
    ds, record = standardize(raw)
    solver = SolverConfig(
        tol_kkt=args.tol,
        max_iter=args.max_iter,
        lambda_count=args.nlambda,
        lambda_min_ratio=args.lambda_min_ratio,
        seed=args.seed,
    )
    screen = ScreenConfig(mode=args.screen, top_k=args.top_k or 10)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _resolved_config(args, "fit")
    (out / "config.json").write_text(_dumps(config), encoding="utf-8")
    try:
        path = fit_path(
            ds, solver, screen, max_interactions=args.max_interactions, threads=args.threads
        )
    except ConvergenceError as err:
        diag = {
            "error": "non-convergence",
            "message": str(err),
            "lambda": err.lam,
            "lambda_index": err.index,
            "kkt_max_violation": err.fit.kkt_max_violation,
            "iterations": err.fit.iterations,
            "config": config,
        }
        (out / "error.json").write_text(_dumps(diag), encoding="utf-8")
        print(json.dumps(diag), file=sys.stderr)
        return EXIT_CONVERGENCE

    models = out / "models"
    models.mkdir(exist_ok=True)
    for stale in models.glob("lambda_*.json"):
        stale.unlink()
    summary, fitted_cols = [], []
    for k, fit in enumerate(path.fits):
        model = extract_model(fit, record)
        doc = {
            "config": config,
            "lambda_index": k,
            "standardization": record.to_dict(),
            "fit": fit.to_dict(),
            "model": model.to_dict(),
        }
        (models / f"lambda_{k:03d}.json").write_text(_dumps(doc), encoding="utf-8")
        n_int = len(fit.interactions)
        summary.append(
            [k, _fmt(fit.lam), len(fit.active) - n_int, n_int, _fmt(fit.objective),
             _fmt(fit.kkt_max_violation), fit.iterations]
        )
        fitted_cols.append(fit.fitted)
    _write_csv(
        out / "path_summary.csv", config,
        ["index", "lambda", "active_mains", "active_interactions", "objective",
         "kkt_max_violation", "iterations"],
        summary,
    )
    _write_csv(
        out / "screen_audit.csv", config,
        ["index", "lambda", "candidates", "strong_set", "kkt_failures", "refit_rounds", "checked"],
        [[k, _fmt(a.lam), a.candidates, a.strong_set, a.kkt_failures, a.refit_rounds, a.checked]
         for k, a in enumerate(path.audit)],
    )
    names = ds.names
    _write_csv(
        out / "discoveries.csv", config,
        ["rank", "variable_1", "variable_2", "lambda_index"],
        [[r + 1, names[i], names[j], k]
         for r, ((i, j), (_, k)) in enumerate(zip(path.discovered_pairs(), path.discoveries))],
    )
    F = np.column_stack(fitted_cols)
    _write_csv(
        out / "fitted.csv", config,
        ["row"] + [f"lambda_{k:03d}" for k in range(F.shape[1])],
        [[i] + [_fmt(v) for v in F[i]] for i in range(F.shape[0])],
    )
    print(f"{len(path.fits)} penalties fitted, {len(path.discoveries)} interactions discovered -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------


def load_model(path: str | Path) -> tuple[ModelFit, StandardizationRecord, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        fit = ModelFit.from_dict(doc["fit"])
        record = StandardizationRecord.from_dict(doc.get("standardization", {}))
    except FileNotFoundError:
        raise DataError(f"missing file: {path}") from None
    except (KeyError, ValueError, TypeError) as err:
        raise DataError(f"malformed model file {path}: {err}") from None
    return fit, record, doc


def cmd_predict(args) -> int:
    fit, record, doc = load_model(args.model)
    schema = parse_schema(fit.schema)
    raw = load_csv(args.data, schema, None, "gaussian")
    if args.parametrization == "theta":
        eta = extract_model(fit, record).predict(raw)
    else:
        eta = predict(fit, record.apply(raw))
    config = _resolved_config(args, "predict")
    header = ["row", "link"]
    rows = [[i, _fmt(v)] for i, v in enumerate(eta)]
    if fit.family == "binomial":
        prob = mean_response(eta, "binomial")
        header.append("probability")
        rows = [r + [_fmt(pv)] for r, pv in zip(rows, prob)]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out, config, header, rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.top_k is not None and args.screen != "adaptive":
        raise UsageError("--top-k requires --screen adaptive")
    base = {}
    if args.design:
        try:
            base = json.loads(Path(args.design).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DataError(f"missing file: {args.design}") from None
    for key in ("n", "p", "kind", "levels", "n_main", "n_int", "snr", "seed"):
        v = getattr(args, key)
        if v is not None:
            base[key] = v
    if isinstance(base.get("snr"), str):
        try:
            base["snr"] = float(base["snr"])
        except ValueError:
            raise UsageError(f"bad snr in design file: {base['snr']!r}") from None
    regimes = list(REGIMES) if args.regime == "all" else [args.regime]
    base.setdefault("seed", 0)
    designs = []
    for regime in regimes:
        try:
            designs.append(SimDesign(**{**base, "truth": regime}))
        except TypeError as err:
            raise UsageError(f"bad design file: {err}") from None
        except DataError as err:
            raise UsageError(f"infeasible design: {err}") from None
    solver = SolverConfig(lambda_count=args.nlambda, lambda_min_ratio=args.lambda_min_ratio)
    screen = ScreenConfig(mode=args.screen, top_k=args.top_k or 10)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = _resolved_config(args, "simulate")
    config["resolved_design"] = {
        k: (str(v) if isinstance(v, float) and not np.isfinite(v) else v) for k, v in sorted(base.items())
    }
    summary = {"config": config, "curves": {}}
    for design in designs:
        reps = run_benchmark(design, args.replicates, args.k_max, solver, screen, args.threads)
        curve = benchmark_curve(reps, args.k_max)
        curve.to_csv(out / f"fdr_{design.truth}.csv", _header({**config, "truth": design.truth}))
        rows = []
        for r, rep in enumerate(reps):
            truth = rep.truth.pair_set
            for k, (i, j) in enumerate(rep.discovered):
                rows.append([r, rep.design.seed, k + 1, i + 1, j + 1, int((i, j) in truth)])
        _write_csv(
            out / f"discoveries_{design.truth}.csv", {**config, "truth": design.truth},
            ["replicate", "seed", "rank", "variable_1", "variable_2", "true_interaction"],
            rows,
        )
        summary["curves"][design.truth] = {
            "mean_fdr": [float(v) for v in curve.mean],
            "se": [float(v) for v in curve.se],
        }
    (out / "summary.json").write_text(_dumps(summary), encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _ratio(s: str) -> float:
    v = float(s)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return v


def _path_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nlambda", type=_positive_int, default=50, help="grid size (default 50)")
    p.add_argument("--lambda-min-ratio", type=_ratio, default=0.01, help="smallest/largest penalty")
    p.add_argument("--screen", choices=SCREEN_MODES, default="strong")
    p.add_argument("--top-k", type=_positive_int, default=None, help="adaptive screen size")
    p.add_argument("--threads", type=_positive_int, default=None,
                   help=f"scoring threads (default ${THREADS_ENV} or CPU count)")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hierlasso", description="Hierarchical interaction selection with the group lasso.")
    parser.add_argument("--version", action="version", version=f"hierlasso {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    f = sub.add_parser("fit", help="fit a penalty path")
    f.add_argument("--data", required=True, help="training CSV with a header row")
    f.add_argument("--schema", required=True, help="'name:cat:L,name:cont,...' or @file")
    f.add_argument("--response", default="y", help="response column (default y)")
    f.add_argument("--family", choices=FAMILIES, default="gaussian")
    _path_flags(f)
    f.add_argument("--max-interactions", type=_positive_int, default=None)
    f.add_argument("--tol", type=float, default=1e-4, help="relative KKT tolerance")
    f.add_argument("--max-iter", type=_positive_int, default=5000)
    f.add_argument("--out", required=True, help="output directory")
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="predict from a saved model")
    pr.add_argument("--model", required=True, help="model JSON written by fit")
    pr.add_argument("--data", required=True)
    pr.add_argument("--parametrization", choices=("beta", "theta"), default="beta")
    pr.add_argument("--out", required=True, help="output CSV")
    pr.set_defaults(func=cmd_predict)

    s = sub.add_parser("simulate", help="false-discovery benchmark on synthetic data")
    s.add_argument("--design", help="JSON file with design fields (flags override it)")
    s.add_argument("--regime", choices=REGIMES + ("all",), default="all")
    s.add_argument("--n", type=_positive_int)
    s.add_argument("--p", type=_positive_int)
    s.add_argument("--kind", choices=("cont", "cat", "mixed"))
    s.add_argument("--levels", type=_positive_int)
    s.add_argument("--n-main", type=int)
    s.add_argument("--n-int", type=int)
    s.add_argument("--snr", type=float)
    s.add_argument("--replicates", type=_positive_int, default=20)
    s.add_argument("--k-max", type=_positive_int, default=10)
    _path_flags(s)
    s.set_defaults(seed=None, nlambda=100, lambda_min_ratio=1e-3)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: fit, predict or simulate")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        if getattr(args, "threads", 1) is None:
            args.threads = default_threads()
        return args.func(args)
    except UsageError as err:
        print(f"hierlasso: usage error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as err:
        print(f"hierlasso: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (ConvergenceError, ScreeningError) as err:
        print(f"hierlasso: non-convergence: {err}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except ValueError as err:
        print(f"hierlasso: usage error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
