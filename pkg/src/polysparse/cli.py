"""
Command line interface.

Subcommands::

    rank        score inputs and mark the top p'
    fit         fit one model (exact, lasso, kernel-ridge, ridge)
    experiment  run a synthetic benchmark from an INI config
    validate    hyperparameter selection on repeated train/validation/test splits
    summarize   aggregate a raw results CSV per cell
    synth       write a synthetic instance to CSV

Exit status is 0 on success, 1 for usage errors, 2 for data errors and 3
for numerical failures.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basis import MonomialIndex, enumerate_basis
from .data import (NOISELESS_SNR, accuracy_pct, false_alarm_pct, gen_synthetic,
                   load_csv, make_folds, test_error, write_synthetic)
from .errors import DataError, NumericalError
from .experiments import (load_config, read_results, run_experiment, summarize,
                          write_summary, _grid)
from .kernel import polynomial_kernel, ridge_dual_solve
from .lasso import debias_refit, path_to_support, ridge_fit
from .ranking import default_p_prime, energy_gamma, rank_inputs, select_top
from .solver import solve

log = logging.getLogger("polysparse")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
METHODS = ("exact", "lasso", "kernel-ridge", "ridge")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- inputs ----------------------------------------------------------------

def parse_synthetic_spec(text: str) -> dict:
    """``"p=10,k=3,ell=5,r=2,n=200,snr=400,seed=0"`` to keyword arguments."""
    spec = {"p": 10, "k": 3, "ell": 5, "r": 2, "n": 200, "snr": 400.0,
            "seed": 0, "n_test": 0}
    for part in text.split(","):
        if not part.strip():
            continue
        if "=" not in part:
            raise UsageError(f"bad synthetic spec item {part!r}")
        key, value = (s.strip() for s in part.split("=", 1))
        if key not in spec:
            raise UsageError(f"unknown synthetic spec key {key!r}")
        if key == "snr":
            spec[key] = NOISELESS_SNR if value == "inf" else float(value)
        else:
            spec[key] = int(value)
    return spec


class Source:
    """Training rows plus optional held-out rows and ground truth."""

    def __init__(self, X, Y, names, X_test=None, Y_test=None, truth=None,
                 catalog=None):
        self.X, self.Y, self.names = X, Y, names
        self.X_test, self.Y_test = X_test, Y_test
        self.truth, self.catalog = truth, catalog


def load_source(args) -> Source:
    if getattr(args, "synthetic", None):
        spec = parse_synthetic_spec(args.synthetic)
        inst = gen_synthetic(**spec)
        names = [f"x{i + 1}" for i in range(spec["p"])]
        has_test = spec["n_test"] > 0
        return Source(inst.X, inst.Y, names,
                      inst.X_test if has_test else None,
                      inst.Y_test if has_test else None,
                      truth=inst.true_monomials, catalog=inst.catalog)
    if not getattr(args, "input", None):
        raise UsageError("one of --input or --synthetic is required")
    ds = load_csv(args.input, _column(args.response))
    for msg in ds.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    X_test = Y_test = None
    if getattr(args, "test", None):
        test = load_csv(args.test, _column(args.response))
        # rescale with the training norms, matched by column name
        missing = [c for c in ds.columns if c not in test.columns]
        if missing:
            raise DataError(f"{args.test}: missing input column",
                            column=missing[0])
        idx = [test.columns.index(c) for c in ds.columns]
        X_test = test.X[:, idx] * test.norms[idx] / ds.norms
        Y_test = test.Y
    return Source(ds.X, ds.Y, ds.columns, X_test, Y_test)


def _column(value):
    try:
        return int(value)
    except (TypeError, ValueError):
        return value


def _reduce_inputs(src, r, p_prime, k):
    p = src.X.shape[1]
    p_prime = p_prime or default_p_prime(p, k)
    if p_prime >= p:
        return np.arange(p), None
    ranking = rank_inputs(src.X, src.Y, r)
    return select_top(ranking, p_prime), ranking


def _comment_header(args, extra=()):
    resolved = {k: v for k, v in sorted(vars(args).items())
                if k not in ("func", "output", "model_out") and not callable(v)}
    text = json.dumps(resolved, sort_keys=True, default=str)
    digest = hashlib.sha256(text.encode()).hexdigest()
    return [f"# polysparse {__version__}", f"# config-sha256 {digest}",
            f"# config {text}", *extra]


def _write_csv(path, header, fieldnames, rows):
    out = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        for line in header:
            out.write(line + "\n")
        writer = csv.DictWriter(out, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    finally:
        if out is not sys.stdout:
            out.close()


# --- models ----------------------------------------------------------------

def fit_model(method, X, Y, r, k, ell, gamma, time_limit=120.0, gap=1e-6,
              inputs=None, validation=None):
    """Fit one model on rows ``X`` and return a JSON-serializable dict.

    ``inputs`` restricts the polynomial to a subset of columns (used for
    ``exact`` and ``lasso``).  ``gamma=None`` picks the feature-energy
    rule.
    """
    X = np.asarray(X, dtype=np.float64)
    p = X.shape[1]
    inputs = np.arange(p) if inputs is None else np.asarray(inputs)
    if method == "kernel-ridge":
        gamma = gamma or energy_gamma(X, r)
        alpha = ridge_dual_solve(polynomial_kernel(X, r), Y, gamma).alpha
        return {"method": method, "r": r, "p": p, "gamma": gamma,
                "alpha": alpha.tolist(), "X_train": X.tolist()}
    if method == "ridge":
        gamma = gamma or energy_gamma(X, 1)
        cat = enumerate_basis(p, 1)
        w = ridge_fit(cat.feature_map(X), Y, gamma)
        return {"method": method, "r": 1, "p": p, "gamma": gamma,
                "inputs": list(range(p)),
                "exponents": cat.exponents.tolist(),
                "scaling": cat.scaling.tolist(), "coefficients": w.tolist()}

    sub = enumerate_basis(inputs.size, r)
    Xs = X[:, inputs]
    gamma = gamma or energy_gamma(Xs, r)
    report = {}
    if method == "exact":
        fit = solve(Xs, Y, sub, k=min(k, inputs.size), ell=min(ell, sub.f),
                    gamma=gamma, time_limit=time_limit, gap=gap)
        support, coef = fit.support, fit.coefficients
        report = {key: _plain(v) for key, v in fit.diagnostics.as_record().items()}
    elif method == "lasso":
        Phi = sub.feature_map(Xs)
        point = path_to_support(Phi, Y, gamma, min(ell, sub.f))
        support = point.support
        val = None
        if validation is not None:
            val = (sub.feature_map(np.asarray(validation[0])[:, inputs]),
                   validation[1])
        coef, refit_gamma = debias_refit(Phi, Y, support,
                                         gamma=None if val else gamma,
                                         validation=val)
        report = {"lambda": point.lam, "converged": point.converged,
                  "refit_gamma": refit_gamma}
    else:
        raise UsageError(f"unknown method {method!r}; choose from {METHODS}")
    return {"method": method, "r": r, "p": p, "gamma": gamma,
            "inputs": inputs.tolist(),
            "exponents": sub.exponents[support].tolist(),
            "scaling": sub.scaling[support].tolist(),
            "support": np.asarray(support).tolist(),
            "coefficients": np.asarray(coef).tolist(), "report": report}


def predict_model(model: dict, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if model["method"] == "kernel-ridge":
        K = polynomial_kernel(X, model["r"], np.asarray(model["X_train"]))
        return model["gamma"] * K @ np.asarray(model["alpha"])
    Xs = X[:, model["inputs"]]
    E = np.asarray(model["exponents"], dtype=np.int64).reshape(-1, Xs.shape[1])
    cols = np.prod(Xs[:, None, :] ** E[None, :, :], axis=2)
    cols = cols * np.asarray(model["scaling"])
    return cols @ np.asarray(model["coefficients"])


def model_labels(model: dict, names) -> list:
    sub_names = [names[i] for i in model.get("inputs", range(len(names)))]
    return [MonomialIndex(tuple(e)).label(sub_names) for e in model["exponents"]]


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


# --- commands --------------------------------------------------------------

def cmd_rank(args):
    src = load_source(args)
    p = src.X.shape[1]
    p_prime = args.p_prime or p
    if not 1 <= p_prime <= p:
        raise UsageError(f"--p-prime must lie in [1, {p}]")
    ranking = rank_inputs(src.X, src.Y, args.r, gamma=args.gamma)
    chosen = set(select_top(ranking, p_prime).tolist())
    rows = []
    for pos, i in enumerate(ranking.order):
        rows.append({"input_index": int(i), "name": src.names[i],
                     "score": repr(float(ranking.scores[i])), "rank": pos + 1,
                     "selected": int(i in chosen)})
    _write_csv(args.output, _comment_header(args, [f"# gamma {ranking.gamma!r}"]),
               ["input_index", "name", "score", "rank", "selected"], rows)
    return EXIT_OK


def cmd_fit(args):
    src = load_source(args)
    inputs = None
    if args.method in ("exact", "lasso"):
        inputs, _ = _reduce_inputs(src, args.r, args.p_prime, args.k)
    model = fit_model(args.method, src.X, src.Y, args.r, args.k, args.ell,
                      args.gamma, args.time_limit, args.gap, inputs)
    model["labels"] = model_labels(model, src.names) if "exponents" in model else []
    summary = {"method": args.method, "gamma": model["gamma"]}
    if "report" in model:
        summary.update(model["report"])
        if model["report"].get("termination") == "limit":
            print(f"warning: exact solve stopped at a limit with relative gap "
                  f"{model['report']['gap']:.3g}", file=sys.stderr)
    if src.X_test is not None:
        summary["test_error"] = test_error(predict_model(model, src.X_test),
                                           None, src.Y_test)
    if src.truth is not None and "exponents" in model:
        cat = src.catalog
        found = sorted(cat.index_of(_embed(e, model["inputs"], cat.p))
                       for e in model["exponents"])
        summary["accuracy"] = accuracy_pct(found, src.truth)
        summary["false_alarm"] = false_alarm_pct(found, src.truth)
    summary["support"] = model.get("labels", [])
    model["summary"] = summary
    if args.model_out:
        Path(args.model_out).write_text(json.dumps(model, indent=2, default=_plain))
    print(json.dumps(summary, indent=2, default=_plain))
    return EXIT_OK


def _embed(exponents, inputs, p):
    e = np.zeros(p, dtype=np.int64)
    e[np.asarray(inputs)] = exponents
    return e


def cmd_experiment(args):
    cfg = load_config(args.config, args.set or (), kind=args.kind)
    if args.output:
        cfg.output = args.output
    if args.workers:
        cfg.workers = args.workers

    def progress(task, batch):
        if not args.quiet:
            errs = [b["error"] for b in batch if b.get("error")]
            status = f"error: {errs[0]}" if errs else "ok"
            print(f"p={task[0]} n={task[1]} seed={task[2]} {status}",
                  file=sys.stderr)

    rows = run_experiment(cfg, progress=progress)
    failed = sum(1 for r in rows if r.get("error"))
    print(f"wrote {len(rows)} rows to {cfg.output} ({failed} failed)")
    return EXIT_OK


def cmd_summarize(args):
    rows = read_results(args.results)
    if not rows:
        raise DataError(f"{args.results}: no result rows")
    summary = summarize(rows)
    header = _comment_header(args)
    if args.output in (None, "-"):
        names = list(dict.fromkeys(k for rec in summary for k in rec))
        _write_csv(None, header, names, summary)
    else:
        write_summary(summary, args.output, header)
    return EXIT_OK


def cmd_synth(args):
    spec = parse_synthetic_spec(args.spec)
    inst = gen_synthetic(**spec)
    path, meta = write_synthetic(inst, args.output)
    print(f"wrote {path} and {meta}")
    return EXIT_OK


SELECTION_RULES = ("min", "one-se")


def validate_pipeline(X, Y, folds, r_grid, k_grid, ell_grid, gamma_grid,
                      p_prime=0, time_limit=120.0, gap=1e-6, rule="min"):
    """Select ``(r, k, ell, gamma)`` on each fold's validation rows.

    ``rule="min"`` keeps the grid point with the lowest validation error.
    ``rule="one-se"`` keeps the sparsest point (smallest ``ell``, then
    ``k``, then ``r``) whose validation error is within one standard error
    of that minimum; the standard error of the test-error statistic is the
    sample standard deviation of the absolute validation residuals.
    ``gamma_grid`` entries of 0 mean the feature-energy rule.  Returns one
    record per fold.
    """
    if rule not in SELECTION_RULES:
        raise UsageError(f"rule must be one of {SELECTION_RULES}, got {rule!r}")
    records = []
    for fold_id, fold in enumerate(folds):
        Xtr, Ytr = X[fold.train], Y[fold.train]
        Xva, Yva = X[fold.validation], Y[fold.validation]
        Xte, Yte = X[fold.test], Y[fold.test]
        candidates = []
        for r in r_grid:
            inputs, _ = _reduce_inputs(Source(Xtr, Ytr, None), r, p_prime,
                                       max(k_grid))
            for k, ell, gamma in itertools.product(k_grid, ell_grid, gamma_grid):
                if k > inputs.size:
                    continue
                model = fit_model("exact", Xtr, Ytr, r, k, ell, gamma or None,
                                  time_limit, gap, inputs)
                resid = np.abs(Yva - predict_model(model, Xva))
                err = float(resid.sum() / np.sqrt(resid.size))
                se = float(np.std(resid, ddof=1)) if resid.size > 1 else 0.0
                candidates.append((err, se, r, k, ell, model))
        best = min(candidates, key=lambda c: c[0])
        if rule == "one-se":
            limit = best[0] + best[1]
            best = min((c for c in candidates if c[0] <= limit),
                       key=lambda c: (c[4], c[3], c[2], c[0]))
        err, _, r, k, ell, model = best
        records.append({"fold": fold_id, "r": r, "k": k, "ell": ell,
                        "gamma": model["gamma"], "validation_error": err,
                        "test_error": test_error(predict_model(model, Xte),
                                                 None, Yte),
                        "support_size": len(model["coefficients"])})
    return records


def cmd_validate(args):
    src = load_source(args)
    folds = make_folds(src.X.shape[0], args.folds, args.seed)
    records = validate_pipeline(
        src.X, src.Y, folds, _ints(args.r_grid), _ints(args.k_grid),
        _ints(args.ell_grid), _floats(args.gamma_grid), args.p_prime,
        args.time_limit, args.gap, args.rule)
    mean_te = float(np.mean([r["test_error"] for r in records]))
    fields = ["fold", "r", "k", "ell", "gamma", "validation_error",
              "test_error", "support_size"]
    _write_csv(args.output, _comment_header(args, [f"# mean_test_error {mean_te!r}"]),
               fields, records)
    if args.output not in (None, "-"):
        print(f"mean test error {mean_te:.6g} over {len(records)} folds")
    return EXIT_OK


def _ints(text):
    return _grid(text, int)


def _floats(text):
    if text in (None, "", "auto"):
        return [0.0]
    return [0.0 if t.strip() == "auto" else float(t) for t in text.split(",")]


# --- parser ----------------------------------------------------------------

def _add_source(p, test=False):
    p.add_argument("--input", help="CSV file with a header row")
    p.add_argument("--response", default="y",
                   help="response column name or 0-based position (default: y)")
    p.add_argument("--synthetic", metavar="SPEC",
                   help="generate data instead, e.g. 'p=10,k=3,ell=5,n=200,seed=0'")
    if test:
        p.add_argument("--test", help="held-out CSV with the same columns")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="polysparse", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("rank", help="rank inputs by kernel coefficient norm")
    _add_source(p)
    p.add_argument("--r", type=int, default=2)
    p.add_argument("--gamma", type=float, default=None,
                   help="ridge weight (default 1/(n var Y))")
    p.add_argument("--p-prime", type=int, default=0,
                   help="number of inputs to mark selected (default all)")
    p.add_argument("--output", "-o", default="-")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("fit", help="fit one model")
    _add_source(p, test=True)
    p.add_argument("--method", choices=METHODS, default="exact")
    p.add_argument("--r", type=int, default=2)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--ell", type=int, default=5)
    p.add_argument("--gamma", type=float, default=None,
                   help="ridge weight (default f / trace K)")
    p.add_argument("--p-prime", type=int, default=0,
                   help="inputs kept after ranking (default min(p, max(2k, 20)))")
    p.add_argument("--time-limit", type=float, default=120.0)
    p.add_argument("--gap", type=float, default=1e-6)
    p.add_argument("--model-out", help="write the fitted model as JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("experiment", help="run a synthetic benchmark")
    p.add_argument("--config", help="INI file with an [experiment] section")
    p.add_argument("--kind", choices=("phase_transition", "path", "ranking_coverage"))
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config value (repeatable)")
    p.add_argument("--output", "-o")
    p.add_argument("--workers", type=int)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("validate", help="select hyperparameters on folds")
    _add_source(p)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--r-grid", default="1..3")
    p.add_argument("--k-grid", default="1..5")
    p.add_argument("--ell-grid", default="1..10")
    p.add_argument("--gamma-grid", default="auto",
                   help="comma list of ridge weights; 'auto' is f / trace K")
    p.add_argument("--p-prime", type=int, default=0)
    p.add_argument("--rule", choices=SELECTION_RULES, default="min",
                   help="lowest validation error, or the sparsest point "
                        "within one standard error of it")
    p.add_argument("--time-limit", type=float, default=120.0)
    p.add_argument("--gap", type=float, default=1e-6)
    p.add_argument("--output", "-o", default="-")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("summarize", help="aggregate raw experiment results")
    p.add_argument("results")
    p.add_argument("--output", "-o", default="-")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("spec", help="e.g. 'p=10,k=3,ell=5,r=2,n=200,snr=400,seed=0'")
    p.add_argument("--output", "-o", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, configparser.Error) as exc:
        print(f"polysparse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"polysparse: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"polysparse: numerical failure: {exc} {exc.diagnostics}",
              file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"polysparse: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
