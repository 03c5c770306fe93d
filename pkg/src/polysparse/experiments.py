"""
Synthetic benchmark harness.

Three experiment kinds share one configuration type:

``phase_transition``
    exact solver and l1 baseline at the true sparsity across a grid of n.
``path``
    exact solver across requested ``ell`` at fixed n, with the baseline
    matched to the support size the exact solver returned.
``ranking_coverage``
    smallest ``p'`` whose top-ranked inputs cover every active input.

Each ``(cell, seed)`` pair is an independent task producing one or more
flat result rows.  Rows are appended to the output CSV as tasks finish,
in task order, so an interrupted run leaves a valid prefix.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import itertools
import math
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from . import __version__
from .basis import enumerate_basis
from .data import accuracy_pct, false_alarm_pct, gen_synthetic, test_error
from .lasso import debias_refit, path_to_support
from .ranking import energy_gamma, minimal_covering_size, rank_inputs, select_top
from .solver import solve

KINDS = ("phase_transition", "path", "ranking_coverage")

RESULT_FIELDS = ["experiment", "method", "seed", "n", "p", "p_prime", "k", "ell",
                 "r", "snr", "gamma", "support_size", "accuracy", "false_alarm",
                 "test_error", "test_error_refit", "wall_seconds", "cuts", "nodes",
                 "termination", "gap", "error"]


def _grid(text: str, cast=int) -> List:
    """Parse ``"1, 2, 5"`` or an inclusive range ``"2..16"``."""
    out = []
    for part in str(text).replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(cast(part))
    return out


@dataclass
class ExperimentConfig:
    """Resolved parameters of one experiment run.

    ``p_prime = 0`` keeps every input; ``gamma = 0`` selects the
    feature-energy rule :func:`~polysparse.ranking.energy_gamma`.
    ``k`` and ``ell`` describe the generating model; ``ell_fit`` lists the
    budgets requested from the solver in a ``path`` run.
    """

    kind: str = "phase_transition"
    n: List[int] = field(default_factory=lambda: [30, 60, 120, 240, 480])
    p: List[int] = field(default_factory=lambda: [10])
    p_prime: int = 0
    k: int = 10
    ell: int = 8
    ell_fit: List[int] = field(default_factory=lambda: list(range(2, 17)))
    r: int = 2
    gamma: float = 0.0
    snr: float = 400.0
    seeds: List[int] = field(default_factory=lambda: list(range(10)))
    time_limit: float = 120.0
    gap: float = 1e-6
    n_validation: int = 100
    n_test: int = 100
    workers: int = 1
    output: str = "results.csv"

    def validate(self):
        """Check every grid value against the operation preconditions."""
        errs = []
        if self.kind not in KINDS:
            errs.append(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.n or min(self.n) < 1:
            errs.append("n grid must be non-empty and positive")
        if not self.p or min(self.p) < 1:
            errs.append("p grid must be non-empty and positive")
        if self.r < 1:
            errs.append("r must be >= 1")
        if self.p and not 1 <= self.k <= min(self.p):
            errs.append(f"k must lie in [1, min(p)], got {self.k}")
        if self.p_prime and not self.k <= self.p_prime <= min(self.p or [0]):
            errs.append(f"p_prime must lie in [k, min(p)], got {self.p_prime}")
        if self.ell < 1:
            errs.append("ell must be >= 1")
        if self.p and self.ell > math.comb(self.k + self.r, self.r) - 1:
            errs.append(f"ell={self.ell} exceeds the monomials available on "
                        f"k={self.k} inputs")
        if self.kind == "path":
            f = math.comb((self.p_prime or min(self.p or [1])) + self.r, self.r)
            if not self.ell_fit or min(self.ell_fit) < 1 or max(self.ell_fit) > f:
                errs.append(f"ell_fit values must lie in [1, {f}]")
        if self.gamma < 0:
            errs.append("gamma must be positive, or 0 for the automatic rule")
        if not self.snr > 0:
            errs.append("snr must be positive")
        if not self.seeds:
            errs.append("seeds must be non-empty")
        if not self.time_limit > 0:
            errs.append("time_limit must be positive")
        if not 0 <= self.gap < 1:
            errs.append("gap must lie in [0, 1)")
        if self.kind != "ranking_coverage" and (self.n_test < 1 or self.n_validation < 1):
            errs.append("n_test and n_validation must be positive")
        if self.workers < 1:
            errs.append("workers must be >= 1")
        if errs:
            raise ValueError("; ".join(errs))
        return self

    def as_ini(self) -> str:
        lines = ["[experiment]"]
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                v = ", ".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.as_ini().encode()).hexdigest()


_LIST_FIELDS = {"n": int, "p": int, "ell_fit": int, "seeds": int}
_SCALAR_FIELDS = {f.name: f.type for f in fields(ExperimentConfig)
                  if f.name not in _LIST_FIELDS}


def _coerce(name, value):
    if name in _LIST_FIELDS:
        return _grid(value, _LIST_FIELDS[name])
    kind = _SCALAR_FIELDS.get(name)
    if kind is None:
        raise ValueError(f"unknown config key {name!r}")
    if kind in ("int", int):
        return int(value)
    if kind in ("float", float):
        return float(value)
    return str(value).strip()


def load_config(path=None, overrides: Sequence[str] = (),
                kind: str = None) -> ExperimentConfig:
    """Read an INI ``[experiment]`` section and apply ``key=value`` overrides."""
    values: Dict[str, object] = {}
    if path is not None:
        parser = configparser.ConfigParser()
        with open(path) as fh:
            parser.read_file(fh)
        if "experiment" not in parser:
            raise ValueError(f"{path}: missing [experiment] section")
        for key, value in parser["experiment"].items():
            values[key] = _coerce(key, value)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = _coerce(key.strip(), value)
    if kind is not None:
        values["kind"] = kind
    return ExperimentConfig(**values).validate()


# --- tasks -----------------------------------------------------------------

def lift_support(sub_catalog, inputs, catalog, support) -> np.ndarray:
    """Map monomial indices of a catalog on ``inputs`` to the full catalog."""
    out = []
    for j in support:
        e = np.zeros(catalog.p, dtype=np.int64)
        e[np.asarray(inputs)] = sub_catalog.exponents[j]
        out.append(catalog.index_of(e))
    return np.sort(np.asarray(out, dtype=np.int64))


def _instance(cfg, p, n, seed):
    inst = gen_synthetic(p=p, k=cfg.k, ell=cfg.ell, r=cfg.r, n=n, snr=cfg.snr,
                         seed=seed, n_test=cfg.n_validation + cfg.n_test)
    X_val, Y_val = inst.X_test[:cfg.n_validation], inst.Y_test[:cfg.n_validation]
    X_te, Y_te = inst.X_test[cfg.n_validation:], inst.Y_test[cfg.n_validation:]
    return inst, (X_val, Y_val), (X_te, Y_te)


def _reduce(cfg, inst, p):
    """Inputs kept after ranking, and the catalog on them."""
    if cfg.p_prime and cfg.p_prime < p:
        ranking = rank_inputs(inst.X, inst.Y, cfg.r)
        inputs = select_top(ranking, cfg.p_prime)
    else:
        inputs = np.arange(p)
    return inputs, enumerate_basis(inputs.size, cfg.r)


def _base_row(cfg, seed, n, p, inputs, gamma):
    return {"experiment": cfg.kind, "seed": seed, "n": n, "p": p,
            "p_prime": int(inputs.size), "k": cfg.k, "r": cfg.r,
            "snr": cfg.snr, "gamma": gamma, "error": ""}


def _refit_error(inst, inputs, sub, support, val, test):
    """Test error after a ridge refit on ``support`` tuned on validation rows."""
    Phi = sub.feature_map(inst.X[:, inputs])
    coef, _ = debias_refit(
        Phi, inst.Y, support,
        validation=(sub.feature_map(val[0][:, inputs]), val[1]))
    pred = sub.feature_map(test[0][:, inputs])[:, support] @ coef
    return test_error(pred, None, test[1])


def _exact_row(cfg, inst, inputs, sub, ell, gamma, val, test):
    fit = solve(inst.X[:, inputs], inst.Y, sub, k=min(cfg.k, inputs.size),
                ell=ell, gamma=gamma, time_limit=cfg.time_limit, gap=cfg.gap)
    found = lift_support(sub, inputs, inst.catalog, fit.support)
    d = fit.diagnostics
    te = test_error(fit.predict(test[0][:, inputs]), None, test[1])
    return found, {"method": "exact", "ell": ell, "support_size": found.size,
                   "accuracy": accuracy_pct(found, inst.true_monomials),
                   "false_alarm": false_alarm_pct(found, inst.true_monomials),
                   "test_error": te,
                   "test_error_refit": _refit_error(inst, inputs, sub,
                                                    fit.support, val, test),
                   "wall_seconds": d.wall_seconds,
                   "cuts": d.cuts, "nodes": d.nodes,
                   "termination": d.termination, "gap": d.gap}


def _lasso_row(cfg, inst, inputs, sub, target, gamma, val, test):
    start = time.perf_counter()
    Phi = sub.feature_map(inst.X[:, inputs])
    point = path_to_support(Phi, inst.Y, gamma, target)
    sel = point.support
    te = _refit_error(inst, inputs, sub, sel, val, test)
    found = lift_support(sub, inputs, inst.catalog, sel)
    return {"method": "lasso", "ell": target, "support_size": found.size,
            "accuracy": accuracy_pct(found, inst.true_monomials),
            "false_alarm": false_alarm_pct(found, inst.true_monomials),
            "test_error": te, "test_error_refit": te,
            "wall_seconds": time.perf_counter() - start,
            "termination": "converged" if point.converged else "not_converged"}


def _run_phase(cfg, p, n, seed):
    inst, val, test = _instance(cfg, p, n, seed)
    inputs, sub = _reduce(cfg, inst, p)
    gamma = cfg.gamma or energy_gamma(inst.X[:, inputs], cfg.r)
    base = _base_row(cfg, seed, n, p, inputs, gamma)
    _, exact = _exact_row(cfg, inst, inputs, sub, cfg.ell, gamma, val, test)
    lasso = _lasso_row(cfg, inst, inputs, sub, cfg.ell, gamma, val, test)
    return [{**base, **exact}, {**base, **lasso}]


def _run_path(cfg, p, n, seed):
    inst, val, test = _instance(cfg, p, n, seed)
    inputs, sub = _reduce(cfg, inst, p)
    gamma = cfg.gamma or energy_gamma(inst.X[:, inputs], cfg.r)
    base = _base_row(cfg, seed, n, p, inputs, gamma)
    rows = []
    for ell in cfg.ell_fit:
        found, exact = _exact_row(cfg, inst, inputs, sub, ell, gamma, val, test)
        # the baseline is compared at the support size the exact solver used
        lasso = _lasso_row(cfg, inst, inputs, sub, max(1, found.size), gamma,
                           val, test)
        lasso["ell"] = ell
        rows += [{**base, **exact}, {**base, **lasso}]
    return rows


def _run_coverage(cfg, p, n, seed):
    inst = gen_synthetic(p=p, k=cfg.k, ell=cfg.ell, r=cfg.r, n=n, snr=cfg.snr,
                         seed=seed)
    start = time.perf_counter()
    ranking = rank_inputs(inst.X, inst.Y, cfg.r,
                          gamma=cfg.gamma or None)
    size = minimal_covering_size(ranking, inst.active_inputs)
    return [{"experiment": cfg.kind, "method": "ranking", "seed": seed, "n": n,
             "p": p, "p_prime": size, "k": cfg.k, "ell": cfg.ell, "r": cfg.r,
             "snr": cfg.snr, "gamma": ranking.gamma,
             "wall_seconds": time.perf_counter() - start,
             "termination": "done", "error": ""}]


_RUNNERS = {"phase_transition": _run_phase, "path": _run_path,
            "ranking_coverage": _run_coverage}


def tasks(cfg: ExperimentConfig):
    """All ``(p, n, seed)`` cells of a config in a fixed order."""
    return list(itertools.product(cfg.p, cfg.n, cfg.seeds))


def run_task(cfg: ExperimentConfig, task) -> List[dict]:
    """Run one cell; failures become a single row carrying the error."""
    p, n, seed = task
    try:
        return _RUNNERS[cfg.kind](cfg, p, n, seed)
    except Exception as exc:  # recorded per row, the run continues
        return [{"experiment": cfg.kind, "seed": seed, "n": n, "p": p,
                 "k": cfg.k, "ell": cfg.ell, "r": cfg.r, "snr": cfg.snr,
                 "termination": "error",
                 "error": f"{type(exc).__name__}: {exc}".replace("\n", " "),
                 "_trace": traceback.format_exc()}]


def _run_star(args):
    return run_task(*args)


# --- output ----------------------------------------------------------------

def header_lines(config_text: str, digest: str) -> List[str]:
    lines = [f"# polysparse {__version__}", f"# config-sha256 {digest}"]
    lines += [f"# {line}" for line in config_text.splitlines()]
    return lines


class ResultWriter:
    """Append-only CSV writer that flushes every row."""

    def __init__(self, path, fieldnames, header: Sequence[str] = ()):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        for line in header:
            self._fh.write(line + "\n")
        self._writer = csv.DictWriter(self._fh, fieldnames=fieldnames,
                                      extrasaction="ignore")
        self._writer.writeheader()
        self._fh.flush()

    def write(self, row: dict):
        self._writer.writerow({k: _fmt(v) for k, v in row.items()})
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def run_experiment(cfg: ExperimentConfig, output=None, progress=None) -> List[dict]:
    """Run every task of ``cfg`` and stream rows to ``output``.

    With ``cfg.workers > 1`` tasks run in a process pool while this
    process remains the only writer.  Returns all rows.
    """
    cfg.validate()
    output = output or cfg.output
    todo = tasks(cfg)
    rows = []
    with ResultWriter(output, RESULT_FIELDS,
                      header_lines(cfg.as_ini(), cfg.digest())) as writer:
        if cfg.workers > 1:
            pool = ProcessPoolExecutor(max_workers=cfg.workers)
            results = pool.map(_run_star, [(cfg, t) for t in todo])
        else:
            pool = None
            results = (run_task(cfg, t) for t in todo)
        try:
            for task, batch in zip(todo, results):
                for row in batch:
                    writer.write(row)
                    rows.append(row)
                if progress:
                    progress(task, batch)
        finally:
            if pool is not None:
                pool.shutdown(cancel_futures=True)
    return rows


# --- aggregation -----------------------------------------------------------

SUMMARY_METRICS = ["support_size", "accuracy", "false_alarm", "test_error",
                   "test_error_refit",
                   "wall_seconds", "cuts", "nodes"]
SUMMARY_KEYS = ["experiment", "method", "n", "p", "p_prime", "ell"]


def read_results(path) -> List[dict]:
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def summarize(rows: Sequence[dict], keys=SUMMARY_KEYS) -> List[dict]:
    """Mean and standard deviation of each metric per cell.

    Rows that failed are counted in ``errors`` and excluded from the
    statistics.  For ranking coverage ``p_prime`` is the measured quantity
    and is averaged rather than grouped on.
    """
    groups: Dict[tuple, List[dict]] = {}
    for row in rows:
        coverage = row.get("experiment") == "ranking_coverage"
        use = [k for k in keys if not (coverage and k == "p_prime")]
        key = tuple((k, row.get(k, "")) for k in use)
        groups.setdefault(key, []).append(row)
    out = []
    for key, members in groups.items():
        ok = [m for m in members if not m.get("error")]
        rec = dict(key)
        rec["runs"] = len(members)
        rec["errors"] = len(members) - len(ok)
        rec["limit_hits"] = sum(m.get("termination") == "limit" for m in ok)
        metrics = SUMMARY_METRICS + (["p_prime"] if "p_prime" not in rec else [])
        for name in metrics:
            vals = [float(m[name]) for m in ok if m.get(name) not in (None, "")]
            if vals:
                rec[f"{name}_mean"] = float(np.mean(vals))
                rec[f"{name}_std"] = float(np.std(vals))
        out.append(rec)
    return out


def write_summary(summary: Sequence[dict], path, header: Sequence[str] = ()):
    names = []
    for rec in summary:
        names += [k for k in rec if k not in names]
    with ResultWriter(path, names, header) as writer:
        for rec in summary:
            writer.write(rec)


__all__ = ["ExperimentConfig", "load_config", "run_experiment", "run_task",
           "tasks", "summarize", "read_results", "write_summary",
           "lift_support", "RESULT_FIELDS", "KINDS"]
