"""
Synthetic (k, l)-sparse instances, CSV ingestion, folds and metrics.

Random draws use numpy's counter-based ``Philox`` bit generator so an
instance is fully determined by its seed.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .basis import BasisCatalog, enumerate_basis
from .errors import DataError

log = logging.getLogger(__name__)

NOISELESS_SNR = 1e12


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@dataclass
class SyntheticInstance:
    """One synthetic regression problem with known sparse ground truth.

    ``Y = m(X) w_true + E`` with ``||m(X) w_true|| / ||E|| = sqrt(snr)``.
    ``X_test``/``Y_test`` are extra rows drawn from the same model (noise
    at the training noise level) and may be empty.
    """

    X: np.ndarray
    Y: np.ndarray
    w_true: np.ndarray
    true_inputs: np.ndarray
    true_monomials: np.ndarray
    catalog: BasisCatalog
    snr: float
    seed: int
    params: dict = field(default_factory=dict)
    X_test: np.ndarray = None
    Y_test: np.ndarray = None

    @property
    def signal(self) -> np.ndarray:
        return self.catalog.feature_map(self.X) @ self.w_true

    @property
    def active_inputs(self) -> np.ndarray:
        """Inputs that appear in at least one true monomial."""
        used = self.catalog.exponents[self.true_monomials].sum(axis=0) > 0
        return np.flatnonzero(used)

    def metadata(self) -> dict:
        return {**self.params, "seed": self.seed, "snr": self.snr,
                "true_inputs": self.true_inputs.tolist(),
                "true_monomial_indices": self.true_monomials.tolist(),
                "true_coefficients": self.w_true[self.true_monomials].tolist()}


def _eligible_monomials(catalog, inputs):
    """Non-constant monomials whose inputs all lie in ``inputs``."""
    outside = np.ones(catalog.p, dtype=bool)
    outside[inputs] = False
    uses_outside = (catalog.exponents[:, outside] > 0).any(axis=1)
    return np.flatnonzero(~uses_outside & (catalog.degrees > 0))


def gen_synthetic(p: int, k: int, ell: int, r: int, n: int, snr: float,
                  seed: int, n_test: int = 0,
                  max_attempts: int = 100) -> SyntheticInstance:
    """Draw a (k, ell)-sparse polynomial regression instance.

    Inputs are i.i.d. standard normal.  ``k`` inputs are chosen uniformly,
    then ``ell`` monomials built only from those inputs, each with a
    coefficient of +1 or -1.  Gaussian noise is rescaled so the
    signal-to-noise ratio holds exactly on the training rows.
    """
    if not (1 <= k <= p and ell >= 1 and n >= 1 and r >= 1):
        raise ValueError(f"invalid sizes p={p}, k={k}, ell={ell}, n={n}, r={r}")
    if not snr > 0:
        raise ValueError(f"snr must be positive, got {snr}")
    catalog = enumerate_basis(p, r)
    rng = make_rng(seed)

    for _ in range(max_attempts):
        inputs = np.sort(rng.choice(p, size=k, replace=False))
        pool = _eligible_monomials(catalog, inputs)
        if pool.size >= ell:
            break
    else:
        raise ValueError(
            f"cannot place {ell} monomials on {k} inputs of degree <= {r}")

    support = np.sort(rng.choice(pool, size=ell, replace=False))
    w = np.zeros(catalog.f)
    w[support] = rng.choice([-1.0, 1.0], size=ell)

    X_all = rng.standard_normal((n + n_test, p))
    noise = rng.standard_normal(n + n_test)
    X, X_test = X_all[:n], X_all[n:]
    S = catalog.feature_map(X) @ w
    E = noise[:n]
    scale = np.linalg.norm(S) / (math.sqrt(snr) * np.linalg.norm(E))
    Y = S + scale * E
    Y_test = catalog.feature_map(X_test) @ w + scale * noise[n:]

    return SyntheticInstance(
        X=X, Y=Y, w_true=w, true_inputs=inputs, true_monomials=support,
        catalog=catalog, snr=float(snr), seed=int(seed),
        params={"p": p, "k": k, "ell": ell, "r": r, "n": n},
        X_test=X_test, Y_test=Y_test)


def write_synthetic(instance: SyntheticInstance, path) -> Tuple[Path, Path]:
    """Write the training rows as CSV plus a JSON metadata sidecar."""
    path = Path(path)
    p = instance.X.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(p)] + ["y"])
        for row, y in zip(instance.X, instance.Y):
            writer.writerow([repr(float(v)) for v in row] + [repr(float(y))])
    meta_path = path.with_suffix(path.suffix + ".json")
    meta_path.write_text(json.dumps(instance.metadata(), indent=2))
    return path, meta_path


# --- metrics ---------------------------------------------------------------

def accuracy_pct(found, truth) -> float:
    """Percentage of true monomials that were found."""
    truth = set(np.asarray(list(truth)).tolist())
    if not truth:
        raise ValueError("truth support must be non-empty")
    found = set(np.asarray(list(found)).tolist())
    return 100.0 * len(found & truth) / len(truth)


def false_alarm_pct(found, truth) -> float:
    """Percentage of found monomials that are not true; 0 for empty ``found``."""
    found = set(np.asarray(list(found)).tolist())
    if not found:
        return 0.0
    truth = set(np.asarray(list(truth)).tolist())
    return 100.0 * len(found - truth) / len(found)


def test_error(predict, X_test, Y_test) -> float:
    """Sum of absolute prediction errors divided by sqrt of the test size.

    ``predict`` is a callable mapping rows to predictions, or an array of
    predictions already evaluated on ``X_test``.
    """
    Y_test = np.asarray(Y_test, dtype=np.float64)
    if Y_test.size == 0:
        raise ValueError("test set is empty")
    pred = predict(X_test) if callable(predict) else np.asarray(predict)
    return float(np.sum(np.abs(Y_test - pred)) / math.sqrt(Y_test.size))


test_error.__test__ = False  # keep pytest from collecting the metric


# --- real data -------------------------------------------------------------

@dataclass
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    columns: List[str]
    norms: np.ndarray
    dropped: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)


def load_csv(path, response_column) -> Dataset:
    """Read a numeric CSV with a header row and scale inputs to unit norm.

    ``response_column`` is a header name or a 0-based column position.
    All-zero input columns are dropped and reported in ``warnings``.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: file is empty", row=1) from None
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise DataError(
                    f"{path}: expected {len(header)} fields, got {len(raw)}",
                    row=lineno)
            vals = []
            for name, cell in zip(header, raw):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}: non-numeric cell {cell!r}",
                                    row=lineno, column=name) from None
            rows.append(vals)

    if isinstance(response_column, int):
        if not 0 <= response_column < len(header):
            raise DataError(f"{path}: response column {response_column} "
                            f"out of range", column=response_column)
        ycol = response_column
    else:
        if response_column not in header:
            raise DataError(f"{path}: missing response column",
                            column=response_column)
        ycol = header.index(response_column)
    if not rows:
        raise DataError(f"{path}: no data rows", row=2)

    data = np.asarray(rows, dtype=np.float64)
    Y = data[:, ycol]
    keep = [c for c in range(len(header)) if c != ycol]
    X = data[:, keep]
    names = [header[c] for c in keep]

    norms = np.linalg.norm(X, axis=0)
    zero = norms == 0
    warnings = []
    dropped = [names[c] for c in np.flatnonzero(zero)]
    for name in dropped:
        msg = f"dropped all-zero input column {name!r}"
        warnings.append(msg)
        log.warning(msg)
    X = X[:, ~zero] / norms[~zero]
    names = [nm for nm, z in zip(names, zero) if not z]
    return Dataset(X=X, Y=Y, columns=names, norms=norms[~zero],
                   dropped=dropped, warnings=warnings)


@dataclass(frozen=True)
class Fold:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


def make_folds(n: int, count: int = 10, seed: int = 0) -> List[Fold]:
    """Independent shuffled 80/10/10 splits of ``range(n)``."""
    if n < 10:
        raise ValueError(f"need at least 10 rows to fold, got {n}")
    rng = make_rng(seed)
    n_val = max(1, round(0.1 * n))
    n_test = max(1, round(0.1 * n))
    n_train = n - n_val - n_test
    folds = []
    for _ in range(count):
        perm = rng.permutation(n)
        folds.append(Fold(train=np.sort(perm[:n_train]),
                          validation=np.sort(perm[n_train:n_train + n_val]),
                          test=np.sort(perm[n_train + n_val:])))
    return folds
