"""
Scaled monomial basis of total degree at most ``r`` in ``p`` inputs.

Monomials are stored in graded lexicographic order: degree ascending and,
within one degree, exponent vectors in descending lexicographic order.  For
``p = 3, r = 2`` this gives::

    1, x1, x2, x3, x1^2, x1 x2, x1 x3, x2^2, x2 x3, x3^2

Every monomial is multiplied by the square root of its multinomial weight
in the expansion of ``(1 + x'y)^r``, i.e. ``r! / ((r - d)! prod_i e_i!)`` for
a monomial of degree ``d`` with exponents ``e``.  This makes the explicit
feature map consistent with the inhomogeneous polynomial kernel.

All indices in this module are 0-based.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .errors import CapacityError

_MAX_FEATURES = np.iinfo(np.int32).max


def n_monomials(p: int, r: int) -> int:
    """Number of monomials of total degree <= r in p inputs."""
    return math.comb(p + r, r)


@dataclass(frozen=True)
class MonomialIndex:
    """Exponent vector identifying one monomial."""

    exponents: Tuple[int, ...]

    @property
    def total_degree(self) -> int:
        return sum(self.exponents)

    def multiplicity(self, r: int) -> int:
        """Multinomial weight of this monomial in ``(1 + x'y)^r``.

        Counts the distinct orderings of the ancestor multiset padded with
        ``r - total_degree`` copies of the constant factor.
        """
        out = math.factorial(r) // math.factorial(r - self.total_degree)
        for e in self.exponents:
            out //= math.factorial(e)
        return out

    def label(self, names=None) -> str:
        names = names or [f"x{i + 1}" for i in range(len(self.exponents))]
        parts = []
        for name, e in zip(names, self.exponents):
            if e == 1:
                parts.append(name)
            elif e > 1:
                parts.append(f"{name}^{e}")
        return "*".join(parts) if parts else "1"


@dataclass(frozen=True, eq=False)
class BasisCatalog:
    """Immutable enumeration of the scaled monomial basis.

    Attributes
    ----------
    p, r : int
        Input count and maximal total degree.
    exponents : ndarray, shape (f, p)
        One row per monomial.
    scaling : ndarray, shape (f,)
        Square root of each monomial's weight in ``(1 + x'y)^r``.
    degrees : ndarray, shape (f,)
        Total degree of each monomial.
    """

    p: int
    r: int
    exponents: np.ndarray
    scaling: np.ndarray
    degrees: np.ndarray
    _dependents: Tuple[np.ndarray, ...] = field(repr=False)
    _ancestors: Tuple[Tuple[int, ...], ...] = field(repr=False)
    # index of the monomial obtained by removing the last factor, and that factor
    _parent: np.ndarray = field(repr=False)
    _last: np.ndarray = field(repr=False)

    @property
    def f(self) -> int:
        return self.exponents.shape[0]

    def __len__(self) -> int:
        return self.f

    def monomial(self, j: int) -> MonomialIndex:
        self._check_monomial(j)
        return MonomialIndex(tuple(int(e) for e in self.exponents[j]))

    def dependents(self, i: int) -> np.ndarray:
        """Indices of monomials with a positive exponent on input ``i``."""
        if not 0 <= i < self.p:
            raise ValueError(f"input index {i} out of range [0, {self.p})")
        return self._dependents[i]

    def ancestors(self, j: int) -> Tuple[int, ...]:
        """Multiset of inputs making up monomial ``j`` (sorted, with repeats)."""
        self._check_monomial(j)
        return self._ancestors[j]

    def ancestor_set(self, j: int) -> frozenset:
        return frozenset(self.ancestors(j))

    def index_of(self, exponents) -> int:
        """Position of the monomial with the given exponent vector."""
        exponents = np.asarray(exponents)
        hits = np.flatnonzero((self.exponents == exponents).all(axis=1))
        if hits.size == 0:
            raise KeyError(f"no monomial with exponents {tuple(exponents)}")
        return int(hits[0])

    def labels(self, names=None):
        return [self.monomial(j).label(names) for j in range(self.f)]

    def feature_map(self, X) -> np.ndarray:
        """Evaluate every scaled monomial on the rows of ``X``.

        Parameters
        ----------
        X : array_like, shape (n, p)

        Returns
        -------
        ndarray, shape (n, f)
        """
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.p:
            raise ValueError(
                f"X must have shape (n, {self.p}), got {X.shape}")
        out = np.empty((X.shape[0], self.f))
        out[:, 0] = 1.0
        # parents always precede children in graded order
        for j in range(1, self.f):
            out[:, j] = out[:, self._parent[j]] * X[:, self._last[j]]
        out *= self.scaling
        return out

    def _check_monomial(self, j):
        if not 0 <= j < self.f:
            raise ValueError(f"monomial index {j} out of range [0, {self.f})")


def enumerate_basis(p: int, r: int) -> BasisCatalog:
    """Build the catalog of all monomials of degree <= ``r`` in ``p`` inputs."""
    if p < 1 or r < 1:
        raise ValueError(f"need p >= 1 and r >= 1, got p={p}, r={r}")
    f = n_monomials(p, r)
    if f > _MAX_FEATURES:
        raise CapacityError(
            f"binomial({p}+{r}, {r}) = {f} monomials exceeds the index "
            f"capacity {_MAX_FEATURES}; reduce p or r")

    ancestors = []
    for d in range(r + 1):
        ancestors.extend(itertools.combinations_with_replacement(range(p), d))

    position = {a: j for j, a in enumerate(ancestors)}
    exponents = np.zeros((f, p), dtype=np.int64)
    parent = np.zeros(f, dtype=np.int64)
    last = np.zeros(f, dtype=np.int64)
    deps = [[] for _ in range(p)]
    for j, a in enumerate(ancestors):
        for i in a:
            exponents[j, i] += 1
        for i in sorted(set(a)):
            deps[i].append(j)
        if a:
            parent[j] = position[a[:-1]]
            last[j] = a[-1]

    degrees = exponents.sum(axis=1)
    mult = np.array([MonomialIndex(tuple(e)).multiplicity(r) for e in exponents],
                    dtype=np.float64)
    scaling = np.sqrt(mult)

    dependents = tuple(np.array(d, dtype=np.int64) for d in deps)
    for arr in (exponents, scaling, degrees, parent, last, *dependents):
        arr.setflags(write=False)
    return BasisCatalog(p=p, r=r, exponents=exponents, scaling=scaling,
                        degrees=degrees, _dependents=dependents,
                        _ancestors=tuple(ancestors), _parent=parent,
                        _last=last)


def dependents(catalog: BasisCatalog, i: int) -> np.ndarray:
    return catalog.dependents(i)


def ancestors(catalog: BasisCatalog, j: int) -> Tuple[int, ...]:
    return catalog.ancestors(j)


def feature_map(catalog: BasisCatalog, X) -> np.ndarray:
    return catalog.feature_map(X)
