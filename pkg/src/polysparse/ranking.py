"""
Polynomial kernel input ranking.

A single kernel ridge regression over all monomials of degree <= r is
solved in the dual.  Each input is scored by the squared Euclidean norm of
the primal coefficients of every monomial that depends on it, which only
needs the input's own micro-kernel and the shared dual vector.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .kernel import gram_plus_one, micro_kernel_input, polynomial_kernel, ridge_dual_solve

GAMMA_GRID = np.logspace(-4, 2, 13)


@dataclass(frozen=True)
class InputRanking:
    """Scores of each input and the induced descending order.

    Ties in ``scores`` are broken by ascending input index.
    """

    scores: np.ndarray
    order: np.ndarray
    gamma: float
    r: int

    @property
    def p(self) -> int:
        return self.scores.size

    def rank_of(self, i: int) -> int:
        """0-based position of input ``i`` in the ranking."""
        return int(np.flatnonzero(self.order == i)[0])


def default_gamma(Y) -> float:
    """Scale-free default ``1 / (n Var(Y))``."""
    Y = np.asarray(Y, dtype=np.float64)
    n = Y.size
    var = float(np.var(Y))
    if not var > 0:
        return 1.0 / n
    return 1.0 / (n * var)


def energy_gamma(X, r: int) -> float:
    """Ridge weight ``f / trace(K)``: the inverse mean squared feature norm.

    With this choice ``gamma ||m_j(X)||^2`` is one on average, so the ridge
    term and a typical monomial carry comparable weight.  ``trace(K)`` is
    ``sum_t (||x_t||^2 + 1)^r`` and needs no feature expansion.
    """
    X = np.asarray(X, dtype=np.float64)
    trace = float(np.sum((np.einsum("ij,ij->i", X, X) + 1.0) ** r))
    f = math.comb(X.shape[1] + r, r)
    return f / trace


def default_p_prime(p: int, k: int) -> int:
    return min(p, max(2 * k, 20))


def _score(K_lin, column, alpha, gamma, r):
    K_i = micro_kernel_input(K_lin, column, r)
    return gamma ** 2 * float(alpha @ K_i @ alpha)


def rank_inputs(X, Y, r: int, gamma: float = None, workers: int = 1) -> InputRanking:
    """Rank inputs by the coefficient norm of their dependent monomials.

    Parameters
    ----------
    X : array_like, shape (n, p)
    Y : array_like, shape (n,)
    r : int
        Polynomial degree.
    gamma : float, optional
        Ridge weight; defaults to :func:`default_gamma`.
    workers : int
        Threads used for the per-input scores after the shared solve.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != Y.shape[0] or X.shape[0] < 1:
        raise ValueError(f"incompatible shapes X{X.shape}, Y{Y.shape}")
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    if gamma is None:
        gamma = default_gamma(Y)
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")

    K_lin = gram_plus_one(X)
    alpha = ridge_dual_solve(K_lin ** r, Y, gamma).alpha
    p = X.shape[1]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(
                lambda i: _score(K_lin, X[:, i], alpha, gamma, r), range(p)))
    else:
        scores = [_score(K_lin, X[:, i], alpha, gamma, r) for i in range(p)]
    # quadratic forms of PSD matrices; clip rounding noise
    scores = np.maximum(np.asarray(scores), 0.0)
    order = np.lexsort((np.arange(p), -scores))
    return InputRanking(scores=scores, order=order, gamma=float(gamma), r=r)


def select_top(ranking: InputRanking, p_prime: int) -> np.ndarray:
    """Indices of the ``p_prime`` best-ranked inputs, in ascending order."""
    if not 1 <= p_prime <= ranking.p:
        raise ValueError(f"p_prime must lie in [1, {ranking.p}], got {p_prime}")
    return np.sort(ranking.order[:p_prime])


def minimal_covering_size(ranking: InputRanking, relevant) -> int:
    """Smallest ``p_prime`` whose top set contains every relevant input."""
    relevant = list(relevant)
    if not relevant:
        return 0
    return 1 + max(ranking.rank_of(i) for i in relevant)


def select_gamma(X_train, Y_train, X_val, Y_val, r: int, grid=GAMMA_GRID):
    """Pick the kernel ridge weight with the lowest validation error.

    Returns ``(gamma, errors)`` with one validation error per grid value.
    """
    K = polynomial_kernel(X_train, r)
    K_val = polynomial_kernel(X_val, r, X_train)
    errors = []
    for g in grid:
        alpha = ridge_dual_solve(K, Y_train, g).alpha
        pred = g * K_val @ alpha
        errors.append(float(np.sum((np.asarray(Y_val) - pred) ** 2)))
    best = int(np.argmin(errors))
    return float(grid[best]), errors
