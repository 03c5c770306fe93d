"""
Dense kernel linear algebra for polynomial ridge regression.

The central quantity is the ridge regression loss as a function of a
positive semidefinite kernel ``K``::

    c(K) = 1/2 * Y' (I + gamma K)^{-1} Y

together with its directional derivatives ``-gamma/2 * a' K_j a`` where
``a`` solves ``(I + gamma K) a = Y``.  Kernels are plain symmetric
``ndarray`` objects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NumericalError

_JITTER_START = 1e-12
_JITTER_STOP = 1e-6


@dataclass(frozen=True)
class DualSolution:
    """Solution ``alpha`` of ``(I + gamma K) alpha = Y``."""

    alpha: np.ndarray
    gamma: float


def spd_solve(A, b):
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Uses a Cholesky factorization.  On failure a diagonal jitter of
    ``1e-12 * trace(A)`` is added and grown tenfold up to ``1e-6 * trace``.
    """
    A = np.asarray(A, dtype=np.float64)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise NumericalError("system has non-finite entries",
                             {"shape": A.shape})
    try:
        return linalg.cho_solve(linalg.cho_factor(A, check_finite=False), b,
                                check_finite=False)
    except linalg.LinAlgError:
        pass
    scale = max(np.trace(A), 1.0)
    eye = np.eye(A.shape[0])
    jitter = _JITTER_START
    while jitter <= _JITTER_STOP:
        try:
            cf = linalg.cho_factor(A + jitter * scale * eye, check_finite=False)
            return linalg.cho_solve(cf, b, check_finite=False)
        except linalg.LinAlgError:
            jitter *= 10
    eig = np.linalg.eigvalsh(A)
    raise NumericalError(
        "Cholesky factorization failed after jitter escalation",
        {"min_eig": float(eig[0]), "max_eig": float(eig[-1]),
         "cond": float(abs(eig[-1] / eig[0])) if eig[0] != 0 else np.inf,
         "trace": float(scale)})


def gram_plus_one(X) -> np.ndarray:
    """Linear Gram matrix plus one: ``X X' + 1``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return X @ X.T + 1.0


def hadamard_pow(K, r: int) -> np.ndarray:
    """Entrywise ``r``-th power of ``K``."""
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    K = np.asarray(K, dtype=np.float64)
    return K.copy() if r == 1 else K ** r


def polynomial_kernel(X, r: int, Z=None) -> np.ndarray:
    """``(X Z' + 1)^r`` evaluated elementwise; ``Z`` defaults to ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Z = X if Z is None else np.atleast_2d(np.asarray(Z, dtype=np.float64))
    return (X @ Z.T + 1.0) ** r


def ridge_dual_solve(K, Y, gamma: float) -> DualSolution:
    """Solve ``(I + gamma K) alpha = Y``."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    K = np.asarray(K, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if K.shape != (Y.shape[0], Y.shape[0]):
        raise ValueError(f"kernel shape {K.shape} does not match Y {Y.shape}")
    A = gamma * K
    A[np.diag_indices_from(A)] += 1.0
    return DualSolution(spd_solve(A, Y), float(gamma))


def micro_kernel_monomial(catalog, X, j: int) -> np.ndarray:
    """Rank-one kernel ``m_j(X) m_j(X)'`` of the scaled monomial ``j``."""
    catalog._check_monomial(j)
    col = monomial_column(catalog, X, j)
    return np.outer(col, col)


def monomial_column(catalog, X, j: int) -> np.ndarray:
    """Evaluate the single scaled monomial ``j`` on the rows of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != catalog.p:
        raise ValueError(f"X must have shape (n, {catalog.p}), got {X.shape}")
    expo = catalog.exponents[j]
    return catalog.scaling[j] * np.prod(X ** expo, axis=1)


def micro_kernel_input(K_lin, X_i, r: int) -> np.ndarray:
    """Kernel of all monomials that depend on one input.

    ``K_lin`` is the linear Gram-plus-one matrix (before the Hadamard
    power) and ``X_i`` the data column of the input.  Returns
    ``K_lin^r - (K_lin - X_i X_i')^r`` elementwise.
    """
    K_lin = np.asarray(K_lin, dtype=np.float64)
    X_i = np.asarray(X_i, dtype=np.float64).ravel()
    if K_lin.shape != (X_i.size, X_i.size):
        raise ValueError(
            f"kernel shape {K_lin.shape} does not match column {X_i.shape}")
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    B = np.outer(X_i, X_i)
    C = K_lin - B
    # a^r - c^r = (a - c) * sum_m a^m c^(r-1-m), avoids cancellation
    acc = np.zeros_like(K_lin)
    a_pow = np.ones_like(K_lin)
    for m in range(r):
        acc += a_pow * C ** (r - 1 - m)
        a_pow = a_pow * K_lin
    return B * acc


def loss_c(Y, gamma: float, K_s):
    """Dual form ``1/2 Y' (I + gamma K_s)^{-1} Y``.

    Returns
    -------
    value : float
    dual : DualSolution
    """
    Y = np.asarray(Y, dtype=np.float64)
    dual = ridge_dual_solve(K_s, Y, gamma)
    return 0.5 * float(Y @ dual.alpha), dual


def loss_c_primal(Y, gamma: float, Z) -> float:
    """Primal form ``1/2 Y'Y - 1/2 Y'Z (I/gamma + Z'Z)^{-1} Z'Y``.

    Cheaper than :func:`loss_c` when ``Z`` has few columns.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    Y = np.asarray(Y, dtype=np.float64)
    Z = np.asarray(Z, dtype=np.float64).reshape(Y.shape[0], -1)
    yy = float(Y @ Y)
    if Z.shape[1] == 0:
        return 0.5 * yy
    b = Z.T @ Y
    A = Z.T @ Z
    A[np.diag_indices_from(A)] += 1.0 / gamma
    w = spd_solve(A, b)
    return 0.5 * (yy - float(b @ w))


def grad_c(dual: DualSolution, K_j) -> float:
    """Derivative of ``c`` along the kernel direction ``K_j``."""
    a = dual.alpha
    return -0.5 * dual.gamma * float(a @ np.asarray(K_j) @ a)


def grad_c_column(dual: DualSolution, column) -> float:
    """:func:`grad_c` for a rank-one ``K_j = column column'`` in O(n)."""
    return -0.5 * dual.gamma * float(np.dot(column, dual.alpha)) ** 2
