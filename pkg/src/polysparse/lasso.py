"""
l1 baseline: elastic-net coordinate descent on expanded monomial features.

Objective::

    1/2 ||Y - Phi w||^2 + 1/(2 gamma) ||w||^2 + lam ||w||_1

solved by cyclic coordinate descent in Gram form.  A support of a
requested size is found by bisection on ``lam``, and the selected
columns are refit with plain ridge regression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel import spd_solve
from .ranking import GAMMA_GRID


@dataclass
class LassoPathPoint:
    lam: float
    coefficients: np.ndarray
    support_size: int
    converged: bool = True
    sweeps: int = 0
    objective_trace: list = None

    @property
    def support(self) -> np.ndarray:
        return support_of(self.coefficients)


def support_of(w) -> np.ndarray:
    """Indices with ``|w_j| > 1e-6 * max(1, ||w||_inf)``."""
    w = np.asarray(w)
    if w.size == 0:
        return np.zeros(0, dtype=np.int64)
    thr = 1e-6 * max(1.0, float(np.max(np.abs(w))))
    return np.flatnonzero(np.abs(w) > thr)


def _soft(x, t):
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


def objective(Phi, Y, w, lam, gamma) -> float:
    r = Y - Phi @ w
    return 0.5 * float(r @ r) + 0.5 / gamma * float(w @ w) + lam * float(np.abs(w).sum())


def _standardize(Phi, standardize):
    norms = np.linalg.norm(Phi, axis=0)
    if not standardize:
        return Phi, np.ones(Phi.shape[1])
    scale = np.where(norms > 0, norms / math.sqrt(Phi.shape[0]), 1.0)
    return Phi / scale, scale


def _cd(gram, corr, lam, gamma, w, tol, max_sweeps, trace=None, yy=None):
    """Coordinate descent in Gram form; ``w`` is updated in place."""
    f = w.size
    diag = np.diag(gram) + 1.0 / gamma
    grad = corr - gram @ w          # Phi' (Y - Phi w)
    for sweep in range(1, max_sweeps + 1):
        max_change = 0.0
        for j in range(f):
            if diag[j] <= 0:
                continue
            old = w[j]
            rho = grad[j] + gram[j, j] * old
            new = _soft(rho, lam) / diag[j]
            if new != old:
                grad -= gram[:, j] * (new - old)
                w[j] = new
                max_change = max(max_change, abs(new - old))
        if trace is not None:
            trace.append(0.5 * (yy - 2 * corr @ w + w @ gram @ w)
                         + 0.5 / gamma * w @ w + lam * np.abs(w).sum())
        if max_change < tol:
            return True, sweep
    return False, max_sweeps


def fit_elastic_net(Phi, Y, lam: float, gamma: float, tol: float = 1e-8,
                    max_sweeps: int = 10_000, standardize: bool = True,
                    w0=None, record: bool = False) -> LassoPathPoint:
    """Minimize the l1 + ridge penalized least squares objective.

    With ``standardize`` the columns are rescaled to root-mean-square one
    before fitting and the coefficients mapped back afterwards, so ``lam``
    and ``gamma`` act on the standardized problem.
    """
    if lam < 0:
        raise ValueError(f"lam must be non-negative, got {lam}")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    Phi = np.asarray(Phi, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    Z, scale = _standardize(Phi, standardize)
    gram = Z.T @ Z
    corr = Z.T @ Y
    w = np.zeros(Z.shape[1]) if w0 is None else np.asarray(w0, dtype=np.float64) * scale
    trace = [] if record else None
    converged, sweeps = _cd(gram, corr, lam, gamma, w, tol, max_sweeps,
                            trace, float(Y @ Y))
    coef = w / scale
    return LassoPathPoint(lam=float(lam), coefficients=coef,
                          support_size=int(support_of(coef).size),
                          converged=converged, sweeps=sweeps,
                          objective_trace=trace)


def kkt_residual(Phi, Y, point: LassoPathPoint, gamma: float,
                 standardize: bool = True) -> float:
    """Largest violation of the coordinate-wise optimality conditions."""
    Z, scale = _standardize(np.asarray(Phi, dtype=np.float64), standardize)
    w = point.coefficients * scale
    g = Z.T @ (np.asarray(Y) - Z @ w) - w / gamma
    lam = point.lam
    nz = w != 0
    res = np.zeros_like(w)
    res[nz] = np.abs(g[nz] - lam * np.sign(w[nz]))
    res[~nz] = np.maximum(np.abs(g[~nz]) - lam, 0.0)
    return float(res.max()) if res.size else 0.0


def lambda_max(Phi, Y, standardize: bool = True) -> float:
    """Smallest ``lam`` at which the solution is identically zero."""
    Z, _ = _standardize(np.asarray(Phi, dtype=np.float64), standardize)
    return float(np.max(np.abs(Z.T @ np.asarray(Y, dtype=np.float64))))


def path_to_support(Phi, Y, gamma: float, target: int, standardize: bool = True,
                    iterations: int = 60, tol: float = 1e-8) -> LassoPathPoint:
    """Path point whose support size is closest to ``target``.

    Bisects on ``log(lam)``.  Among equally close points the one with
    support size not exceeding ``target`` wins.
    """
    Phi = np.asarray(Phi, dtype=np.float64)
    f = Phi.shape[1]
    lmax = lambda_max(Phi, Y, standardize)
    if target <= 0 or lmax == 0:
        return LassoPathPoint(lam=lmax, coefficients=np.zeros(f), support_size=0)
    if target >= f:
        return fit_elastic_net(Phi, Y, 0.0, gamma, tol=tol, standardize=standardize)

    def better(a, b):
        if b is None:
            return True
        da, db = abs(a.support_size - target), abs(b.support_size - target)
        if da != db:
            return da < db
        return a.support_size <= target < b.support_size

    lo, hi = math.log(lmax * 1e-8), math.log(lmax)
    best, w0 = None, None
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        pt = fit_elastic_net(Phi, Y, math.exp(mid), gamma, tol=tol,
                             standardize=standardize, w0=w0)
        w0 = pt.coefficients
        if better(pt, best):
            best = pt
        if pt.support_size == target:
            break
        if pt.support_size > target:
            lo = mid
        else:
            hi = mid
    return best


def ridge_fit(Phi, Y, gamma: float) -> np.ndarray:
    """Ridge coefficients ``(I/gamma + Phi'Phi)^{-1} Phi'Y``."""
    Phi = np.asarray(Phi, dtype=np.float64).reshape(len(Y), -1)
    A = Phi.T @ Phi
    A[np.diag_indices_from(A)] += 1.0 / gamma
    return spd_solve(A, Phi.T @ np.asarray(Y, dtype=np.float64))


def debias_refit(Phi, Y, support, gamma=None, validation=None, grid=GAMMA_GRID):
    """Ridge refit on the selected columns.

    ``gamma`` may be given directly; otherwise it is chosen on
    ``validation = (Phi_val, Y_val)`` over ``grid``.  Returns
    ``(coefficients, gamma)`` with coefficients aligned to ``support``.
    An empty support yields the zero model.
    """
    support = np.asarray(support, dtype=np.int64)
    if support.size == 0:
        return np.zeros(0), (gamma if gamma is not None else float("nan"))
    Phi = np.asarray(Phi, dtype=np.float64)
    if gamma is None:
        if validation is None:
            raise ValueError("need either gamma or validation data")
        Phi_val, Y_val = validation
        errs = []
        for g in grid:
            w = ridge_fit(Phi[:, support], Y, g)
            errs.append(float(np.sum((Y_val - Phi_val[:, support] @ w) ** 2)))
        gamma = float(grid[int(np.argmin(errs))])
    return ridge_fit(Phi[:, support], Y, gamma), gamma
