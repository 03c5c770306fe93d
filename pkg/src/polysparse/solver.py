"""
Exact hierarchical (k, l)-sparse polynomial regression.

The problem is the convex integer program::

    min  c(s) = 1/2 Y' (I + gamma sum_j s_j K_j)^{-1} Y
    s.t. sum_j s_j <= l,  sum_i h_i <= k,  s_j <= h_i  for i in A(j)

with ``K_j`` the rank-one kernel of the scaled monomial ``j``.  ``c`` is
convex in ``s`` so every evaluation yields an affine minorant (a cut).
The solver runs one branch-and-bound tree over ``(h, s)``, and whenever a
node proposes a binary completion that the current cuts cannot rule out,
``c`` is evaluated there and the new cut is added to a shared pool
(lazy constraint generation).  Node bounds come from the cut pool through
a greedy relaxation of the cardinality and input-budget constraints, so
no LP solver is involved.
"""

from __future__ import annotations

import csv
import heapq
import itertools
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from .basis import BasisCatalog
from .kernel import spd_solve

FREE, OFF, ON = -1, 0, 1

DIAGNOSTIC_FIELDS = ["n", "p_prime", "f", "k", "ell", "gamma", "cuts", "nodes",
                     "wall_seconds", "objective", "gap", "termination"]


@dataclass(frozen=True)
class SparsityPattern:
    """Binary monomial selection ``s`` and input selection ``h``."""

    s: np.ndarray
    h: np.ndarray

    @classmethod
    def from_support(cls, catalog: BasisCatalog, support) -> "SparsityPattern":
        s = np.zeros(catalog.f, dtype=bool)
        s[np.asarray(list(support), dtype=np.int64)] = True
        h = (catalog.exponents[s] > 0).any(axis=0)
        return cls(s=s, h=h)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.s)

    @property
    def inputs(self) -> np.ndarray:
        return np.flatnonzero(self.h)

    def is_feasible(self, catalog: BasisCatalog, k: int, ell: int) -> bool:
        if self.s.sum() > ell or self.h.sum() > k:
            return False
        needed = (catalog.exponents[self.s] > 0).any(axis=0)
        return not np.any(needed & ~self.h)


@dataclass(frozen=True)
class Cut:
    """Affine minorant ``value + gradient' (s - anchor)`` of the loss."""

    value: float
    gradient: np.ndarray
    anchor: np.ndarray

    @property
    def offset(self) -> float:
        """Value of the cut at ``s = 0``."""
        return self.value - float(self.gradient[self.anchor].sum())

    def __call__(self, s) -> float:
        s = np.asarray(s, dtype=np.float64)
        return self.offset + float(self.gradient @ s)


@dataclass(frozen=True)
class PartialAssignment:
    """Per-variable state: ``-1`` free, ``0`` fixed off, ``1`` fixed on."""

    s: np.ndarray
    h: np.ndarray

    @classmethod
    def empty(cls, f: int, p: int) -> "PartialAssignment":
        return cls(np.full(f, FREE, dtype=np.int8), np.full(p, FREE, dtype=np.int8))


@dataclass
class SolveDiagnostics:
    n: int
    p_prime: int
    f: int
    k: int
    ell: int
    gamma: float
    cuts: int = 0
    nodes: int = 0
    wall_seconds: float = 0.0
    objective: float = float("nan")
    lower_bound: float = 0.0
    gap: float = float("inf")
    termination: str = ""
    y_scale: float = 1.0
    incumbent_trace: List[float] = field(default_factory=list)
    bound_trace: List[float] = field(default_factory=list)

    def as_record(self) -> dict:
        return {name: getattr(self, name) for name in DIAGNOSTIC_FIELDS}


@dataclass
class SparseFit:
    """Result of :func:`solve`.

    ``coefficients`` are aligned with ``pattern.support``.  The objective is
    reported in the units of the original response.
    """

    pattern: SparsityPattern
    coefficients: np.ndarray
    objective: float
    diagnostics: SolveDiagnostics
    catalog: BasisCatalog
    gamma: float
    cuts: List[Cut] = field(default_factory=list, repr=False)

    @property
    def support(self) -> np.ndarray:
        return self.pattern.support

    @property
    def optimal(self) -> bool:
        return self.diagnostics.termination == "optimal"

    def dense_coefficients(self) -> np.ndarray:
        w = np.zeros(self.catalog.f)
        w[self.support] = self.coefficients
        return w

    def predict(self, X) -> np.ndarray:
        Phi = self.catalog.feature_map(X)
        return Phi[:, self.support] @ self.coefficients


class LossOracle:
    """Evaluates the loss ``c`` and its gradient for a fixed feature matrix.

    Gram products are cached so an evaluation on support ``S`` costs
    ``O(f |S| + |S|^3)`` in the primal form.  When ``|S| > n/2`` the dual
    form on the ``n x n`` kernel is used instead.
    """

    def __init__(self, Phi, Y, gamma: float):
        if not gamma > 0:
            raise ValueError(f"gamma must be positive, got {gamma}")
        self.Phi = np.asarray(Phi, dtype=np.float64)
        self.Y = np.asarray(Y, dtype=np.float64)
        self.gamma = float(gamma)
        self.n, self.f = self.Phi.shape
        self.gram = self.Phi.T @ self.Phi
        self.corr = self.Phi.T @ self.Y
        self.yy = float(self.Y @ self.Y)
        self.evaluations = 0

    def solve(self, support):
        """Return ``(value, Phi' alpha, w)`` for the given support."""
        S = np.asarray(support, dtype=np.int64)
        g = self.gamma
        if S.size == 0:
            return 0.5 * self.yy, self.corr.copy(), np.zeros(0)
        if S.size <= self.n / 2:
            A = self.gram[np.ix_(S, S)].copy()
            A[np.diag_indices_from(A)] += 1.0 / g
            w = spd_solve(A, self.corr[S])
            value = 0.5 * (self.yy - float(self.corr[S] @ w))
            phi_alpha = self.corr - self.gram[:, S] @ w
        else:
            Z = self.Phi[:, S]
            A = g * (Z @ Z.T)
            A[np.diag_indices_from(A)] += 1.0
            alpha = spd_solve(A, self.Y)
            value = 0.5 * float(self.Y @ alpha)
            phi_alpha = self.Phi.T @ alpha
            w = g * phi_alpha[S]
        return max(value, 0.0), phi_alpha, w

    def cut(self, support) -> Cut:
        self.evaluations += 1
        value, phi_alpha, _ = self.solve(support)
        anchor = np.zeros(self.f, dtype=bool)
        anchor[np.asarray(support, dtype=np.int64)] = True
        return Cut(value=value, gradient=-0.5 * self.gamma * phi_alpha ** 2,
                   anchor=anchor)


def evaluate_cut(pattern: SparsityPattern, Y, gamma: float,
                 catalog: BasisCatalog, X) -> Cut:
    """Exact loss and per-monomial gradient at ``pattern``."""
    oracle = LossOracle(catalog.feature_map(X), Y, gamma)
    return oracle.cut(pattern.support)


def recover_coefficients(pattern: SparsityPattern, X, Y, gamma: float,
                         catalog: BasisCatalog) -> np.ndarray:
    """Ridge coefficients on the selected scaled monomial columns."""
    S = pattern.support
    if S.size == 0:
        return np.zeros(0)
    Z = catalog.feature_map(X)[:, S]
    A = Z.T @ Z
    A[np.diag_indices_from(A)] += 1.0 / gamma
    return spd_solve(A, Z.T @ np.asarray(Y, dtype=np.float64))


class _CutPool:
    """Cuts stored as rows ``offset + grad' s`` for vectorized bounding."""

    def __init__(self, f: int):
        self.f = f
        self.size = 0
        self.offsets = np.zeros(16)
        self.grads = np.zeros((16, f))
        self.cuts: List[Cut] = []

    def add(self, cut: Cut):
        if self.size == self.offsets.size:
            self.offsets = np.concatenate([self.offsets, np.zeros(self.size)])
            self.grads = np.vstack([self.grads, np.zeros((self.size, self.f))])
        self.offsets[self.size] = cut.offset
        self.grads[self.size] = cut.gradient
        self.size += 1
        self.cuts.append(cut)

    def value_at(self, support) -> float:
        if self.size == 0:
            return 0.0
        S = np.asarray(support, dtype=np.int64)
        vals = self.offsets[:self.size] + self.grads[:self.size, S].sum(axis=1)
        return max(0.0, float(vals.max()))


@dataclass
class _NodeInfo:
    bound: float
    leaf: bool = False
    ones: Optional[np.ndarray] = None
    free: Optional[np.ndarray] = None
    best: int = -1
    binding: bool = False
    undecided: Optional[np.ndarray] = None
    k_rem: int = 0
    r_rem: int = 0


class _Bounder:
    """Node relaxation over a cut pool for one catalog and (k, l)."""

    def __init__(self, catalog: BasisCatalog, k: int, ell: int,
                 bundle_cuts: int = 8):
        self.anc = catalog.exponents > 0          # (f, p)
        self.n_anc = self.anc.sum(axis=1)
        self.f, self.p = self.anc.shape
        self.k = k
        self.ell = ell
        self.bundle_cuts = bundle_cuts

    def analyse(self, pool: _CutPool, s_state, h_state) -> _NodeInfo:
        anc = self.anc
        ones = np.flatnonzero(s_state == ON)
        r_rem = self.ell - ones.size
        if r_rem < 0:
            return _NodeInfo(bound=np.inf)
        on = (h_state == ON) | anc[ones].any(axis=0)
        if np.any(on & (h_state == OFF)):
            return _NodeInfo(bound=np.inf)
        k_rem = self.k - int(on.sum())
        if k_rem < 0:
            return _NodeInfo(bound=np.inf)
        undecided = (h_state == FREE) & ~on
        blocked = h_state == OFF
        if k_rem == 0:
            blocked = blocked | undecided
            undecided = np.zeros_like(undecided)
        cand = (s_state == FREE) & ~(anc & blocked).any(axis=1)
        new_needed = (anc & undecided).sum(axis=1)
        cand &= new_needed <= k_rem
        free = np.flatnonzero(cand)
        if r_rem == 0 or free.size == 0:
            return _NodeInfo(bound=np.inf, leaf=True, ones=ones)

        binding = int((anc[free] & undecided).any(axis=0).sum()) > k_rem
        info = _NodeInfo(bound=0.0, ones=ones, free=free, binding=binding,
                         undecided=np.flatnonzero(undecided), k_rem=k_rem,
                         r_rem=r_rem)
        if pool.size == 0:
            return info

        U = pool.size
        base = pool.offsets[:U] + pool.grads[:U][:, ones].sum(axis=1)
        vals = np.minimum(pool.grads[:U][:, free], 0.0)
        if free.size > r_rem:
            vals = np.partition(vals, r_rem - 1, axis=1)[:, :r_rem]
        per_cut = base + vals.sum(axis=1)

        if binding:
            top = np.argsort(-per_cut)[:self.bundle_cuts]
            for u in top:
                per_cut[u] = max(per_cut[u], base[u] + self._bundle_min(
                    pool.grads[u, free], free, info))
        best = int(np.argmax(per_cut))
        info.best = best
        info.bound = max(0.0, float(per_cut[best]))
        return info

    def _bundle_min(self, g, free, info: _NodeInfo) -> float:
        """Lower bound on ``min g's`` under both budgets.

        Each candidate needing new inputs is charged to its first new
        input; at most ``k_rem`` such bundles may be used.  The count
        budget is dualized with multiplier ``mu`` and the best ``mu`` over
        all breakpoints is kept.
        """
        g = np.minimum(g, 0.0)
        sub = self.anc[free][:, info.undecided]             # (F, B)
        has_new = sub.any(axis=1)
        owner = np.argmax(sub, axis=1)
        assign = np.zeros((free.size, info.undecided.size))
        assign[np.flatnonzero(has_new), owner[has_new]] = 1.0
        mus = np.concatenate([[0.0], -g])
        T = np.minimum(0.0, g[None, :] + mus[:, None])      # (M, F)
        ready = T[:, ~has_new].sum(axis=1)
        bundles = T @ assign                                 # (M, B)
        kr = info.k_rem
        if kr < bundles.shape[1]:
            bundles = np.partition(bundles, kr - 1, axis=1)[:, :kr]
        L = ready + bundles.sum(axis=1) - mus * info.r_rem
        return float(L.max())

    def complete(self, pool: _CutPool, info: _NodeInfo) -> np.ndarray:
        """Feasible completion greedily following the node's best cut."""
        if info.best < 0 or info.free.size == 0:
            return info.ones
        g = pool.grads[info.best, info.free]
        order = info.free[np.argsort(g, kind="stable")]
        chosen = list(info.ones)
        if not info.binding:
            chosen.extend(order[:info.r_rem])
            return np.sort(np.asarray(chosen, dtype=np.int64))
        und = np.zeros(self.p, dtype=bool)
        und[info.undecided] = True
        budget = info.k_rem
        for j in order:
            if len(chosen) - info.ones.size >= info.r_rem:
                break
            new = self.anc[j] & und
            cost = int(new.sum())
            if cost <= budget:
                chosen.append(j)
                und &= ~new
                budget -= cost
        return np.sort(np.asarray(chosen, dtype=np.int64))


def master_lower_bound(cuts: Sequence[Cut], fixed: PartialAssignment,
                       catalog: BasisCatalog, k: int, ell: int) -> float:
    """Lower bound of ``max_u cut_u(s)`` over feasible completions.

    Returns ``inf`` when the partial assignment admits no feasible
    completion.  With no cuts the bound is 0.
    """
    pool = _CutPool(catalog.f)
    for cut in cuts:
        pool.add(cut)
    bounder = _Bounder(catalog, k, ell)
    info = bounder.analyse(pool, np.asarray(fixed.s), np.asarray(fixed.h))
    if info.leaf:
        return pool.value_at(info.ones)
    return info.bound


def _support_key(support) -> bytes:
    return np.asarray(support, dtype=np.int64).tobytes()


def solve(X, Y, catalog: BasisCatalog, k: int, ell: int, gamma: float,
          time_limit: float = 120.0, node_limit: Optional[int] = None,
          gap: float = 1e-6, warm_start: Optional[Sequence[int]] = None,
          normalize: bool = True) -> SparseFit:
    """Exact hierarchical (k, l)-sparse ridge regression.

    Parameters
    ----------
    X : array_like, shape (n, p')
        Candidate inputs (typically after ranking).
    Y : array_like, shape (n,)
    catalog : BasisCatalog
        Basis on ``p'`` inputs.
    k, ell : int
        Input and monomial budgets.
    gamma : float
        Ridge weight.
    time_limit, node_limit : optional
        On hitting either, the incumbent is returned with termination
        ``"limit"`` and its proven relative gap.
    gap : float
        Relative optimality tolerance.
    warm_start : sequence of int, optional
        Feasible support to start from; defaults to greedy forward
        selection along the loss gradient.
    normalize : bool
        Scale ``Y`` to unit norm internally (objective is rescaled back).
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != catalog.p or X.shape[0] != Y.size:
        raise ValueError(f"incompatible shapes X{X.shape}, Y{Y.shape} "
                         f"for a catalog on {catalog.p} inputs")
    if not 1 <= k <= catalog.p:
        raise ValueError(f"k must lie in [1, {catalog.p}], got {k}")
    if not 1 <= ell <= catalog.f:
        raise ValueError(f"ell must lie in [1, {catalog.f}], got {ell}")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if time_limit is not None and not time_limit > 0:
        raise ValueError(f"time_limit must be positive, got {time_limit}")

    start = time.perf_counter()
    deadline = None if time_limit is None else start + time_limit
    diag = SolveDiagnostics(n=X.shape[0], p_prime=catalog.p, f=catalog.f,
                            k=k, ell=ell, gamma=float(gamma))
    y_norm = float(np.linalg.norm(Y))
    scale = y_norm if (normalize and y_norm > 0) else 1.0
    diag.y_scale = scale

    oracle = LossOracle(catalog.feature_map(X), Y / scale, gamma)
    pool = _CutPool(catalog.f)
    bounder = _Bounder(catalog, k, ell)
    cache = {}
    best_support = np.zeros(0, dtype=np.int64)
    best_value = np.inf

    def evaluate(support):
        nonlocal best_support, best_value
        support = np.sort(np.asarray(support, dtype=np.int64))
        key = _support_key(support)
        if key in cache:
            return cache[key]
        cut = oracle.cut(support)
        pool.add(cut)
        cache[key] = cut.value
        if cut.value < best_value:
            best_value = cut.value
            best_support = support
            diag.incumbent_trace.append(best_value * scale ** 2)
        return cut.value

    if y_norm == 0:
        evaluate([])
        return _finish(diag, pool, best_support, 0.0, "optimal", X, Y,
                       catalog, gamma, scale, start, 0.0)

    # warm start
    if warm_start is not None:
        ws = SparsityPattern.from_support(catalog, warm_start)
        if not ws.is_feasible(catalog, k, ell):
            raise ValueError("warm start violates the sparsity constraints")
        evaluate(ws.support)
    else:
        _greedy_forward(evaluate, pool, bounder, catalog, k, ell)

    def threshold():
        return best_value * (1.0 - gap)

    root = PartialAssignment.empty(catalog.f, catalog.p)
    counter = itertools.count()
    heap = []
    current = (0.0, 0, root.s, root.h)
    termination = "optimal"
    global_lb = 0.0
    closed_by_gap = False

    while True:
        if current is None:
            if not heap:
                break
            parent_bound, _, depth, s_state, h_state = heapq.heappop(heap)
            if parent_bound >= threshold():
                continue
            current = (parent_bound, depth, s_state, h_state)

        parent_bound, depth, s_state, h_state = current
        current = None
        lb_now = min(parent_bound, heap[0][0] if heap else np.inf)
        if lb_now > global_lb:
            global_lb = min(lb_now, best_value)
            diag.bound_trace.append(global_lb * scale ** 2)
        if best_value - global_lb <= gap * best_value:
            closed_by_gap = True
            break
        if deadline is not None and time.perf_counter() > deadline:
            termination = "limit"
            heap.append((parent_bound, 0, 0, s_state, h_state))
            break
        if node_limit is not None and diag.nodes >= node_limit:
            termination = "limit"
            heap.append((parent_bound, 0, 0, s_state, h_state))
            break
        diag.nodes += 1

        info = bounder.analyse(pool, s_state, h_state)
        if info.leaf:
            if pool.value_at(info.ones) < threshold():
                evaluate(info.ones)
            continue
        bound = max(info.bound, parent_bound)
        if bound >= threshold():
            continue

        proposal = bounder.complete(pool, info)
        if _support_key(proposal) not in cache and \
                pool.value_at(proposal) < threshold():
            evaluate(proposal)
            info = bounder.analyse(pool, s_state, h_state)
            bound = max(info.bound, parent_bound)
            if bound >= threshold():
                continue

        left, right = _branch(pool, bounder, info, s_state, h_state)
        heapq.heappush(heap, (bound, next(counter), depth + 1, *right))
        current = (bound, depth + 1, *left)

    if termination == "limit":
        lower = min(best_value, min(item[0] for item in heap))
    elif closed_by_gap:
        lower = global_lb
    else:
        lower = best_value
    return _finish(diag, pool, best_support, best_value, termination, X, Y,
                   catalog, gamma, scale, start, lower)


def _greedy_forward(evaluate, pool, bounder, catalog, k, ell):
    """Add the monomial with the most negative gradient until ``ell`` terms."""
    support = []
    inputs = np.zeros(catalog.p, dtype=bool)
    anc = bounder.anc
    evaluate(support)
    for _ in range(ell):
        g = pool.grads[pool.size - 1].copy()
        g[support] = np.inf
        new_cost = (anc & ~inputs).sum(axis=1)
        g[new_cost > k - inputs.sum()] = np.inf
        j = int(np.argmin(g))
        if not np.isfinite(g[j]):
            break
        support.append(j)
        inputs |= anc[j]
        before = pool.size
        evaluate(sorted(support))
        if pool.size == before:
            break


def _branch(pool, bounder, info, s_state, h_state):
    """Return ``(dive_child, other_child)`` state pairs."""
    g = pool.grads[info.best] if info.best >= 0 else np.zeros(bounder.f)
    if info.binding:
        sub = bounder.anc[info.free][:, info.undecided]
        weight = np.minimum(g[info.free], 0.0) @ sub
        i = int(info.undecided[np.argmin(weight)])
        h_on, h_off = h_state.copy(), h_state.copy()
        h_on[i] = ON
        h_off[i] = OFF
        return (s_state, h_on), (s_state, h_off)
    j = int(info.free[np.argmin(g[info.free])])
    s_on, s_off = s_state.copy(), s_state.copy()
    s_on[j] = ON
    s_off[j] = OFF
    return (s_on, h_state), (s_off, h_state)


def _finish(diag, pool, support, value, termination, X, Y, catalog, gamma,
            scale, start, lower):
    pattern = SparsityPattern.from_support(catalog, support)
    coef = recover_coefficients(pattern, X, Y, gamma, catalog)
    diag.cuts = pool.size
    diag.wall_seconds = time.perf_counter() - start
    diag.objective = value * scale ** 2
    diag.lower_bound = lower * scale ** 2
    diag.gap = 0.0 if value <= 0 else max(0.0, (value - lower) / value)
    diag.termination = termination
    cuts = [Cut(c.value * scale ** 2, c.gradient * scale ** 2, c.anchor)
            for c in pool.cuts]
    return SparseFit(pattern=pattern, coefficients=coef,
                     objective=diag.objective, diagnostics=diag,
                     catalog=catalog, gamma=float(gamma), cuts=cuts)


def write_diagnostics(records, path, append: bool = False):
    """Write solve diagnostics, one CSV row per solve."""
    path = Path(path)
    new = not (append and path.exists())
    with open(path, "a" if append else "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=DIAGNOSTIC_FIELDS)
        if new:
            writer.writeheader()
        for rec in records:
            if isinstance(rec, SolveDiagnostics):
                rec = rec.as_record()
            writer.writerow({k: rec[k] for k in DIAGNOSTIC_FIELDS})
