"""Operator-recovery scoring and the sample-complexity bound calculator."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .oblique import AnalysisOperator


def _composed(op) -> np.ndarray:
    if isinstance(op, AnalysisOperator):
        return op.compose()
    return np.atleast_2d(np.asarray(op, dtype=float))


def confusion_matrix(learned, gt) -> np.ndarray:
    """``C[i, j] = 1 - |<learned_i, gt_j>|`` on the composed operators.

    Accepts :class:`AnalysisOperator` instances or plain row-normalized arrays.
    """
    a, b = _composed(learned), _composed(gt)
    if a.shape[0] != b.shape[0]:
        raise ValueError(f"row counts differ: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"filter lengths differ: {a.shape[1]} vs {b.shape[1]}")
    return np.clip(1.0 - np.abs(a @ b.T), 0.0, 1.0)


def _lexicographic_optimum(cost, match, u, v):
    """Smallest optimal permutation in lexicographic order.

    Every optimal assignment uses only edges that are tight for the optimal
    duals, so it suffices to find the lexicographically smallest perfect
    matching in the tight-edge graph, starting from the matching ``match``.
    """
    n = cost.shape[0]
    tol = 1e-12 * max(1.0, float(np.max(np.abs(cost))))
    tight = (cost - u[:, None] - v[None, :]) <= tol
    tight[np.arange(n), match] = True
    match = match.copy()
    owner = np.empty(n, dtype=np.int64)
    owner[match] = np.arange(n)
    fixed_col = np.zeros(n, dtype=bool)

    def reroute(row, target, banned, seen):
        # alternating path: give `row` a new tight column, ending when `target` is taken
        for c in np.flatnonzero(tight[row]):
            if fixed_col[c] or c == banned or seen[c]:
                continue
            seen[c] = True
            if c == target or reroute(owner[c], target, banned, seen):
                match[row] = c
                owner[c] = row
                return True
        return False

    for i in range(n):
        for j in np.flatnonzero(tight[i]):
            if fixed_col[j]:
                continue
            if j == match[i]:
                break
            old = match[i]
            seen = np.zeros(n, dtype=bool)
            seen[j] = True
            if reroute(owner[j], old, j, seen):
                match[i] = j
                owner[j] = i
                break
        fixed_col[match[i]] = True
    return match


def hungarian_min_assignment(cost: np.ndarray) -> tuple[np.ndarray, float]:
    """Minimum-cost assignment of rows to columns of a square matrix.

    Returns ``(perm, total)`` where row ``i`` is matched to column
    ``perm[i]``. Among optimal assignments the lexicographically smallest
    ``perm`` is returned.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"assignment needs a square matrix, got shape {cost.shape}")
    n = cost.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64), 0.0
    match, u, v = _kernels.hungarian(cost)
    perm = _lexicographic_optimum(cost, np.asarray(match), np.asarray(u), np.asarray(v))
    return perm, math.fsum(cost[np.arange(n), perm])


def recovery_error(learned, gt) -> float:
    """Minimal assignment cost of the confusion matrix; 0 iff exact recovery up to sign/permutation."""
    return hungarian_min_assignment(confusion_matrix(learned, gt))[1]


@dataclass(frozen=True)
class BoundInputs:
    factor_dims: tuple[tuple[int, int], ...]
    lipschitz: float
    samples: int
    delta: float
    separable: bool = True

    def __post_init__(self):
        dims = tuple((int(m), int(p)) for m, p in self.factor_dims)
        if not dims or any(m < 1 or p < 1 for m, p in dims):
            raise ValueError("factor dimensions must be positive")
        if self.lipschitz < 0:
            raise ValueError("lipschitz constant must be nonnegative")
        if self.samples < 1:
            raise ValueError("sample count must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        object.__setattr__(self, "factor_dims", dims)


def constraint_constant(factor_dims: Sequence[tuple[int, int]], separable: bool) -> float:
    """``sum_i m_i sqrt(p_i)`` for separable operators, ``m sqrt(p)`` otherwise."""
    if separable:
        return float(sum(m * math.sqrt(p) for m, p in factor_dims))
    m = math.prod(m for m, _ in factor_dims)
    p = math.prod(p for _, p in factor_dims)
    return m * math.sqrt(p)


def complexity_bound(b: BoundInputs) -> tuple[float, float]:
    """Constant of the constraint set and the deviation bound ``eta``.

    With probability at least ``1 - delta`` the expected cost exceeds the
    empirical cost by at most

        sqrt(2 pi) lambda C / sqrt(N) + 3 sqrt(2 lambda^2 m ln(2/delta) / N).

    The same value bounds the absolute deviation when the function class is
    symmetrized; :func:`estimation_error_bound` doubles it.
    """
    c = constraint_constant(b.factor_dims, b.separable)
    m = math.prod(m for m, _ in b.factor_dims)
    lam, n = b.lipschitz, b.samples
    eta = (math.sqrt(2 * math.pi) * lam * c / math.sqrt(n)
           + 3.0 * math.sqrt(2 * lam ** 2 * m * math.log(2 / b.delta) / n))
    return c, eta


def estimation_error_bound(b: BoundInputs) -> float:
    """Upper bound on the estimation error: twice the deviation bound."""
    return 2.0 * complexity_bound(b)[1]
