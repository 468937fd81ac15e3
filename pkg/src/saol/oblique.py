"""Geometry of products of oblique manifolds Ob(m, p).

A point of Ob(m, p) is an ``m x p`` array with unit-norm rows, i.e. a
product of ``m`` unit spheres. Geodesics are exact great circles per row.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import kron_compose

ROW_NORM_TOL = 1e-10
_ZERO_DIRECTION = 1e-14


def random_oblique(m: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. standard normal entries and scale each row to unit norm.

    Rows that come out (numerically) zero are redrawn, at most 100 times.
    """
    if m < 1 or p < 1:
        raise ValueError(f"oblique manifold dimensions must be positive, got ({m}, {p})")
    for _ in range(100):
        x = rng.standard_normal((m, p))
        norms = np.linalg.norm(x, axis=1)
        if np.all(norms > 1e-300):
            return x / norms[:, None]
    raise RuntimeError("could not draw a matrix without zero rows")


def normalize_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def is_oblique(x: np.ndarray, tol: float = ROW_NORM_TOL) -> bool:
    x = np.asarray(x)
    return x.ndim == 2 and bool(np.all(np.abs(np.linalg.norm(x, axis=1) - 1.0) <= tol))


def project_to_tangent(omega: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Remove from each row of ``g`` its component along the matching row of ``omega``."""
    omega = np.asarray(omega, dtype=float)
    g = np.asarray(g, dtype=float)
    if omega.shape != g.shape:
        raise ValueError(f"shape mismatch: point {omega.shape}, direction {g.shape}")
    return g - np.sum(g * omega, axis=1, keepdims=True) * omega


def geodesic_step(omega: np.ndarray, h: np.ndarray, t: float) -> np.ndarray:
    """Follow the geodesic from ``omega`` in tangent direction ``h`` for time ``t``.

    Per row: ``w cos(t|h|) + (h/|h|) sin(t|h|)``. Rows whose direction has
    norm below 1e-14 are left unchanged. The result is renormalized to
    absorb rounding, so rows stay unit norm to machine precision.
    """
    omega = np.asarray(omega, dtype=float)
    h = np.asarray(h, dtype=float)
    if omega.shape != h.shape:
        raise ValueError(f"shape mismatch: point {omega.shape}, direction {h.shape}")
    norms = np.linalg.norm(h, axis=1)
    moving = norms >= _ZERO_DIRECTION
    out = omega.copy()
    if not np.any(moving):
        return out
    hn = norms[moving]
    angle = t * hn
    rows = (omega[moving] * np.cos(angle)[:, None]
            + h[moving] * (np.sin(angle) / hn)[:, None])
    out[moving] = rows / np.linalg.norm(rows, axis=1, keepdims=True)
    return out


@dataclass(frozen=True, init=False, eq=False)
class AnalysisOperator:
    """Ordered list of oblique factors; one factor means a non-separable operator.

    The full operator is the Kronecker product of the factors in order.
    """

    factors: tuple[np.ndarray, ...]

    def __init__(self, factors: Sequence[np.ndarray], check: bool = True):
        mats = tuple(np.array(f, dtype=float, copy=True, ndmin=2) for f in factors)
        if not mats:
            raise ValueError("an analysis operator needs at least one factor")
        for f in mats:
            f.setflags(write=False)
            if check and not is_oblique(f):
                raise ValueError("factor rows must have unit Euclidean norm")
        object.__setattr__(self, "factors", mats)

    @classmethod
    def random(cls, shapes: Sequence[tuple[int, int]], rng: np.random.Generator) -> "AnalysisOperator":
        return cls([random_oblique(m, p, rng) for m, p in shapes])

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [f.shape for f in self.factors]

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return tuple(f.shape[1] for f in self.factors)

    @property
    def m(self) -> int:
        return int(np.prod([f.shape[0] for f in self.factors]))

    @property
    def p(self) -> int:
        return int(np.prod(self.mode_sizes))

    @property
    def separable(self) -> bool:
        return len(self.factors) > 1

    def compose(self) -> np.ndarray:
        return kron_compose(self.factors)

    def step(self, direction: Sequence[np.ndarray], t: float) -> "AnalysisOperator":
        """Geodesic step on the product manifold, factor by factor."""
        return AnalysisOperator(
            [geodesic_step(f, h, t) for f, h in zip(self.factors, direction)], check=False
        )

    def __eq__(self, other):
        if not isinstance(other, AnalysisOperator) or len(other.factors) != len(self.factors):
            return NotImplemented
        return all(a.shape == b.shape and np.array_equal(a, b)
                   for a, b in zip(self.factors, other.factors))

    __hash__ = None


def project_direction(op: AnalysisOperator, grads: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Project per-factor Euclidean gradients onto the tangent space at ``op``."""
    return [project_to_tangent(f, g) for f, g in zip(op.factors, grads)]


def direction_sqnorm(direction: Sequence[np.ndarray]) -> float:
    """Squared norm under the product metric (sum of Frobenius norms squared)."""
    return float(sum(np.sum(np.asarray(h) ** 2) for h in direction))
