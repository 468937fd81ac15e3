"""Learning cost and its exact Euclidean gradients.

Per sample the cost is

    g(Omega s) + kappa * h(Omega) + mu * r(Omega)

with the log-sparsity measure ``g``, the full-rank penalty ``h`` and the
incoherence penalty ``r``, where ``Omega`` is the Kronecker composition of
the operator factors. Batch costs average the data term over samples.

The data term of a separable operator is always evaluated by mode products
on the tensor-shaped samples; the composed matrix is only formed for the two
penalties, whose gradients are pulled back to the factors with
:func:`kron_factor_contract`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import RankDeficiencyError
from .oblique import AnalysisOperator
from .tensor import multi_mode_product

# rho^2 is clamped to at most this value inside the incoherence log
RHO2_MAX = 1.0 - 1e-10
_EIG_RATIO = 1e-12


@dataclass(frozen=True)
class ObjectiveParams:
    nu: float = 500.0
    kappa: float = 6500.0
    mu: float = 1e-4

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if self.kappa < 0 or self.mu < 0:
            raise ValueError("kappa and mu must be nonnegative")


@dataclass(frozen=True)
class SignalSet:
    """N vectorized samples (one per row) with their tensor mode sizes."""

    mode_sizes: tuple[int, ...]
    samples: np.ndarray

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.mode_sizes)
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ValueError("samples must be a nonempty (N, p) array")
        if samples.shape[1] != int(np.prod(sizes)):
            raise ValueError(f"sample length {samples.shape[1]} does not match mode sizes {sizes}")
        object.__setattr__(self, "mode_sizes", sizes)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def p(self) -> int:
        return self.samples.shape[1]


# -- sparsity measure -------------------------------------------------------

def sparsity_value(alpha: np.ndarray, nu: float) -> float:
    """``sum_k log(1 + nu alpha_k^2)`` over all entries of ``alpha``."""
    return _kernels.sparsity_terms(alpha, nu)[0]


def sparsity_grad(alpha: np.ndarray, nu: float) -> np.ndarray:
    return _kernels.sparsity_terms(alpha, nu)[1]


def sparsity_lipschitz(nu: float) -> float:
    """Largest slope of ``log(1 + nu a^2)``, attained at ``a = 1/sqrt(nu)``."""
    return float(np.sqrt(nu))


# -- full-rank penalty ------------------------------------------------------

def _rank_terms(k: np.ndarray, with_grad: bool):
    k = np.asarray(k, dtype=float)
    m, p = k.shape
    if m < p:
        raise RankDeficiencyError(f"operator with {m} rows cannot have rank {p}")
    if p == 1:
        # p log p vanishes and (1/m) K^T K == 1 on the manifold; define h = 0
        return 0.0, (np.zeros_like(k) if with_grad else None)
    gram = k.T @ k
    eig = np.linalg.eigvalsh(gram)
    if not eig[0] > _EIG_RATIO * eig[-1]:
        raise RankDeficiencyError(
            f"K^T K is numerically singular (eigenvalue ratio {eig[0] / eig[-1]:.3e})"
        )
    scale = 1.0 / (p * np.log(p))
    value = -scale * float(np.sum(np.log(eig / m)))
    grad = None
    if with_grad:
        grad = -2.0 * scale * np.linalg.solve(gram, k.T).T
    return value, grad


def rank_penalty(k: np.ndarray) -> float:
    """``-(1/(p log p)) log det(K^T K / m)``; raises on rank deficiency."""
    return _rank_terms(k, False)[0]


def rank_penalty_grad(k: np.ndarray) -> np.ndarray:
    return _rank_terms(k, True)[1]


# -- incoherence penalty ----------------------------------------------------

def _coherence(k: np.ndarray):
    k = np.asarray(k, dtype=float)
    rho = k @ k.T
    np.fill_diagonal(rho, 0.0)
    rho2 = rho * rho
    clamped = rho2 > RHO2_MAX
    return k, rho, np.minimum(rho2, RHO2_MAX), clamped


def incoherence_penalty(k: np.ndarray) -> float:
    """``-sum_{k<l} log(1 - rho_kl^2)`` with ``rho^2`` clamped below 1."""
    _, _, rho2, _ = _coherence(k)
    return -0.5 * float(np.sum(np.log1p(-rho2)))


def incoherence_penalty_grad(k: np.ndarray) -> np.ndarray:
    k, rho, rho2, _ = _coherence(k)
    weights = 2.0 * rho / (1.0 - rho2)
    return weights @ k


def clamped_pairs(k: np.ndarray) -> int:
    """Number of row pairs whose squared correlation hit the clamp."""
    return int(np.count_nonzero(np.triu(_coherence(k)[3], 1)))


# -- Kronecker chain rule ---------------------------------------------------

_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def kron_factor_contract(g_full: np.ndarray, factors: Sequence[np.ndarray], i: int) -> np.ndarray:
    """Pull a gradient w.r.t. the composed operator back to factor ``i``.

    Entry (a, b) of the result is ``<G, d kron(factors) / d factors[i][a, b]>``.
    """
    factors = [np.asarray(f, dtype=float) for f in factors]
    g_full = np.asarray(g_full, dtype=float)
    ms = [f.shape[0] for f in factors]
    ps = [f.shape[1] for f in factors]
    if g_full.shape != (int(np.prod(ms)), int(np.prod(ps))):
        raise ValueError(f"gradient of shape {g_full.shape} does not match factors {ms}x{ps}")
    if not 0 <= i < len(factors):
        raise ValueError(f"factor index {i} out of range")
    t = len(factors)
    if t == 1:
        return g_full.copy()
    rows = _LETTERS[:t]
    cols = _LETTERS[t:2 * t]
    operands = [g_full.reshape(ms + ps)]
    subs = [rows + cols]
    for j, f in enumerate(factors):
        if j != i:
            operands.append(f)
            subs.append(rows[j] + cols[j])
    expr = ",".join(subs) + "->" + rows[i] + cols[i]
    return np.einsum(expr, *operands)


# -- batch cost and gradient ------------------------------------------------

def _as_tensors(op: AnalysisOperator, batch: np.ndarray) -> np.ndarray:
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    if batch.shape[1] != op.p:
        raise ValueError(f"sample length {batch.shape[1]} does not match operator with p={op.p}")
    return batch.reshape((batch.shape[0],) + op.mode_sizes)


def analyze(op: AnalysisOperator, batch: np.ndarray) -> np.ndarray:
    """Analyzed signals as a (n, m_1, ..., m_T) tensor, via mode products."""
    return multi_mode_product(_as_tensors(op, batch), op.factors, offset=1)


def penalty_terms(op: AnalysisOperator, params: ObjectiveParams, with_grad: bool = True):
    """Weighted penalty value and its gradient w.r.t. the composed operator."""
    if params.kappa == 0 and params.mu == 0:
        return 0.0, (np.zeros((op.m, op.p)) if with_grad else None)
    k = op.compose()
    value, grad = 0.0, (np.zeros_like(k) if with_grad else None)
    if params.kappa:
        h, gh = _rank_terms(k, with_grad)
        value += params.kappa * h
        if with_grad:
            grad += params.kappa * gh
    if params.mu:
        value += params.mu * incoherence_penalty(k)
        if with_grad:
            grad += params.mu * incoherence_penalty_grad(k)
    return value, grad


def sample_cost(op: AnalysisOperator, batch: np.ndarray, params: ObjectiveParams) -> float:
    """Mean data cost over the batch plus the weighted penalties."""
    a = analyze(op, batch)
    data = _kernels.sparsity_terms(a, params.nu)[0] / a.shape[0]
    return data + penalty_terms(op, params, with_grad=False)[0]


def cost_and_gradient(op: AnalysisOperator, batch: np.ndarray, params: ObjectiveParams):
    """Batch cost and per-factor Euclidean gradients from one forward pass."""
    s = _as_tensors(op, batch)
    n = s.shape[0]
    a = multi_mode_product(s, op.factors, offset=1)
    data, b = _kernels.sparsity_terms(a, params.nu)
    pen, pen_grad = penalty_terms(op, params, with_grad=True)
    grads = []
    for i in range(len(op.factors)):
        partial = multi_mode_product(s, op.factors, skip=i, offset=1)
        axes = [0] + [j + 1 for j in range(len(op.factors)) if j != i]
        g = np.tensordot(b, partial, axes=(axes, axes)) / n
        if params.kappa or params.mu:
            g = g + kron_factor_contract(pen_grad, op.factors, i)
        grads.append(g)
    return data / n + pen, grads


def euclidean_gradient(op: AnalysisOperator, batch: np.ndarray, params: ObjectiveParams) -> list[np.ndarray]:
    return cost_and_gradient(op, batch, params)[1]
