"""Tensor primitives: vectorization, mode products, unfoldings, Kronecker composition.

Tensors are plain ``numpy.ndarray`` objects in C order, so the canonical
linearization (last mode varies fastest) is simply ``ravel()``. With this
convention

    vec(S x_0 A_0 x_1 A_1 ... ) == kron(A_0, A_1, ...) @ vec(S)

holds with the Kronecker factors in natural order.

Mode indices are zero-based, like numpy axes.
"""
from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np


def _check_mode(ndim: int, k: int) -> None:
    if not 0 <= k < ndim:
        raise ValueError(f"mode {k} out of range for a {ndim}-way tensor")


def mode_product(t: np.ndarray, m: np.ndarray, k: int) -> np.ndarray:
    """k-mode product ``t x_k m``.

    Parameters
    ----------
    t : ndarray
        Tensor of shape (I_0, ..., I_{T-1}).
    m : ndarray
        Matrix of shape (J, I_k).
    k : int
        Zero-based mode index.

    Returns
    -------
    ndarray
        Tensor with mode ``k`` replaced by ``J``.
    """
    t = np.asarray(t, dtype=float)
    m = np.asarray(m, dtype=float)
    _check_mode(t.ndim, k)
    if m.ndim != 2 or m.shape[1] != t.shape[k]:
        raise ValueError(
            f"matrix of shape {m.shape} incompatible with mode {k} of size {t.shape[k]}"
        )
    out = np.tensordot(m, t, axes=([1], [k]))
    return np.moveaxis(out, 0, k)


def _apply_along(t: np.ndarray, m: np.ndarray, k: int) -> np.ndarray:
    # unchecked mode product as one broadcast matmul over a (left, I_k, right) view
    shape = t.shape
    left = int(np.prod(shape[:k], dtype=np.int64))
    out = m @ t.reshape(left, shape[k], -1)
    return out.reshape(shape[:k] + (m.shape[0],) + shape[k + 1:])


def multi_mode_product(t: np.ndarray, factors: Sequence[np.ndarray], skip: int | None = None,
                       offset: int = 0) -> np.ndarray:
    """Apply ``factors[j]`` along mode ``offset + j`` for every j except ``skip``.

    ``offset`` lets a leading batch axis pass through untouched.
    """
    out = np.asarray(t, dtype=float)
    if out.ndim != offset + len(factors):
        raise ValueError(f"tensor with {out.ndim} modes cannot take {len(factors)} factors at offset {offset}")
    for j, f in enumerate(factors):
        if j == skip:
            continue
        if f.shape[1] != out.shape[offset + j]:
            raise ValueError(f"factor {j} of shape {f.shape} incompatible with mode size {out.shape[offset + j]}")
        out = _apply_along(out, f, offset + j)
    return out


def vec(t: np.ndarray) -> np.ndarray:
    """Canonical linearization of a tensor (last mode fastest)."""
    return np.ascontiguousarray(t, dtype=float).ravel()


def unvec(v: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    shape = tuple(int(s) for s in shape)
    if v.ndim != 1 or v.size != int(np.prod(shape)):
        raise ValueError(f"vector of length {v.size} cannot be reshaped to {shape}")
    return v.reshape(shape).copy()


def kron_compose(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product ``factors[0] (x) factors[1] (x) ...``.

    A single factor is returned as a copy.
    """
    if len(factors) == 0:
        raise ValueError("kron_compose needs at least one factor")
    mats = [np.atleast_2d(np.asarray(f, dtype=float)) for f in factors]
    return reduce(_kron2, mats[1:], mats[0].copy())


def _kron2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    (ra, ca), (rb, cb) = a.shape, b.shape
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(ra * rb, ca * cb)


def mode_unfold(t: np.ndarray, k: int) -> np.ndarray:
    """Mode-k unfolding: ``I_k`` rows, remaining modes as columns, last mode fastest."""
    t = np.asarray(t, dtype=float)
    _check_mode(t.ndim, k)
    return np.moveaxis(t, k, 0).reshape(t.shape[k], -1).copy()


def mode_fold(m: np.ndarray, shape: Sequence[int], k: int) -> np.ndarray:
    """Inverse of :func:`mode_unfold` for a tensor of the given shape."""
    m = np.asarray(m, dtype=float)
    shape = tuple(int(s) for s in shape)
    _check_mode(len(shape), k)
    rest = shape[:k] + shape[k + 1:]
    if m.shape != (shape[k], int(np.prod(rest))):
        raise ValueError(f"matrix of shape {m.shape} cannot fold into {shape} along mode {k}")
    return np.moveaxis(m.reshape((shape[k],) + rest), 0, k).copy()
