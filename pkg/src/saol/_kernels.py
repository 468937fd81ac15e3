"""Hot inner loops, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports and ``SAOL_DISABLE_NUMBA`` is
unset (or "0"). Both implementations are always importable from
:data:`NUMPY` and :data:`NUMBA` (the latter is ``None`` without numba) so the
benchmark and the parity tests can call them side by side.
"""
from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


# --------------------------------------------------------------------------
# numpy implementations
# --------------------------------------------------------------------------

def _sparsity_terms_np(a, nu):
    sq = a * a
    value = np.log1p(nu * sq).sum()
    grad = (2.0 * nu) * a / (1.0 + nu * sq)
    return float(value), grad


def _correlate_valid_np(img, kernels):
    q = kernels.shape[1]
    win = np.lib.stride_tricks.sliding_window_view(img, (q, q))
    return np.einsum("yxuv,cuv->cyx", win, kernels, optimize=True)


def _correlate_adjoint_np(maps, kernels, height, width):
    c, hh, ww = maps.shape
    q = kernels.shape[1]
    out = np.zeros((height, width))
    flat = maps.reshape(c, -1)
    for u in range(q):
        for v in range(q):
            out[u:u + hh, v:v + ww] += (kernels[:, u, v] @ flat).reshape(hh, ww)
    return out


def _hungarian_np(cost):
    n = cost.shape[0]
    a = np.zeros((n + 1, n + 1))
    a[1:, 1:] = cost
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    cols = np.arange(1, n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = cols[~used[1:]]
            cur = a[i0, free] - u[i0] - v[free]
            better = cur < minv[free]
            minv[free[better]] = cur[better]
            way[free[better]] = j0
            k = int(np.argmin(minv[free]))
            delta = minv[free[k]]
            j1 = int(free[k])
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_to_col = np.empty(n, dtype=np.int64)
    row_to_col[p[1:] - 1] = np.arange(n)
    return row_to_col, u[1:].copy(), v[1:].copy()


NUMPY = SimpleNamespace(
    name="numpy",
    sparsity_terms=_sparsity_terms_np,
    correlate_valid=_correlate_valid_np,
    correlate_adjoint=_correlate_adjoint_np,
    hungarian=_hungarian_np,
)


# --------------------------------------------------------------------------
# numba implementations
# --------------------------------------------------------------------------

def _build_numba():
    njit = numba.njit(cache=True, nogil=True)

    @njit
    def sparsity_terms(a, nu):
        flat = a.ravel()
        grad = np.empty(flat.size)
        value = 0.0
        for k in range(flat.size):
            x = flat[k]
            d = 1.0 + nu * x * x
            value += np.log1p(nu * x * x)
            grad[k] = 2.0 * nu * x / d
        return value, grad.reshape(a.shape)

    # loops ordered so the innermost one runs along contiguous image rows
    @njit
    def correlate_valid(img, kernels):
        c, q = kernels.shape[0], kernels.shape[1]
        hh = img.shape[0] - q + 1
        ww = img.shape[1] - q + 1
        out = np.zeros((c, hh, ww))
        for f in range(c):
            for u in range(q):
                for v in range(q):
                    k = kernels[f, u, v]
                    for y in range(hh):
                        for x in range(ww):
                            out[f, y, x] += k * img[y + u, x + v]
        return out

    @njit
    def correlate_adjoint(maps, kernels, height, width):
        c, hh, ww = maps.shape
        q = kernels.shape[1]
        out = np.zeros((height, width))
        for f in range(c):
            for u in range(q):
                for v in range(q):
                    k = kernels[f, u, v]
                    for y in range(hh):
                        for x in range(ww):
                            out[y + u, x + v] += k * maps[f, y, x]
        return out

    @njit
    def hungarian(cost):
        n = cost.shape[0]
        u = np.zeros(n + 1)
        v = np.zeros(n + 1)
        p = np.zeros(n + 1, dtype=np.int64)
        way = np.zeros(n + 1, dtype=np.int64)
        minv = np.empty(n + 1)
        used = np.empty(n + 1, dtype=np.bool_)
        for i in range(1, n + 1):
            p[0] = i
            j0 = 0
            minv[:] = np.inf
            used[:] = False
            while True:
                used[j0] = True
                i0 = p[j0]
                delta = np.inf
                j1 = 0
                for j in range(1, n + 1):
                    if not used[j]:
                        cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                        if cur < minv[j]:
                            minv[j] = cur
                            way[j] = j0
                        if minv[j] < delta:
                            delta = minv[j]
                            j1 = j
                for j in range(n + 1):
                    if used[j]:
                        u[p[j]] += delta
                        v[j] -= delta
                    else:
                        minv[j] -= delta
                j0 = j1
                if p[j0] == 0:
                    break
            while j0 != 0:
                j1 = way[j0]
                p[j0] = p[j1]
                j0 = j1
        row_to_col = np.empty(n, dtype=np.int64)
        for j in range(1, n + 1):
            row_to_col[p[j] - 1] = j - 1
        return row_to_col, u[1:].copy(), v[1:].copy()

    return SimpleNamespace(
        name="numba",
        sparsity_terms=sparsity_terms,
        correlate_valid=correlate_valid,
        correlate_adjoint=correlate_adjoint,
        hungarian=hungarian,
    )


NUMBA = _build_numba() if numba is not None else None

_disabled = os.environ.get("SAOL_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")
ACTIVE = NUMPY if (_disabled or NUMBA is None) else NUMBA
BACKEND = ACTIVE.name


def sparsity_terms(a: np.ndarray, nu: float) -> tuple[float, np.ndarray]:
    """Sum of ``log(1 + nu a^2)`` over all entries and its entrywise derivative."""
    return ACTIVE.sparsity_terms(np.ascontiguousarray(a, dtype=float), float(nu))


def correlate_valid(img: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    return ACTIVE.correlate_valid(np.ascontiguousarray(img, dtype=float),
                                  np.ascontiguousarray(kernels, dtype=float))


def correlate_adjoint(maps: np.ndarray, kernels: np.ndarray, height: int, width: int) -> np.ndarray:
    return ACTIVE.correlate_adjoint(np.ascontiguousarray(maps, dtype=float),
                                    np.ascontiguousarray(kernels, dtype=float),
                                    int(height), int(width))


def hungarian(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shortest-augmenting-path assignment; returns (row_to_col, row duals, col duals)."""
    return ACTIVE.hungarian(np.ascontiguousarray(cost, dtype=float))
