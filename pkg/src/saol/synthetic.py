"""Cosparse signals drawn from the null spaces of ground-truth filter subsets."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .objective import SignalSet
from .oblique import AnalysisOperator, random_oblique

log = logging.getLogger(__name__)

_RANK_TOL = 1e-10
_MAX_RETRIES = 100


@dataclass(frozen=True)
class CosparseSpec:
    cosparsity: int
    noise_sigma: float = 0.0
    count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.cosparsity < 1:
            raise ValueError("cosparsity must be at least 1")
        if self.count < 1:
            raise ValueError("count must be at least 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")


def null_space_basis(rows: np.ndarray) -> np.ndarray | None:
    """Orthonormal null-space basis (as columns) of a full-row-rank matrix, else None."""
    _, s, vt = np.linalg.svd(rows, full_matrices=True)
    if s.size == 0 or s[-1] <= _RANK_TOL * s[0]:
        return None
    return vt[rows.shape[0]:].T


def random_tight_frame(m: int, p: int, rng: np.random.Generator, iters: int = 500) -> np.ndarray:
    """Random unit-row ``m x p`` matrix that is (close to) a tight frame.

    Alternates between the nearest tight frame ``sqrt(m/p) U V^T`` and row
    normalization, starting from a random oblique point. The result always
    has unit rows; for ``m >= p`` its Gram matrix approaches ``(m/p) I``.
    """
    x = random_oblique(m, p, rng)
    if m < p:
        return x
    for _ in range(iters):
        u, _, vt = np.linalg.svd(x, full_matrices=False)
        x = np.sqrt(m / p) * (u @ vt)
        x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x


def random_tight_operator(shapes, rng: np.random.Generator, iters: int = 500) -> AnalysisOperator:
    """Separable operator whose factors come from :func:`random_tight_frame`."""
    return AnalysisOperator([random_tight_frame(m, p, rng, iters) for m, p in shapes])


def generate_cosparse(op_gt: AnalysisOperator, spec: CosparseSpec, return_supports: bool = False):
    """Sample ``spec.count`` signals with ``spec.cosparsity`` vanishing responses.

    Per sample a support of ``cosparsity`` filters is chosen uniformly, the
    signal is a standard normal combination of an orthonormal basis of the
    null space of those filters, scaled to unit norm. Gaussian noise is added
    afterwards, without renormalizing.

    Returns
    -------
    SignalSet or (SignalSet, ndarray)
        With ``return_supports`` the (count, cosparsity) array of selected
        filter indices is returned as well.
    """
    k = op_gt.compose()
    m, p = k.shape
    ell = spec.cosparsity
    if ell >= p:
        raise ValueError(f"cosparsity {ell} must be smaller than the signal length {p}")
    if ell > m:
        raise ValueError(f"cosparsity {ell} exceeds the number of filters {m}")
    rng = np.random.default_rng(spec.seed)
    out = np.empty((spec.count, p))
    supports = np.empty((spec.count, ell), dtype=np.int64)
    resampled = 0
    for n in range(spec.count):
        for _ in range(_MAX_RETRIES):
            support = np.sort(rng.choice(m, size=ell, replace=False))
            basis = null_space_basis(k[support])
            if basis is not None:
                break
            resampled += 1
        else:
            raise NumericalError(
                f"no full-rank filter subset of size {ell} found after {_MAX_RETRIES} draws"
            )
        s = basis @ rng.standard_normal(p - ell)
        out[n] = s / np.linalg.norm(s)
        supports[n] = support
    if resampled:
        log.info("resampled %d rank-deficient supports", resampled)
    if spec.noise_sigma > 0:
        out += spec.noise_sigma * rng.standard_normal(out.shape)
    signals = SignalSet(op_gt.mode_sizes, out)
    return (signals, supports) if return_supports else signals
