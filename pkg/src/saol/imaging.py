"""Grayscale image I/O, training-patch extraction and analysis-prior denoising."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import BadMagicError, DataFormatError, TruncatedFileError
from .io import atomic_write
from .objective import SignalSet
from .oblique import AnalysisOperator


# -- PGM --------------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise TruncatedFileError("PGM header ends prematurely")
        tokens.append(data[start:pos])
    return tokens, pos + 1  # exactly one whitespace byte before the raster


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    """Load a binary (P5) 8-bit PGM as a float array of shape (height, width)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P5":
        raise BadMagicError(f"{path}: not a binary PGM (P5) file")
    try:
        tokens, offset = _pgm_tokens(data, 3)
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise DataFormatError(f"{path}: malformed PGM header") from exc
    if not 0 < maxval < 256:
        raise DataFormatError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    need = width * height
    raster = data[offset:offset + need]
    if len(raster) < need:
        raise TruncatedFileError(f"{path}: expected {need} pixel bytes, found {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).astype(float)


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def write_pgm(path: str | os.PathLike, img: np.ndarray) -> None:
    """Write an image as 8-bit P5, clamping and rounding to [0, 255]. Atomic."""
    pixels = to_uint8(np.asarray(img))
    h, w = pixels.shape
    payload = f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()
    atomic_write(path, payload)


# -- patches ----------------------------------------------------------------

def extract_patches(images: np.ndarray | Sequence[np.ndarray], patch_size: int, count: int,
                    rng: np.random.Generator, max_draws: int | None = None) -> SignalSet:
    """Draw ``count`` random ``q x q`` patches, remove their mean and scale to unit norm.

    Positions are uniform over all valid patch positions of all images.
    Patches whose norm after mean removal is below 1e-8 are redrawn; at most
    ``max_draws`` draws are made in total (default ``100 * count``).
    """
    if isinstance(images, np.ndarray) and images.ndim == 2:
        images = [images]
    images = [np.asarray(im, dtype=float) for im in images]
    q = int(patch_size)
    if q < 1:
        raise ValueError("patch size must be positive")
    for im in images:
        if q > min(im.shape):
            raise ValueError(f"patch size {q} exceeds image of shape {im.shape}")
    positions = np.array([(im.shape[0] - q + 1) * (im.shape[1] - q + 1) for im in images])
    offsets = np.concatenate([[0], np.cumsum(positions)])
    budget = 100 * count if max_draws is None else max_draws
    out = np.empty((count, q * q))
    filled = draws = 0
    while filled < count:
        if draws >= budget:
            raise DataFormatError(
                f"only {filled} of {count} patches had nonzero contrast after {draws} draws"
            )
        draws += 1
        flat = int(rng.integers(0, offsets[-1]))
        which = int(np.searchsorted(offsets, flat, side="right") - 1)
        im = images[which]
        y, x = divmod(flat - int(offsets[which]), im.shape[1] - q + 1)
        patch = im[y:y + q, x:x + q].ravel()
        patch = patch - patch.mean()
        norm = np.linalg.norm(patch)
        if norm < 1e-8:
            continue
        out[filled] = patch / norm
        filled += 1
    return SignalSet((q, q), out)


# -- filtering --------------------------------------------------------------

def _kernels_of(op: AnalysisOperator | np.ndarray) -> np.ndarray:
    k = op.compose() if isinstance(op, AnalysisOperator) else np.asarray(op, dtype=float)
    q = math.isqrt(k.shape[1])
    if q * q != k.shape[1]:
        raise ValueError(f"filter length {k.shape[1]} is not a square patch size")
    return k.reshape(k.shape[0], q, q)


def apply_operator_image(op: AnalysisOperator | np.ndarray, img: np.ndarray) -> np.ndarray:
    """Correlate the image with every filter over all valid positions.

    Returns an array of shape ``(m, height - q + 1, width - q + 1)``.
    """
    kernels = _kernels_of(op)
    img = np.asarray(img, dtype=float)
    if kernels.shape[1] > min(img.shape):
        raise ValueError(f"filters of size {kernels.shape[1]} exceed image of shape {img.shape}")
    return _kernels.correlate_valid(img, kernels)


def apply_operator_adjoint(op: AnalysisOperator | np.ndarray, maps: np.ndarray,
                           shape: tuple[int, int]) -> np.ndarray:
    """Adjoint of :func:`apply_operator_image`: scatter-add filters weighted by responses."""
    kernels = _kernels_of(op)
    maps = np.asarray(maps, dtype=float)
    q = kernels.shape[1]
    expected = (kernels.shape[0], shape[0] - q + 1, shape[1] - q + 1)
    if maps.shape != expected:
        raise ValueError(f"response maps of shape {maps.shape}, expected {expected}")
    return _kernels.correlate_adjoint(maps, kernels, shape[0], shape[1])


# -- denoising --------------------------------------------------------------

@dataclass(frozen=True)
class DenoiseConfig:
    tau: float = 0.40
    huber_mu: float = 0.01
    max_iters: int = 300
    tol: float = 1e-5
    power_iters: int = 50
    remove_dc: bool = True

    def __post_init__(self):
        if not self.tau > 0 or not self.huber_mu > 0:
            raise ValueError("tau and huber_mu must be positive")


@dataclass(frozen=True)
class DenoiseResult:
    image: np.ndarray
    objective: list[float]
    iterations: int
    lipschitz: float


def huber(z: np.ndarray, mu: float) -> np.ndarray:
    a = np.abs(z)
    return np.where(a <= mu, z * z / (2 * mu), a - mu / 2)


def operator_norm_sq(op, shape, iters: int = 50, seed: int = 0) -> float:
    """Power-iteration estimate of the largest eigenvalue of ``A^T A``.

    Falls back to the bound ``m q^2`` when the iteration does not produce a
    finite positive estimate.
    """
    kernels = _kernels_of(op)
    fallback = float(kernels.shape[0] * kernels.shape[1] ** 2)
    x = np.random.default_rng(seed).standard_normal(shape)
    est = 0.0
    for _ in range(iters):
        x /= np.linalg.norm(x)
        y = _kernels.correlate_adjoint(_kernels.correlate_valid(x, kernels), kernels, *shape)
        est = float(np.vdot(x, y))
        x = y
        if not np.isfinite(est) or np.linalg.norm(x) == 0:
            return fallback
    if not est > 0:
        return fallback
    # power iteration approaches from below; pad it so 1/L stays a safe step
    return min(1.01 * est, fallback)


def denoise(y: np.ndarray, op, cfg: DenoiseConfig = DenoiseConfig()) -> DenoiseResult:
    """Minimize ``tau sum huber(A x) + 0.5 |y - x|^2`` with monotone accelerated gradient.

    ``A`` applies every filter of ``op`` to every overlapping patch. With
    ``cfg.remove_dc`` each patch has its mean removed first, as for training
    samples; this equals filtering with zero-mean kernels. The Huber function
    with small ``huber_mu`` smooths the l1 analysis prior.
    The objective trace is nonincreasing by construction: each iteration
    keeps the better of the new gradient point and the previous iterate.
    """
    y = np.asarray(y, dtype=float)
    kernels = _kernels_of(op)
    if cfg.remove_dc:
        kernels = kernels - kernels.mean(axis=(1, 2), keepdims=True)
    shape = y.shape
    tau, mu = cfg.tau, cfg.huber_mu
    lip = 1.0 + tau * operator_norm_sq(kernels.reshape(kernels.shape[0], -1), shape,
                                       cfg.power_iters) / mu

    def objective(x, ax):
        return tau * float(huber(ax, mu).sum()) + 0.5 * float(np.sum((y - x) ** 2))

    def gradient(x):
        ax = _kernels.correlate_valid(x, kernels)
        return x - y + tau * _kernels.correlate_adjoint(np.clip(ax / mu, -1.0, 1.0), kernels, *shape)

    x = y.copy()
    fx = objective(x, _kernels.correlate_valid(x, kernels))
    trace = [fx]
    z = x.copy()
    t = 1.0
    it = 0
    for it in range(1, cfg.max_iters + 1):
        cand = z - gradient(z) / lip
        fc = objective(cand, _kernels.correlate_valid(cand, kernels))
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        x_prev = x
        if fc <= fx:
            x, fnew = cand, fc
        else:
            fnew = fx
        z = x + (t / t_next) * (cand - x) + ((t - 1.0) / t_next) * (x - x_prev)
        t = t_next
        change = abs(fx - fc) / max(abs(fx), 1e-300)
        fx = fnew
        trace.append(fx)
        if change < cfg.tol:
            break
    return DenoiseResult(x, trace, it, lip)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for 8-bit range; ``inf`` for identical images."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)
