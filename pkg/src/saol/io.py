"""Operator (JSON) and dataset (binary) file formats.

Dataset layout, all little-endian::

    b"SAOLSIG1"  u32 T  T x u32 mode sizes  u64 N  N*p float64 samples

Samples are stored consecutively, each in the canonical (last mode fastest)
linearization.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
import warnings
from typing import Any

import numpy as np

from .errors import BadMagicError, DataFormatError, InvariantError, TruncatedFileError
from .objective import SignalSet
from .oblique import AnalysisOperator

OPERATOR_FORMAT = "saol-operator-v1"
DATASET_MAGIC = b"SAOLSIG1"

_STRICT_TOL = 1e-8
_RENORM_TOL = 1e-6


def atomic_write(path: str | os.PathLike, payload: bytes) -> None:
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), prefix=".tmp-")
    umask = os.umask(0)
    os.umask(umask)
    try:
        os.fchmod(fd, 0o666 & ~umask)
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def operator_to_dict(op: AnalysisOperator, metadata: dict[str, Any] | None = None) -> dict:
    return {
        "format": OPERATOR_FORMAT,
        "separable": op.separable,
        "factors": [
            {"rows": int(f.shape[0]), "cols": int(f.shape[1]), "data": [float(x) for x in f.ravel()]}
            for f in op.factors
        ],
        "metadata": dict(metadata or {}),
    }


def save_operator(path: str | os.PathLike, op: AnalysisOperator,
                  metadata: dict[str, Any] | None = None) -> None:
    text = json.dumps(operator_to_dict(op, metadata), indent=1)
    atomic_write(path, (text + "\n").encode("utf-8"))


def operator_from_dict(doc: dict) -> AnalysisOperator:
    if not isinstance(doc, dict) or doc.get("format") != OPERATOR_FORMAT:
        raise BadMagicError(f"not a {OPERATOR_FORMAT} document")
    factors = []
    try:
        for entry in doc["factors"]:
            rows, cols = int(entry["rows"]), int(entry["cols"])
            data = np.asarray(entry["data"], dtype=float)
            if rows < 1 or cols < 1 or data.size != rows * cols:
                raise DataFormatError(f"factor data of length {data.size} does not match {rows}x{cols}")
            factors.append(data.reshape(rows, cols))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"malformed operator factor list: {exc}") from exc
    if not factors:
        raise DataFormatError("operator has no factors")
    if bool(doc.get("separable", len(factors) > 1)) != (len(factors) > 1):
        raise DataFormatError("separable flag disagrees with the number of factors")
    for i, f in enumerate(factors):
        dev = float(np.max(np.abs(np.linalg.norm(f, axis=1) - 1.0)))
        if dev > _RENORM_TOL:
            raise InvariantError(f"factor {i}: row norms deviate from 1 by {dev:.3e}")
        if dev > _STRICT_TOL:
            warnings.warn(f"factor {i}: row norms deviate from 1 by {dev:.3e}; renormalizing",
                          stacklevel=3)
            factors[i] = f / np.linalg.norm(f, axis=1, keepdims=True)
    return AnalysisOperator(factors, check=False)


def load_operator(path: str | os.PathLike) -> tuple[AnalysisOperator, dict]:
    """Load an operator file; returns the operator and its metadata dict."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON ({exc})") from exc
    return operator_from_dict(doc), dict(doc.get("metadata") or {})


def dataset_bytes(signals: SignalSet) -> bytes:
    t = len(signals.mode_sizes)
    header = DATASET_MAGIC + struct.pack(f"<I{t}IQ", t, *signals.mode_sizes, len(signals))
    return header + np.ascontiguousarray(signals.samples, dtype="<f8").tobytes()


def save_dataset(path: str | os.PathLike, signals: SignalSet) -> None:
    atomic_write(path, dataset_bytes(signals))


def parse_dataset(data: bytes, name: str = "dataset") -> SignalSet:
    if len(data) < 12:
        raise TruncatedFileError(f"{name}: {len(data)} bytes is too short for a header")
    if data[:8] != DATASET_MAGIC:
        raise BadMagicError(f"{name}: bad magic {data[:8]!r}")
    (t,) = struct.unpack_from("<I", data, 8)
    if t < 1:
        raise DataFormatError(f"{name}: mode count must be positive")
    head = 12 + 4 * t + 8
    if len(data) < head:
        raise TruncatedFileError(f"{name}: expected at least {head} header bytes, found {len(data)}")
    sizes = struct.unpack_from(f"<{t}I", data, 12)
    (n,) = struct.unpack_from("<Q", data, 12 + 4 * t)
    p = int(np.prod(sizes))
    expected = head + 8 * n * p
    if len(data) != expected:
        kind = TruncatedFileError if len(data) < expected else DataFormatError
        raise kind(f"{name}: expected {expected} bytes, found {len(data)}")
    if n < 1 or p < 1:
        raise DataFormatError(f"{name}: empty dataset")
    samples = np.frombuffer(data, dtype="<f8", offset=head).reshape(n, p).astype(float)
    return SignalSet(tuple(sizes), samples)


def load_dataset(path: str | os.PathLike) -> SignalSet:
    with open(path, "rb") as fh:
        return parse_dataset(fh.read(), os.fspath(path))
