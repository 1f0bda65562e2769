"""Dense array helpers, inner products and the NDF binary array format.

Arrays throughout the package are plain ``numpy.ndarray`` objects of dtype
``float64`` or ``complex128`` in C (row-major) order.

NDF layout (all integers little-endian)::

    magic  4 bytes   b"NDR1"
    dtype  u32       1 = float64, 2 = complex128
    ndim   u32
    dims   ndim x u64
    payload          row-major scalars, complex stored as interleaved re/im
"""
from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"NDR1"
DTYPE_F64 = 1
DTYPE_C128 = 2
_CODES = {DTYPE_F64: np.dtype("<f8"), DTYPE_C128: np.dtype("<c16")}


class NdfError(ValueError):
    """Base class for malformed NDF files."""


class BadMagicError(NdfError):
    pass


class BadDtypeError(NdfError):
    pass


class TruncatedError(NdfError):
    pass


class ShapeMismatchError(ValueError):
    pass


def as_array(x) -> np.ndarray:
    """Coerce ``x`` to a C-ordered float64 or complex128 array."""
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return np.ascontiguousarray(x, dtype=np.complex128)
    return np.ascontiguousarray(x, dtype=np.float64)


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "arrays") -> None:
    if np.shape(a) != np.shape(b):
        raise ShapeMismatchError(f"{what}: shape {np.shape(a)} != {np.shape(b)}")


def inner_product(a, b):
    """Hilbert-space inner product ``sum(conj(a) * b)``.

    Real inputs give a Python float, complex inputs a Python complex.
    Shapes must agree exactly; nothing is broadcast.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    check_same_shape(a, b, "inner_product")
    val = np.vdot(a.ravel(), b.ravel())
    if np.iscomplexobj(a) or np.iscomplexobj(b):
        return complex(val)
    return float(val)


def norm(a) -> float:
    return float(np.sqrt(abs(inner_product(a, a))))


def ndf_write(array, path) -> None:
    """Write ``array`` to ``path`` in NDF format."""
    arr = np.asarray(array)
    if np.iscomplexobj(arr):
        code = DTYPE_C128
    else:
        code = DTYPE_F64
    arr = np.ascontiguousarray(arr, dtype=_CODES[code])
    if arr.ndim == 0 or any(n < 1 for n in arr.shape):
        raise ShapeMismatchError(f"NDF arrays need positive dims, got {arr.shape}")
    header = MAGIC + struct.pack("<II", code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(arr.tobytes(order="C"))
    except OSError as exc:
        raise OSError(f"cannot write NDF file {os.fspath(path)!r}: {exc}") from exc


def ndf_read(path) -> np.ndarray:
    """Read an NDF file; the result is bitwise identical to what was written."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read NDF file {os.fspath(path)!r}: {exc}") from exc
    if len(raw) < 12:
        raise TruncatedError(f"{path}: file too short for an NDF header")
    if raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}, expected {MAGIC!r}")
    code, ndim = struct.unpack_from("<II", raw, 4)
    if code not in _CODES:
        raise BadDtypeError(f"{path}: unknown dtype code {code}")
    off = 12 + 8 * ndim
    if len(raw) < off:
        raise TruncatedError(f"{path}: header truncated")
    dims = struct.unpack_from(f"<{ndim}Q", raw, 12)
    dt = _CODES[code]
    count = int(np.prod(dims, dtype=np.int64))
    need = count * dt.itemsize
    if len(raw) - off < need:
        raise TruncatedError(
            f"{path}: payload has {len(raw) - off} bytes, header needs {need}"
        )
    data = np.frombuffer(raw, dtype=dt, count=count, offset=off)
    return data.reshape(dims).astype(dt.newbyteorder("="), copy=True)


def rng_for(seed: int, label: str) -> np.random.Generator:
    """Independent generator for a labelled substream of ``seed``.

    The same (seed, label) pair always yields the same stream, on any platform.
    """
    key = int.from_bytes(label.encode("utf-8")[:16].ljust(16, b"\0"), "little")
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, key & 0xFFFFFFFFFFFFFFFF, key >> 64])
