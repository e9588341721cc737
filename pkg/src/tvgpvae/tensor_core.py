"""Dense tensor algebra on numpy arrays.

Tensors are plain ``numpy.ndarray`` objects of dtype float64. Storage follows
numpy's C order, so the last mode index varies fastest. Modes are numbered
from 1 in the public functions to match the usual mode-m notation.

``vec`` is deliberately *not* the storage order: it stacks elements with the
first index fastest so that

    vec(t x_1 A_1 ... x_M A_M) == kron(A_M, ..., A_1) @ vec(t)

holds with Kronecker factors in descending mode order.
"""
from __future__ import annotations

import struct
from functools import reduce
from pathlib import Path
from typing import Sequence

import numpy as np

MAGIC = b"TVT1"


class TensorFormatError(ValueError):
    """Raised when a tensor file is malformed or truncated."""


def as_tensor(data, dims: Sequence[int] | None = None) -> np.ndarray:
    t = np.array(data, dtype=np.float64)
    if dims is not None:
        dims = tuple(int(d) for d in dims)
        if t.size != int(np.prod(dims, dtype=np.int64)):
            raise ValueError(f"buffer of length {t.size} does not fit dims {dims}")
        t = t.reshape(dims)
    return t


def element(t: np.ndarray, index: Sequence[int]) -> float:
    """Bounds-checked element access (no negative-index wraparound)."""
    index = tuple(index)
    if len(index) != t.ndim:
        raise IndexError(f"expected {t.ndim} indices, got {len(index)}")
    for i, d in zip(index, t.shape):
        if not 0 <= i < d:
            raise IndexError(f"index {index} out of range for dims {t.shape}")
    return float(t[index])


def _check_mode(t: np.ndarray, mode: int) -> int:
    if not 1 <= mode <= t.ndim:
        raise ValueError(f"mode {mode} invalid for order-{t.ndim} tensor")
    return mode - 1


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-m matricization.

    Rows are indexed by the chosen mode; columns run over the remaining modes in
    increasing order with the last one varying fastest.
    """
    axis = _check_mode(t, mode)
    return np.moveaxis(t, axis, 0).reshape(t.shape[axis], -1)


def fold(m: np.ndarray, mode: int, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    dims = tuple(dims)
    if not 1 <= mode <= len(dims):
        raise ValueError(f"mode {mode} invalid for order-{len(dims)} tensor")
    axis = mode - 1
    rest = dims[:axis] + dims[axis + 1:]
    if m.shape != (dims[axis], int(np.prod(rest, dtype=np.int64))):
        raise ValueError(f"matrix of shape {m.shape} cannot fold into {dims} along mode {mode}")
    return np.moveaxis(m.reshape((dims[axis],) + rest), 0, axis)


def mode_product(t: np.ndarray, a: np.ndarray, mode: int) -> np.ndarray:
    """``t x_mode a``: contract the columns of ``a`` against one mode of ``t``."""
    axis = _check_mode(t, mode)
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != t.shape[axis]:
        raise ValueError(
            f"matrix of shape {a.shape} does not match mode {mode} of size {t.shape[axis]}")
    # tensordot puts the new axis last; move it back into place
    return np.moveaxis(np.tensordot(t, a, axes=([axis], [1])), -1, axis)


def multi_mode_product(t: np.ndarray, mats: Sequence[np.ndarray]) -> np.ndarray:
    """Apply one matrix per mode: ``t x_1 mats[0] x_2 mats[1] ...``."""
    if len(mats) != t.ndim:
        raise ValueError(f"need {t.ndim} matrices, got {len(mats)}")
    for m, a in enumerate(mats, start=1):
        t = mode_product(t, a, m)
    return t


def vec(t: np.ndarray) -> np.ndarray:
    return np.asarray(t, dtype=np.float64).reshape(-1, order="F")


def unvec(v: np.ndarray, dims: Sequence[int]) -> np.ndarray:
    dims = tuple(dims)
    v = np.asarray(v)
    if v.ndim != 1 or v.size != int(np.prod(dims, dtype=np.int64)):
        raise ValueError(f"vector of shape {v.shape} does not match dims {dims}")
    return v.reshape(dims, order="F")


def outer(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Outer product of first-order tensors; result dims are the vector lengths."""
    if len(vectors) == 0:
        raise ValueError("outer product of an empty list")
    vs = [np.asarray(v, dtype=np.float64) for v in vectors]
    for v in vs:
        if v.ndim != 1 or v.size == 0:
            raise ValueError("outer product factors must be nonempty vectors")
    return reduce(np.multiply.outer, vs)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.kron(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product of a list, left to right; ``kron_all([]) == [[1.]]``."""
    return reduce(kron, mats, np.ones((1, 1)))


# --- binary file format ---------------------------------------------------

def to_bytes(t: np.ndarray) -> bytes:
    t = np.asarray(t)
    if t.ndim > 255:
        raise ValueError("order exceeds 255")
    header = MAGIC + struct.pack("<B", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape)
    return header + np.ascontiguousarray(t, dtype="<f4").tobytes()


def from_bytes(buf: bytes) -> np.ndarray:
    if len(buf) < 5 or buf[:4] != MAGIC:
        raise TensorFormatError("bad magic, not a TVT1 tensor file")
    order = buf[4]
    head = 5 + 4 * order
    if len(buf) < head:
        raise TensorFormatError("truncated header")
    dims = struct.unpack(f"<{order}I", buf[5:head])
    n = int(np.prod(dims, dtype=np.int64))
    if len(buf) != head + 4 * n:
        raise TensorFormatError(f"payload has {len(buf) - head} bytes, expected {4 * n}")
    return np.frombuffer(buf, dtype="<f4", offset=head, count=n).astype(np.float64).reshape(dims)


def save(path, t: np.ndarray) -> None:
    Path(path).write_bytes(to_bytes(t))


def load(path) -> np.ndarray:
    return from_bytes(Path(path).read_bytes())
