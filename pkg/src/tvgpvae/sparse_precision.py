"""Bidiagonal Cholesky factors of tridiagonal (AR(1)-structured) precisions.

A factor ``L`` is lower bidiagonal with positive diagonal ``d`` and
subdiagonal ``s`` (``L[i+1, i] = s[i]``). The precision is ``L @ L.T`` and the
covariance is its inverse. Every operation here except the dense bridges runs
in time linear in ``n``.

Solves accept arrays of any order and act along one axis, which lets the
same code serve single vectors and whole batches of tensors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DIAG_FLOOR = 1e-4
DENSE_CAP = 512


def softplus(x):
    return np.logaddexp(0.0, x)


@dataclass(frozen=True, eq=False)
class BidiagonalCholesky:
    diag: np.ndarray
    subdiag: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=np.float64).reshape(-1)
        s = np.asarray(self.subdiag, dtype=np.float64).reshape(-1)
        if d.size == 0:
            raise ValueError("factor must have at least one diagonal entry")
        if s.size != d.size - 1:
            raise ValueError(f"subdiag needs {d.size - 1} entries, got {s.size}")
        if not np.all(d > 0):
            raise ValueError("diagonal entries must be strictly positive")
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "subdiag", s)

    @classmethod
    def from_raw(cls, raw_diag, raw_subdiag) -> "BidiagonalCholesky":
        """Map unconstrained values to a valid factor (softplus plus a floor on the diagonal)."""
        return cls(softplus(np.asarray(raw_diag, dtype=np.float64)) + DIAG_FLOOR, raw_subdiag)

    @classmethod
    def identity(cls, n: int) -> "BidiagonalCholesky":
        return cls(np.ones(n), np.zeros(n - 1))

    @property
    def n(self) -> int:
        return self.diag.size

    @property
    def n_params(self) -> int:
        return self.diag.size + self.subdiag.size

    def to_dense(self) -> np.ndarray:
        """The factor ``L`` itself as a dense matrix."""
        return np.diag(self.diag) + np.diag(self.subdiag, -1)


def logdet_covariance(f: BidiagonalCholesky) -> float:
    """``log|Sigma|`` where ``Sigma^{-1} = L L^T``."""
    # factors are short (n <= ~10) in practice, where a float loop beats numpy call overhead
    return -2.0 * math.fsum(map(math.log, f.diag.tolist()))


def _solve_vector_t(d, s, v):
    # plain-float loop: avoids numpy scalar overhead on long vectors
    n = len(d)
    x = [0.0] * n
    x[n - 1] = v[n - 1] / d[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = (v[i] - s[i] * x[i + 1]) / d[i]
    return x


def solve_transpose(f: BidiagonalCholesky, v: np.ndarray, axis: int = 0) -> np.ndarray:
    """Back-substitution for ``L^T x = v`` along ``axis`` of ``v``."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[axis] != f.n:
        raise ValueError(f"length {v.shape[axis]} along axis {axis} does not match factor size {f.n}")
    if v.ndim == 1:
        return np.array(_solve_vector_t(f.diag.tolist(), f.subdiag.tolist(), v.tolist()))
    return np.moveaxis(batched_solve_t(f.diag, f.subdiag, np.moveaxis(v, axis, -1)), -1, axis)


def solve(f: BidiagonalCholesky, v: np.ndarray, axis: int = 0) -> np.ndarray:
    """Forward substitution for ``L x = v`` along ``axis`` of ``v``."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[axis] != f.n:
        raise ValueError(f"length {v.shape[axis]} along axis {axis} does not match factor size {f.n}")
    return np.moveaxis(batched_solve(f.diag, f.subdiag, np.moveaxis(v, axis, -1)), -1, axis)


def batched_solve_t(d: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Solve ``L^T x = v`` on the last axis, broadcasting ``d``/``s`` over leading axes.

    ``d`` has shape ``(..., n)`` and ``s`` shape ``(..., n - 1)``; both broadcast
    against ``v[..., :]``.
    """
    n = v.shape[-1]
    x = np.empty(np.broadcast_shapes(v.shape, d.shape))
    x[..., n - 1] = v[..., n - 1] / d[..., n - 1]
    for i in range(n - 2, -1, -1):
        x[..., i] = (v[..., i] - s[..., i] * x[..., i + 1]) / d[..., i]
    return x


def batched_solve(d: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Solve ``L x = v`` on the last axis; broadcasting as in :func:`batched_solve_t`."""
    n = v.shape[-1]
    x = np.empty(np.broadcast_shapes(v.shape, d.shape))
    x[..., 0] = v[..., 0] / d[..., 0]
    for i in range(1, n):
        x[..., i] = (v[..., i] - s[..., i - 1] * x[..., i - 1]) / d[..., i]
    return x


def apply_precision(f: BidiagonalCholesky, v: np.ndarray, axis: int = 0) -> np.ndarray:
    """``L L^T v`` along ``axis``, in linear time."""
    v = np.moveaxis(np.asarray(v, dtype=np.float64), axis, -1)
    d, s = f.diag, f.subdiag
    # u = L^T v
    u = d * v
    u[..., :-1] += s * v[..., 1:]
    # w = L u
    w = d * u
    w[..., 1:] += s * u[..., :-1]
    return np.moveaxis(w, -1, axis)


def to_dense_precision(f: BidiagonalCholesky) -> np.ndarray:
    L = f.to_dense()
    return L @ L.T


def to_dense_covariance(f: BidiagonalCholesky, cap: int = DENSE_CAP) -> np.ndarray:
    """``(L L^T)^{-1}`` as a dense matrix, built from two sets of triangular solves."""
    if f.n > cap:
        raise ValueError(f"factor of size {f.n} exceeds dense cap {cap}")
    # Sigma = L^{-T} L^{-1}; columns of L^{-1} come from forward solves on I
    linv = solve(f, np.eye(f.n), axis=0)
    return solve_transpose(f, linv, axis=0)


def from_dense_precision(p: np.ndarray, tol: float = 1e-10) -> BidiagonalCholesky:
    """Recover the factor from a dense tridiagonal precision via its Cholesky factor."""
    L = np.linalg.cholesky(np.asarray(p, dtype=np.float64))
    off = np.tril(L, -2)
    if np.max(np.abs(off), initial=0.0) > tol * max(1.0, np.max(np.abs(L))):
        raise ValueError("precision is not tridiagonal")
    return BidiagonalCholesky(np.diag(L).copy(), np.diag(L, -1).copy())
