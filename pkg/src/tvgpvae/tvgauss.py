"""Tensor-variate Gaussian distribution with Kronecker-separable covariance.

A distribution over order-M tensors is given by a mean tensor and one
covariance per mode. Every computation works mode by mode; the D x D
Kronecker covariance is never formed here (see :mod:`tvgpvae.oracles` for
the dense reference path used in tests).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.linalg import cho_solve

from . import sparse_precision as sp
from .kernels import cholesky
from .sparse_precision import BidiagonalCholesky

LOG_2PI = math.log(2.0 * math.pi)


def _along(t: np.ndarray, axis: int, fn) -> np.ndarray:
    """Apply ``fn`` to the (n, rest) unfolding of ``t`` along ``axis``."""
    moved = np.moveaxis(t, axis, 0)
    out = fn(moved.reshape(moved.shape[0], -1))
    return np.moveaxis(out.reshape((out.shape[0],) + moved.shape[1:]), 0, axis)


@dataclass(frozen=True, eq=False)
class DenseCovariance:
    """Symmetric positive-definite mode covariance with a cached Cholesky factor."""

    matrix: np.ndarray
    jitter: float = 0.0
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if self.jitter:
            m[np.diag_indices(m.shape[0])] += self.jitter
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "chol", cholesky(m))

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def dense(self) -> np.ndarray:
        return self.matrix

    def apply_inverse(self, t: np.ndarray, axis: int) -> np.ndarray:
        return _along(t, axis, lambda a: cho_solve((self.chol, True), a))

    def apply_scale(self, t: np.ndarray, axis: int) -> np.ndarray:
        return _along(t, axis, lambda a: self.chol @ a)


@dataclass(frozen=True, eq=False)
class PrecisionCholesky:
    """Mode covariance given through a bidiagonal factor of its precision."""

    factor: BidiagonalCholesky

    @property
    def size(self) -> int:
        return self.factor.n

    def logdet(self) -> float:
        return sp.logdet_covariance(self.factor)

    def dense(self) -> np.ndarray:
        return sp.to_dense_covariance(self.factor)

    def apply_inverse(self, t: np.ndarray, axis: int) -> np.ndarray:
        return sp.apply_precision(self.factor, t, axis)

    def apply_scale(self, t: np.ndarray, axis: int) -> np.ndarray:
        # L^{-T} has covariance L^{-T} L^{-1} = (L L^T)^{-1}
        return sp.solve_transpose(self.factor, t, axis)


ModeCovariance = Union[DenseCovariance, PrecisionCholesky]


@dataclass(frozen=True, eq=False)
class TensorNormalParams:
    mean: np.ndarray
    covariances: tuple

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        covs = tuple(self.covariances)
        if len(covs) != mean.ndim:
            raise ValueError(f"order-{mean.ndim} mean needs {mean.ndim} covariances, got {len(covs)}")
        for m, (c, d) in enumerate(zip(covs, mean.shape), start=1):
            if c.size != d:
                raise ValueError(f"mode {m}: covariance of size {c.size} for dimension {d}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariances", covs)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.mean.shape

    @property
    def size(self) -> int:
        return self.mean.size


def logdet_weights(dims: Sequence[int]) -> list[float]:
    """Multiplicity of each mode's log-determinant in ``log|kron(Sigma)|``: ``D / D_m``."""
    total = math.prod(dims)
    return [total / d for d in dims]


def kron_logdet(covariances: Sequence[ModeCovariance], dims: Sequence[int]) -> float:
    return sum(w * c.logdet() for w, c in zip(logdet_weights(dims), covariances))


def _check_dims(a: np.ndarray, dims, what: str):
    if a.shape != tuple(dims):
        raise ValueError(f"{what} dims {a.shape} do not match distribution dims {tuple(dims)}")


def apply_inverse(t: np.ndarray, covariances: Sequence[ModeCovariance]) -> np.ndarray:
    """``t`` with every mode's inverse covariance applied along its trailing axis."""
    offset = t.ndim - len(covariances)
    for m, c in enumerate(covariances):
        t = c.apply_inverse(t, offset + m)
    return t


def log_pdf(x: np.ndarray, p: TensorNormalParams) -> float:
    x = np.asarray(x, dtype=np.float64)
    _check_dims(x, p.dims, "x")
    q = x - p.mean
    quad = float(np.sum(q * apply_inverse(q, p.covariances)))
    return -0.5 * quad - 0.5 * p.size * LOG_2PI - 0.5 * kron_logdet(p.covariances, p.dims)


def sample(p: TensorNormalParams, noise: np.ndarray) -> np.ndarray:
    """Reparameterized draw ``mean + noise x_1 S_1 ... x_M S_M``.

    ``noise`` holds standard-normal draws with shape ``dims`` or
    ``(*batch, *dims)``; leading batch axes give independent draws.
    """
    noise = np.asarray(noise, dtype=np.float64)
    order = len(p.dims)
    if noise.shape[noise.ndim - order:] != p.dims:
        raise ValueError(f"noise dims {noise.shape} do not end with {p.dims}")
    z = noise
    offset = noise.ndim - order
    for m, c in enumerate(p.covariances):
        z = c.apply_scale(z, offset + m)
    return p.mean + z


def kl_divergence(q: TensorNormalParams, p: TensorNormalParams) -> float:
    """Closed-form ``KL(q || p)`` between tensor-variate Gaussians of equal dims."""
    if q.dims != p.dims:
        raise ValueError(f"dims differ: {q.dims} vs {p.dims}")
    trace = 1.0
    for cq, cp in zip(q.covariances, p.covariances):
        trace *= float(np.trace(cp.apply_inverse(cq.dense(), 0)))
    delta = q.mean - p.mean
    quad = float(np.sum(delta * apply_inverse(delta, p.covariances)))
    logdets = kron_logdet(p.covariances, p.dims) - kron_logdet(q.covariances, q.dims)
    return 0.5 * (trace + quad + logdets - q.size)


def lowrank_quadratic(mean_factors: Sequence[np.ndarray], precisions: Sequence[np.ndarray]) -> float:
    """``vec(outer(m))^T kron(P_M..P_1) vec(outer(m))`` as a product of per-mode forms."""
    if len(mean_factors) != len(precisions):
        raise ValueError("need one precision per mean factor")
    out = 1.0
    for m, (v, prec) in enumerate(zip(mean_factors, precisions), start=1):
        v = np.asarray(v, dtype=np.float64)
        prec = np.asarray(prec, dtype=np.float64)
        if v.ndim != 1 or prec.shape != (v.size, v.size):
            raise ValueError(f"mode {m}: factor of shape {v.shape} vs precision of shape {prec.shape}")
        out *= float(v @ prec @ v)
    return out
