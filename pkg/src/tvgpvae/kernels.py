"""Squared-exponential kernels on integer index grids and prior mode covariances."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_JITTER = 1e-6


class CholeskyError(ValueError):
    """Matrix is not numerically symmetric positive-definite."""


@dataclass(frozen=True)
class SEKernelParams:
    sigma: float = 1.0
    length_scale: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.length_scale > 0:
            raise ValueError(f"length_scale must be positive, got {self.length_scale}")


def se_kernel(i: int, j: int, params: SEKernelParams) -> float:
    # the length scale enters to the first power: sigma^2 exp(-(i-j)^2 / (2 l))
    return params.sigma ** 2 * math.exp(-((i - j) ** 2) / (2.0 * params.length_scale))


def cholesky(a: np.ndarray, sym_tol: float = 1e-12) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise CholeskyError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    if np.max(np.abs(a - a.T), initial=0.0) > sym_tol * scale:
        raise CholeskyError("matrix is not symmetric")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise CholeskyError("matrix is not positive-definite") from exc


def build_covariance(n: int, params: SEKernelParams, jitter: float = 0.0) -> np.ndarray:
    """Kernel Gram matrix over the grid ``1..n`` with ``jitter`` added to the diagonal.

    Raises :class:`CholeskyError` if the result does not factorize; the caller
    should increase ``jitter``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if jitter < 0:
        raise ValueError("jitter must be nonnegative")
    lag = np.arange(n)[:, None] - np.arange(n)[None, :]
    k = params.sigma ** 2 * np.exp(-(lag.astype(np.float64) ** 2) / (2.0 * params.length_scale))
    k[np.diag_indices(n)] += jitter
    cholesky(k)
    return k


@dataclass(frozen=True)
class PriorSpec:
    """Zero-mean tensor-GP prior over a latent grid, one kernel per mode.

    ``jitter`` is relative: each mode covariance gets ``jitter * sigma**2`` on
    its diagonal.
    """

    dims: tuple[int, ...]
    kernels: tuple[SEKernelParams, ...]
    jitter: float = DEFAULT_JITTER

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "kernels", tuple(self.kernels))
        if len(self.kernels) != len(self.dims):
            raise ValueError("need one kernel per mode")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"dims must be positive, got {self.dims}")
        if self.jitter < 0:
            raise ValueError("jitter must be nonnegative")

    @classmethod
    def shared(cls, dims: Sequence[int], sigma: float = 1.0, length_scale: float = 1.0,
               jitter: float = DEFAULT_JITTER) -> "PriorSpec":
        k = SEKernelParams(sigma, length_scale)
        return cls(tuple(dims), (k,) * len(dims), jitter)

    def covariances(self) -> list[np.ndarray]:
        return [build_covariance(n, k, self.jitter * k.sigma ** 2)
                for n, k in zip(self.dims, self.kernels)]
