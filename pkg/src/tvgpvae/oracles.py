"""Brute-force reference computations.

Everything here works on dense vectorized quantities or explicit index loops
and shares no code with the structured paths it is used to check, apart from
the ``vec``/``kron`` bridge which has its own loop-based tests.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from .tensor_core import kron_all, vec


def unfold_loop(t: np.ndarray, mode: int) -> np.ndarray:
    axis = mode - 1
    rest = [d for i, d in enumerate(t.shape) if i != axis]
    out = np.zeros((t.shape[axis], int(np.prod(rest, dtype=np.int64))))
    for idx in itertools.product(*(range(d) for d in t.shape)):
        others = idx[:axis] + idx[axis + 1:]
        col = 0
        for i, d in zip(others, rest):
            col = col * d + i
        out[idx[axis], col] = t[idx]
    return out


def mode_product_loop(t: np.ndarray, a: np.ndarray, mode: int) -> np.ndarray:
    axis = mode - 1
    dims = list(t.shape)
    dims[axis] = a.shape[0]
    out = np.zeros(dims)
    for idx in itertools.product(*(range(d) for d in dims)):
        s = 0.0
        for j in range(t.shape[axis]):
            src = idx[:axis] + (j,) + idx[axis + 1:]
            s += a[idx[axis], j] * t[src]
        out[idx] = s
    return out


def outer_loop(vectors) -> np.ndarray:
    dims = [len(v) for v in vectors]
    out = np.zeros(dims)
    for idx in itertools.product(*(range(d) for d in dims)):
        out[idx] = math.prod(v[i] for v, i in zip(vectors, idx))
    return out


def kron_covariance(mode_covs) -> np.ndarray:
    """Dense ``kron(C_M, ..., C_1)`` matching the ``vec`` ordering."""
    return kron_all(list(reversed([np.asarray(c) for c in mode_covs])))


def mvn_logpdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    d = x.size
    r = x - mean
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        raise ValueError("covariance is not positive-definite")
    return float(-0.5 * r @ np.linalg.solve(cov, r) - 0.5 * d * math.log(2 * math.pi) - 0.5 * logdet)


def mvn_kl(mq: np.ndarray, cq: np.ndarray, mp: np.ndarray, cp: np.ndarray) -> float:
    """Textbook ``KL(N(mq, cq) || N(mp, cp))``."""
    d = mq.size
    cp_inv = np.linalg.inv(cp)
    r = mp - mq
    _, ldq = np.linalg.slogdet(cq)
    _, ldp = np.linalg.slogdet(cp)
    return float(0.5 * (np.trace(cp_inv @ cq) + r @ cp_inv @ r - d + ldp - ldq))


def tensor_normal_logpdf_dense(x, mean, mode_covs) -> float:
    return mvn_logpdf(vec(x), vec(mean), kron_covariance(mode_covs))


def tensor_normal_kl_dense(mean_q, covs_q, mean_p, covs_p) -> float:
    return mvn_kl(vec(mean_q), kron_covariance(covs_q), vec(mean_p), kron_covariance(covs_p))


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g
