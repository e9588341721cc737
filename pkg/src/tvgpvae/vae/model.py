"""Tensor-variate GP prior VAE with a dense encoder/decoder.

Data tensors have dims ``(C, W, H, T)``. Latents have ``K`` independent
channels, each a tensor over the explicitly modelled subset of the
``(W', H', T')`` modes; with no modes the model is the standard mean-field VAE.

Everything below the public methods runs on batches: inputs have a leading
batch axis and the forward pass is built from :mod:`tvgpvae.autodiff`
operations, so the same code yields values and reverse-mode gradients.
"""
from __future__ import annotations

import math
import string
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .. import autodiff as ad
from ..kernels import PriorSpec, SEKernelParams
from ..sparse_precision import DIAG_FLOOR, BidiagonalCholesky
from ..tvgauss import DenseCovariance, PrecisionCholesky, TensorNormalParams, logdet_weights

MODE_NAMES = ("W", "H", "T")
LOG_2PI = math.log(2.0 * math.pi)
# softplus(RAW_DIAG_INIT) + floor ~= 1, so a fresh posterior starts near unit precision
RAW_DIAG_INIT = math.log(math.e - 1.0)

NetworkParams = dict  # name -> float64 ndarray


@dataclass(frozen=True)
class LatentSpec:
    """``K`` channels over an ordered subset of the ``W'``, ``H'``, ``T'`` modes."""

    K: int = 4
    modes: tuple = ()

    def __post_init__(self):
        modes = tuple((str(n), int(d)) for n, d in self.modes)
        object.__setattr__(self, "modes", modes)
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        names = [n for n, _ in modes]
        if any(n not in MODE_NAMES for n in names) or len(set(names)) != len(names):
            raise ValueError(f"modes must be distinct names from {MODE_NAMES}, got {names}")
        if names != sorted(names, key=MODE_NAMES.index):
            raise ValueError(f"modes must follow the order {MODE_NAMES}, got {names}")
        if any(d < 1 for _, d in modes):
            raise ValueError("mode dims must be positive")

    @classmethod
    def parse(cls, K: int, text: str) -> "LatentSpec":
        """Build from a string like ``"W:4,H:4,T:4"``; an empty string means no modes."""
        text = text.strip()
        if text.lower() in ("", "none"):
            return cls(K, ())
        modes = []
        for part in text.split(","):
            name, _, size = part.partition(":")
            if not size:
                raise ValueError(f"mode entry {part!r} should look like NAME:SIZE")
            modes.append((name.strip().upper(), int(size)))
        return cls(K, tuple(modes))

    def format(self) -> str:
        return ",".join(f"{n}:{d}" for n, d in self.modes)

    @property
    def mode_dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.modes)

    @property
    def order(self) -> int:
        return len(self.modes)

    @property
    def full_dims(self) -> tuple[int, ...]:
        sizes = dict(self.modes)
        return (self.K,) + tuple(sizes.get(n, 1) for n in MODE_NAMES)

    @property
    def latent_size(self) -> int:
        return self.K * math.prod(self.mode_dims)

    @property
    def n_mean_params(self) -> int:
        if not self.modes:
            return self.K
        return self.K * sum(self.mode_dims)

    @property
    def n_cov_params(self) -> int:
        if not self.modes:
            return self.K
        return self.K * sum(2 * d - 1 for d in self.mode_dims)


@dataclass(frozen=True)
class ElboBreakdown:
    recon: float
    complexity: float

    @property
    def elbo(self) -> float:
        return self.recon - self.complexity


@dataclass(eq=False)
class PosteriorFactorParams:
    """Variational parameters for one datum.

    Structured models fill ``mean_factors[k][m]`` and ``chol_factors[k][m]``;
    the order-0 baseline fills ``mu`` and ``logvar`` (shape ``(K,)``).
    """

    mean_factors: list | None = None
    chol_factors: list | None = None
    mu: np.ndarray | None = None
    logvar: np.ndarray | None = None

    @property
    def n_mean_params(self) -> int:
        if self.mu is not None:
            return self.mu.size
        return sum(v.size for factors in self.mean_factors for v in factors)

    @property
    def n_cov_params(self) -> int:
        if self.logvar is not None:
            return self.logvar.size
        return sum(f.n_params for factors in self.chol_factors for f in factors)

    def to_tensor_normal(self, k: int) -> TensorNormalParams:
        if self.mu is not None:
            # zero-order tensor has no mode covariances; scale it to a 1-vector
            var = float(np.exp(self.logvar[k]))
            return TensorNormalParams(np.array([self.mu[k]]), (DenseCovariance(np.array([[var]])),))
        mean = self.mean_factors[k][0]
        for v in self.mean_factors[k][1:]:
            mean = np.multiply.outer(mean, v)
        return TensorNormalParams(mean, tuple(PrecisionCholesky(f) for f in self.chol_factors[k]))


def _glorot(rng, fan_in, fan_out):
    return rng.normal(0.0, math.sqrt(2.0 / (fan_in + fan_out)), size=(fan_in, fan_out))


class TVGPVAE:
    """Model architecture plus the fixed prior; parameters live in a separate dict.

    Parameters
    ----------
    data_dims : sequence of int
        ``(C, W, H, T)``.
    latent : LatentSpec
    prior : PriorSpec, optional
        Kernel prior over ``latent.mode_dims``. Defaults to sigma = l = 1 on
        every mode. Ignored by the order-0 baseline, whose prior is N(0, 1).
    hidden : int
        Width of both hidden layers in encoder and decoder trunks.
    features : int
        Size of the per-index intermediate representation.
    """

    def __init__(self, data_dims: Sequence[int], latent: LatentSpec, prior: PriorSpec | None = None,
                 hidden: int = 128, features: int = 8):
        self.data_dims = tuple(int(d) for d in data_dims)
        if len(self.data_dims) != 4 or any(d < 1 for d in self.data_dims):
            raise ValueError(f"data dims must be four positive sizes (C, W, H, T), got {data_dims}")
        self.latent = latent
        self.hidden = int(hidden)
        self.features = int(features)
        self.D = math.prod(self.data_dims)
        if prior is None:
            prior = PriorSpec.shared(latent.mode_dims)
        if prior.dims != latent.mode_dims:
            raise ValueError(f"prior dims {prior.dims} do not match latent mode dims {latent.mode_dims}")
        self.prior = prior
        self._omega = prior.covariances()
        self._omega_inv = [np.linalg.inv(o) for o in self._omega]
        self._chol_inv = [np.linalg.inv(np.linalg.cholesky(o)) for o in self._omega]
        self._omega_logdet = [float(np.linalg.slogdet(o)[1]) for o in self._omega]

    # --- parameters -----------------------------------------------------------

    def param_shapes(self) -> dict:
        K, F, h = self.latent.K, self.features, self.hidden
        cells = math.prod(self.latent.mode_dims)
        shapes = {
            "enc.w0": (self.D, h), "enc.b0": (h,),
            "enc.w1": (h, h), "enc.b1": (h,),
            "enc.wh": (h, K * cells * F), "enc.bh": (K * cells * F,),
        }
        if self.latent.order == 0:
            shapes["head.w"] = (F, 2)
            shapes["head.b"] = (2,)
        for name, _ in self.latent.modes:
            shapes[f"head.{name}.w"] = (F, 3)
            shapes[f"head.{name}.b"] = (3,)
        shapes.update({
            "dec.w0": (self.latent.latent_size, h), "dec.b0": (h,),
            "dec.w1": (h, h), "dec.b1": (h,),
            "dec.wo": (h, self.D), "dec.bo": (self.D,),
        })
        return shapes

    def init_params(self, rng: np.random.Generator) -> NetworkParams:
        params = {}
        for name, shape in self.param_shapes().items():
            if len(shape) == 2:
                params[name] = _glorot(rng, *shape)
            else:
                params[name] = np.zeros(shape)
        for name, _ in self.latent.modes:
            params[f"head.{name}.b"][1] = RAW_DIAG_INIT
        return params

    def noise_shape(self, batch: int) -> tuple[int, ...]:
        return (batch, self.latent.K) + self.latent.mode_dims

    def draw_noise(self, rng: np.random.Generator, batch: int) -> np.ndarray:
        return rng.standard_normal(self.noise_shape(batch))

    # --- batched graph pieces ---------------------------------------------------

    def _check_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.data_dims:
            raise ValueError(f"data dims {x.shape[1:]} do not match model dims {self.data_dims}")
        return x.reshape(x.shape[0], -1)

    def _posterior(self, p: dict, xflat: np.ndarray) -> dict:
        B = xflat.shape[0]
        K, F, dims = self.latent.K, self.features, self.latent.mode_dims
        h = ad.relu(xflat @ p["enc.w0"] + p["enc.b0"])
        h = ad.relu(h @ p["enc.w1"] + p["enc.b1"])
        H = (h @ p["enc.wh"] + p["enc.bh"]).reshape((B, K) + dims + (F,))
        if not dims:
            out = ad.einsum("bkf,fc->bkc", H, p["head.w"]) + p["head.b"]
            return {"mu": out[..., 0], "logvar": out[..., 1]}
        means, diags, subs = [], [], []
        for a, (name, _) in enumerate(self.latent.modes):
            others = tuple(2 + j for j in range(len(dims)) if j != a)
            pooled = H.mean(axis=others) if others else H
            out = ad.einsum("bkif,fc->bkic", pooled, p[f"head.{name}.w"]) + p[f"head.{name}.b"]
            means.append(out[..., 0])
            diags.append(ad.softplus(out[..., 1]) + DIAG_FLOOR)
            # the subdiagonal output at the last index has no matrix entry
            subs.append(out[:, :, :-1, 2])
        return {"means": means, "diags": diags, "subs": subs}

    def _sample(self, post: dict, noise: np.ndarray):
        if "mu" in post:
            return post["mu"] + ad.exp(0.5 * post["logvar"]) * noise
        dims = self.latent.mode_dims
        M = len(dims)
        B, K = noise.shape[:2]
        z = ad.lift(noise)
        for a in range(M):
            lead = (B, K) + (1,) * (M - 1)
            d = post["diags"][a].reshape(lead + (dims[a],))
            s = post["subs"][a].reshape(lead + (dims[a] - 1,))
            z = ad.bidiag_solve_t(d, s, z, axis=2 + a)
        letters = string.ascii_lowercase[2:2 + M]
        spec = ",".join(f"bk{c}" for c in letters) + f"->bk{letters}"
        mean = ad.einsum(spec, *post["means"]) if M > 1 else post["means"][0]
        return mean + z

    def _complexity(self, post: dict):
        """Per-datum KL summed over channels, shape ``(B,)``."""
        if "mu" in post:
            mu, lv = post["mu"], post["logvar"]
            return (0.5 * (ad.exp(lv) + mu * mu - 1.0 - lv)).sum(axis=1)
        dims = self.latent.mode_dims
        weights = logdet_weights(dims)
        trace = quad = None
        logdet_diff = 0.0
        for a, n in enumerate(dims):
            d, s, m = post["diags"][a], post["subs"][a], post["means"][a]
            B, K = d.shape[:2]
            # columns of L^{-T}, then tr(Omega^{-1} Sigma) = ||C^{-1} L^{-T}||_F^2
            eye = np.broadcast_to(np.eye(n), (B, K, n, n))
            linv_t = ad.bidiag_solve_t(d.reshape((B, K, 1, n)), s.reshape((B, K, 1, n - 1)), eye, axis=2)
            y = ad.einsum("ij,bkjl->bkil", self._chol_inv[a], linv_t)
            tr = (y * y).sum(axis=(2, 3))
            q = ad.einsum("bki,ij,bkj->bk", m, self._omega_inv[a], m)
            logdet_q = -2.0 * ad.log(d).sum(axis=2)
            trace = tr if trace is None else trace * tr
            quad = q if quad is None else quad * q
            logdet_diff = logdet_diff + weights[a] * (self._omega_logdet[a] - logdet_q)
        kl = 0.5 * (trace + quad + logdet_diff - float(math.prod(dims)))
        return kl.sum(axis=1)

    def _decode(self, p: dict, z):
        B = z.shape[0]
        zf = z.reshape((B, self.latent.latent_size))
        h = ad.relu(zf @ p["dec.w0"] + p["dec.b0"])
        h = ad.relu(h @ p["dec.w1"] + p["dec.b1"])
        return ad.sigmoid(h @ p["dec.wo"] + p["dec.bo"])

    def _recon(self, xflat: np.ndarray, xhat):
        r = xflat - xhat
        return -0.5 * (r * r).sum(axis=1) - 0.5 * self.D * LOG_2PI

    def _terms(self, p: dict, x: np.ndarray, noise: np.ndarray):
        xflat = self._check_batch(x)
        if noise.shape != self.noise_shape(xflat.shape[0]):
            raise ValueError(f"noise shape {noise.shape} != {self.noise_shape(xflat.shape[0])}")
        p = {k: ad.lift(v) for k, v in p.items()}
        post = self._posterior(p, xflat)
        xhat = self._decode(p, self._sample(post, noise))
        return self._recon(xflat, xhat), self._complexity(post)

    # --- public API -------------------------------------------------------------

    def objective(self, p: dict, x: np.ndarray, noise: np.ndarray):
        """Negative mean ELBO over the batch as a tape node, plus the per-datum terms."""
        recon, kl = self._terms(p, x, noise)
        return -(recon - kl).mean(), recon, kl

    def loss_and_grad(self, params: NetworkParams, x: np.ndarray, noise: np.ndarray):
        """Return ``(loss, ElboBreakdown of batch means, grads)`` for ``loss = -mean ELBO``."""
        vs = {k: ad.Var(v) for k, v in params.items()}
        loss, recon, kl = self.objective(vs, x, noise)
        ad.backward(loss)
        grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.value)) for k, v in vs.items()}
        parts = ElboBreakdown(float(recon.value.mean()), float(kl.value.mean()))
        return float(loss.value), parts, grads

    def elbo_batch(self, params: NetworkParams, x: np.ndarray, noise: np.ndarray):
        """Per-datum ``(recon, complexity)`` arrays for a batch."""
        recon, kl = self._terms(params, x, noise)
        return recon.value, kl.value

    def elbo(self, params: NetworkParams, x: np.ndarray, noise: np.ndarray) -> ElboBreakdown:
        """Single-sample ELBO of one datum; ``noise`` has shape ``(K, *mode_dims)``."""
        recon, kl = self.elbo_batch(params, np.asarray(x)[None], np.asarray(noise, dtype=np.float64)[None])
        return ElboBreakdown(float(recon[0]), float(kl[0]))

    def encode(self, params: NetworkParams, x: np.ndarray) -> PosteriorFactorParams:
        post = self._posterior({k: ad.lift(v) for k, v in params.items()}, self._check_batch(np.asarray(x)[None]))
        if "mu" in post:
            return PosteriorFactorParams(mu=post["mu"].value[0].copy(), logvar=post["logvar"].value[0].copy())
        means, chols = [], []
        for k in range(self.latent.K):
            means.append([m.value[0, k].copy() for m in post["means"]])
            chols.append([BidiagonalCholesky(d.value[0, k], s.value[0, k])
                          for d, s in zip(post["diags"], post["subs"])])
        return PosteriorFactorParams(mean_factors=means, chol_factors=chols)

    def decode(self, params: NetworkParams, z: np.ndarray) -> np.ndarray:
        """Likelihood means in ``(0, 1)`` for a latent of dims ``(K, W', H', T')``."""
        z = np.asarray(z, dtype=np.float64)
        if z.size != self.latent.latent_size:
            raise ValueError(f"latent of shape {z.shape} does not match {self.latent.full_dims}")
        return self._decode({k: ad.lift(v) for k, v in params.items()}, ad.Var(z.reshape(1, -1))).value.reshape(self.data_dims)

    def posterior_mean(self, params: NetworkParams, x: np.ndarray) -> np.ndarray:
        post = self._posterior({k: ad.lift(v) for k, v in params.items()}, self._check_batch(np.asarray(x)[None]))
        zero = np.zeros(self.noise_shape(1))
        return self._sample(post, zero).value[0]

    def reconstruct(self, params: NetworkParams, x: np.ndarray) -> np.ndarray:
        """Decode the posterior mean latent of ``x``."""
        return self.decode(params, self.posterior_mean(params, x))

    def prior_tensor_normal(self) -> TensorNormalParams:
        if self.latent.order == 0:
            return TensorNormalParams(np.zeros(1), (DenseCovariance(np.eye(1)),))
        return TensorNormalParams(np.zeros(self.latent.mode_dims),
                                  tuple(DenseCovariance(o) for o in self._omega))

    def complexity_from_factors(self, means, diags, subs) -> float:
        """KL of hand-set posterior factors (lists over modes of ``(K, n)`` arrays)."""
        post = {"means": [ad.Var(np.asarray(m, dtype=np.float64)[None]) for m in means],
                "diags": [ad.Var(np.asarray(d, dtype=np.float64)[None]) for d in diags],
                "subs": [ad.Var(np.asarray(s, dtype=np.float64)[None]) for s in subs]}
        return float(self._complexity(post).value[0])
