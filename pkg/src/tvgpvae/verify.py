"""Oracle verification suites.

Each suite compares the structured code path against a dense or
finite-difference reference on fixed-seed random instances and reports the
largest error it saw. ``run_suites`` drives them for the ``verify`` command.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import oracles
from . import tensor_core as tc
from . import tvgauss
from .kernels import PriorSpec, SEKernelParams, build_covariance
from .sparse_precision import BidiagonalCholesky, to_dense_covariance
from .tvgauss import DenseCovariance, PrecisionCholesky, TensorNormalParams
from .vae.model import TVGPVAE, LatentSpec


@dataclass(frozen=True)
class SuiteResult:
    name: str
    tolerance: float
    max_error: float
    passed: bool
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status} {self.name:<10} max_error={self.max_error:.3e} "
                f"tol={self.tolerance:.1e} ({self.seconds:.2f}s)")


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), 1e-300)


def random_spd(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.normal(size=(n, n))
    return a @ a.T / n + 0.5 * np.eye(n)


def random_factor(rng: np.random.Generator, n: int) -> BidiagonalCholesky:
    return BidiagonalCholesky(rng.uniform(0.5, 2.0, size=n), rng.normal(0.0, 0.7, size=n - 1))


def random_mode_covariance(rng: np.random.Generator, n: int):
    kind = rng.integers(3)
    if kind == 0:
        return DenseCovariance(random_spd(rng, n))
    if kind == 1:
        k = SEKernelParams(rng.uniform(0.5, 2.0), rng.uniform(0.2, 2.0))
        return DenseCovariance(build_covariance(n, k, 1e-3 * k.sigma ** 2))
    return PrecisionCholesky(random_factor(rng, n))


def _random_dims(rng, max_order, max_dim, min_order=1):
    order = int(rng.integers(min_order, max_order + 1))
    return tuple(int(d) for d in rng.integers(1, max_dim + 1, size=order))


# --- suites -----------------------------------------------------------------

def suite_vec_kron(seed: int = 0, instances: int = 100) -> tuple[float, float]:
    """``vec`` of a multi-mode product against the explicit Kronecker matrix."""
    rng = np.random.default_rng([seed, 10])
    worst = 0.0
    for _ in range(instances):
        dims = _random_dims(rng, 4, 4)
        t = rng.normal(size=dims)
        mats = [rng.normal(size=(int(rng.integers(1, 5)), d)) for d in dims]
        lhs = tc.vec(tc.multi_mode_product(t, mats))
        rhs = oracles.kron_covariance(mats) @ tc.vec(t)
        worst = max(worst, float(np.max(np.abs(lhs - rhs)) / max(1.0, np.max(np.abs(rhs)))))
    return worst, 1e-10


def suite_density(seed: int = 0, instances: int = 100) -> tuple[float, float]:
    """Mode-wise log density against the vectorized dense Gaussian."""
    rng = np.random.default_rng([seed, 11])
    worst = 0.0
    for _ in range(instances):
        dims = _random_dims(rng, 4, 4)
        covs = tuple(random_mode_covariance(rng, d) for d in dims)
        p = TensorNormalParams(rng.normal(size=dims), covs)
        x = rng.normal(size=dims)
        got = tvgauss.log_pdf(x, p)
        want = oracles.tensor_normal_logpdf_dense(x, p.mean, [c.dense() for c in covs])
        worst = max(worst, _rel(got, want))
    return worst, 1e-10


def suite_kl(seed: int = 0, instances: int = 100) -> tuple[float, float]:
    """Structured KL against the dense vectorized KL."""
    rng = np.random.default_rng([seed, 12])
    worst = 0.0
    for _ in range(instances):
        dims = _random_dims(rng, 3, 3)
        q = TensorNormalParams(rng.normal(size=dims),
                               tuple(PrecisionCholesky(random_factor(rng, d)) for d in dims))
        p = TensorNormalParams(rng.normal(size=dims) * rng.integers(2),
                               tuple(random_mode_covariance(rng, d) for d in dims))
        got = tvgauss.kl_divergence(q, p)
        want = oracles.tensor_normal_kl_dense(q.mean, [c.dense() for c in q.covariances],
                                              p.mean, [c.dense() for c in p.covariances])
        worst = max(worst, _rel(got, want))
    return worst, 1e-9


def suite_kl_self(seed: int = 0, instances: int = 100) -> tuple[float, float]:
    """``KL(q || q)`` must vanish; absolute error."""
    rng = np.random.default_rng([seed, 16])
    worst = 0.0
    for _ in range(instances):
        dims = _random_dims(rng, 3, 3)
        q = TensorNormalParams(rng.normal(size=dims),
                               tuple(PrecisionCholesky(random_factor(rng, d)) for d in dims))
        worst = max(worst, abs(tvgauss.kl_divergence(q, q)))
    return worst, 1e-12


def suite_sampling(seed: int = 0, draws: int = 200_000) -> tuple[float, float]:
    """Empirical covariance of ``vec(sample)`` against the dense Kronecker covariance.

    Error is the largest deviation in units of the Monte Carlo standard error
    ``sqrt((S_ii S_jj + S_ij^2) / N)`` of a known-mean covariance estimate.
    """
    rng = np.random.default_rng([seed, 13])
    dims = (2, 3, 2)
    factors = [BidiagonalCholesky(np.array(d), np.array(s)) for d, s in (
        ([1.0, 1.5], [0.6]),
        ([2.0, 0.8, 1.2], [-0.5, 0.9]),
        ([1.3, 0.7], [-0.4]),
    )]
    p = TensorNormalParams(np.arange(12.0).reshape(dims) / 6.0,
                           tuple(PrecisionCholesky(f) for f in factors))
    z = tvgauss.sample(p, rng.standard_normal((draws,) + dims)) - p.mean
    flat = np.moveaxis(z, (1, 2, 3), (3, 2, 1)).reshape(draws, -1)  # vec order: first index fastest
    emp = flat.T @ flat / draws
    cov = oracles.kron_covariance([to_dense_covariance(f) for f in factors])
    d = np.diag(cov)
    se = np.sqrt((np.outer(d, d) + cov ** 2) / draws)
    return float(np.max(np.abs(emp - cov) / se)), 3.0


def gradient_errors(model: TVGPVAE, params: dict, x: np.ndarray, noise: np.ndarray,
                    h: float = 1e-5, floor: float = 1e-7, rtol: float = 1e-4) -> dict:
    """Per-parameter worst error of tape gradients against central differences.

    Error of one entry is ``|g - fd| / max(|g|, |fd|, floor / rtol)``, so a
    value below ``rtol`` means the relative error is below ``rtol`` or the
    absolute error is below ``floor``.
    """
    _, _, grads = model.loss_and_grad(params, x, noise)
    out = {}
    for name in params:
        def f(v, name=name):
            p = dict(params)
            p[name] = v
            return float(model.objective(p, x, noise)[0].value)

        fd = oracles.central_difference(f, params[name], h)
        g = grads[name]
        denom = np.maximum(np.maximum(np.abs(g), np.abs(fd)), floor / rtol)
        out[name] = float(np.max(np.abs(g - fd) / denom))
    return out


def miniature_model(latent: str = "W:2,H:2,T:2", K: int = 2) -> TVGPVAE:
    spec = LatentSpec.parse(K, latent)
    prior = PriorSpec.shared(spec.mode_dims, sigma=1.0, length_scale=1.0)
    return TVGPVAE((1, 4, 4, 3), spec, prior, hidden=6, features=3)


def suite_gradient(seed: int = 0, latents=("W:2,H:2,T:2", "", "T:2")) -> tuple[float, float]:
    """Full ELBO gradients of miniature models against central differences."""
    worst = 0.0
    for i, latent in enumerate(latents):
        rng = np.random.default_rng([seed, 14, i])
        model = miniature_model(latent)
        params = model.init_params(rng)
        # move away from the symmetric zero-bias start so every path is exercised
        params = {k: v + 0.1 * rng.normal(size=v.shape) for k, v in params.items()}
        x = rng.uniform(0.05, 0.95, size=(3,) + model.data_dims)
        noise = model.draw_noise(rng, 3)
        worst = max(worst, max(gradient_errors(model, params, x, noise).values()))
    return worst, 1e-4


def suite_lowrank(seed: int = 0, instances: int = 100) -> tuple[float, float]:
    """Per-mode product of quadratic forms against the dense Kronecker form."""
    rng = np.random.default_rng([seed, 15])
    worst = 0.0
    for _ in range(instances):
        dims = _random_dims(rng, 3, 4)
        vs = [rng.normal(size=d) for d in dims]
        ps = [np.linalg.inv(random_spd(rng, d)) for d in dims]
        v = tc.vec(tc.outer(vs))
        want = float(v @ oracles.kron_covariance(ps) @ v)
        worst = max(worst, _rel(tvgauss.lowrank_quadratic(vs, ps), want))
    return worst, 1e-10


SUITES: dict[str, Callable[..., tuple[float, float]]] = {
    "vec_kron": suite_vec_kron,
    "density": suite_density,
    "kl": suite_kl,
    "kl_self": suite_kl_self,
    "sampling": suite_sampling,
    "gradient": suite_gradient,
    "lowrank": suite_lowrank,
}


def run_suite(name: str, seed: int = 0) -> SuiteResult:
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    t0 = time.perf_counter()
    err, tol = SUITES[name](seed)
    ok = math.isfinite(err) and err < tol
    return SuiteResult(name, tol, err, ok, time.perf_counter() - t0)


def run_suites(names=None, seed: int = 0) -> list[SuiteResult]:
    return [run_suite(n, seed) for n in (names or list(SUITES))]
