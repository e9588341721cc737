import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvgpvae import oracles, tvgauss
from tvgpvae import tensor_core as tc
from tvgpvae.sparse_precision import BidiagonalCholesky
from tvgpvae.tvgauss import DenseCovariance, PrecisionCholesky, TensorNormalParams
from tvgpvae.verify import random_factor, random_mode_covariance, random_spd


def random_params(rng, dims):
    return TensorNormalParams(rng.normal(size=dims), tuple(random_mode_covariance(rng, d) for d in dims))


class TestLogPdf:
    def test_scalar_standard_normal(self):
        p = TensorNormalParams(np.zeros(1), (DenseCovariance(np.eye(1)),))
        assert tvgauss.log_pdf(np.zeros(1), p) == pytest.approx(-0.5 * math.log(2 * math.pi), rel=1e-15)

    def test_at_mean(self):
        rng = np.random.default_rng(0)
        dims = (2, 3, 2)
        p = random_params(rng, dims)
        D = 12
        want = -D / 2 * math.log(2 * math.pi) - sum(
            D / (2 * d) * c.logdet() for d, c in zip(dims, p.covariances))
        assert tvgauss.log_pdf(p.mean, p) == pytest.approx(want, rel=1e-13)

    def test_dense_oracle(self):
        rng = np.random.default_rng(1)
        p = random_params(rng, (2, 3, 2))
        x = rng.normal(size=(2, 3, 2))
        want = oracles.mvn_logpdf(tc.vec(x), tc.vec(p.mean),
                                  oracles.kron_covariance([c.dense() for c in p.covariances]))
        assert abs(tvgauss.log_pdf(x, p) - want) <= 1e-10 * abs(want)

    def test_dims_mismatch(self):
        p = random_params(np.random.default_rng(2), (2, 2))
        with pytest.raises(ValueError):
            tvgauss.log_pdf(np.zeros((2, 3)), p)

    def test_weights(self):
        assert tvgauss.logdet_weights((2, 3, 4)) == [12.0, 8.0, 6.0]


class TestSample:
    def test_identity(self):
        rng = np.random.default_rng(3)
        mean, eps = rng.normal(size=(2, 3)), rng.normal(size=(2, 3))
        p = TensorNormalParams(mean, (DenseCovariance(np.eye(2)), PrecisionCholesky(BidiagonalCholesky.identity(3))))
        np.testing.assert_array_equal(tvgauss.sample(p, eps), mean + eps)

    def test_hand_back_substitution(self):
        f = BidiagonalCholesky(np.array([2.0, 1.0]), np.array([1.0]))
        mean = np.array([0.3, -0.2])
        e = np.array([0.7, 1.1])
        # L^T x = e with L^T = [[2, 1], [0, 1]]
        x2 = e[1]
        x1 = (e[0] - x2) / 2.0
        got = tvgauss.sample(TensorNormalParams(mean, (PrecisionCholesky(f),)), e)
        np.testing.assert_allclose(got, mean + [x1, x2], rtol=1e-15)

    def test_batch_axes(self):
        rng = np.random.default_rng(4)
        p = random_params(rng, (2, 3))
        eps = rng.normal(size=(5, 2, 3))
        out = tvgauss.sample(p, eps)
        for i in range(5):
            np.testing.assert_allclose(out[i], tvgauss.sample(p, eps[i]), atol=1e-14)

    def test_monte_carlo_covariance(self):
        rng = np.random.default_rng(5)
        dims = (2, 3)
        p = TensorNormalParams(np.zeros(dims), (DenseCovariance(random_spd(rng, 2)),
                                                PrecisionCholesky(random_factor(rng, 3))))
        N = 100_000
        z = tvgauss.sample(p, rng.standard_normal((N,) + dims))
        flat = z.transpose(0, 2, 1).reshape(N, -1)
        emp = flat.T @ flat / N
        cov = oracles.kron_covariance([c.dense() for c in p.covariances])
        d = np.diag(cov)
        se = np.sqrt((np.outer(d, d) + cov ** 2) / N)
        assert np.max(np.abs(emp - cov) / se) < 3.0

    def test_noise_shape(self):
        p = random_params(np.random.default_rng(6), (2, 3))
        with pytest.raises(ValueError):
            tvgauss.sample(p, np.zeros((3, 2)))


class TestKL:
    def test_self_zero(self):
        rng = np.random.default_rng(7)
        q = TensorNormalParams(rng.normal(size=(2, 3, 2)),
                               tuple(PrecisionCholesky(random_factor(rng, d)) for d in (2, 3, 2)))
        assert abs(tvgauss.kl_divergence(q, q)) < 1e-12

    def test_order1_textbook(self):
        rng = np.random.default_rng(8)
        cq, cp = random_spd(rng, 3), random_spd(rng, 3)
        mq, mp = rng.normal(size=3), rng.normal(size=3)
        got = tvgauss.kl_divergence(TensorNormalParams(mq, (DenseCovariance(cq),)),
                                    TensorNormalParams(mp, (DenseCovariance(cp),)))
        cpi = np.linalg.inv(cp)
        want = 0.5 * (np.trace(cpi @ cq) + (mp - mq) @ cpi @ (mp - mq) - 3
                      + math.log(np.linalg.det(cp) / np.linalg.det(cq)))
        assert got == pytest.approx(want, rel=1e-12)

    def test_dense_oracle_order3(self):
        rng = np.random.default_rng(9)
        dims = (2, 2, 3)
        q = TensorNormalParams(rng.normal(size=dims),
                               tuple(PrecisionCholesky(random_factor(rng, d)) for d in dims))
        p = random_params(rng, dims)
        want = oracles.tensor_normal_kl_dense(q.mean, [c.dense() for c in q.covariances],
                                              p.mean, [c.dense() for c in p.covariances])
        assert abs(tvgauss.kl_divergence(q, p) - want) <= 1e-9 * abs(want)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.integers(1, 3), min_size=1, max_size=3).map(tuple), st.integers(0, 2**31 - 1))
    def test_nonnegative(self, dims, seed):
        rng = np.random.default_rng(seed)
        assert tvgauss.kl_divergence(random_params(rng, dims), random_params(rng, dims)) >= -1e-10

    def test_unweighted_logdets_disagree(self, monkeypatch):
        # the D / D_m multiplicities are what make the structured KL match the dense one
        rng = np.random.default_rng(10)
        dims = (2, 3)
        q, p = random_params(rng, dims), random_params(rng, dims)
        want = oracles.tensor_normal_kl_dense(q.mean, [c.dense() for c in q.covariances],
                                              p.mean, [c.dense() for c in p.covariances])
        monkeypatch.setattr(tvgauss, "logdet_weights", lambda d: [1.0] * len(d))
        assert abs(tvgauss.kl_divergence(q, p) - want) > 1e-3

    def test_dims_mismatch(self):
        rng = np.random.default_rng(11)
        with pytest.raises(ValueError):
            tvgauss.kl_divergence(random_params(rng, (2, 2)), random_params(rng, (2, 3)))


class TestLowrank:
    def test_zero(self):
        assert tvgauss.lowrank_quadratic([np.zeros(2), np.ones(3)], [np.eye(2), np.eye(3)]) == 0.0

    def test_identity_norms(self):
        vs = [np.array([1.0, 2.0]), np.array([3.0, 0.0, 4.0])]
        assert tvgauss.lowrank_quadratic(vs, [np.eye(2), np.eye(3)]) == pytest.approx(5.0 * 25.0)

    def test_dense_oracle(self):
        rng = np.random.default_rng(12)
        vs = [rng.normal(size=d) for d in (2, 3, 2)]
        ps = [np.linalg.inv(random_spd(rng, d)) for d in (2, 3, 2)]
        v = tc.vec(tc.outer(vs))
        want = v @ oracles.kron_covariance(ps) @ v
        assert abs(tvgauss.lowrank_quadratic(vs, ps) - want) <= 1e-10 * abs(want)

    def test_shape_check(self):
        with pytest.raises(ValueError):
            tvgauss.lowrank_quadratic([np.ones(2)], [np.eye(3)])
