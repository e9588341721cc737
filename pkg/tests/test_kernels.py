import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tvgpvae.kernels import (CholeskyError, PriorSpec, SEKernelParams, build_covariance, cholesky,
                             se_kernel)


class TestSEKernel:
    def test_diagonal_unit(self):
        assert se_kernel(3, 3, SEKernelParams(1.0, 1.0)) == 1.0

    def test_lag_one(self):
        assert se_kernel(0, 1, SEKernelParams(1.0, 1.0)) == pytest.approx(math.exp(-0.5), abs=1e-15)
        assert se_kernel(0, 1, SEKernelParams(1.0, 1.0)) == pytest.approx(0.60653, abs=1e-5)

    def test_length_scale_first_power(self):
        # exp(-(i-j)^2 / (2 l)), not / (2 l^2)
        assert se_kernel(0, 2, SEKernelParams(2.0, 4.0)) == pytest.approx(4.0 * math.exp(-0.5))

    @given(st.integers(-50, 50), st.integers(-50, 50),
           st.floats(0.1, 5.0), st.floats(0.1, 5.0))
    def test_symmetry(self, i, j, s, l):
        p = SEKernelParams(s, l)
        assert se_kernel(i, j, p) == se_kernel(j, i, p)

    @pytest.mark.parametrize("s,l", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
    def test_invalid_params(self, s, l):
        with pytest.raises(ValueError):
            SEKernelParams(s, l)


class TestBuildCovariance:
    def test_n1(self):
        np.testing.assert_array_equal(build_covariance(1, SEKernelParams(2.0, 1.0), 0.1), [[4.1]])

    def test_toeplitz_first_row(self):
        k = build_covariance(4, SEKernelParams(1.0, 1.0), 0.0)
        np.testing.assert_allclose(k[0], [1, math.exp(-0.5), math.exp(-2), math.exp(-4.5)], rtol=1e-15)
        for i in range(4):
            for j in range(4):
                assert k[i, j] == k[0, abs(i - j)]

    def test_entrywise_loop(self):
        p = SEKernelParams(1.0, 1.0)
        k = build_covariance(4, p, 1e-6)
        ref = np.array([[se_kernel(i, j, p) + (1e-6 if i == j else 0.0) for j in range(1, 5)]
                        for i in range(1, 5)])
        np.testing.assert_allclose(k, ref, rtol=1e-15, atol=0)
        cholesky(k)

    def test_exactly_symmetric(self):
        k = build_covariance(7, SEKernelParams(1.3, 2.2), 1e-6)
        assert np.array_equal(k, k.T)

    def test_monotone_in_length_scale(self):
        prev = None
        for l in (0.5, 1.0, 2.0, 4.0):
            k = build_covariance(5, SEKernelParams(1.0, l), 0.0)
            off = k[~np.eye(5, dtype=bool)]
            if prev is not None:
                assert np.all(off >= prev)
            prev = off

    def test_ill_conditioned_raises(self):
        with pytest.raises(CholeskyError):
            build_covariance(30, SEKernelParams(1.0, 50.0), 0.0)


class TestCholesky:
    def test_identity(self):
        np.testing.assert_array_equal(cholesky(np.eye(3)), np.eye(3))

    def test_hand(self):
        np.testing.assert_allclose(cholesky(np.array([[4.0, 2.0], [2.0, 5.0]])), [[2, 0], [1, 2]])

    def test_reconstruction(self):
        a = np.random.default_rng(0).normal(size=(5, 5))
        s = a.T @ a + np.eye(5)
        L = cholesky(s)
        assert np.allclose(L, np.tril(L))
        assert np.max(np.abs(L @ L.T - s)) < 1e-10 * np.max(np.abs(s))

    def test_not_pd(self):
        with pytest.raises(CholeskyError):
            cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_not_symmetric(self):
        with pytest.raises(CholeskyError):
            cholesky(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_prior_spec_relative_jitter():
    prior = PriorSpec.shared((3, 2), sigma=2.0, length_scale=1.0, jitter=1e-3)
    covs = prior.covariances()
    assert [c.shape for c in covs] == [(3, 3), (2, 2)]
    assert covs[0][0, 0] == pytest.approx(4.0 * (1 + 1e-3))


def test_prior_spec_validation():
    with pytest.raises(ValueError):
        PriorSpec((2, 2), (SEKernelParams(),), 0.0)
    with pytest.raises(ValueError):
        PriorSpec.shared((2,), jitter=-1.0)
