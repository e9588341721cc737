import itertools
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvgpvae import oracles
from tvgpvae import tensor_core as tc


def rand(rng, *dims):
    return rng.normal(size=dims)


dims_strategy = st.lists(st.integers(1, 4), min_size=1, max_size=4).map(tuple)


class TestUnfold:
    def test_order2_mode1_is_matrix(self):
        t = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(tc.unfold(t, 1), t)

    def test_mode2_matches_loop(self):
        t = rand(np.random.default_rng(0), 2, 3, 2)
        u = tc.unfold(t, 2)
        assert u.shape == (3, 4)
        np.testing.assert_array_equal(u, oracles.unfold_loop(t, 2))
        for j in range(3):
            assert sorted(u[j]) == sorted(t[:, j, :].ravel())

    @given(dims_strategy, st.data())
    def test_fold_roundtrip_is_exact(self, dims, data):
        t = np.random.default_rng(len(dims)).normal(size=dims)
        mode = data.draw(st.integers(1, len(dims)))
        assert np.array_equal(tc.fold(tc.unfold(t, mode), mode, dims), t)

    @pytest.mark.parametrize("mode", [0, 4, -1])
    def test_bad_mode(self, mode):
        with pytest.raises(ValueError):
            tc.unfold(np.zeros((2, 2, 2)), mode)


class TestModeProduct:
    def test_identity(self):
        t = rand(np.random.default_rng(1), 2, 3, 4)
        for m, d in enumerate(t.shape, start=1):
            np.testing.assert_array_equal(tc.mode_product(t, np.eye(d), m), t)

    def test_order2_is_matrix_product(self):
        rng = np.random.default_rng(2)
        t, a = rand(rng, 2, 3), rand(rng, 2, 2)
        np.testing.assert_allclose(tc.mode_product(t, a, 1), a @ t, atol=1e-14)

    def test_against_loop(self):
        rng = np.random.default_rng(3)
        t, a = rand(rng, 2, 3, 2), rand(rng, 4, 3)
        out = tc.mode_product(t, a, 2)
        assert out.shape == (2, 4, 2)
        np.testing.assert_allclose(out, oracles.mode_product_loop(t, a, 2), atol=1e-13)

    def test_equals_fold_of_unfold(self):
        rng = np.random.default_rng(4)
        t, a = rand(rng, 3, 2, 4), rand(rng, 5, 4)
        np.testing.assert_allclose(tc.mode_product(t, a, 3),
                                   tc.fold(a @ tc.unfold(t, 3), 3, (3, 2, 5)), atol=1e-13)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            tc.mode_product(np.zeros((2, 3)), np.zeros((2, 2)), 2)

    def test_distinct_modes_commute(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            dims = tuple(rng.integers(1, 5, size=3))
            t = rng.normal(size=dims)
            m, n = rng.choice(3, size=2, replace=False) + 1
            a = rng.normal(size=(3, dims[m - 1]))
            b = rng.normal(size=(2, dims[n - 1]))
            lhs = tc.mode_product(tc.mode_product(t, a, m), b, n)
            rhs = tc.mode_product(tc.mode_product(t, b, n), a, m)
            assert np.max(np.abs(lhs - rhs)) < 1e-12


class TestVec:
    def test_scalar(self):
        v = tc.vec(np.array(2.5))
        assert v.shape == (1,) and v[0] == 2.5

    def test_order2_kron_identity(self):
        rng = np.random.default_rng(6)
        t = rand(rng, 2, 2)
        a1, a2 = rand(rng, 2, 2), rand(rng, 2, 2)
        lhs = tc.vec(tc.mode_product(tc.mode_product(t, a1, 1), a2, 2))
        np.testing.assert_allclose(lhs, np.kron(a2, a1) @ tc.vec(t), atol=1e-13)
        # first index fastest
        np.testing.assert_array_equal(tc.vec(np.array([[1.0, 2.0], [3.0, 4.0]])), [1, 3, 2, 4])

    def test_roundtrip(self):
        t = rand(np.random.default_rng(7), 3, 1, 2, 4)
        assert np.array_equal(tc.unvec(tc.vec(t), t.shape), t)

    def test_kron_bridge_random(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            order = rng.integers(1, 5)
            dims = tuple(rng.integers(1, 5, size=order))
            t = rng.normal(size=dims)
            mats = [rng.normal(size=(rng.integers(1, 5), d)) for d in dims]
            lhs = tc.vec(tc.multi_mode_product(t, mats))
            rhs = oracles.kron_covariance(mats) @ tc.vec(t)
            assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(rhs)))


class TestOuterKron:
    def test_single(self):
        v = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(tc.outer([v]), v)

    def test_hand(self):
        np.testing.assert_array_equal(tc.outer([np.array([1.0, 2.0]), np.array([3.0, 4.0])]),
                                      [[3, 4], [6, 8]])

    def test_loop_oracle(self):
        rng = np.random.default_rng(9)
        vs = [rng.normal(size=n) for n in (2, 3, 4)]
        np.testing.assert_allclose(tc.outer(vs), oracles.outer_loop(vs), atol=1e-14)

    def test_empty(self):
        with pytest.raises(ValueError):
            tc.outer([])

    def test_kron_identities(self):
        np.testing.assert_array_equal(tc.kron(np.eye(2), np.eye(3)), np.eye(6))
        np.testing.assert_array_equal(tc.kron(np.array([[1.0, 2.0]]), np.array([[0.0, 1.0]])),
                                      [[0, 1, 0, 2]])

    def test_mixed_product(self):
        rng = np.random.default_rng(10)
        a, b, c, d = rand(rng, 2, 3), rand(rng, 4, 2), rand(rng, 3, 2), rand(rng, 2, 5)
        np.testing.assert_allclose(tc.kron(a, b) @ tc.kron(c, d), tc.kron(a @ c, b @ d), atol=1e-12)


class TestElement:
    def test_access(self):
        t = np.arange(6.0).reshape(2, 3)
        assert tc.element(t, (1, 2)) == 5.0

    @pytest.mark.parametrize("idx", [(2, 0), (0, 3), (-1, 0), (0,)])
    def test_out_of_range(self, idx):
        with pytest.raises(IndexError):
            tc.element(np.zeros((2, 3)), idx)

    def test_dims_check(self):
        with pytest.raises(ValueError):
            tc.as_tensor([1.0, 2.0, 3.0], (2, 2))


class TestFileFormat:
    def test_roundtrip(self, tmp_path):
        t = np.random.default_rng(11).normal(size=(2, 3, 4)).astype(np.float32).astype(np.float64)
        tc.save(tmp_path / "a.tvt", t)
        assert np.array_equal(tc.load(tmp_path / "a.tvt"), t)

    def test_layout(self):
        t = np.arange(6.0).reshape(2, 3)
        buf = tc.to_bytes(t)
        assert buf[:4] == b"TVT1"
        assert buf[4] == 2
        assert struct.unpack("<2I", buf[5:13]) == (2, 3)
        assert struct.unpack("<6f", buf[13:]) == tuple(range(6))

    def test_scalar(self):
        assert tc.from_bytes(tc.to_bytes(np.array(1.5))).shape == ()

    def test_bad_magic(self):
        with pytest.raises(tc.TensorFormatError):
            tc.from_bytes(b"XXXX" + tc.to_bytes(np.zeros(2))[4:])

    def test_truncated(self):
        buf = tc.to_bytes(np.zeros((2, 2)))
        for cut in (3, 7, len(buf) - 1):
            with pytest.raises(tc.TensorFormatError):
                tc.from_bytes(buf[:cut])
