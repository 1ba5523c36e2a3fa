import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mwr_sim.linalg import (DimensionMismatch, RngStream, SingularGram, conj, frobenius_norm_sq,
                            hermitian, hermitian_solve, matmul, sample_circular_gaussian, trace,
                            transpose)


def random_hpd(rng, K, M=None):
    X = sample_circular_gaussian(M or 2 * K, K, rng)
    return X.conj().T @ X


@pytest.fixture(scope="module")
def draws():
    return sample_circular_gaussian(100_000, 1, RngStream(7)).ravel()


class TestCircularGaussian:
    def test_zero_mean(self, draws):
        assert abs(draws.mean()) < 0.02

    def test_unit_power(self, draws):
        assert np.mean(np.abs(draws) ** 2) == pytest.approx(1.0, rel=0.02)

    def test_circular_symmetry(self, draws):
        # E{h^2} vanishes only if real and imaginary parts have equal power
        assert abs(np.mean(draws ** 2)) < 0.02

    def test_half_variance_per_component(self, draws):
        assert draws.real.var() == pytest.approx(0.5, rel=0.02)
        assert draws.imag.var() == pytest.approx(0.5, rel=0.02)

    def test_shape(self):
        assert sample_circular_gaussian(3, 5, RngStream(0)).shape == (3, 5)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            sample_circular_gaussian(0, 2, RngStream(0))


class TestRngStream:
    def test_same_key_is_bit_identical(self):
        a = sample_circular_gaussian(4, 3, RngStream(11, 5))
        b = sample_circular_gaussian(4, 3, RngStream(11, 5))
        assert np.array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = sample_circular_gaussian(4, 3, RngStream(11, 5))
        b = sample_circular_gaussian(4, 3, RngStream(11, 6))
        assert not np.allclose(a, b)

    def test_spawn_matches_tuple_key(self):
        a = RngStream(3, 2).spawn(9).generator.random(4)
        b = RngStream(3, (2, 9)).generator.random(4)
        assert np.array_equal(a, b)

    def test_streams_uncorrelated(self):
        a = RngStream(1, 0).generator.standard_normal(50_000)
        b = RngStream(1, 1).generator.standard_normal(50_000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(50_000)


class TestHermitianSolve:
    def test_identity(self):
        R = sample_circular_gaussian(3, 4, RngStream(1))
        assert np.allclose(hermitian_solve(np.eye(3), R), R, atol=1e-15)

    def test_diagonal(self):
        X = hermitian_solve(np.diag([2.0, 4.0]), np.eye(2))
        assert np.allclose(X, np.diag([0.5, 0.25]), atol=1e-15)

    def test_random_residual(self):
        rng = RngStream(2)
        G = random_hpd(rng, 5)
        rhs = sample_circular_gaussian(5, 3, rng)
        X = hermitian_solve(G, rhs)
        assert np.linalg.norm(G @ X - rhs) <= 1e-10 * np.linalg.norm(rhs)

    def test_vector_rhs(self):
        rng = RngStream(3)
        G = random_hpd(rng, 4)
        b = sample_circular_gaussian(4, 1, rng).ravel()
        x = hermitian_solve(G, b)
        assert x.shape == (4,)
        assert np.linalg.norm(G @ x - b) <= 1e-10 * np.linalg.norm(b)

    def test_badly_scaled_but_regular_gram_is_accepted(self):
        # column powers spanning 1e-11..1e1 as in random user drops
        rng = RngStream(4)
        H = sample_circular_gaussian(100, 6, rng) * np.sqrt(np.logspace(-11, 1, 6))
        G = H.conj().T @ H
        rhs = H.conj().T
        X = hermitian_solve(G, rhs)
        assert np.linalg.norm(G @ X - rhs) <= 1e-10 * np.linalg.norm(rhs)

    def test_duplicated_columns_are_singular(self):
        H = sample_circular_gaussian(8, 2, RngStream(5))
        H = np.hstack([H, H[:, :1]])
        with pytest.raises(SingularGram):
            hermitian_solve(H.conj().T @ H, np.eye(3))

    def test_not_positive_definite(self):
        with pytest.raises(SingularGram):
            hermitian_solve(np.diag([1.0, -1.0]), np.eye(2))

    def test_shape_errors(self):
        with pytest.raises(DimensionMismatch):
            hermitian_solve(np.eye(3)[:2], np.eye(2))
        with pytest.raises(DimensionMismatch):
            hermitian_solve(np.eye(3), np.eye(2))

    @settings(max_examples=40, deadline=None)
    @given(K=st.integers(1, 8), extra=st.integers(1, 20), seed=st.integers(0, 2 ** 32))
    def test_residual_bound_property(self, K, extra, seed):
        rng = RngStream(seed)
        G = random_hpd(rng, K, K + extra)
        rhs = sample_circular_gaussian(K, 2, rng)
        try:
            X = hermitian_solve(G, rhs)
        except SingularGram:
            return
        assert np.linalg.norm(G @ X - rhs) <= 1e-10 * np.linalg.norm(rhs)


class TestKernels:
    def test_trace_identity(self):
        assert trace(np.eye(7)) == 7

    def test_frobenius(self):
        assert frobenius_norm_sq(np.diag([3.0, 4.0])) == 25.0

    def test_inverse_residual(self):
        rng = RngStream(8)
        A = sample_circular_gaussian(4, 4, rng) + 4 * np.eye(4)
        assert np.allclose(matmul(A, np.linalg.inv(A)), np.eye(4), atol=1e-10)

    def test_involutions(self):
        A = sample_circular_gaussian(3, 5, RngStream(9))
        assert np.array_equal(hermitian(hermitian(A)), A)
        assert np.array_equal(transpose(transpose(A)), A)
        assert np.array_equal(conj(conj(A)), A)
        assert np.array_equal(hermitian(A), conj(transpose(A)))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            matmul(np.ones((2, 3)), np.ones((2, 3)))
        with pytest.raises(DimensionMismatch):
            trace(np.ones((2, 3)))

    @settings(max_examples=50, deadline=None)
    @given(m=st.integers(1, 6), n=st.integers(1, 6), seed=st.integers(0, 2 ** 32))
    def test_trace_cyclic(self, m, n, seed):
        rng = RngStream(seed)
        A = sample_circular_gaussian(m, n, rng)
        B = sample_circular_gaussian(n, m, rng)
        ab, ba = trace(matmul(A, B)), trace(matmul(B, A))
        assert abs(ab - ba) <= 1e-12 * max(1.0, abs(ab))
