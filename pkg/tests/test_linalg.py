import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ibflow.errors import ConvergenceError, IBFlowError, InsufficientSamplesError
from ibflow.linalg import center, covariance, pca_spectrum, sym_eigvals


def _random_symmetric(seed, n):
    a = np.random.default_rng(seed).standard_normal((n, n))
    return (a + a.T) / 2.0


class TestCenter:
    def test_constant_rows_become_zero(self):
        x = np.tile([3.0, -1.0, 7.0], (5, 1))
        np.testing.assert_array_equal(center(x), np.zeros((5, 3)))

    def test_column(self):
        np.testing.assert_allclose(center([1.0, 3.0]), [[-1.0], [1.0]])

    def test_idempotent(self, rng):
        x = center(rng.standard_normal((40, 3)))
        np.testing.assert_allclose(center(x), x, atol=1e-14)

    def test_rejects_nan(self):
        with pytest.raises(IBFlowError):
            center([[1.0, np.nan], [0.0, 1.0]])


class TestCovariance:
    def test_hand_example(self):
        np.testing.assert_allclose(covariance([[0.0, 0.0], [2.0, 2.0]]), [[1.0, 1.0], [1.0, 1.0]])

    def test_constant_column(self, rng):
        x = np.column_stack([rng.standard_normal(30), np.full(30, 4.0)])
        c = covariance(x)
        assert c[1, 1] == 0.0 and c[0, 1] == 0.0

    def test_independent_columns(self):
        x = np.random.default_rng(0).standard_normal((50_000, 3))
        off = covariance(x)[~np.eye(3, dtype=bool)]
        assert np.all(np.abs(off) <= 0.03)

    def test_insufficient_samples(self):
        with pytest.raises(InsufficientSamplesError, match="insufficient samples"):
            covariance([[1.0, 2.0]])

    def test_matches_numpy_population(self, rng):
        x = rng.standard_normal((25, 4))
        np.testing.assert_allclose(covariance(x), np.cov(x, rowvar=False, bias=True), atol=1e-14)


class TestSymEigvals:
    def test_identity(self):
        np.testing.assert_allclose(sym_eigvals(np.eye(3)), [1.0, 1.0, 1.0])

    def test_diagonal_sorted_descending(self):
        np.testing.assert_allclose(sym_eigvals(np.diag([2.0, 3.0])), [3.0, 2.0])

    def test_rank_one(self):
        np.testing.assert_allclose(sym_eigvals([[1.0, 1.0], [1.0, 1.0]]), [2.0, 0.0], atol=1e-15)

    def test_rejects_asymmetric(self):
        with pytest.raises(IBFlowError):
            sym_eigvals([[1.0, 2.0], [0.0, 1.0]])

    def test_non_convergence_reported(self):
        with pytest.raises(ConvergenceError, match="eigensolver did not converge"):
            sym_eigvals(_random_symmetric(1, 12), max_sweeps=1)

    @pytest.mark.parametrize("n", [1, 2, 5, 16, 33])
    def test_matches_lapack(self, n):
        s = _random_symmetric(n, n)
        np.testing.assert_allclose(sym_eigvals(s), np.linalg.eigvalsh(s)[::-1], atol=1e-10)

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**31), n=st.integers(1, 32))
    def test_trace_preserved(self, seed, n):
        s = _random_symmetric(seed, n)
        total = sym_eigvals(s).sum()
        assert abs(total - np.trace(s)) <= 1e-9 * max(1.0, np.abs(s).sum())

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31), n=st.integers(1, 24))
    def test_orthogonal_invariance(self, seed, n):
        s = _random_symmetric(seed, n)
        q, _ = np.linalg.qr(np.random.default_rng(seed + 1).standard_normal((n, n)))
        np.testing.assert_allclose(sym_eigvals(q.T @ s @ q), sym_eigvals(s), atol=1e-8)


class TestPCASpectrum:
    def test_identical_rows(self):
        np.testing.assert_array_equal(pca_spectrum(np.ones((6, 3))), np.zeros(3))

    def test_one_dimensional(self):
        np.testing.assert_allclose(pca_spectrum([0.0, 2.0]), [1.0])

    def test_points_on_a_line(self, rng):
        t = rng.standard_normal(200)
        lam = pca_spectrum(np.column_stack([t, -2.5 * t]))
        assert lam[1] < 1e-8 * lam[0]

    def test_non_negative(self, rng):
        lam = pca_spectrum(rng.standard_normal((3, 10)))
        assert np.all(lam >= 0.0)

    @settings(max_examples=200, deadline=None)
    @given(seed=st.integers(0, 2**31), n=st.integers(2, 40), d=st.integers(1, 12))
    def test_covariance_psd(self, seed, n, d):
        x = np.random.default_rng(seed).standard_normal((n, d)) * np.random.default_rng(seed).uniform(0.1, 10, d)
        c = covariance(x)
        assert sym_eigvals(c).min() >= -1e-8 * np.trace(c)
