import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polysketch.errors import DimensionError
from polysketch.polyts import FactoredOperator, Term, poly_tensor_sketch, pts_error_bound


def gaussian_pair(seed, n=50, d=5, n2=None):
    rng = np.random.default_rng(seed)
    U = rng.normal(0, 1 / np.sqrt(d), size=(n, d))
    V = rng.normal(0, 1 / np.sqrt(d), size=(n2 or n, d))
    return U, V


def taylor_exp(r):
    return np.array([1 / math.factorial(j) for j in range(r + 1)])


class TestPolyTensorSketch:
    def test_constant_term_gives_all_ones(self):
        U, V = gaussian_pair(0, n=6, n2=4)
        op = poly_tensor_sketch(U, V, [1.0, 0.0, 0.0], m=5, seed=1)
        np.testing.assert_array_equal(op.materialize(), np.ones((6, 4)))

    def test_shape_and_term_widths(self):
        U, V = gaussian_pair(1, n=7, n2=3)
        op = poly_tensor_sketch(U, V, taylor_exp(4), m=6, seed=2)
        assert op.shape == (7, 3) and len(op.terms) == 5
        assert op.terms[0].left.shape == (7, 1)
        assert all(t.left.shape[1] == 6 for t in op.terms[1:])

    def test_linear_term_unbiased(self):
        U, V = gaussian_pair(2, n=4, d=6)
        target = U @ V.T
        samples = np.array(
            [poly_tensor_sketch(U, V, [0.0, 1.0, 0.0], m=8, seed=s).materialize() for s in range(2000)]
        )
        se = samples.std(axis=0, ddof=1) / np.sqrt(len(samples))
        assert np.all(np.abs(samples.mean(axis=0) - target) <= 3 * se)

    def test_mean_converges_to_polynomial(self):
        U, V = gaussian_pair(3, n=50, d=5)
        c = np.array([0.5, 1.0, -0.7, 0.3])
        A = U @ V.T
        target = sum(cj * A**j for j, cj in enumerate(c))
        samples = np.array([poly_tensor_sketch(U, V, c, m=10, seed=s).materialize()[0, :5] for s in range(2000)])
        se = samples.std(axis=0, ddof=1) / np.sqrt(len(samples))
        assert np.all(np.abs(samples.mean(axis=0) - target[0, :5]) <= 3 * se)

    def test_exp_taylor_accuracy(self):
        # heavy-tailed across seeds; the typical (median) run is below 5%
        U, V = gaussian_pair(4, n=100, d=10)
        K = np.exp(U @ V.T)
        errs = [
            np.linalg.norm(poly_tensor_sketch(U, V, taylor_exp(8), m=200, seed=s).materialize() - K)
            / np.linalg.norm(K)
            for s in range(31)
        ]
        assert np.median(errs) < 0.05

    def test_column_mismatch(self):
        with pytest.raises(DimensionError):
            poly_tensor_sketch(np.ones((3, 2)), np.ones((3, 4)), [1.0, 1.0], m=4)

    def test_empty_coefficients(self):
        with pytest.raises(ValueError):
            poly_tensor_sketch(np.ones((3, 2)), np.ones((3, 2)), [], m=4)

    def test_same_seed_is_bit_identical(self):
        U, V = gaussian_pair(5)
        a = poly_tensor_sketch(U, V, taylor_exp(5), m=10, seed=3).materialize()
        b = poly_tensor_sketch(U, V, taylor_exp(5), m=10, seed=3).materialize()
        assert np.array_equal(a, b)


class TestApply:
    @pytest.fixture
    def op(self):
        U, V = gaussian_pair(6, n=40, n2=30)
        return poly_tensor_sketch(U, V, taylor_exp(5), m=7, seed=4)

    def test_zero(self, op):
        np.testing.assert_array_equal(op.apply(np.zeros(30)), np.zeros(40))

    def test_basis_probe(self, op):
        dense = op.materialize()
        for i in (0, 7, 29):
            e = np.zeros(30)
            e[i] = 1.0
            np.testing.assert_allclose(op.apply(e), dense[:, i], atol=1e-10)

    def test_matches_dense_matvec(self, op):
        rng = np.random.default_rng(0)
        x = rng.normal(size=30)
        y = rng.normal(size=40)
        dense = op.materialize()
        np.testing.assert_allclose(op.apply(x), dense @ x, atol=1e-9)
        np.testing.assert_allclose(op.apply_transpose(y), dense.T @ y, atol=1e-9)

    def test_entries(self, op):
        dense = op.materialize()
        rows, cols = np.array([0, 5, 39]), np.array([29, 0, 3])
        np.testing.assert_allclose(op.entries(rows, cols), dense[rows, cols], atol=1e-12)

    def test_length_mismatch(self, op):
        with pytest.raises(DimensionError):
            op.apply(np.ones(40))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10**6), alpha=st.floats(-5, 5), beta=st.floats(-5, 5))
    def test_linearity(self, seed, alpha, beta):
        U, V = gaussian_pair(seed % 97, n=20, d=4)
        op = poly_tensor_sketch(U, V, taylor_exp(3), m=5, seed=seed)
        rng = np.random.default_rng(seed)
        x, y = rng.normal(size=(2, 20))
        np.testing.assert_allclose(
            op.apply(alpha * x + beta * y), alpha * op.apply(x) + beta * op.apply(y), atol=1e-10
        )


class TestMaterialize:
    def test_single_ones_term(self):
        op = FactoredOperator((Term(1.0, np.ones((3, 1)), np.ones((2, 1))),))
        np.testing.assert_array_equal(op.materialize(), np.ones((3, 2)))

    def test_linear_in_coefficients(self):
        U, V = gaussian_pair(7, n=12)
        c1, c2 = np.array([1.0, 0.5, 0.2]), np.array([-0.3, 2.0, 0.0])
        a = poly_tensor_sketch(U, V, c1, m=4, seed=9).materialize()
        b = poly_tensor_sketch(U, V, c2, m=4, seed=9).materialize()
        ab = poly_tensor_sketch(U, V, c1 + c2, m=4, seed=9).materialize()
        np.testing.assert_allclose(ab, a + b, atol=1e-12)

    def test_size_guard(self):
        big = FactoredOperator((Term(1.0, np.ones((20001, 1)), np.ones((5001, 1))),))
        with pytest.raises(MemoryError):
            big.materialize()

    def test_mismatched_terms_rejected(self):
        with pytest.raises(DimensionError):
            FactoredOperator((Term(1.0, np.ones((3, 2)), np.ones((3, 1))),))


class TestErrorBound:
    def test_unit_example(self):
        assert pts_error_bound([[1.0]], [[1.0]], [0.0, 1.0], m=1, poly_sup_err=0.0) == pytest.approx(10.0)

    def test_zero_coefficients(self):
        U, V = gaussian_pair(8)
        assert pts_error_bound(U, V, np.zeros(5), m=10, poly_sup_err=0.0) == 0.0

    def test_dominates_empirical_mse(self):
        U, V = gaussian_pair(9, n=50, d=5)
        r, m = 4, 20
        c = taylor_exp(r)
        A = U @ V.T
        target = np.exp(A)
        # sup-norm polynomial error, checked densely on the entries themselves
        eps = np.max(np.abs(target - sum(cj * A**j for j, cj in enumerate(c))))
        mse = np.mean(
            [np.sum((target - poly_tensor_sketch(U, V, c, m, seed=s).materialize()) ** 2) for s in range(500)]
        )
        assert mse <= 1.1 * pts_error_bound(U, V, c, m, eps)
