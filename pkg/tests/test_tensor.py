"""Tensor core: layout arithmetic, mode products, Kronecker identities."""

import numpy as np
import pytest

from ttdsr.tensor import (
    ALL_UNFOLD_SPECS,
    UnfoldSpec,
    fold,
    frobenius_norm,
    kron,
    mode_k_product,
    unfold,
    vectorize,
)


def _mode_product_loop(t, m, k):
    """Direct contraction, the dumb oracle."""
    out_shape = list(t.shape)
    out_shape[k - 1] = m.shape[0]
    out = np.zeros(out_shape)
    for idx in np.ndindex(*out.shape):
        acc = 0.0
        for s in range(t.shape[k - 1]):
            src = list(idx)
            src[k - 1] = s
            acc += m[idx[k - 1], s] * t[tuple(src)]
        out[idx] = acc
    return out


def _layout_tensor_1_to_8():
    # Column-major data 1..8 in a 2x2x2 cube: t[i,j,k] = 1 + i + 2j + 4k.
    return np.arange(1.0, 9.0).reshape((2, 2, 2), order="F")


class TestModeProduct:
    def test_identity_leaves_tensor_unchanged(self):
        rng = np.random.default_rng(0)
        t = rng.standard_normal((3, 4, 5))
        np.testing.assert_array_equal(mode_k_product(t, np.eye(4), 2), t)

    def test_all_ones_row_sums(self):
        t = np.ones((2, 2, 2))
        m = np.ones((2, 2))
        np.testing.assert_array_equal(mode_k_product(t, m, 1), np.full((2, 2, 2), 2.0))

    def test_commutation_and_brute_force(self):
        rng = np.random.default_rng(1)
        t = rng.standard_normal((3, 4, 5))
        f = rng.standard_normal((6, 3))
        g = rng.standard_normal((7, 4))
        ab = mode_k_product(mode_k_product(t, f, 1), g, 2)
        ba = mode_k_product(mode_k_product(t, g, 2), f, 1)
        ref = _mode_product_loop(_mode_product_loop(t, f, 1), g, 2)
        scale = np.max(np.abs(ref))
        assert np.max(np.abs(ab - ba)) <= 1e-13 * scale
        assert np.max(np.abs(ab - ref)) <= 1e-13 * scale

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_composition_same_mode(self, k):
        rng = np.random.default_rng(2)
        t = rng.standard_normal((4, 5, 6))
        n = t.shape[k - 1]
        f = rng.standard_normal((3, n))
        g = rng.standard_normal((7, 3))
        two_step = mode_k_product(mode_k_product(t, f, k), g, k)
        one_step = mode_k_product(t, g @ f, k)
        assert np.max(np.abs(two_step - one_step)) <= 1e-13 * np.max(np.abs(one_step))

    def test_dimension_mismatch_names_mode_and_sizes(self):
        with pytest.raises(ValueError, match="mode-2.*4.*3"):
            mode_k_product(np.zeros((3, 4, 5)), np.zeros((2, 3)), 2)

    def test_via_unfold_matmul_fold_matches_loop(self):
        rng = np.random.default_rng(3)
        t = rng.standard_normal((3, 4, 5))
        m = rng.standard_normal((6, 4))
        spec = UnfoldSpec(2, (1, 3))
        dims = (3, 6, 5)
        via_matrix = fold(m @ unfold(t, spec), spec, dims)
        ref = _mode_product_loop(t, m, 2)
        assert np.max(np.abs(via_matrix - ref)) <= 1e-13 * np.max(np.abs(ref))


class TestUnfoldFold:
    def test_layout_example_rows_mode1(self):
        t = _layout_tensor_1_to_8()
        m = unfold(t, UnfoldSpec(1, (2, 3)))
        np.testing.assert_array_equal(m, [[1, 3, 5, 7], [2, 4, 6, 8]])

    def test_stacked_transpose_relation(self):
        t = _layout_tensor_1_to_8()
        m3 = unfold(t, UnfoldSpec(3, (1, 2)))
        np.testing.assert_array_equal(m3, [[1, 2, 3, 4], [5, 6, 7, 8]])
        # The (rows x mode3) stacking of modes (1, 2) is its transpose.
        np.testing.assert_array_equal(m3.T, t.reshape(4, 2, order="F"))

    def test_placement_oracle_all_specs(self):
        rng = np.random.default_rng(4)
        t = rng.standard_normal((3, 4, 5))
        for spec in ALL_UNFOLD_SPECS:
            m = unfold(t, spec)
            r, (c1, c2) = spec.row_mode, spec.column_order
            d1 = t.shape[c1 - 1]
            for i in range(t.shape[0]):
                for j in range(t.shape[1]):
                    for k in range(t.shape[2]):
                        idx = (i, j, k)
                        row = idx[r - 1]
                        col = idx[c1 - 1] + idx[c2 - 1] * d1
                        assert m[row, col] == t[i, j, k]

    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(5)
        t = rng.standard_normal((3, 4, 5))
        for spec in ALL_UNFOLD_SPECS:
            back = fold(unfold(t, spec), spec, t.shape)
            np.testing.assert_array_equal(back, t)

    def test_fold_zero_matrix(self):
        spec = UnfoldSpec(2, (3, 1))
        np.testing.assert_array_equal(
            fold(np.zeros((4, 15)), spec, (5, 4, 3)), np.zeros((5, 4, 3))
        )

    def test_fold_scalar_passthrough(self):
        spec = UnfoldSpec(1, (2, 3))
        out = fold(np.array([[7.0]]), spec, (1, 1, 1))
        assert out.shape == (1, 1, 1)
        assert out[0, 0, 0] == 7.0

    def test_fold_inconsistent_dims(self):
        with pytest.raises(ValueError, match="inconsistent"):
            fold(np.zeros((3, 8)), UnfoldSpec(1, (2, 3)), (3, 2, 5))

    def test_bad_spec_rejected(self):
        with pytest.raises(ValueError, match="modes 1, 2, 3"):
            UnfoldSpec(1, (1, 2))


class TestKron:
    def test_identity_gives_block_diagonal(self):
        x = np.arange(6.0).reshape(2, 3)
        out = kron(np.eye(2), x)
        np.testing.assert_array_equal(out[:2, :3], x)
        np.testing.assert_array_equal(out[2:, 3:], x)
        np.testing.assert_array_equal(out[:2, 3:], np.zeros((2, 3)))
        np.testing.assert_array_equal(out[2:, :3], np.zeros((2, 3)))

    def test_hand_example(self):
        out = kron(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))
        np.testing.assert_array_equal(out, [[3, 6], [4, 8]])

    def test_vec_identity(self):
        # vec(B X A^T) = (A kron B) vec(X), with column-major vec.
        rng = np.random.default_rng(6)
        a = rng.standard_normal((4, 3))
        b = rng.standard_normal((5, 2))
        x = rng.standard_normal((2, 3))
        lhs = np.ravel(b @ x @ a.T, order="F")
        rhs = kron(a, b) @ np.ravel(x, order="F")
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)

    def test_mixed_product(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((3, 4))
        b = rng.standard_normal((2, 5))
        c = rng.standard_normal((4, 3))
        d = rng.standard_normal((5, 2))
        lhs = kron(a, b) @ kron(c, d)
        rhs = kron(a @ c, b @ d)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(rhs))


class TestVectorizeAndNorm:
    def test_vectorize_layout_order(self):
        t = np.array([[1.0, 3.0], [2.0, 4.0]])[:, :, None]
        np.testing.assert_array_equal(vectorize(t), [1, 2, 3, 4])

    def test_vectorize_zero(self):
        np.testing.assert_array_equal(vectorize(np.zeros((2, 3, 4))), np.zeros(24))

    def test_vec_norm_matches_frobenius(self):
        rng = np.random.default_rng(8)
        t = rng.standard_normal((5, 6, 7))
        v = vectorize(t)
        manual = float(np.sqrt(np.sum(v * v)))
        assert abs(manual - frobenius_norm(t)) <= 1e-15 * manual

    def test_frobenius_all_ones(self):
        assert frobenius_norm(np.ones((2, 3, 4))) == pytest.approx(np.sqrt(24.0), rel=1e-15)

    def test_frobenius_zero(self):
        assert frobenius_norm(np.zeros((2, 2, 2))) == 0.0

    def test_frobenius_matches_any_unfolding(self):
        rng = np.random.default_rng(9)
        t = rng.standard_normal((3, 4, 5))
        for spec in ALL_UNFOLD_SPECS:
            assert np.linalg.norm(unfold(t, spec)) == pytest.approx(
                frobenius_norm(t), rel=1e-14
            )
