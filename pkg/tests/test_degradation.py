"""Degradation operators: construction rules, two-path agreement, noise."""

import numpy as np
import pytest

from ttdsr.degradation import (
    add_white_gaussian_noise,
    build_spatial,
    build_spatial_operator,
    build_spectral,
    degrade_spatial,
    degrade_spectral,
)
from ttdsr.tensor import UnfoldSpec, kron, unfold


class TestBuildSpatial:
    def test_delta_kernel_no_decimation_is_identity(self):
        np.testing.assert_array_equal(build_spatial(5, 1, 1), np.eye(5))

    def test_pure_decimation_selects_block_centers(self):
        # d=2, m=4: first kept pixel at 1-based position ceil(2/2) = 1.
        p = build_spatial(4, 2, 1)
        np.testing.assert_array_equal(p, [[1, 0, 0, 0], [0, 0, 1, 0]])

    def test_wide_kernel_rows_sum_to_one(self):
        p = build_spatial(8, 4, 9)
        assert p.shape == (2, 8)
        np.testing.assert_allclose(p.sum(axis=1), np.ones(2), rtol=0, atol=1e-12)

    def test_offset_for_d4(self):
        # ceil(4/2) = 2 -> 1-based positions 2 and 6.
        p = build_spatial(8, 4, 1)
        np.testing.assert_array_equal(np.flatnonzero(p[0]), [1])
        np.testing.assert_array_equal(np.flatnonzero(p[1]), [5])

    def test_non_dividing_ratio_rejected(self):
        with pytest.raises(ValueError, match="divide"):
            build_spatial(5, 2, 3)

    def test_even_width_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            build_spatial(8, 2, 4)

    def test_operator_bundle_shapes(self):
        op = build_spatial_operator(8, 12, 4, 3)
        assert op.p1.shape == (2, 8)
        assert op.p2.shape == (3, 12)
        assert op.kernel_sigma == pytest.approx(0.5)


class TestBuildSpectral:
    def test_same_band_count_is_identity(self):
        np.testing.assert_array_equal(build_spectral(4, 4).p3, np.eye(4))

    def test_even_split(self):
        op = build_spectral(6, 2)
        third = 1.0 / 3.0
        np.testing.assert_allclose(
            op.p3, [[third, third, third, 0, 0, 0], [0, 0, 0, third, third, third]]
        )
        assert op.band_ranges == ((0, 3), (3, 6))

    def test_uneven_split_groups_of_3_and_2(self):
        op = build_spectral(5, 2)
        assert op.band_ranges == ((0, 3), (3, 5))
        np.testing.assert_allclose(op.p3.sum(axis=1), np.ones(2), atol=1e-15)

    def test_too_many_output_bands_rejected(self):
        with pytest.raises(ValueError, match="aggregate"):
            build_spectral(3, 4)


class TestDegrade:
    def _random_scene(self, seed=0, dims=(8, 6, 5)):
        return np.random.default_rng(seed).standard_normal(dims)

    def test_identity_operators_change_nothing(self):
        z = self._random_scene()
        sp = build_spatial_operator(8, 6, 1, 1)
        np.testing.assert_array_equal(degrade_spatial(z, sp), z)
        sc = build_spectral(5, 5)
        np.testing.assert_array_equal(degrade_spectral(z, sc), z)

    def test_spatial_slice_formula_matches_mode_products(self):
        z = self._random_scene(1)
        op = build_spatial_operator(8, 6, 2, 3)
        got = degrade_spatial(z, op)
        ref = np.stack(
            [op.p1 @ z[:, :, k] @ op.p2.T for k in range(z.shape[2])], axis=2
        )
        assert np.max(np.abs(got - ref)) <= 1e-13 * np.max(np.abs(ref))

    def test_spectral_fiber_formula_matches_mode_product(self):
        z = self._random_scene(2)
        op = build_spectral(5, 2)
        got = degrade_spectral(z, op)
        ref = np.empty((8, 6, 2))
        for i in range(8):
            for j in range(6):
                ref[i, j, :] = op.p3 @ z[i, j, :]
        assert np.max(np.abs(got - ref)) <= 1e-13 * np.max(np.abs(ref))

    def test_constant_scene_stays_constant(self):
        z = np.full((8, 6, 5), 3.7)
        sp = build_spatial_operator(8, 6, 2, 3)
        sc = build_spectral(5, 2)
        np.testing.assert_allclose(degrade_spatial(z, sp), np.full((4, 3, 5), 3.7), rtol=1e-14)
        np.testing.assert_allclose(degrade_spectral(z, sc), np.full((8, 6, 2), 3.7), rtol=1e-14)

    def test_two_band_average(self):
        base = np.random.default_rng(3).standard_normal((4, 4))
        z = np.stack([base, 3 * base], axis=2)
        out = degrade_spectral(z, build_spectral(2, 1))
        np.testing.assert_allclose(out[:, :, 0], 2 * base, rtol=1e-14)

    def test_spatial_and_spectral_commute(self):
        z = self._random_scene(4)
        sp = build_spatial_operator(8, 6, 2, 3)
        sc = build_spectral(5, 2)
        ab = degrade_spectral(degrade_spatial(z, sp), sc)
        ba = degrade_spatial(degrade_spectral(z, sc), sp)
        assert np.max(np.abs(ab - ba)) <= 1e-13 * np.max(np.abs(ab))

    def test_factorized_operator_on_stacked_unfolding(self):
        # Stacked pixel-by-band unfoldings satisfy yh = (p2 kron p1) z.
        z = self._random_scene(5)
        op = build_spatial_operator(8, 6, 2, 3)
        yh = degrade_spatial(z, op)
        stack = UnfoldSpec(3, (1, 2))
        lhs = unfold(yh, stack).T
        rhs = kron(op.p2, op.p1) @ unfold(z, stack).T
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.max(np.abs(rhs))

    def test_shape_mismatch_rejected(self):
        op = build_spatial_operator(8, 6, 2, 3)
        with pytest.raises(ValueError, match="mode-1"):
            degrade_spatial(np.zeros((7, 6, 5)), op)


class TestNoise:
    def test_infinite_snr_sentinel_returns_copy(self):
        t = np.random.default_rng(0).standard_normal((4, 4, 4))
        out = add_white_gaussian_noise(t, np.inf, seed=0)
        np.testing.assert_array_equal(out, t)
        assert out is not t

    def test_fixed_seed_is_deterministic(self):
        t = np.ones((5, 5, 5))
        a = add_white_gaussian_noise(t, 20.0, seed=7)
        b = add_white_gaussian_noise(t, 20.0, seed=7)
        np.testing.assert_array_equal(a, b)

    def test_realized_snr_near_target(self):
        t = np.ones((100, 100, 10))
        noisy = add_white_gaussian_noise(t, 20.0, seed=1)
        n = noisy - t
        realized = 10 * np.log10(np.sum(t * t) / np.sum(n * n))
        assert 19.5 <= realized <= 20.5

    def test_zero_tensor_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            add_white_gaussian_noise(np.zeros((3, 3, 3)), 20.0, seed=0)
