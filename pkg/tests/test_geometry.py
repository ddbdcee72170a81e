"""
幾何モジュールのテスト
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.errors import ConfigurationError, DomainError
from src.geometry import (
    BOUNDARY,
    INTERIOR,
    OUTSIDE,
    GridField,
    KAnnulus,
    box_grid,
    build_grid,
    d_k,
    node_points,
    sample_ksphere,
)


class TestDk:
    """d_k は先頭 k 座標のユークリッドノルム。"""

    def test_pythagorean_triple(self):
        assert d_k([3.0, 4.0, 7.0], 2) == pytest.approx(5.0)

    def test_first_coordinate(self):
        assert d_k([-2.0, 5.0, 1.0], 1) == pytest.approx(2.0)

    def test_full_norm(self):
        assert d_k([1.0, 2.0, 2.0], 3) == pytest.approx(3.0)

    @pytest.mark.parametrize("k", [0, 4])
    def test_k_out_of_range(self, k):
        with pytest.raises(DomainError):
            d_k([1.0, 2.0, 2.0], k)


class TestKAnnulus:
    """構築時の検証と切り詰め幅。"""

    def test_dimension_above_four_rejected(self):
        with pytest.raises(ConfigurationError):
            KAnnulus(5, 2, 1.0, 2.0)

    def test_radii_order(self):
        with pytest.raises(DomainError):
            KAnnulus(2, 2, 2.0, 1.0)

    def test_k_above_n(self):
        with pytest.raises(DomainError):
            KAnnulus(2, 3, 1.0, 2.0)

    def test_default_slab_is_four_beta(self):
        annulus = KAnnulus(3, 1, 1.0, 2.0)
        assert annulus.truncation == pytest.approx(8.0)

    def test_no_truncation_for_full_rank(self):
        assert KAnnulus(3, 3, 1.0, 2.0).truncation is None

    def test_dict_round_trip(self):
        annulus = KAnnulus(3, 2, 0.5, 1.5, slab_halfwidth=2.0)
        assert KAnnulus.from_dict(annulus.to_dict()) == annulus


class TestSampleKsphere:
    """求積点は Sigma_k(t) 上にあり、重みの和は切り詰め後の測度。"""

    def test_four_points_on_unit_circle(self):
        pts, weights = sample_ksphere(KAnnulus(2, 2, 0.5, 2.0), 1.0, 4)
        expected = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
        assert_allclose(pts, expected, atol=1e-15)
        assert_allclose(weights, np.full(4, math.pi / 2))

    def test_two_segments_for_k1(self):
        annulus = KAnnulus(2, 1, 0.5, 2.0, slab_halfwidth=1.0)
        pts, weights = sample_ksphere(annulus, 1.0, 16)
        assert_allclose(np.abs(pts[:, 0]), 1.0)
        assert np.all(np.abs(pts[:, 1]) <= 1.0)
        assert weights.sum() == pytest.approx(4.0)

    def test_sphere_area(self):
        _, weights = sample_ksphere(KAnnulus(3, 3, 1.0, 3.0), 2.0, 64)
        assert weights.sum() == pytest.approx(16.0 * math.pi, rel=1e-6)

    @pytest.mark.parametrize("n,k", [(3, 2), (3, 1), (4, 3), (4, 2)])
    def test_weights_match_surface_measure(self, n, k):
        annulus = KAnnulus(n, k, 1.0, 2.0)
        pts, weights = sample_ksphere(annulus, 1.5, 16)
        assert weights.sum() == pytest.approx(annulus.surface_measure(1.5), rel=1e-10)
        assert_allclose(np.linalg.norm(pts[:, :k], axis=1), 1.5)

    def test_second_moment_on_two_sphere(self):
        """int_{S^2} x_1^2 = 4 pi / 3。"""
        pts, weights = sample_ksphere(KAnnulus(3, 3, 0.5, 2.0), 1.0, 64)
        assert np.sum(weights * pts[:, 0] ** 2) == pytest.approx(4.0 * math.pi / 3.0, rel=1e-2)

    def test_radius_outside_annulus(self):
        with pytest.raises(DomainError):
            sample_ksphere(KAnnulus(2, 2, 1.0, 2.0), 2.5, 8)

    def test_closed_sphere_allowed_on_request(self):
        annulus = KAnnulus(2, 2, 1.0, 2.0)
        with pytest.raises(DomainError):
            sample_ksphere(annulus, 1.0, 8)
        pts, _ = sample_ksphere(annulus, 1.0, 8, closed=True)
        assert_allclose(np.linalg.norm(pts, axis=1), 1.0)

    def test_density_too_small(self):
        with pytest.raises(ConfigurationError):
            sample_ksphere(KAnnulus(2, 2, 1.0, 2.0), 1.5, 3)


class TestBuildGrid:
    """ノード分類は d_k の厳密評価と 3^n 近傍の膨張で決まる。"""

    def test_midpoint_interior_and_center_outside(self):
        grid, mask = build_grid(KAnnulus(2, 2, 1.0, 2.0), 64)
        h = grid.spacing[0]
        assert h == pytest.approx(1.0 / 16.0)
        assert mask[56, 32] == INTERIOR  # (1.5, 0)
        assert mask[32, 32] == OUTSIDE  # (0, 0)

    def test_slab_definition_for_k1(self):
        grid, mask = build_grid(KAnnulus(2, 1, 1.0, 2.0, slab_halfwidth=3.0), 32)
        pts = node_points(grid)
        expected = (np.abs(pts[..., 0]) > 1.0) & (np.abs(pts[..., 0]) < 2.0) & (np.abs(pts[..., 1]) < 3.0)
        assert np.array_equal(mask == INTERIOR, expected)
        assert grid.upper == pytest.approx((2.0, 3.0))

    def test_interior_neighbourhood_is_available(self):
        _, mask = build_grid(KAnnulus(2, 2, 1.0, 2.0), 32)
        for i, j in np.argwhere(mask == INTERIOR):
            assert np.all(mask[i - 1 : i + 2, j - 1 : j + 2] != OUTSIDE)

    def test_boundary_nodes_touch_interior(self):
        _, mask = build_grid(KAnnulus(2, 2, 1.0, 2.0), 32)
        for i, j in np.argwhere(mask == BOUNDARY):
            assert np.any(mask[max(i - 1, 0) : i + 2, max(j - 1, 0) : j + 2] == INTERIOR)

    def test_too_few_cells(self):
        with pytest.raises(ConfigurationError):
            build_grid(KAnnulus(2, 2, 1.0, 2.0), 7)


class TestGridField:
    """場の保持と補間。"""

    def test_outside_values_are_nan_and_read_only(self):
        grid, mask = build_grid(KAnnulus(2, 2, 1.0, 2.0), 16)
        field = GridField(grid, np.zeros(grid.shape), mask)
        assert np.all(np.isnan(field.values[mask == OUTSIDE]))
        assert not field.values.flags.writeable

    def test_non_finite_used_value_rejected(self):
        grid, mask = box_grid([0.0, 0.0], [1.0, 1.0], 8)
        values = np.zeros(grid.shape)
        values[4, 4] = np.inf
        with pytest.raises(DomainError):
            GridField(grid, values, mask)

    def test_linear_field_interpolated_exactly(self):
        grid, mask = box_grid([0.0, -1.0], [2.0, 1.0], 16)
        pts = node_points(grid)
        field = GridField(grid, pts[..., 0] + 2.0 * pts[..., 1], mask)
        rng = np.random.default_rng(3)
        query = np.column_stack([rng.uniform(0.0, 2.0, 50), rng.uniform(-1.0, 1.0, 50)])
        assert_allclose(field.interpolate(query), query[:, 0] + 2.0 * query[:, 1], atol=1e-12)
        assert_allclose(field.interpolate_gradient(query), np.tile([1.0, 2.0], (50, 1)), atol=1e-12)

    def test_gradient_one_sided_next_to_outside(self):
        grid, mask = build_grid(KAnnulus(2, 1, 1.0, 2.0, slab_halfwidth=2.0), 16)
        pts = node_points(grid)
        field = GridField(grid, 3.0 * pts[..., 1], mask)
        gy = field.gradient_arrays()[1]
        used = mask != OUTSIDE
        assert_allclose(gy[used], 3.0, atol=1e-12)
