# -*- coding: utf-8 -*-

"""
Testes da grade, dos campos e das métricas elementares.
"""

import numpy as np
import pytest

from utils.errors import (
    ClippingWarning,
    ConfigurationError,
    DegenerateFieldError,
    GridMismatchError,
    UnderResolvedWarning,
    ValidationError,
)
from utils.grid_field import (
    ComplexField,
    GridSpec,
    ModeSet,
    build_linear_array_modeset,
    gaussian_spot,
    hermite_gaussian,
    hermite_polynomial,
    inner_product,
    mode_group_list,
    normalize,
    similarity,
)


class TestGridSpec:

    def test_origin_at_center_pixel(self):
        grid = GridSpec(nx=8, ny=6, pitch=2e-6)
        assert grid.shape == (6, 8)
        assert grid.x[4] == 0.0
        assert grid.y[3] == 0.0

    def test_rejects_bad_geometry(self):
        with pytest.raises(ConfigurationError):
            GridSpec(nx=1, ny=8, pitch=1e-6)
        with pytest.raises(ConfigurationError):
            GridSpec(nx=8, ny=8, pitch=0.0)

    def test_equal_grids_compare_equal(self):
        assert GridSpec(16, 16, 3e-6) == GridSpec(16, 16, 3e-6)
        assert GridSpec(16, 16, 3e-6) != GridSpec(16, 16, 4e-6)


class TestNormalize:

    def test_uniform_field(self):
        grid = GridSpec(nx=4, ny=4, pitch=1e-6)
        fld = normalize(ComplexField(grid, np.full(grid.shape, 2.0)))
        assert np.allclose(fld.values, 0.25)
        assert fld.power() == pytest.approx(1.0, abs=1e-12)

    def test_zero_field_is_degenerate(self):
        grid = GridSpec(nx=4, ny=4, pitch=1e-6)
        with pytest.raises(DegenerateFieldError):
            normalize(ComplexField(grid, np.zeros(grid.shape)))

    def test_idempotent(self, grid):
        rng = np.random.default_rng(3)
        fld = normalize(ComplexField(grid, rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)))
        again = normalize(fld)
        assert np.allclose(fld.values, again.values, atol=1e-15)


class TestInnerProduct:

    def test_phase_rotation(self, grid):
        fld = gaussian_spot(grid, (0.0, 0.0), 40e-6)
        rotated = ComplexField(grid, 1j * fld.values)
        assert inner_product(fld, rotated) == pytest.approx(1j, abs=1e-12)

    def test_grid_mismatch(self, grid):
        other = GridSpec(nx=32, ny=32, pitch=8e-6)
        a = gaussian_spot(grid, (0.0, 0.0), 40e-6)
        b = gaussian_spot(other, (0.0, 0.0), 40e-6)
        with pytest.raises(GridMismatchError):
            inner_product(a, b)


class TestHermiteGaussian:

    def test_hermite_recurrence(self):
        x = np.linspace(-2, 2, 9)
        assert np.allclose(hermite_polynomial(2, x), 4 * x ** 2 - 2)
        assert np.allclose(hermite_polynomial(3, x), 8 * x ** 3 - 12 * x)

    def test_hg00_is_gaussian_spot(self, grid):
        assert np.allclose(hermite_gaussian(grid, 0, 0, 40e-6).values, gaussian_spot(grid, (0.0, 0.0), 40e-6).values)

    def test_waist_definition(self):
        grid = GridSpec(nx=64, ny=64, pitch=10e-6)
        fld = gaussian_spot(grid, (0.0, 0.0), 50e-6)
        center = abs(fld.values[32, 32])
        assert abs(fld.values[32, 37]) / center == pytest.approx(np.exp(-1.0), rel=1e-12)

    def test_overlap_of_separated_spots(self):
        grid = GridSpec(nx=256, ny=256, pitch=3e-6)
        a = gaussian_spot(grid, (-64e-6, 0.0), 50e-6)
        b = gaussian_spot(grid, (64e-6, 0.0), 50e-6)
        x, y = grid.meshgrid()
        direct = np.sum(np.exp(-((x + 64e-6) ** 2 + y ** 2) / 50e-6 ** 2) * np.exp(-((x - 64e-6) ** 2 + y ** 2) / 50e-6 ** 2))
        norm = np.sum(np.exp(-2 * (x ** 2 + y ** 2) / 50e-6 ** 2))
        assert abs(inner_product(a, b)) ** 2 == pytest.approx((direct / norm) ** 2, rel=1e-10)
        assert abs(inner_product(a, b)) ** 2 == pytest.approx(np.exp(-(128e-6 / 50e-6) ** 2), rel=1e-6)

    def test_first_groups_are_orthonormal(self):
        grid = GridSpec(nx=128, ny=128, pitch=5e-6)
        modes = [hermite_gaussian(grid, m, n, 40e-6) for (m, n) in mode_group_list(10)]
        gram = np.array([[inner_product(a, b) for b in modes] for a in modes])
        assert np.allclose(gram, np.eye(10), atol=1e-10)

    def test_under_resolved_warns(self, grid):
        with pytest.warns(UnderResolvedWarning):
            gaussian_spot(grid, (0.0, 0.0), 10e-6)

    def test_clipping_warns(self, grid):
        with pytest.warns(ClippingWarning):
            hermite_gaussian(grid, 2, 0, 200e-6)

    def test_center_outside_grid(self, grid):
        with pytest.raises(ConfigurationError):
            gaussian_spot(grid, (1e-3, 0.0), 20e-6)


class TestModeSet:

    def test_mode_group_enumeration(self):
        assert mode_group_list(3) == [(0, 0), (0, 1), (1, 0)]
        assert mode_group_list(10)[3:6] == [(0, 2), (1, 1), (2, 0)]
        assert len(mode_group_list(45)) == 45

    def test_incomplete_group_needs_explicit_modes(self):
        with pytest.raises(ConfigurationError):
            mode_group_list(4)

    def test_linear_array_pairs(self, modeset):
        assert modeset.size == 3
        assert modeset.labels == [(0, 0), (0, 1), (1, 0)]
        xs = [c[0] for c in modeset.spot_centers]
        assert xs == pytest.approx([-60e-6, 0.0, 60e-6])
        for fld in modeset.inputs + modeset.targets:
            assert fld.power() == pytest.approx(1.0, abs=1e-12)

    def test_reverse_ordering(self, grid):
        reverse = build_linear_array_modeset(grid, 3, 60e-6, 20e-6, 40e-6, ordering="reverse")
        assert reverse.labels == [(1, 0), (0, 1), (0, 0)]

    def test_single_mode(self, grid):
        single = build_linear_array_modeset(grid, 1, 60e-6, 20e-6, 40e-6)
        assert single.spot_centers == [(0.0, 0.0)]
        assert single.labels == [(0, 0)]

    def test_explicit_modes(self, grid):
        pair = build_linear_array_modeset(grid, 2, 60e-6, 20e-6, 40e-6, modes=[(0, 0), (1, 0)])
        assert pair.labels == [(0, 0), (1, 0)]

    def test_array_exceeding_grid(self, grid):
        with pytest.raises(ConfigurationError):
            build_linear_array_modeset(grid, 10, 100e-6, 20e-6, 40e-6)

    def test_rejects_unnormalized_fields(self, grid):
        raw = ComplexField(grid, np.ones(grid.shape))
        with pytest.raises(ValidationError):
            ModeSet(grid=grid, inputs=[raw], targets=[raw])


class TestSimilarity:

    def test_constant_offset(self):
        rng = np.random.default_rng(0)
        phi = rng.uniform(-np.pi, np.pi, size=(64, 64))
        assert similarity(phi, phi + 1.3) == pytest.approx(1.0, abs=1e-12)

    def test_independent_masks(self):
        rng = np.random.default_rng(0)
        a = rng.uniform(-np.pi, np.pi, size=(256, 256))
        b = rng.uniform(-np.pi, np.pi, size=(256, 256))
        assert similarity(a, b) < 0.02
        assert similarity(a, b) == pytest.approx(similarity(b, a), abs=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(GridMismatchError):
            similarity(np.zeros((4, 4)), np.zeros((4, 5)))
