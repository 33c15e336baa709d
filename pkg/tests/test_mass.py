"""Tests for the subcell supra-threshold mass estimator."""

import math

import numpy as np
import pytest

from dmapkit.gaussian import (
    mahalanobis_radius_for_threshold,
    mass_within_radius,
    render_density_map,
)
from dmapkit.grid import KernelSpec, PointSet
from dmapkit.mass import catmull_rom_upsample, supra_threshold_mass, zoom_factors


def _kernel_map(sigma, dims, center):
    k = KernelSpec.isotropic(sigma, 2)
    dmap = render_density_map(PointSet(np.array([center])), k, dims)
    return k, dmap


class TestCatmullRom:
    def test_reproduces_quadratic_exactly(self):
        # Catmull-Rom interpolation is exact for quadratics away from edges.
        x = np.arange(20, dtype=np.float64)
        y = np.arange(15, dtype=np.float64)
        coarse = 3.0 + 0.25 * x[None, :] - 0.1 * y[:, None] ** 2 + 0.05 * x[None, :] ** 2
        k = 4
        fine = catmull_rom_upsample(coarse, (k, k))
        fx = (np.arange(20 * k) + 0.5) / k - 0.5
        fy = (np.arange(15 * k) + 0.5) / k - 0.5
        exact = 3.0 + 0.25 * fx[None, :] - 0.1 * fy[:, None] ** 2 + 0.05 * fx[None, :] ** 2
        interior = (slice(2 * k, -2 * k), slice(2 * k, -2 * k))
        assert np.abs(fine[interior] - exact[interior]).max() < 1e-10

    def test_factor_one_is_identity(self):
        arr = np.arange(12.0).reshape(3, 4)
        assert np.array_equal(catmull_rom_upsample(arr, (1, 1)), arr)

    def test_mean_preserved_approximately(self):
        rng = np.random.default_rng(0)
        arr = rng.random((10, 10))
        fine = catmull_rom_upsample(arr, (4, 4))
        assert fine.mean() == pytest.approx(arr.mean(), abs=0.02)


class TestSupraThresholdMass:
    def test_matches_mass_function_2d(self):
        rng = np.random.default_rng(1)
        for sigma in (1.5, 2.0, 4.0):
            k, _ = _kernel_map(sigma, (8, 8), [4.0, 4.0])
            peak = k.peak_density()
            for frac in (0.05, 0.5, 0.9):
                center = 32 + rng.random(2) - 0.5
                _, dmap = _kernel_map(sigma, (64, 64), center.tolist())
                t = frac * peak
                r = mahalanobis_radius_for_threshold(t, k)
                factors = zoom_factors(dmap.dims, r, k.axis_stds[::-1])
                mass = supra_threshold_mass(dmap.values, t, factors)
                expected = mass_within_radius(r, 2)
                assert mass == pytest.approx(expected, abs=1e-3)

    def test_matches_mass_function_3d_anisotropic(self):
        rng = np.random.default_rng(2)
        k = KernelSpec.diagonal([2.0, 2.0, 1.0])
        peak = k.peak_density()
        dmap = render_density_map(
            PointSet(np.array([[16.2, 15.7, 8.3]])), k, (16, 32, 32)
        )
        for frac in (0.1, 0.5, 0.9):
            t = frac * peak
            r = mahalanobis_radius_for_threshold(t, k)
            factors = zoom_factors(dmap.dims, r, k.axis_stds[::-1])
            mass = supra_threshold_mass(dmap.values, t, factors)
            expected = mass_within_radius(r, 3)
            assert mass == pytest.approx(expected, rel=0.02)

    def test_zero_when_all_below(self):
        vals = np.full((8, 8), 0.1)
        assert supra_threshold_mass(vals, 1.0, (2, 2)) == 0.0

    def test_constant_above_threshold_counts_everything(self):
        vals = np.full((6, 6), 2.0)
        mass = supra_threshold_mass(vals, 1.0, (2, 2))
        assert mass == pytest.approx(72.0, rel=1e-9)

    def test_scale_covariance_exact(self):
        k, dmap = _kernel_map(2.0, (48, 48), [24.3, 23.6])
        t = 0.3 * k.peak_density()
        r = mahalanobis_radius_for_threshold(t, k)
        factors = zoom_factors(dmap.dims, r, k.axis_stds[::-1])
        base = supra_threshold_mass(dmap.values.astype(np.float64), t, factors)
        for s in (0.25, 3.0, 17.0):
            scaled = supra_threshold_mass(
                dmap.values.astype(np.float64) * s, t * s, factors
            )
            assert scaled == pytest.approx(s * base, rel=1e-12)

    def test_invalid_threshold(self):
        with pytest.raises(ValueError):
            supra_threshold_mass(np.ones((4, 4)), 0.0, (2, 2))


class TestZoomFactors:
    def test_resolves_small_extents_more(self):
        ks_small = zoom_factors((8, 8), 0.4, (1.5, 1.5))
        ks_large = zoom_factors((8, 8), 3.0, (4.0, 4.0))
        assert ks_small[0] > ks_large[0]

    def test_budget_cap(self):
        ks = zoom_factors((500, 500, 500), 0.4, (1.0, 1.0, 1.0), max_fine_cells=1000)
        assert np.prod([500 * k for k in ks]) <= 8000  # floor(1..) per axis

    def test_anisotropic(self):
        ks = zoom_factors((16, 32, 32), 0.46, (1.0, 2.0, 2.0))
        assert ks[0] > ks[1] == ks[2]
