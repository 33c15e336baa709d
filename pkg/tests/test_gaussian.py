import math

import numpy as np
import pytest
from scipy import integrate

from dmapkit.gaussian import (
    gaussian_density,
    mahalanobis_radius_for_threshold,
    mass_within_radius,
    render_density_map,
)
from dmapkit.grid import KernelSpec, PointSet


def chi2_cdf_quadrature(r: float, d: int) -> float:
    """Independent oracle: adaptive quadrature of the chi-square density."""
    if r == 0:
        return 0.0
    density = lambda x: x ** (d / 2 - 1) * math.exp(-x / 2) / (
        2 ** (d / 2) * math.gamma(d / 2)
    )
    value, _ = integrate.quad(density, 0.0, r * r, limit=200)
    return value


def radius_by_bisection(threshold: float, kernel: KernelSpec) -> float:
    """Independent oracle: bisect the radial profile peak*exp(-r^2/2) = T."""
    peak = kernel.peak_density()
    lo, hi = 0.0, 50.0
    for _ in range(200):
        mid = (lo + hi) / 2
        if peak * math.exp(-0.5 * mid * mid) > threshold:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


class TestGaussianDensity:
    def test_standard_2d_peak(self):
        k = KernelSpec.isotropic(1.0, 2)
        assert gaussian_density([3.0, 4.0], [3.0, 4.0], k) == pytest.approx(
            1.0 / (2 * math.pi), rel=1e-12
        )

    def test_det_scaling(self):
        k = KernelSpec.isotropic(2.0, 2)
        assert gaussian_density([0.0, 0.0], [0.0, 0.0], k) == pytest.approx(
            1.0 / (8 * math.pi), rel=1e-12
        )

    def test_radial_form_at_unit_distance(self):
        k = KernelSpec(np.array([[4.0, 1.0], [1.0, 3.0]]))
        # a point at Mahalanobis distance 1: mu + L e1 with L the Cholesky factor
        L = np.linalg.cholesky(k.sigma)
        mu = np.array([5.0, 7.0])
        x = mu + L @ np.array([1.0, 0.0])
        assert gaussian_density(x, mu, k) == pytest.approx(
            k.peak_density() * math.exp(-0.5), rel=1e-12
        )


class TestMahalanobisRadius:
    def test_half_max(self):
        for k in (KernelSpec.isotropic(1.7, 2), KernelSpec.diagonal([2.0, 3.0, 1.0])):
            r = mahalanobis_radius_for_threshold(k.peak_density() / 2, k)
            assert r == pytest.approx(math.sqrt(2 * math.log(2)), rel=1e-12)

    def test_e_minus_two(self):
        k = KernelSpec.isotropic(2.0, 2)
        assert mahalanobis_radius_for_threshold(
            k.peak_density() * math.exp(-2.0), k
        ) == pytest.approx(2.0, rel=1e-12)

    def test_against_bisection_oracle(self):
        k = KernelSpec.isotropic(2.5, 2)
        peak = k.peak_density()
        for frac in (0.999, 0.5, 0.1, 1e-3):
            r = mahalanobis_radius_for_threshold(frac * peak, k)
            assert r == pytest.approx(radius_by_bisection(frac * peak, k), abs=1e-9)
            # the defining relation: density at that radius equals T
            assert peak * math.exp(-0.5 * r * r) == pytest.approx(
                frac * peak, rel=1e-12
            )

    def test_near_peak(self):
        k = KernelSpec.isotropic(2.0, 2)
        r = mahalanobis_radius_for_threshold(0.999 * k.peak_density(), k)
        assert r == pytest.approx(0.0447, abs=2e-4)

    def test_domain_errors(self):
        k = KernelSpec.isotropic(2.0, 2)
        with pytest.raises(ValueError, match="above kernel peak"):
            mahalanobis_radius_for_threshold(k.peak_density(), k)
        with pytest.raises(ValueError):
            mahalanobis_radius_for_threshold(0.0, k)

    def test_strictly_decreasing_in_threshold(self):
        k = KernelSpec.isotropic(2.0, 2)
        ts = np.geomspace(1e-6, 0.99, 50) * k.peak_density()
        rs = [mahalanobis_radius_for_threshold(t, k) for t in ts]
        assert all(a > b for a, b in zip(rs, rs[1:]))


class TestMassWithinRadius:
    def test_2d_half_mass_at_half_max(self):
        assert mass_within_radius(math.sqrt(2 * math.log(2)), 2) == 0.5

    def test_3d_at_half_max_radius(self):
        r = math.sqrt(2 * math.log(2))
        value = mass_within_radius(r, 3)
        assert value == pytest.approx(0.2910, abs=1e-3)
        assert value == pytest.approx(chi2_cdf_quadrature(r, 3), abs=1e-9)

    def test_limits(self):
        for d in (2, 3):
            assert mass_within_radius(0.0, d) == 0.0
            assert mass_within_radius(50.0, d) == pytest.approx(1.0, abs=1e-12)

    def test_matches_quadrature_oracle(self):
        rng = np.random.default_rng(7)
        for d in (2, 3):
            for r in rng.uniform(0.05, 6.0, size=20):
                assert mass_within_radius(float(r), d) == pytest.approx(
                    chi2_cdf_quadrature(float(r), d), abs=1e-6
                )

    def test_strictly_increasing(self):
        for d in (2, 3):
            rs = np.linspace(0.01, 8.0, 100)
            vals = [mass_within_radius(float(r), d) for r in rs]
            assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_domain(self):
        with pytest.raises(ValueError):
            mass_within_radius(-0.1, 2)
        with pytest.raises(ValueError):
            mass_within_radius(1.0, 4)


class TestRender:
    def test_empty_points(self):
        dmap = render_density_map(PointSet.empty(2), KernelSpec.isotropic(2.0, 2), (16, 16))
        assert dmap.total() == 0.0

    def test_unit_mass_interior_kernel(self):
        k = KernelSpec.isotropic(2.0, 2)
        dmap = render_density_map(PointSet(np.array([[32.0, 32.0]])), k, (64, 64))
        assert 0.999 <= dmap.total() <= 1.001

    def test_unit_mass_subpixel_center(self):
        k = KernelSpec.isotropic(2.0, 2)
        dmap = render_density_map(PointSet(np.array([[31.62, 32.41]])), k, (64, 64))
        assert 0.999 <= dmap.total() <= 1.001

    def test_superposition(self):
        k = KernelSpec.isotropic(2.0, 2)
        pts = PointSet(np.array([[20.0, 32.0], [60.0, 32.0]]))
        dmap = render_density_map(pts, k, (64, 96))
        assert 1.998 <= dmap.total() <= 2.002

    def test_out_of_grid_point_contributes_tail(self):
        k = KernelSpec.isotropic(2.0, 2)
        dmap = render_density_map(PointSet(np.array([[-2.0, 10.0]])), k, (24, 24))
        assert 0 < dmap.total() < 1.0

    def test_3d_unit_mass(self):
        k = KernelSpec.diagonal([2.0, 2.0, 1.0])
        dmap = render_density_map(PointSet(np.array([[16.0, 16.0, 8.0]])), k, (16, 32, 32))
        assert dmap.ndim == 3
        assert 0.999 <= dmap.total() <= 1.001

    def test_value_matches_kernel_density(self):
        k = KernelSpec.isotropic(2.0, 2)
        center = np.array([12.3, 9.7])
        dmap = render_density_map(PointSet(center[None, :]), k, (24, 24))
        # value at grid cell (row 10, col 13) is the kernel at point (13, 10)
        assert dmap.values[10, 13] == pytest.approx(
            gaussian_density([13.0, 10.0], center, k), rel=1e-6
        )

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            render_density_map(PointSet.empty(3), KernelSpec.isotropic(1.5, 2), (8, 8))

    def test_deterministic(self):
        k = KernelSpec.isotropic(2.0, 2)
        pts = PointSet(np.array([[10.0, 12.0], [30.0, 5.0]]))
        a = render_density_map(pts, k, (40, 40))
        b = render_density_map(pts, k, (40, 40))
        assert np.array_equal(a.values, b.values)
