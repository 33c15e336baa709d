"""Closed-form Gaussian machinery.

Kernel evaluation, density-map rendering, the Mahalanobis radius of a
density threshold, and the fraction of a kernel's unit mass inside that
radius (the chi-square CDF of the squared radius).
"""

from __future__ import annotations

import math

import numpy as np

from .grid import DensityMap, KernelSpec, PointSet, points_to_indices

__all__ = [
    "TRUNCATION_RADIUS",
    "gaussian_density",
    "render_density_map",
    "render_weighted",
    "add_isotropic_bump",
    "mahalanobis_radius_for_threshold",
    "mass_within_radius",
]

# Kernels are rendered only within this Mahalanobis radius of their center.
# Omitted mass: < 4e-6 in 2D, < 6e-5 in 3D.
TRUNCATION_RADIUS = 5.0


def gaussian_density(x, mu, kernel: KernelSpec) -> float:
    """Multivariate normal density at ``x`` for mean ``mu`` and the kernel's sigma."""
    x = np.asarray(x, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if x.shape != (kernel.ndim,) or mu.shape != (kernel.ndim,):
        raise ValueError("x and mu must be single points matching kernel.ndim")
    delta = x - mu
    maha2 = float(delta @ kernel.inverse @ delta)
    return kernel.peak_density() * math.exp(-0.5 * maha2)


def _axis_extents(kernel: KernelSpec, radius: float) -> np.ndarray:
    # Bounding-box half widths of the Mahalanobis ball along each point axis.
    return radius * np.sqrt(np.diag(kernel.sigma))


def render_weighted(points: PointSet, kernel: KernelSpec, dims, weights=None) -> np.ndarray:
    """Accumulate truncated kernels into a float64 array, one per point.

    ``weights`` scales each kernel's amplitude (unit mass when 1).  Points
    are accumulated in order, so the result is deterministic.
    """
    dims = tuple(int(n) for n in dims)
    if points.ndim != kernel.ndim or len(dims) != kernel.ndim:
        raise ValueError("points, kernel and dims must agree on dimensionality")
    if weights is None:
        weights = np.ones(len(points), dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    acc = np.zeros(dims, dtype=np.float64)
    if len(points) == 0:
        return acc
    peak = kernel.peak_density()
    # Work on grid axes: reverse point coords and permute sigma to match.
    centers = points_to_indices(points.coords)
    inv = kernel.inverse[::-1, ::-1]
    extents = _axis_extents(kernel, TRUNCATION_RADIUS)[::-1]
    d = kernel.ndim
    for center, w in zip(centers, weights):
        lo = [max(0, int(math.ceil(center[a] - extents[a]))) for a in range(d)]
        hi = [min(dims[a] - 1, int(math.floor(center[a] + extents[a]))) for a in range(d)]
        if any(l > h for l, h in zip(lo, hi)):
            continue
        grids = np.meshgrid(
            *[np.arange(l, h + 1, dtype=np.float64) for l, h in zip(lo, hi)],
            indexing="ij",
        )
        deltas = [g - c for g, c in zip(grids, center)]
        maha2 = np.zeros_like(deltas[0])
        for a in range(d):
            for b in range(d):
                maha2 += deltas[a] * inv[a, b] * deltas[b]
        block = np.where(
            maha2 <= TRUNCATION_RADIUS**2, (w * peak) * np.exp(-0.5 * maha2), 0.0
        )
        region = tuple(slice(l, h + 1) for l, h in zip(lo, hi))
        acc[region] += block
    return acc


def add_isotropic_bump(acc: np.ndarray, center, amplitude: float, std: float) -> None:
    """Add ``amplitude * exp(-r^2 / (2 std^2))`` in place, truncated at 5 std.

    ``center`` is in grid-axis order.  Used by the corruption model for
    spurious background peaks; amplitude is the peak value, not a mass.
    """
    d = acc.ndim
    center = np.asarray(center, dtype=np.float64)
    ext = TRUNCATION_RADIUS * std
    lo = [max(0, int(math.ceil(center[a] - ext))) for a in range(d)]
    hi = [min(acc.shape[a] - 1, int(math.floor(center[a] + ext))) for a in range(d)]
    if any(l > h for l, h in zip(lo, hi)):
        return
    grids = np.meshgrid(
        *[np.arange(l, h + 1, dtype=np.float64) for l, h in zip(lo, hi)],
        indexing="ij",
    )
    maha2 = sum((g - c) ** 2 for g, c in zip(grids, center)) / std**2
    block = np.where(maha2 <= TRUNCATION_RADIUS**2, amplitude * np.exp(-0.5 * maha2), 0.0)
    region = tuple(slice(l, h + 1) for l, h in zip(lo, hi))
    acc[region] += block


def render_density_map(points: PointSet, kernel: KernelSpec, dims) -> DensityMap:
    """Render a density map: one unit-mass truncated kernel per point."""
    return DensityMap(render_weighted(points, kernel, dims).astype(np.float32))


def mahalanobis_radius_for_threshold(threshold: float, kernel: KernelSpec) -> float:
    """Mahalanobis radius at which the kernel's density equals ``threshold``."""
    peak = kernel.peak_density()
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if threshold >= peak:
        raise ValueError(
            f"threshold above kernel peak ({threshold:.6g} >= {peak:.6g})"
        )
    return math.sqrt(-2.0 * math.log(threshold / peak))


def mass_within_radius(r: float, ndim: int) -> float:
    """Fraction of a kernel's unit mass inside Mahalanobis radius ``r``.

    Equals P(chi2_d <= r^2): 1 - exp(-r^2/2) for d=2 and
    erf(r/sqrt(2)) - sqrt(2/pi) r exp(-r^2/2) for d=3.
    """
    if r < 0:
        raise ValueError("radius must be nonnegative")
    if ndim == 2:
        return -math.expm1(-0.5 * r * r)
    if ndim == 3:
        return math.erf(r / math.sqrt(2.0)) - math.sqrt(2.0 / math.pi) * r * math.exp(
            -0.5 * r * r
        )
    raise ValueError("only 2D and 3D are supported")
