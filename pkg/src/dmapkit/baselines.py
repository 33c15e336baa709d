"""Reference postprocessing methods: density integration, fixed-threshold
connected components, and local maxima."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .components import label_components
from .grid import DatasetManifest, DensityMap, KernelSpec, PointSet, read_density_map, read_points

__all__ = [
    "CcatResult",
    "SweepResult",
    "count_iodm",
    "cca_t",
    "local_maxima",
    "default_sweep_grid",
    "sweep_threshold",
]

SWEEP_GRID_SIZE = 32


@dataclass(frozen=True, eq=False)
class CcatResult:
    """Fixed-threshold baseline output: one object per component."""

    threshold: float
    count: int
    centers: PointSet


def count_iodm(dmap: DensityMap) -> float:
    """Count by integrating the density map (sum of all values)."""
    return dmap.total()


def cca_t(dmap: DensityMap, threshold: float, connectivity: str = "full") -> CcatResult:
    """Threshold, label, and report one density-weighted centroid per component."""
    labeling = label_components(dmap, threshold, connectivity)
    n = labeling.n_components
    if n == 0:
        return CcatResult(float(threshold), 0, PointSet.empty(dmap.ndim))
    flat_labels = labeling.labels.ravel()
    values = dmap.values.ravel().astype(np.float64)
    mass = np.bincount(flat_labels, weights=values, minlength=n + 1)[1:]
    centers_grid = np.empty((n, dmap.ndim))
    for axis in range(dmap.ndim):
        coord = np.indices(dmap.dims)[axis].ravel()
        centers_grid[:, axis] = (
            np.bincount(flat_labels, weights=values * coord, minlength=n + 1)[1:] / mass
        )
    return CcatResult(float(threshold), n, PointSet(centers_grid[:, ::-1]))


def local_maxima(dmap: DensityMap, threshold: float, min_distance: int = 1) -> PointSet:
    """Cells above ``threshold`` that strictly dominate every neighbor.

    Neighborhood is the full-connectivity box of radius ``min_distance``;
    plateau cells are excluded by the strict comparison.  Returns integer
    cell coordinates as points.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    if min_distance < 1:
        raise ValueError("min_distance must be at least 1")
    size = 2 * min_distance + 1
    footprint = np.ones((size,) * dmap.ndim, dtype=bool)
    footprint[(min_distance,) * dmap.ndim] = False
    values = dmap.values
    neighbor_max = ndimage.maximum_filter(
        values, footprint=footprint, mode="constant", cval=-np.inf
    )
    peaks = (values > threshold) & (values > neighbor_max)
    coords = np.argwhere(peaks).astype(np.float64)
    if coords.size == 0:
        return PointSet.empty(dmap.ndim)
    return PointSet(coords[:, ::-1])


def default_sweep_grid(kernel: KernelSpec, size: int = SWEEP_GRID_SIZE) -> np.ndarray:
    peak = kernel.peak_density()
    return np.geomspace(1e-4 * peak, 0.95 * peak, size)


@dataclass(frozen=True)
class SweepResult:
    objective: str
    best_threshold: float
    best_value: float
    table: tuple


def sweep_threshold(
    manifest: DatasetManifest,
    kernel: KernelSpec,
    thresholds=None,
    radius: float = 5.0,
    objective: str = "f1",
    connectivity: str = "full",
) -> SweepResult:
    """Pick the fixed threshold that scores best on a validation manifest.

    ``objective`` is "f1" (micro F-measure of centroid matching, maximized)
    or "mae" (counting MAE, minimized); ties go to the smaller threshold.
    """
    from .evaluation import match_points

    if len(manifest) == 0:
        raise ValueError("sweep requires a nonempty manifest")
    if objective not in ("f1", "mae"):
        raise ValueError(f"objective must be 'f1' or 'mae', got {objective!r}")
    if thresholds is None:
        thresholds = default_sweep_grid(kernel)
    thresholds = np.asarray(thresholds, dtype=np.float64)

    images = []
    for entry in manifest.entries:
        images.append(
            (read_density_map(entry.pred_density_path), read_points(entry.gt_points_path))
        )

    table = []
    for t in thresholds:
        t = float(t)
        tp = fp = fn = 0
        abs_err = 0.0
        for dmap, gt in images:
            result = cca_t(dmap, t, connectivity)
            abs_err += abs(result.count - len(gt))
            if objective == "f1":
                m = match_points(result.centers, gt, radius)
                tp += len(m.pairs)
                fp += len(m.unmatched_pred)
                fn += len(m.unmatched_gt)
        if objective == "f1":
            denom_p = tp + fp
            denom_r = tp + fn
            p = tp / denom_p if denom_p else 1.0
            r = tp / denom_r if denom_r else 1.0
            value = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
        else:
            value = abs_err / len(images)
        table.append((t, value))

    best_idx = 0
    for i, (_, value) in enumerate(table):
        better = value > table[best_idx][1] if objective == "f1" else value < table[best_idx][1]
        if better:
            best_idx = i
    best_t, best_value = table[best_idx]
    return SweepResult(
        objective=objective,
        best_threshold=best_t,
        best_value=best_value,
        table=tuple(table),
    )
