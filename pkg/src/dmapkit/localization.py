"""Center recovery inside connected components.

Each component's density is normalized to a discrete distribution,
sampled with jitter, and fitted with a fixed-covariance Gaussian mixture
whose means are the recovered object centers.  The mixture size comes
from the counting stage, never from model selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.special import logsumexp

from .components import ComponentLabeling, label_components
from .counting import CountResult, count_dma
from .grid import DensityMap, KernelSpec, PointSet
from .mass import DEFAULT_CELLS_ACROSS

__all__ = [
    "ComponentDistribution",
    "GmmFit",
    "normalize_component",
    "sample_component",
    "fit_gmm_fixed_cov",
    "localize_component",
    "analyze_dma",
]

DEFAULT_SAMPLES_PER_OBJECT = 2000

# Seed stream separation between components of one map.
_SEED_MASK = (1 << 63) - 1


@dataclass(frozen=True, eq=False)
class ComponentDistribution:
    """One component's density as a probability distribution over its cells.

    ``indices`` lists the component cells in raster order (grid axes);
    ``probabilities`` are the cell densities divided by the component mass.
    """

    component_id: int
    indices: np.ndarray
    probabilities: np.ndarray

    def mean_point(self) -> np.ndarray:
        """Probability-weighted centroid in (x, y[, z]) coordinates."""
        centroid = self.probabilities @ self.indices
        return centroid[::-1].copy()


@dataclass(frozen=True, eq=False)
class GmmFit:
    k: int
    means: np.ndarray
    weights: np.ndarray
    covariance: np.ndarray
    n_iter: int
    converged: bool
    final_shift: float
    log_likelihoods: tuple
    n_resets: int


def normalize_component(dmap: DensityMap, labeling: ComponentLabeling,
                        component_id: int) -> ComponentDistribution:
    """Normalize one component's cell densities to probabilities."""
    if not 1 <= component_id <= labeling.n_components:
        raise ValueError(f"unknown component id {component_id}")
    sel = labeling.labels == component_id
    indices = np.argwhere(sel)
    values = dmap.values[sel].astype(np.float64)
    mass = values.sum()
    if mass <= 0:
        raise ValueError(f"component {component_id} has zero mass")
    probs = values / mass
    probs /= probs.sum()
    return ComponentDistribution(
        component_id=component_id, indices=indices, probabilities=probs
    )


def sample_component(dist: ComponentDistribution, n: int, seed) -> np.ndarray:
    """Draw ``n`` jittered points from a component distribution.

    Cells are drawn by inverting the CDF over the raster cell order, then
    a uniform offset in [-0.5, 0.5)^d is added to the cell center.
    Returns (n, d) coordinates on the point axes (x, y[, z]).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(dist.probabilities)
    cdf[-1] = 1.0
    cells = np.searchsorted(cdf, rng.random(n), side="right")
    cells = np.minimum(cells, len(dist.probabilities) - 1)
    jitter = rng.random((n, dist.indices.shape[1])) - 0.5
    grid_coords = dist.indices[cells] + jitter
    return grid_coords[:, ::-1]


def _pairwise_maha2(x: np.ndarray, means: np.ndarray, inv: np.ndarray) -> np.ndarray:
    # (n, k) squared Mahalanobis distances.
    out = np.empty((x.shape[0], means.shape[0]))
    for j, mu in enumerate(means):
        d = x - mu
        out[:, j] = np.einsum("ni,ij,nj->n", d, inv, d)
    return out


def _farthest_point(x: np.ndarray, means: np.ndarray, inv: np.ndarray) -> np.ndarray:
    d2 = _pairwise_maha2(x, means, inv).min(axis=1)
    return x[int(np.argmax(d2))]


def _farthest_point_init(x: np.ndarray, k: int, inv: np.ndarray,
                         seeds: np.ndarray | None = None) -> np.ndarray:
    if seeds is None or len(seeds) == 0:
        centroid = x.mean(axis=0, keepdims=True)
        d2 = np.einsum("ni,ij,nj->n", x - centroid, inv, x - centroid)
        chosen = [x[int(np.argmin(d2))]]
    else:
        chosen = [np.asarray(s, dtype=np.float64) for s in seeds]
    while len(chosen) < k:
        chosen.append(_farthest_point(x, np.array(chosen), inv))
    return np.array(chosen[:k], dtype=np.float64)


def fit_gmm_fixed_cov(
    samples: np.ndarray,
    k: int,
    kernel: KernelSpec,
    init_means: np.ndarray | None = None,
    max_iters: int = 200,
    tol: float = 1e-3,
) -> GmmFit:
    """EM for a k-component mixture whose covariance is pinned to the kernel's.

    Responsibilities are computed in the log domain; only the means and
    weights are re-estimated.  Iteration stops when the largest mean
    shift falls below ``tol`` pixels.  An emptied component is restarted
    at the sample farthest (in Mahalanobis distance) from every current
    mean.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != kernel.ndim:
        raise ValueError("samples must have shape (n, kernel.ndim)")
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n samples, got k={k}, n={n}")
    inv = kernel.inverse
    log_norm = np.log(kernel.peak_density())
    if init_means is not None:
        means = np.array(init_means, dtype=np.float64)
        if means.shape != (k, kernel.ndim):
            raise ValueError("init_means must have shape (k, ndim)")
    else:
        means = _farthest_point_init(x, k, inv)
    weights = np.full(k, 1.0 / k)

    history: list[float] = []
    n_resets = 0
    converged = False
    shift = float("inf")
    n_iter = 0
    for n_iter in range(1, max_iters + 1):
        log_joint = (
            np.log(np.maximum(weights, 1e-300))[None, :]
            + log_norm
            - 0.5 * _pairwise_maha2(x, means, inv)
        )
        log_evidence = logsumexp(log_joint, axis=1)
        history.append(float(log_evidence.sum()))
        resp = np.exp(log_joint - log_evidence[:, None])
        nk = resp.sum(axis=0)

        new_means = means.copy()
        filled = nk > 1e-10
        new_means[filled] = (resp.T[filled] @ x) / nk[filled, None]
        for j in np.flatnonzero(~filled):
            new_means[j] = _farthest_point(x, new_means, inv)
            nk[j] = 1.0
            n_resets += 1
        weights = nk / nk.sum()

        shift = float(np.sqrt(((new_means - means) ** 2).sum(axis=1)).max())
        means = new_means
        if shift < tol:
            converged = True
            break

    return GmmFit(
        k=k,
        means=means,
        weights=weights,
        covariance=kernel.sigma.copy(),
        n_iter=n_iter,
        converged=converged,
        final_shift=shift,
        log_likelihoods=tuple(history),
        n_resets=n_resets,
    )


def _component_peaks(dmap: DensityMap, labeling: ComponentLabeling,
                     component_id: int, k: int) -> np.ndarray:
    """Up to ``k`` strict local maxima of the component, largest first.

    Ties break in raster-scan order.  Plateau cells are excluded by the
    strict comparison.
    """
    box = labeling.component_slice(component_id)
    window = tuple(
        slice(max(0, s.start - 1), min(n, s.stop + 1))
        for s, n in zip(box, dmap.values.shape)
    )
    vals = dmap.values[window]
    inside = labeling.labels[window] == component_id
    footprint = np.ones((3,) * dmap.ndim, dtype=bool)
    footprint[(1,) * dmap.ndim] = False
    neighbor_max = ndimage.maximum_filter(
        np.where(inside, vals, -1.0), footprint=footprint, mode="constant", cval=-1.0
    )
    is_peak = inside & (vals > neighbor_max)
    coords = np.argwhere(is_peak)
    if coords.size == 0:
        return np.empty((0, dmap.ndim))
    peak_vals = vals[is_peak]
    flat = np.ravel_multi_index(coords.T, vals.shape)
    order = np.lexsort((flat, -peak_vals))[:k]
    offsets = np.array([w.start for w in window], dtype=np.float64)
    return (coords[order] + offsets)[:, ::-1]


def localize_component(
    dmap: DensityMap,
    labeling: ComponentLabeling,
    component_id: int,
    rounded_count: int,
    kernel: KernelSpec,
    seed: int,
    samples_per_object: int = DEFAULT_SAMPLES_PER_OBJECT,
    max_iters: int = 200,
    tol: float = 1e-3,
) -> np.ndarray:
    """Recover ``rounded_count`` centers from one component.

    A zero count yields no centers (noise suppression); a count of one
    short-circuits to the density-weighted centroid, which is the EM
    fixed point; larger counts are fitted with the fixed-covariance
    mixture on Monte Carlo samples of the component distribution.
    """
    if rounded_count < 0:
        raise ValueError("rounded_count must be nonnegative")
    if rounded_count == 0:
        return np.empty((0, dmap.ndim))
    dist = normalize_component(dmap, labeling, component_id)
    if rounded_count == 1:
        return dist.mean_point()[None, :]
    rng = np.random.default_rng((int(seed) ^ int(component_id)) & _SEED_MASK)
    samples = sample_component(dist, rounded_count * samples_per_object, rng)
    peaks = _component_peaks(dmap, labeling, component_id, rounded_count)
    init = _farthest_point_init(samples, rounded_count, kernel.inverse, seeds=peaks)
    fit = fit_gmm_fixed_cov(
        samples, rounded_count, kernel, init_means=init,
        max_iters=max_iters, tol=tol,
    )
    return fit.means


def analyze_dma(
    dmap: DensityMap,
    kernel: KernelSpec,
    seed: int = 0,
    samples_per_object: int = DEFAULT_SAMPLES_PER_OBJECT,
    n_candidates: int = 48,
    connectivity: str = "full",
    cells_across: float = DEFAULT_CELLS_ACROSS,
) -> tuple[CountResult, PointSet]:
    """Full pipeline: automatic threshold, counts, then per-component centers.

    The returned point set always holds exactly ``total_count`` centers.
    """
    result = count_dma(dmap, kernel, n_candidates, connectivity, cells_across)
    if result.selection.chosen_t is None or result.total_count == 0:
        return result, PointSet.empty(dmap.ndim)
    labeling = label_components(dmap, result.selection.chosen_t, connectivity)
    centers = [
        localize_component(
            dmap, labeling, rec.id, rec.rounded_count, kernel, seed,
            samples_per_object,
        )
        for rec in result.records
        if rec.rounded_count > 0
    ]
    return result, PointSet(np.vstack(centers))
