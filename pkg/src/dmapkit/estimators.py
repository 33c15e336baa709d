"""Scikit-learn style wrappers around the analysis pipeline.

The analyzers are stateless predictors (a density map in, centers or a
count out), exposed with the estimator protocol so they compose with
sklearn tooling: ``get_params``/``set_params`` via ``BaseEstimator``,
``fit`` returning self, ``clone``-safe constructors.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .baselines import cca_t, count_iodm, sweep_threshold
from .grid import DatasetManifest, DensityMap, make_kernel
from .localization import analyze_dma

__all__ = ["DensityMapAnalyzer", "ThresholdAnalyzer", "DensityIntegralCounter"]


def check_density_map(X) -> DensityMap:
    """Accept a DensityMap or a raw 2D/3D array and validate it."""
    if isinstance(X, DensityMap):
        return X
    return DensityMap(np.asarray(X, dtype=np.float32))


class DensityMapAnalyzer(BaseEstimator):
    """Counting and localization with mass-normalized components.

    Parameters
    ----------
    sigma : float
        Kernel standard deviation in pixels (isotropic in x, y).
    sigma_z : float or None
        Separate z standard deviation for 3D maps.
    n_candidates : int
        Size of the automatic threshold grid.
    samples_per_object : int
        Monte Carlo samples per expected object when fitting centers.
    connectivity : {"full", "face"}
        Component connectivity.
    random_state : int
        Seed for the sampling streams.
    """

    def __init__(self, sigma=2.0, sigma_z=None, n_candidates=48,
                 samples_per_object=2000, connectivity="full", random_state=0):
        self.sigma = sigma
        self.sigma_z = sigma_z
        self.n_candidates = n_candidates
        self.samples_per_object = samples_per_object
        self.connectivity = connectivity
        self.random_state = random_state

    def _kernel(self, ndim: int):
        return make_kernel(ndim, self.sigma, self.sigma_z)

    def fit(self, X=None, y=None):
        """No-op; the analyzer has no trainable state."""
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        return self

    def analyze(self, X):
        """Return the full (CountResult, PointSet) pipeline output."""
        dmap = check_density_map(X)
        return analyze_dma(
            dmap,
            self._kernel(dmap.ndim),
            seed=self.random_state,
            samples_per_object=self.samples_per_object,
            n_candidates=self.n_candidates,
            connectivity=self.connectivity,
        )

    def predict(self, X) -> np.ndarray:
        """Recovered object centers as an (n, ndim) array of (x, y[, z])."""
        _, centers = self.analyze(X)
        return centers.coords.copy()

    def count(self, X) -> int:
        result, _ = self.analyze(X)
        return result.total_count


class ThresholdAnalyzer(BaseEstimator):
    """Fixed-threshold connected-component baseline (one object per component).

    ``threshold=None`` requires a call to :meth:`fit`, which sweeps the
    threshold on a validation manifest.
    """

    def __init__(self, threshold=None, sigma=2.0, sigma_z=None,
                 radius=5.0, objective="f1", connectivity="full"):
        self.threshold = threshold
        self.sigma = sigma
        self.sigma_z = sigma_z
        self.radius = radius
        self.objective = objective
        self.connectivity = connectivity

    def fit(self, X, y=None):
        """Sweep the threshold on a validation manifest.

        ``X`` is a :class:`DatasetManifest` (predicted maps and ground
        truth points); the swept best threshold is stored in
        ``best_threshold_``.
        """
        if not isinstance(X, DatasetManifest):
            raise TypeError("fit expects a DatasetManifest")
        ndim = 3 if self.sigma_z is not None else 2
        kernel = make_kernel(ndim, self.sigma, self.sigma_z)
        result = sweep_threshold(
            X, kernel, radius=self.radius, objective=self.objective,
            connectivity=self.connectivity,
        )
        self.best_threshold_ = result.best_threshold
        self.sweep_result_ = result
        return self

    def _threshold(self) -> float:
        if self.threshold is not None:
            return float(self.threshold)
        if hasattr(self, "best_threshold_"):
            return float(self.best_threshold_)
        raise ValueError("threshold not set; pass threshold= or call fit()")

    def predict(self, X) -> np.ndarray:
        dmap = check_density_map(X)
        result = cca_t(dmap, self._threshold(), self.connectivity)
        return result.centers.coords.copy()

    def count(self, X) -> int:
        dmap = check_density_map(X)
        return cca_t(dmap, self._threshold(), self.connectivity).count


class DensityIntegralCounter(BaseEstimator):
    """Counting by integrating the density map; no localization."""

    def fit(self, X=None, y=None):
        return self

    def count(self, X) -> float:
        return count_iodm(check_density_map(X))

    def predict(self, X) -> float:
        return self.count(X)
