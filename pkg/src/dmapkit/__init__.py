"""dmapkit: counting and localizing crowd objects from Gaussian density maps."""

from .grid import (
    DensityMap,
    PointSet,
    KernelSpec,
    DatasetManifest,
    ManifestEntry,
    FormatError,
    make_kernel,
    read_density_map,
    write_density_map,
    read_points,
    write_points,
    read_manifest,
    write_manifest,
)
from .gaussian import (
    gaussian_density,
    render_density_map,
    mahalanobis_radius_for_threshold,
    mass_within_radius,
)
from .components import ComponentLabeling, label_components, component_mass
from .counting import (
    ComponentRecord,
    ThresholdSelection,
    CountResult,
    component_counts,
    auto_threshold,
    count_dma,
)
from .localization import (
    ComponentDistribution,
    GmmFit,
    normalize_component,
    sample_component,
    fit_gmm_fixed_cov,
    localize_component,
    analyze_dma,
)
from .baselines import CcatResult, count_iodm, cca_t, local_maxima, sweep_threshold
from .synthesis import (
    SceneConfig,
    NoiseConfig,
    preset_scene,
    generate_scene,
    corrupt_density,
    generate_dataset,
)
from .evaluation import (
    Matching,
    MetricsReport,
    match_points,
    compute_metrics,
    evaluate_manifest,
)
from .estimators import DensityMapAnalyzer, ThresholdAnalyzer, DensityIntegralCounter

__version__ = "0.1.0"

__all__ = [
    "DensityMap", "PointSet", "KernelSpec", "DatasetManifest", "ManifestEntry",
    "FormatError", "make_kernel",
    "read_density_map", "write_density_map", "read_points", "write_points",
    "read_manifest", "write_manifest",
    "gaussian_density", "render_density_map",
    "mahalanobis_radius_for_threshold", "mass_within_radius",
    "ComponentLabeling", "label_components", "component_mass",
    "ComponentRecord", "ThresholdSelection", "CountResult",
    "component_counts", "auto_threshold", "count_dma",
    "ComponentDistribution", "GmmFit", "normalize_component",
    "sample_component", "fit_gmm_fixed_cov", "localize_component", "analyze_dma",
    "CcatResult", "count_iodm", "cca_t", "local_maxima", "sweep_threshold",
    "SceneConfig", "NoiseConfig", "preset_scene", "generate_scene",
    "corrupt_density", "generate_dataset",
    "Matching", "MetricsReport", "match_points", "compute_metrics",
    "evaluate_manifest",
    "DensityMapAnalyzer", "ThresholdAnalyzer", "DensityIntegralCounter",
    "__version__",
]
