"""Unsupervised hyperspectral image clustering.

Pixels are scored by density and spectral purity, spectra are denoised by
shape-adaptive neighborhood reconstruction, and clusters grow from modes of
a diffusion-geometry score.  See :mod:`dsirc.clustering` for the pipelines
(``dsirc``, ``dvic``) and baselines, :mod:`dsirc.cli` for the command line.
"""

from .clustering import (
    ClusterConfig,
    Clustering,
    DensityField,
    ZetaField,
    auto_sigma0,
    dsirc,
    dt_values,
    dvic,
    kde_density,
    kmeans,
    propagate_labels,
    select_modes,
    spectral_clustering,
    zeta,
)
from .core import (
    DegenerateCovarianceError,
    EnviFormatError,
    ImageCube,
    LabelMap,
    PcScalarField,
    PixelCloud,
    cloud_to_cube,
    cube_to_cloud,
    first_pc,
    load_envi,
    write_envi,
)
from .diffusion import (
    DiffusionSystem,
    DisconnectedGraphError,
    KnnGraph,
    diffusion_distance,
    diffusion_system,
    knn_graph,
    nearest_in_diffusion,
)
from .evaluation import align_labels, cohens_kappa, confusion_counts, overall_accuracy
from .sar import (
    IciConfig,
    LpaKernel,
    SaRegion,
    build_lpa_kernels,
    build_sa_region,
    estimate_noise_sigma,
    ici_select_length,
    lpa_estimate,
    reconstruct_pixel,
    sar,
)
from .synth import SynthConfig, SynthScene, synth_hsi
from .unmixing import (
    PurityField,
    RankDeficientDataError,
    UnmixingModel,
    avmax,
    hysime,
    nnls,
    purity,
    unmix,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # core
    "ImageCube",
    "PixelCloud",
    "LabelMap",
    "PcScalarField",
    "EnviFormatError",
    "DegenerateCovarianceError",
    "load_envi",
    "write_envi",
    "cube_to_cloud",
    "cloud_to_cube",
    "first_pc",
    # sar
    "IciConfig",
    "LpaKernel",
    "SaRegion",
    "build_lpa_kernels",
    "lpa_estimate",
    "ici_select_length",
    "build_sa_region",
    "reconstruct_pixel",
    "estimate_noise_sigma",
    "sar",
    # unmixing
    "UnmixingModel",
    "PurityField",
    "RankDeficientDataError",
    "hysime",
    "avmax",
    "nnls",
    "purity",
    "unmix",
    # diffusion
    "KnnGraph",
    "DiffusionSystem",
    "DisconnectedGraphError",
    "knn_graph",
    "diffusion_system",
    "diffusion_distance",
    "nearest_in_diffusion",
    # clustering
    "ClusterConfig",
    "Clustering",
    "DensityField",
    "ZetaField",
    "auto_sigma0",
    "kde_density",
    "zeta",
    "dt_values",
    "select_modes",
    "propagate_labels",
    "dsirc",
    "dvic",
    "kmeans",
    "spectral_clustering",
    # evaluation
    "confusion_counts",
    "align_labels",
    "overall_accuracy",
    "cohens_kappa",
    # synth
    "SynthConfig",
    "SynthScene",
    "synth_hsi",
]
