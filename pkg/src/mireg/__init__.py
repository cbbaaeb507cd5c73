"""Multi-instance rigid registration from putative 3D correspondences.

The pipeline embeds correspondences with a contrastively trained network,
prunes low-density correspondences on a fused similarity graph, picks the
instance count from the eigengap of the normalized Laplacian and fits one
rigid transform per spectral cluster with RANSAC.
"""

from .exceptions import (
    ConvergenceFailure,
    DegenerateConfiguration,
    EmptyBenchmark,
    InfeasibleConfig,
    MissingModel,
    NoPositiveAvailable,
    NotNormalized,
    NoValidModel,
    ShapeMismatch,
    TooFewPoints,
)
from .geom import LabeledScene, RigidTransform, kabsch
from .estimator import EigengapSpectralClustering, FeatureExtractor, PointCLM

__version__ = "0.1.0"

__all__ = [
    "ConvergenceFailure",
    "DegenerateConfiguration",
    "EigengapSpectralClustering",
    "EmptyBenchmark",
    "FeatureExtractor",
    "InfeasibleConfig",
    "LabeledScene",
    "MissingModel",
    "NoPositiveAvailable",
    "NoValidModel",
    "NotNormalized",
    "PointCLM",
    "RigidTransform",
    "ShapeMismatch",
    "TooFewPoints",
    "kabsch",
]
