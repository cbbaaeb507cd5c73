"""Per-cluster RANSAC and the end-to-end registration pipeline."""

import time
from dataclasses import dataclass, field

import numpy as np

from . import featnet
from .cluster import ClusterConfig, spectral_cluster
from .consistency import ConsistencyConfig, similarity_matrices, spatial_consistency
from .exceptions import DegenerateConfiguration, NoValidModel
from .geom import kabsch, residuals
from .prune import PruneConfig, prune
from .seeding import derive_seed

MODES = ("deep", "beta", "oracle")


@dataclass
class RansacConfig:
    iterations: int = 50
    inlier_threshold: float = 0.015
    refit: bool = True

    def __post_init__(self):
        if self.iterations < 1 or self.inlier_threshold <= 0:
            raise ValueError("need iterations >= 1 and inlier_threshold > 0")


@dataclass
class PipelineConfig:
    consistency: ConsistencyConfig = field(default_factory=ConsistencyConfig)
    prune: PruneConfig = field(default_factory=PruneConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)
    num_correspondences: int = 1000
    skip_pruning: bool = False


@dataclass
class RegistrationResult:
    """``cluster_assignment`` is per input correspondence, 0 meaning pruned or unassigned."""

    transforms: list
    cluster_assignment: np.ndarray
    timings: dict
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))
    retained: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def to_dict(self, dump_clusters=False):
        d = {
            "transforms": [t.to_dict() for t in self.transforms],
            "assignment": [int(a) for a in self.cluster_assignment],
            "timings_ms": {k: round(v * 1000.0, 3) for k, v in self.timings.items()},
        }
        if dump_clusters:
            d["eigenvalues"] = [float(v) for v in self.eigenvalues]
            d["retained"] = [int(i) for i in self.retained]
        return d


def ransac_fit(corrs, cfg=None, seed=0, return_inliers=False):
    """Max-consensus rigid transform from 3-point samples, optionally refit on the consensus."""
    cfg = cfg or RansacConfig()
    corrs = np.asarray(corrs, dtype=float)
    n = len(corrs)
    if n < 3:
        raise DegenerateConfiguration(f"RANSAC needs at least 3 correspondences, got {n}")
    rng = np.random.default_rng(seed)
    best, best_mask, best_count = None, None, -1
    for _ in range(cfg.iterations):
        sample = rng.choice(n, size=3, replace=False)
        try:
            model = kabsch(corrs[sample])
        except DegenerateConfiguration:
            continue
        mask = residuals(model, corrs) <= cfg.inlier_threshold
        count = int(mask.sum())
        if count > best_count:
            best, best_mask, best_count = model, mask, count
    if best is None:
        raise NoValidModel("every sampled triple was degenerate")
    if cfg.refit and best_count >= 3:
        try:
            best = kabsch(corrs[best_mask])
        except DegenerateConfiguration:
            pass
    return (best, best_mask) if return_inliers else best


def oracle_features(labels):
    """Unit one-hot rows: one dimension per gt instance, plus a private one per outlier."""
    labels = np.asarray(labels)
    n = labels.size
    n_inst = int(labels.max(initial=0))
    outliers = np.flatnonzero(labels == 0)
    f = np.zeros((n, n_inst + outliers.size))
    inl = np.flatnonzero(labels > 0)
    f[inl, labels[inl] - 1] = 1.0
    f[outliers, n_inst + np.arange(outliers.size)] = 1.0
    return f


def downsample_indices(n, target, seed):
    if n <= target:
        return np.arange(n)
    rng = np.random.default_rng(derive_seed(seed, "downsample"))
    return np.sort(rng.choice(n, size=target, replace=False))


def run_pipeline(scene, mode="beta", params=None, cfg=None, seed=0, features=None):
    """Register all instances in ``scene`` (a LabeledScene).

    ``mode`` selects the embedding: "deep" runs the network with ``params``,
    "beta" uses spatial consistency alone, "oracle" uses one-hot ground-truth
    instance labels. Precomputed unit-norm ``features`` may be passed instead.
    """
    cfg = cfg or PipelineConfig()
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    timings = {}
    t0 = time.perf_counter()
    corrs_all = np.asarray(scene.correspondences, dtype=float)
    n_all = len(corrs_all)
    if n_all < 1:
        raise ValueError("scene has no correspondences")
    keep = downsample_indices(n_all, cfg.num_correspondences, seed)
    corrs = corrs_all[keep]
    beta = spatial_consistency(corrs, cfg.consistency.sigma_d)
    timings["consistency"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if features is None:
        if mode == "deep":
            if params is None:
                raise ValueError("deep mode needs network parameters")
            features = featnet.embed(params, corrs, beta)
        elif mode == "oracle":
            if scene.gt_labels is None:
                raise ValueError("oracle mode needs a labeled scene")
            features = oracle_features(scene.gt_labels[keep])
    else:
        features = np.asarray(features, dtype=float)[keep] if len(features) == n_all else features
    sims = similarity_matrices(corrs, features, cfg.consistency, beta=beta)
    timings["features"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if cfg.skip_pruning:
        retained = np.arange(len(corrs))
    else:
        retained = prune(sims.s_hat, cfg.prune.tau_n)
    timings["prune"] = time.perf_counter() - t0

    assignment = np.zeros(n_all, dtype=np.int64)
    transforms = []
    eigenvalues = np.zeros(0)
    t0 = time.perf_counter()
    if retained.size >= 2:
        # the retained graph is the induced subgraph: same pairwise S, same tau_s
        s_hat_n = sims.s_hat[np.ix_(retained, retained)]
        res = spectral_cluster(s_hat_n, cfg.cluster, derive_seed(seed, "kmeans"))
        eigenvalues = res.eigenvalues
    timings["cluster"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if retained.size >= 2:
        for c in range(1, res.m + 1):
            members = retained[res.assignment == c]
            try:
                t = ransac_fit(corrs[members], cfg.ransac, derive_seed(seed, "ransac", c))
            except (NoValidModel, DegenerateConfiguration):
                continue
            transforms.append(t)
            assignment[keep[members]] = len(transforms)
    timings["estimate"] = time.perf_counter() - t0
    return RegistrationResult(transforms, assignment, timings, eigenvalues, keep[retained])
