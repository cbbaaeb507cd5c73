"""Seeded synthetic multi-instance scenes with putative correspondences.

The source is a procedural shape (2-4 boxes, spheres and planes, scaled to
unit diameter). The target holds M rigidly moved copies plus uniform noise.
Each instance contributes ``round(N * inlier_ratio)`` true correspondences;
the rest of the N correspondences are outliers.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .exceptions import InfeasibleConfig
from .geom import LabeledScene, RigidTransform, euler_xyz
from .seeding import derive_seed

PRIMITIVES = ("box", "sphere", "plane")
# near-miss outliers pair a target point with one of this many source neighbors
HARD_NEIGHBORS = 8


@dataclass
class GenConfig:
    seed: int = 0
    source_points: int = 256
    instances_min: int = 5
    instances_max: int = 10
    rotation_range_deg: float = 180.0
    translation_range: float = 5.0
    noise_points: int = 512
    inlier_ratio_per_instance: float = 0.02
    inlier_jitter_sigma: float = 0.002
    num_correspondences: int = 1000
    hard_outlier_fraction: float = 0.0
    partial: bool = False
    allow_sphere_only: bool = False

    def __post_init__(self):
        if not 0.0 < self.inlier_ratio_per_instance <= 1.0:
            raise ValueError("inlier_ratio_per_instance must lie in (0, 1]")
        if not 1 <= self.instances_min <= self.instances_max:
            raise ValueError("need 1 <= instances_min <= instances_max")
        for name in ("source_points", "noise_points", "num_correspondences"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.inlier_jitter_sigma < 0:
            raise ValueError("inlier_jitter_sigma must be >= 0")
        if not 0.0 <= self.hard_outlier_fraction <= 1.0:
            raise ValueError("hard_outlier_fraction must lie in [0, 1]")

    @property
    def inliers_per_instance(self):
        return int(math.floor(self.num_correspondences * self.inlier_ratio_per_instance + 0.5))

    def check_feasible(self):
        total = self.instances_max * self.inliers_per_instance
        if total > self.num_correspondences:
            raise InfeasibleConfig(
                f"{self.instances_max} instances x {self.inliers_per_instance} inliers "
                f"exceeds {self.num_correspondences} correspondences"
            )


def _random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def _sample_box(rng, n, size):
    half = size / 2.0
    areas = np.array([size[1] * size[2], size[0] * size[2], size[0] * size[1]] * 2)
    faces = rng.choice(6, size=n, p=areas / areas.sum())
    pts = rng.uniform(-half, half, size=(n, 3))
    axis = faces % 3
    sign = np.where(faces < 3, 1.0, -1.0)
    pts[np.arange(n), axis] = sign * half[axis]
    return pts


def _sample_sphere(rng, n, radius):
    d = rng.normal(size=(n, 3))
    return radius * d / np.linalg.norm(d, axis=1, keepdims=True)


def _sample_plane(rng, n, size):
    pts = np.zeros((n, 3))
    pts[:, 0] = rng.uniform(-size[0] / 2, size[0] / 2, n)
    pts[:, 1] = rng.uniform(-size[1] / 2, size[1] / 2, n)
    return pts


def procedural_source(rng, n_points, allow_sphere_only=False):
    """Points on 2-4 random primitive surfaces, centered and scaled to unit diameter."""
    n_prims = int(rng.integers(2, 5))
    while True:
        kinds = [PRIMITIVES[i] for i in rng.integers(0, 3, size=n_prims)]
        if allow_sphere_only or any(k != "sphere" for k in kinds):
            break
    counts = np.full(n_prims, n_points // n_prims)
    counts[: n_points % n_prims] += 1
    parts = []
    for kind, cnt in zip(kinds, counts):
        if kind == "box":
            p = _sample_box(rng, cnt, rng.uniform(0.15, 0.6, size=3))
        elif kind == "sphere":
            p = _sample_sphere(rng, cnt, rng.uniform(0.1, 0.3))
        else:
            p = _sample_plane(rng, cnt, rng.uniform(0.2, 0.7, size=2))
        parts.append(p @ _random_rotation(rng).T + rng.uniform(-0.5, 0.5, size=3))
    pts = np.concatenate(parts)
    pts -= (pts.min(axis=0) + pts.max(axis=0)) / 2.0
    return pts / pdist(pts).max()


def _jitter(rng, n, sigma, bound):
    # gaussian jitter, rejection-sampled to norm <= bound
    out = np.zeros((n, 3))
    if sigma <= 0:
        return out
    todo = np.arange(n)
    while todo.size:
        draw = rng.normal(scale=sigma, size=(todo.size, 3))
        ok = np.linalg.norm(draw, axis=1) <= bound
        out[todo[ok]] = draw[ok]
        todo = todo[~ok]
    return out


def _in_ball(rng, n, radius):
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * radius * rng.uniform(size=(n, 1)) ** (1.0 / 3.0)


def _nearest_neighbors(pts, k):
    d = squareform(pdist(pts))
    np.fill_diagonal(d, np.inf)
    k = min(k, len(pts) - 1)
    return np.argsort(d, axis=1, kind="stable")[:, :k]


def generate_scene(cfg):
    """Build one LabeledScene, fully determined by ``cfg``."""
    cfg.check_feasible()
    rng = np.random.default_rng(derive_seed(cfg.seed, "scene"))
    src = procedural_source(rng, cfg.source_points, cfg.allow_sphere_only)
    m = int(rng.integers(cfg.instances_min, cfg.instances_max + 1))
    max_angle = math.radians(cfg.rotation_range_deg)

    transforms = []
    visible = []
    target_parts = []
    for _ in range(m):
        angles = rng.uniform(0.0, max_angle, size=3)
        t = RigidTransform(euler_xyz(*angles), rng.uniform(0.0, cfg.translation_range, size=3))
        transforms.append(t)
        keep = np.arange(len(src))
        if cfg.partial:
            normal = rng.normal(size=3)
            keep = np.flatnonzero(src @ normal >= np.median(src @ normal))
        visible.append(keep)
        target_parts.append(t.apply(src[keep]))
    inst_pts = np.concatenate(target_parts)
    lo, hi = inst_pts.min(axis=0), inst_pts.max(axis=0)
    noise = rng.uniform(lo, hi, size=(cfg.noise_points, 3))
    target = np.concatenate([inst_pts, noise])

    sigma = cfg.inlier_jitter_sigma
    k = cfg.inliers_per_instance
    xs, ys, labels = [], [], []
    for idx, (t, keep) in enumerate(zip(transforms, visible), start=1):
        pick = rng.choice(keep, size=k, replace=k > len(keep))
        x = src[pick]
        xs.append(x)
        ys.append(t.apply(x) + _jitter(rng, k, sigma, 4.0 * sigma))
        labels.append(np.full(k, idx))

    n_out = cfg.num_correspondences - m * k
    n_hard = int(math.floor(n_out * cfg.hard_outlier_fraction + 0.5))
    if n_out:
        xi = rng.integers(len(src), size=n_out)
        y_out = rng.uniform(lo, hi, size=(n_out, 3))
        if n_hard:
            # near-miss mismatches: y lies on an instance surface at the image of
            # source point s, x is one of the nearest other source points to s
            inst = rng.integers(m, size=n_hard)
            anchor = rng.integers(len(src), size=n_hard)
            nbrs = _nearest_neighbors(src, HARD_NEIGHBORS)
            xi[:n_hard] = nbrs[anchor, rng.integers(nbrs.shape[1], size=n_hard)]
            near = np.stack([transforms[j].apply(src[a]) for j, a in zip(inst, anchor)])
            y_out[:n_hard] = near + _in_ball(rng, n_hard, 2.0 * sigma)
        xs.append(src[xi])
        ys.append(y_out)
        labels.append(np.zeros(n_out, dtype=np.int64))

    corrs = np.concatenate([np.concatenate(xs), np.concatenate(ys)], axis=1)
    labels = np.concatenate(labels).astype(np.int64)
    perm = rng.permutation(len(corrs))
    meta = {
        "seed": cfg.seed,
        "noise_sigma": sigma,
        "inlier_ratio": cfg.inlier_ratio_per_instance,
        "jitter_bound": 4.0 * sigma,
        "config": asdict(cfg),
    }
    return LabeledScene(src, target, corrs[perm], labels[perm], transforms, meta)


def scene_config(base, index):
    """Config of scene ``index`` in a batch rooted at ``base.seed``."""
    d = asdict(base)
    d["seed"] = derive_seed(base.seed, "gen", index)
    return GenConfig(**d)


def generate_batch(base, count, start=0):
    return [generate_scene(scene_config(base, i)) for i in range(start, start + count)]


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    @property
    def mode(self):
        if not self.counts.size:
            return None
        i = int(np.argmax(self.counts))
        return 0.5 * (self.edges[i] + self.edges[i + 1])


def inlier_ratio_histogram(scenes, bin_width=0.005):
    """Histogram of per-instance inlier fractions (inlier count / N) over scenes."""
    ratios = []
    for s in scenes:
        n = len(s.correspondences)
        counts = np.bincount(s.gt_labels, minlength=s.n_instances + 1)[1:]
        ratios.extend(counts / n)
    if not ratios:
        return Histogram(np.zeros(0), np.zeros(0, dtype=np.int64))
    nbins = int(round(1.0 / bin_width))
    edges = np.linspace(0.0, 1.0, nbins + 1)
    counts, _ = np.histogram(ratios, bins=edges)
    return Histogram(edges, counts)
