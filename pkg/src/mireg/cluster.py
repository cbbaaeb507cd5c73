"""Spectral clustering of a binary similarity graph with eigengap model selection."""

from dataclasses import dataclass

import numpy as np

from .exceptions import TooFewPoints
from .linalg import kmeans, sym_eig


@dataclass
class ClusterConfig:
    k_max: int = 20
    min_cluster_size: int = 3

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.min_cluster_size < 3:
            raise ValueError("min_cluster_size must be >= 3")


@dataclass
class ClusterResult:
    """``assignment`` holds a cluster id in ``[1, m]`` per node, 0 when unassigned."""

    m: int
    assignment: np.ndarray
    eigenvalues: np.ndarray


def normalized_laplacian(s_hat):
    """``I - D^-1/2 S D^-1/2`` for a binary adjacency with self-loops."""
    s = np.asarray(s_hat, dtype=float)
    deg = s.sum(axis=1)
    if np.any(deg <= 0):
        raise ValueError("every node needs a positive degree (self-loops on the diagonal)")
    dinv = 1.0 / np.sqrt(deg)
    lap = -(dinv[:, None] * s * dinv[None, :])
    lap[np.diag_indices_from(lap)] += 1.0
    return 0.5 * (lap + lap.T)


def select_m(eigenvalues, k_max):
    """Eigengap rule: the k in ``[1, min(k_max, n-1)]`` maximizing ``λ_{k+1} - λ_k``.

    Ties go to the smaller k.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    n = lam.size
    if n < 2:
        raise TooFewPoints("eigengap needs at least two eigenvalues")
    kmax = min(k_max, n - 1)
    gaps = lam[1 : kmax + 1] - lam[:kmax]
    return int(np.argmax(gaps)) + 1


def spectral_cluster(s_hat, cfg=None, seed=0):
    cfg = cfg or ClusterConfig()
    s_hat = np.asarray(s_hat)
    n = s_hat.shape[0]
    if n < 2:
        raise TooFewPoints(f"spectral clustering needs n >= 2, got {n}")
    eig = sym_eig(normalized_laplacian(s_hat))
    m = select_m(eig.eigenvalues, cfg.k_max)

    emb = eig.eigenvectors[:, :m]
    norms = np.linalg.norm(emb, axis=1)
    live = norms > 1e-10
    assignment = np.zeros(n, dtype=np.int64)
    if live.sum() >= m:
        rows = emb[live] / norms[live, None]
        labels = kmeans(rows, m, seed)
        assignment[live] = labels + 1
        if not live.all():
            # zero rows join the nearest centroid only if inside that cluster's radius
            centers = np.stack([rows[labels == c].mean(axis=0) for c in range(m)])
            radius = np.array([
                np.sqrt(np.max(np.sum((rows[labels == c] - centers[c]) ** 2, axis=1)))
                for c in range(m)
            ])
            dist = np.linalg.norm(centers, axis=1)  # distance from the zero row
            c = int(np.argmin(dist))
            if dist[c] <= radius[c]:
                assignment[~live] = c + 1

    sizes = np.bincount(assignment, minlength=m + 1)
    keep = [c for c in range(1, m + 1) if sizes[c] >= cfg.min_cluster_size]
    # relabel surviving clusters by their smallest member index
    keep.sort(key=lambda c: int(np.flatnonzero(assignment == c)[0]))
    remap = np.zeros(m + 1, dtype=np.int64)
    for new, old in enumerate(keep, start=1):
        remap[old] = new
    return ClusterResult(len(keep), remap[assignment], eig.eigenvalues)
