"""Pairwise compatibility of correspondences.

``beta`` scores length preservation between two correspondences, ``s_f`` is
the cosine similarity of their embeddings, ``s = s_f * beta`` and ``s_hat``
binarizes ``s`` at ``tau_s``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .exceptions import NotNormalized, ShapeMismatch
from .geom import split_pairs


@dataclass
class ConsistencyConfig:
    sigma_d: float = 0.05
    tau_s: float = 0.85

    def __post_init__(self):
        if self.sigma_d <= 0:
            raise ValueError("sigma_d must be positive")
        if not 0.0 < self.tau_s < 1.0:
            raise ValueError("tau_s must lie in (0, 1)")


@dataclass
class SimilarityMatrices:
    beta: np.ndarray
    s_f: np.ndarray
    s: np.ndarray
    s_hat: np.ndarray


def spatial_consistency(corrs, sigma_d):
    """``beta_ij = max(0, 1 - d_ij**2 / sigma_d**2)`` with d the length distortion."""
    if sigma_d <= 0:
        raise ValueError("sigma_d must be positive")
    x, y = split_pairs(corrs)
    # condensed distances keep beta exactly symmetric with a unit diagonal
    d = pdist(x) - pdist(y)
    beta = squareform(np.maximum(0.0, 1.0 - (d * d) / (sigma_d * sigma_d)))
    np.fill_diagonal(beta, 1.0)
    return beta


def feature_similarity(features, tol=1e-4):
    f = np.asarray(features, dtype=float)
    if f.ndim != 2:
        raise ShapeMismatch(f"features must be 2-D, got shape {f.shape}")
    norms = np.linalg.norm(f, axis=1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise NotNormalized(f"feature rows must be unit norm (worst {np.abs(norms - 1.0).max():.3g})")
    s_f = f @ f.T
    s_f = np.clip(0.5 * (s_f + s_f.T), -1.0, 1.0)
    np.fill_diagonal(s_f, 1.0)
    return s_f


def binarize(s, tau_s):
    s_hat = (s >= tau_s).astype(np.int8)
    np.fill_diagonal(s_hat, 1)
    return s_hat


def fuse_and_binarize(beta, s_f, tau_s):
    """Return ``(s, s_hat)``; the comparison is inclusive and the diagonal is 1."""
    beta = np.asarray(beta, dtype=float)
    s_f = np.asarray(s_f, dtype=float)
    if beta.shape != s_f.shape or beta.ndim != 2 or beta.shape[0] != beta.shape[1]:
        raise ShapeMismatch(f"beta {beta.shape} and s_f {s_f.shape} must be equal square shapes")
    s = s_f * beta
    return s, binarize(s, tau_s)


def similarity_matrices(corrs, features, cfg, beta=None):
    """All four matrices for one correspondence set.

    ``features=None`` selects the spatial-only variant where ``s_f`` is all
    ones and ``s`` equals ``beta``.
    """
    if beta is None:
        beta = spatial_consistency(corrs, cfg.sigma_d)
    if features is None:
        s_f = np.ones_like(beta)
    else:
        s_f = feature_similarity(features)
    s, s_hat = fuse_and_binarize(beta, s_f, cfg.tau_s)
    return SimilarityMatrices(beta, s_f, s, s_hat)


def dump_csv(matrix, path):
    np.savetxt(path, np.asarray(matrix), delimiter=",", fmt="%.17g")
