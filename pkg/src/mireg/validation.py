"""Input checks shared by the estimator classes."""

import numpy as np

from .exceptions import ShapeMismatch
from .geom import LabeledScene


def check_correspondences(X):
    """Coerce a LabeledScene, an ``(N, 6)`` array or an ``(x, y)`` pair to ``(N, 6)`` floats."""
    if isinstance(X, LabeledScene):
        X = X.correspondences
    elif isinstance(X, tuple) and len(X) == 2:
        X = np.concatenate([np.asarray(X[0], dtype=float), np.asarray(X[1], dtype=float)], axis=1)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != 6:
        raise ShapeMismatch(f"expected correspondences of shape (N, 6), got {X.shape}")
    if X.shape[0] < 1:
        raise ValueError("need at least one correspondence")
    if not np.all(np.isfinite(X)):
        raise ValueError("correspondences contain NaN or inf")
    return X


def as_scene(X):
    if isinstance(X, LabeledScene):
        return X
    corrs = check_correspondences(X)
    return LabeledScene(np.zeros((0, 3)), np.zeros((0, 3)), corrs)


def check_binary_adjacency(A):
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ShapeMismatch(f"adjacency must be square, got {A.shape}")
    if not np.all((A == 0) | (A == 1)):
        raise ValueError("adjacency must be binary")
    if not np.array_equal(A, A.T):
        raise ValueError("adjacency must be symmetric")
    A = A.astype(np.int8, copy=True)
    np.fill_diagonal(A, 1)
    return A


def check_labeled(scenes):
    scenes = list(scenes)
    for s in scenes:
        if not isinstance(s, LabeledScene) or s.gt_labels is None:
            raise ValueError("training needs LabeledScene objects with gt_labels")
    if not scenes:
        raise ValueError("no training scenes")
    return scenes
