"""Rigid transforms, labeled scenes and closed-form rigid alignment.

A correspondence set is an ``(N, 6)`` float array whose row ``i`` is
``(x_i, y_i)``: a source keypoint followed by its putative target match.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateConfiguration
from .linalg import svd3

ORTHO_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("transform has non-finite entries")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    def is_valid(self, tol=ORTHO_TOL):
        r = self.rotation
        return bool(
            np.abs(r.T @ r - np.eye(3)).max() <= tol and abs(np.linalg.det(r) - 1.0) <= tol
        )

    def apply(self, p):
        """Map a point (3,) or points (..., 3) through ``R p + t``."""
        p = np.asarray(p, dtype=float)
        return p @ self.rotation.T + self.translation

    def compose(self, other):
        """The transform ``self ∘ other`` (``other`` is applied first)."""
        return RigidTransform(
            self.rotation @ other.rotation, self.rotation @ other.translation + self.translation
        )

    def inverse(self):
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def to_dict(self):
        return {"r": [float(v) for v in self.rotation.ravel()], "t": [float(v) for v in self.translation]}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["r"], dtype=float).reshape(3, 3), np.asarray(d["t"], dtype=float))

    def __repr__(self):
        return f"RigidTransform(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def apply(t, p):
    return t.apply(p)


def compose(a, b):
    return a.compose(b)


def inverse(t):
    return t.inverse()


def rotation_about_axis(axis, angle):
    """Rodrigues rotation matrix for ``angle`` radians about ``axis``."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def euler_xyz(ax, ay, az):
    """Rotation ``Rz(az) @ Ry(ay) @ Rx(ax)`` from angles in radians."""
    cx, sx = np.cos(ax), np.sin(ax)
    cy, sy = np.cos(ay), np.sin(ay)
    cz, sz = np.cos(az), np.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def split_pairs(corrs):
    corrs = np.asarray(corrs, dtype=float)
    if corrs.ndim != 2 or corrs.shape[1] != 6:
        raise ValueError(f"correspondences must have shape (N, 6), got {corrs.shape}")
    return corrs[:, :3], corrs[:, 3:]


def kabsch(corrs, rank_tol=1e-9):
    """Least-squares rigid transform mapping sources onto targets.

    Minimizes ``sum ||y_i - R x_i - t||^2`` over rotations R (det +1) and
    translations t. Raises DegenerateConfiguration for fewer than three
    pairs or when the cross-covariance has rank < 2 (collinear input).
    """
    x, y = split_pairs(corrs)
    if x.shape[0] < 3:
        raise DegenerateConfiguration(f"need at least 3 pairs, got {x.shape[0]}")
    cx = x.mean(axis=0)
    cy = y.mean(axis=0)
    h = (x - cx).T @ (y - cy)
    u, s, v = svd3(h)
    if s[0] == 0.0 or s[1] < rank_tol * s[0]:
        raise DegenerateConfiguration("correspondences are collinear or coincident")
    # h = U S V^T, so R = V U^T maximizes tr(R h); flip the weakest axis on reflection
    d = np.linalg.det(v @ u.T)
    if d < 0:
        v = v.copy()
        v[:, 2] = -v[:, 2]
    r = v @ u.T
    return RigidTransform(r, cy - r @ cx)


def residuals(t, corrs):
    x, y = split_pairs(corrs)
    return np.linalg.norm(y - t.apply(x), axis=1)


@dataclass(eq=False)
class LabeledScene:
    """Source and target clouds with putative correspondences.

    ``gt_labels[i]`` is 0 for an outlier and ``m >= 1`` for an inlier of the
    instance whose pose is ``gt_transforms[m - 1]``. Unlabeled input uses
    ``gt_labels=None``.
    """

    source: np.ndarray
    target: np.ndarray
    correspondences: np.ndarray
    gt_labels: np.ndarray | None = None
    gt_transforms: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.source = np.asarray(self.source, dtype=float).reshape(-1, 3)
        self.target = np.asarray(self.target, dtype=float).reshape(-1, 3)
        self.correspondences = np.asarray(self.correspondences, dtype=float).reshape(-1, 6)
        for name in ("source", "target", "correspondences"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite coordinates")
        if self.gt_labels is not None:
            self.gt_labels = np.asarray(self.gt_labels, dtype=np.int64)
            if self.gt_labels.shape != (len(self.correspondences),):
                raise ValueError("gt_labels must have one entry per correspondence")
            if self.gt_labels.size and (
                self.gt_labels.min() < 0 or self.gt_labels.max() > len(self.gt_transforms)
            ):
                raise ValueError("gt label out of range of gt_transforms")

    @property
    def n_instances(self):
        return len(self.gt_transforms)

    def to_dict(self):
        return {
            "source": self.source.tolist(),
            "target": self.target.tolist(),
            "correspondences": [{"x": c[:3].tolist(), "y": c[3:].tolist()} for c in self.correspondences],
            "gt_labels": [] if self.gt_labels is None else self.gt_labels.tolist(),
            "gt_transforms": [t.to_dict() for t in self.gt_transforms],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        corrs = [list(c["x"]) + list(c["y"]) for c in d["correspondences"]]
        labels = d.get("gt_labels")
        transforms = [RigidTransform.from_dict(t) for t in d.get("gt_transforms", [])]
        if not labels and len(corrs):
            labels = None
        return cls(
            source=np.asarray(d["source"], dtype=float),
            target=np.asarray(d["target"], dtype=float),
            correspondences=np.asarray(corrs, dtype=float).reshape(-1, 6),
            gt_labels=labels,
            gt_transforms=transforms,
            meta=dict(d.get("meta", {})),
        )

    def to_json(self):
        return json.dumps(self.to_dict(), separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())
