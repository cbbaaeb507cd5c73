"""Pose errors and instance-level recall / precision / F1."""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptyBenchmark


@dataclass
class SuccessThresholds:
    re_max: float = 15.0
    te_max: float = 0.1

    def __post_init__(self):
        if self.re_max <= 0 or self.te_max <= 0:
            raise ValueError("thresholds must be positive")


@dataclass
class SceneMetrics:
    recall: float
    precision: float
    f1: float
    matches: list = field(default_factory=list)
    n_pred: int = 0
    n_gt: int = 0


@dataclass
class AggregateMetrics:
    mr: float
    mp: float
    mf: float
    per_scene: list
    mean_runtime: float = 0.0


def rotation_error(r_pred, r_gt):
    """Geodesic angle between two rotations, in degrees."""
    r_pred = np.asarray(r_pred, dtype=float)
    r_gt = np.asarray(r_gt, dtype=float)
    c = (np.trace(r_pred.T @ r_gt) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def translation_error(t_pred, t_gt):
    return float(np.linalg.norm(np.asarray(t_pred, dtype=float) - np.asarray(t_gt, dtype=float)))


re = rotation_error
te = translation_error


def f1_score(precision, recall):
    if precision <= 0 or recall <= 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def score_scene(preds, gts, th=None):
    """Match predictions to ground-truth poses one-to-one and score the scene.

    Candidate pairs within both thresholds are taken greedily by ascending
    rotation error. With no predictions precision is 0 (unless there is also
    no ground truth, in which case both recall and precision are 1).
    """
    th = th or SuccessThresholds()
    cands = []
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            r = rotation_error(p.rotation, g.rotation)
            t = translation_error(p.translation, g.translation)
            if r <= th.re_max and t <= th.te_max:
                cands.append((r, t, i, j))
    cands.sort()
    used_p, used_g, matches = set(), set(), []
    for r, t, i, j in cands:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matches.append((i, j, r, t))
    n = len(matches)
    if not gts:
        recall = 1.0
        precision = 0.0 if preds else 1.0
    else:
        recall = n / len(gts)
        precision = n / len(preds) if preds else 0.0
    return SceneMetrics(recall, precision, f1_score(precision, recall), matches, len(preds), len(gts))


def aggregate(scene_metrics, runtimes=None):
    if not scene_metrics:
        raise EmptyBenchmark("no scenes to aggregate")
    mr = float(np.mean([s.recall for s in scene_metrics]))
    mp = float(np.mean([s.precision for s in scene_metrics]))
    mf = float(np.mean([s.f1 for s in scene_metrics]))
    rt = float(np.mean(runtimes)) if runtimes else 0.0
    return AggregateMetrics(mr, mp, mf, list(scene_metrics), rt)
