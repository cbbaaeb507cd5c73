"""Contrastive training of the correspondence embedding.

Every labeled inlier is an anchor. Each anchor gets one random positive (a
different inlier of its instance) and one negative: by default the hardest
one, i.e. the closest correspondence in feature space that does not belong
to the anchor's instance (outliers included). The loss is

    mean_P [D - m_p]_+^2 + mean_N [m_n - D]_+^2

with D the Euclidean feature distance.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import featnet
from .consistency import spatial_consistency
from .exceptions import NoPositiveAvailable
from .seeding import derive_seed

log = logging.getLogger(__name__)


@dataclass
class LossConfig:
    m_p: float = 0.1
    m_n: float = 1.4
    lr: float = 0.01
    iterations: int = 2000
    batch_scenes: int = 4
    random_negatives: bool = False

    def __post_init__(self):
        if not 0.0 <= self.m_p < self.m_n:
            raise ValueError("need 0 <= m_p < m_n")
        if self.iterations < 0 or self.batch_scenes < 1 or self.lr <= 0:
            raise ValueError("need iterations >= 0, batch_scenes >= 1, lr > 0")


@dataclass
class PairSets:
    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        self.positives = np.asarray(self.positives, dtype=np.int64).reshape(-1, 2)
        self.negatives = np.asarray(self.negatives, dtype=np.int64).reshape(-1, 2)


def squared_distances(f):
    sq = np.sum(f * f, axis=1)
    return np.maximum(sq[:, None] + sq[None, :] - 2.0 * f @ f.T, 0.0)


def build_pairs(features, labels, seed, hardest=True):
    """One positive and one negative pair per anchor inlier.

    Anchors whose instance has no other inlier are skipped; if that leaves no
    anchor at all, NoPositiveAvailable is raised.
    """
    f = np.asarray(features, dtype=float)
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    counts = np.bincount(labels, minlength=1)
    anchors = np.flatnonzero((labels >= 1) & (counts[labels] >= 2))
    if anchors.size == 0:
        raise NoPositiveAvailable("no instance has two or more inliers")
    pos = np.empty(anchors.size, dtype=np.int64)
    for k, i in enumerate(anchors):
        mates = np.flatnonzero(labels == labels[i])
        mates = mates[mates != i]
        pos[k] = mates[rng.integers(mates.size)]
    foreign = labels[anchors][:, None] != labels[None, :]
    if not np.all(foreign.any(axis=1)):
        raise ValueError("an anchor has no negative candidate")
    if hardest:
        fa = f[anchors]
        d = np.sum(fa * fa, axis=1)[:, None] + np.sum(f * f, axis=1)[None, :] - 2.0 * fa @ f.T
        d = np.where(foreign, d, np.inf)
        neg = np.argmin(d, axis=1)
    else:
        neg = np.empty(anchors.size, dtype=np.int64)
        for k in range(anchors.size):
            cand = np.flatnonzero(foreign[k])
            neg[k] = cand[rng.integers(cand.size)]
    return PairSets(np.stack([anchors, pos], axis=1), np.stack([anchors, neg], axis=1))


def contrastive_loss(features, pairs, m_p=0.1, m_n=1.4):
    """Return ``(loss, dloss/dfeatures)``.

    The clamp has zero gradient at exactly the margin, and a negative pair at
    distance zero contributes to the loss but not to the gradient.
    """
    f = np.asarray(features, dtype=float)
    grad = np.zeros_like(f)
    loss = 0.0
    for idx, sign, margin in ((pairs.positives, 1.0, m_p), (pairs.negatives, -1.0, m_n)):
        if idx.size == 0:
            continue
        i, j = idx[:, 0], idx[:, 1]
        diff = f[i] - f[j]
        dist = np.linalg.norm(diff, axis=1)
        hinge = np.maximum(sign * (dist - margin), 0.0)
        loss += float(np.mean(hinge * hinge))
        safe = np.where(dist > 0, dist, 1.0)
        coef = np.where(dist > 0, sign * 2.0 * hinge / (idx.shape[0] * safe), 0.0)
        g = coef[:, None] * diff
        np.add.at(grad, i, g)
        np.add.at(grad, j, -g)
    return loss, grad


def pair_similarity(features, pairs):
    """Mean cosine similarity within positive and within negative pairs."""
    f = np.asarray(features, dtype=float)

    def mean_sim(idx):
        if idx.size == 0:
            return float("nan")
        return float(np.mean(np.sum(f[idx[:, 0]] * f[idx[:, 1]], axis=1)))

    return mean_sim(pairs.positives), mean_sim(pairs.negatives)


class Adam:
    def __init__(self, params, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k in sorted(params):
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def scene_loss(params, scene, cfg, seed, sigma_d, dtype=np.float32, hardest=None):
    """Loss, parameter gradients and pair similarities for one labeled scene."""
    if hardest is None:
        hardest = not cfg.random_negatives
    beta = spatial_consistency(scene.correspondences, sigma_d)
    f, tape = featnet.forward(params, scene.correspondences, beta, dtype=dtype)
    pairs = build_pairs(f, scene.gt_labels, seed, hardest=hardest)
    loss, g = contrastive_loss(f, pairs, cfg.m_p, cfg.m_n)
    grads = featnet.backward(tape, g)
    return loss, grads, pair_similarity(f, pairs)


@dataclass
class TrainResult:
    params: dict
    log: list = field(default_factory=list)


def train(cfg, net_cfg, scene_source, seed, sigma_d=0.05, dtype=np.float32, callback=None):
    """Train from scratch with Adam.

    ``scene_source(i)`` returns the i-th labeled training scene; iteration t
    consumes scenes ``t*batch_scenes ... (t+1)*batch_scenes - 1``. Scene
    gradients are summed in scene order, so runs are bitwise reproducible.
    """
    params = featnet.init(net_cfg)
    opt = Adam(params, cfg.lr)
    history = []
    for it in range(cfg.iterations):
        t0 = time.perf_counter()
        total = {k: np.zeros_like(v) for k, v in params.items()}
        losses, pos_sims, neg_sims = [], [], []
        for b in range(cfg.batch_scenes):
            index = it * cfg.batch_scenes + b
            scene = scene_source(index)
            loss, grads, (ps, ns) = scene_loss(
                params, scene, cfg, derive_seed(seed, "pairs", index), sigma_d, dtype
            )
            for k in total:
                total[k] += grads[k]
            losses.append(loss)
            pos_sims.append(ps)
            neg_sims.append(ns)
        for k in total:
            total[k] /= cfg.batch_scenes
        opt.step(params, total)
        rec = {
            "iter": it,
            "loss": float(np.mean(losses)),
            "pos_sim_mean": float(np.mean(pos_sims)),
            "hardneg_sim_mean": float(np.mean(neg_sims)),
        }
        history.append(rec)
        if callback is not None:
            callback(rec)
        if it % 100 == 0:
            log.info("iter %d loss %.4f (%.2fs)", it, rec["loss"], time.perf_counter() - t0)
    return TrainResult(params, history)


def similarity_gap(params, scenes, sigma_d=0.05, seed=0):
    """Mean positive and hardest-negative cosine similarity over labeled scenes."""
    pos, neg = [], []
    for k, scene in enumerate(scenes):
        beta = spatial_consistency(scene.correspondences, sigma_d)
        f = featnet.embed(params, scene.correspondences, beta)
        pairs = build_pairs(f, scene.gt_labels, derive_seed(seed, "gap", k), hardest=True)
        ps, ns = pair_similarity(f, pairs)
        pos.append(ps)
        neg.append(ns)
    return float(np.mean(pos)), float(np.mean(neg))
