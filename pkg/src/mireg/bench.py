"""Benchmark, parameter sweeps and the gradient self-check."""

import copy
import csv
import io
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import featnet
from .consistency import spatial_consistency
from .estimate import run_pipeline
from .evaluation import aggregate, score_scene
from .exceptions import EmptyBenchmark, MissingModel
from .scenegen import generate_scene
from .seeding import derive_seed
from .trainer import build_pairs, contrastive_loss

SWEEP_PARAMS = ("tau_s", "tau_n", "ransac_iterations")


@dataclass
class BenchmarkReport:
    metrics: object
    runtimes: list = field(default_factory=list)
    stage_ms: dict = field(default_factory=dict)

    def metrics_dict(self, cfg=None):
        m = self.metrics
        d = {
            "mr": m.mr,
            "mp": m.mp,
            "mf": m.mf,
            "num_scenes": len(m.per_scene),
            "per_scene": [
                {
                    "recall": s.recall,
                    "precision": s.precision,
                    "f1": s.f1,
                    "n_pred": s.n_pred,
                    "n_gt": s.n_gt,
                    "matches": [[int(i), int(j), float(r), float(t)] for i, j, r, t in s.matches],
                }
                for s in m.per_scene
            ],
        }
        if cfg is not None:
            d["config"] = cfg.to_dict()
        return d

    def csv_text(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scene", "n_gt", "n_pred", "recall", "precision", "f1"])
        for k, s in enumerate(self.metrics.per_scene):
            w.writerow([k, s.n_gt, s.n_pred, repr(s.recall), repr(s.precision), repr(s.f1)])
        return buf.getvalue()

    def write(self, out_dir, cfg=None):
        """metrics.json and scenes.csv are deterministic; timing.json is not."""
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
            json.dump(self.metrics_dict(cfg), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(os.path.join(out_dir, "scenes.csv"), "w") as fh:
            fh.write(self.csv_text())
        with open(os.path.join(out_dir, "timing.json"), "w") as fh:
            json.dump({"mean_runtime_s": self.metrics.mean_runtime, "mean_stage_ms": self.stage_ms}, fh, indent=2)


def held_out_scenes(cfg, num_scenes):
    return [generate_scene(cfg.scene_config("test", i)) for i in range(num_scenes)]


def benchmark(cfg, num_scenes=None, params=None, scenes=None, threads=1, out_dir=None):
    """Run the pipeline on held-out generated scenes (or ``scenes``) and score them."""
    if scenes is None:
        if not num_scenes:
            raise EmptyBenchmark("num_scenes must be >= 1")
        scenes = held_out_scenes(cfg, num_scenes)
    if not scenes:
        raise EmptyBenchmark("no scenes to benchmark")
    if cfg.mode == "deep" and params is None:
        raise MissingModel("deep mode needs a trained model")
    pcfg = cfg.pipeline()

    def one(k):
        t0 = time.perf_counter()
        res = run_pipeline(scenes[k], cfg.mode, params, pcfg, derive_seed(cfg.seed, "pipeline", k))
        elapsed = time.perf_counter() - t0
        return score_scene(res.transforms, scenes[k].gt_transforms, cfg.thresholds), elapsed, res.timings

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(len(scenes))))
    else:
        results = [one(k) for k in range(len(scenes))]
    runtimes = [r[1] for r in results]
    stage = {}
    for _, _, t in results:
        for k, v in t.items():
            stage[k] = stage.get(k, 0.0) + v * 1000.0 / len(results)
    report = BenchmarkReport(aggregate([r[0] for r in results], runtimes), runtimes, stage)
    if out_dir is not None:
        report.write(out_dir, cfg)
    return report


def with_parameter(cfg, parameter, value):
    cfg = copy.deepcopy(cfg)
    if parameter == "tau_s":
        cfg.consistency.tau_s = float(value)
    elif parameter == "tau_n":
        cfg.prune.tau_n = int(value)
    elif parameter == "ransac_iterations":
        cfg.ransac.iterations = int(value)
    else:
        raise ValueError(f"parameter must be one of {SWEEP_PARAMS}, got {parameter!r}")
    return cfg


def sweep(cfg, parameter, values, num_scenes=None, params=None, scenes=None, threads=1, out_dir=None):
    """One benchmark per value on a shared scene set; returns ``[(value, AggregateMetrics)]``."""
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    if scenes is None:
        if not num_scenes:
            raise EmptyBenchmark("num_scenes must be >= 1")
        scenes = held_out_scenes(cfg, num_scenes)
    rows = []
    for v in values:
        rep = benchmark(with_parameter(cfg, parameter, v), params=params, scenes=scenes, threads=threads)
        rows.append((v, rep.metrics))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, f"sweep_{parameter}.csv"), "w") as fh:
            fh.write(sweep_csv(parameter, rows))
    return rows


def sweep_csv(parameter, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([parameter, "MR", "MP", "MF"])
    for v, m in rows:
        w.writerow([v, f"{100 * m.mr:.2f}", f"{100 * m.mp:.2f}", f"{100 * m.mf:.2f}"])
    return buf.getvalue()


# fraction of the largest gradient entry below which a tensor counts as structurally zero
ZERO_GRAD_FLOOR = 1e-3


def _rel_err(num, ana, floor=1e-6):
    # tensors whose exact gradient is zero (biases ahead of context norm) are
    # measured against the floor instead of their own rounding noise
    scale = max(np.abs(num).max(), np.abs(ana).max(), floor)
    return float(np.abs(num - ana).max() / scale)


def _fd(fn, x, h):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = fn()
        x[idx] = old - h
        down = fn()
        x[idx] = old
        g[idx] = (up - down) / (2.0 * h)
    return g


def gradcheck(seeds=5, n=8, d=8, blocks=1, h=1e-5, tol=1e-4, perturb=None):
    """Compare analytic gradients against central differences.

    Returns ``(passed, rows)`` with one ``(seed, tensor, max_rel_err)`` row per
    network parameter tensor and one ``(seed, "loss:features", err)`` row for
    the contrastive loss. ``perturb(grads)`` lets tests corrupt the analytic
    gradients on purpose.
    """
    rows = []
    for seed in range(seeds):
        rng = np.random.default_rng(derive_seed(seed, "gradcheck"))
        cfg = featnet.NetConfig(blocks=blocks, feature_dim=d, init_seed=seed)
        params = featnet.init(cfg)
        corrs = rng.normal(size=(n, 6))
        beta = spatial_consistency(corrs, 2.0)
        w = rng.normal(size=(n, d))
        f, tape = featnet.forward(params, corrs, beta)
        grads = featnet.backward(tape, w)
        if perturb is not None:
            perturb(grads)
        floor = ZERO_GRAD_FLOOR * max(np.abs(g).max() for g in grads.values())
        for name in sorted(params):
            num = _fd(lambda: float(np.sum(featnet.embed(params, corrs, beta) * w)), params[name], h)
            rows.append((seed, name, _rel_err(num, grads[name], floor)))

        feats = rng.normal(size=(n, d))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        labels = np.array([1, 1, 1, 2, 2, 2, 0, 0])[:n]
        pairs = build_pairs(feats, labels, seed)
        # margins chosen so both hinges are active for some pairs
        _, g = contrastive_loss(feats, pairs, 0.1, 1.4)
        if perturb is not None:
            perturb({"features": g})
        num = _fd(lambda: contrastive_loss(feats, pairs, 0.1, 1.4)[0], feats, h)
        rows.append((seed, "loss:features", _rel_err(num, g)))
    passed = all(err <= tol for _, _, err in rows)
    return passed, rows


def gradcheck_report(rows, tol=1e-4):
    """Max relative error per tensor across seeds, one line each."""
    worst = {}
    for _, name, err in rows:
        worst[name] = max(worst.get(name, 0.0), err)
    lines = [f"{name:20s} {err:.3e} {'ok' if err <= tol else 'FAIL'}" for name, err in sorted(worst.items())]
    return "\n".join(lines)
