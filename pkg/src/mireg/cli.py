"""Command line entry point: ``mireg <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 verification failure.
"""

import argparse
import csv
import glob
import json
import logging
import os
import sys

import numpy as np

from . import bench, featnet
from .config import ConfigError, load_config
from .estimate import MODES, run_pipeline
from .evaluation import SuccessThresholds, aggregate, score_scene
from .exceptions import MiregError, MissingModel
from .geom import LabeledScene, RigidTransform
from .scenegen import GenConfig, generate_scene, scene_config
from .trainer import train

log = logging.getLogger("mireg")

EXIT_OK, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2


def _load_model(path):
    if not path:
        raise MissingModel("deep mode needs --model")
    if not os.path.exists(path):
        raise MissingModel(f"model checkpoint {path} not found")
    return featnet.load_checkpoint(path)[0]


def cmd_generate(args):
    cfg = GenConfig(
        seed=args.seed,
        instances_min=args.instances_min,
        instances_max=args.instances_max,
        inlier_ratio_per_instance=args.inlier_ratio,
        noise_points=args.noise_points,
        num_correspondences=args.n_corr,
        hard_outlier_fraction=args.hard_outlier_fraction,
        partial=args.partial,
    )
    cfg.check_feasible()
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.num_scenes):
        generate_scene(scene_config(cfg, i)).save(os.path.join(args.out, f"scene_{i:05d}.json"))
    manifest = {"config": cfg.__dict__, "num_scenes": args.num_scenes, "seed_derivation": "splitmix64(seed, 'gen', index)"}
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return EXIT_OK


def cmd_train(args):
    cfg = load_config(args.config, args.seed)
    if args.random_negatives:
        cfg.loss.random_negatives = True
    if args.iterations is not None:
        cfg.loss.iterations = args.iterations
    log_path = args.log or args.out + ".log.jsonl"
    with open(log_path, "w") as logfh:
        def record(rec):
            logfh.write(json.dumps(rec, sort_keys=True) + "\n")

        result = train(cfg.loss, cfg.net, lambda i: generate_scene(cfg.scene_config("train", i)),
                       cfg.seed, cfg.consistency.sigma_d, callback=record)
    featnet.save_checkpoint(args.out, result.params, cfg.net, cfg.seed)
    return EXIT_OK


def cmd_infer(args):
    scene = LabeledScene.load(args.scene)
    params = _load_model(args.model) if args.mode == "deep" else None
    cfg = load_config(args.config, args.seed)
    res = run_pipeline(scene, args.mode, params, cfg.pipeline(), cfg.seed)
    with open(args.out, "w") as fh:
        json.dump(res.to_dict(dump_clusters=args.dump_clusters), fh, indent=2)
    return EXIT_OK


def cmd_eval(args):
    th = SuccessThresholds(args.re_max, args.te_max)
    scene_files = sorted(glob.glob(os.path.join(args.scene_dir, "scene_*.json")))
    metrics, names = [], []
    for path in scene_files:
        name = os.path.basename(path)
        pred_path = os.path.join(args.pred_dir, name)
        if not os.path.exists(pred_path):
            log.warning("no prediction for %s; scored as empty", name)
            preds = []
        else:
            with open(pred_path) as fh:
                preds = [RigidTransform.from_dict(t) for t in json.load(fh)["transforms"]]
        scene = LabeledScene.load(path)
        metrics.append(score_scene(preds, scene.gt_transforms, th))
        names.append(name)
    agg = aggregate(metrics)
    doc = {
        "mr": agg.mr, "mp": agg.mp, "mf": agg.mf,
        "per_scene": [{"scene": n, "recall": m.recall, "precision": m.precision, "f1": m.f1}
                      for n, m in zip(names, metrics)],
        "config": {"re_max": th.re_max, "te_max": th.te_max},
    }
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scene", "recall", "precision", "f1"])
            for n, m in zip(names, metrics):
                w.writerow([n, m.recall, m.precision, m.f1])
    return EXIT_OK


def _bench_setup(args):
    cfg = load_config(args.config, args.seed)
    if args.mode:
        cfg.mode = args.mode
    params = _load_model(args.model) if cfg.mode == "deep" else None
    return cfg, params


def cmd_benchmark(args):
    cfg, params = _bench_setup(args)
    rep = bench.benchmark(cfg, args.num_scenes, params, threads=args.threads, out_dir=args.out)
    m = rep.metrics
    print(f"MR {100 * m.mr:.2f}  MP {100 * m.mp:.2f}  MF {100 * m.mf:.2f}  ({len(m.per_scene)} scenes)")
    return EXIT_OK


def cmd_sweep(args):
    cfg, params = _bench_setup(args)
    cast = int if args.param in ("tau_n", "ransac_iterations") else float
    values = [cast(v) for v in args.values.split(",") if v.strip()]
    rows = bench.sweep(cfg, args.param, values, args.num_scenes, params, threads=args.threads, out_dir=args.out)
    sys.stdout.write(bench.sweep_csv(args.param, rows))
    return EXIT_OK


def cmd_gradcheck(args):
    passed, rows = bench.gradcheck(seeds=args.seeds)
    print(bench.gradcheck_report(rows))
    print("PASS" if passed else "FAIL")
    return EXIT_OK if passed else EXIT_VERIFY


def build_parser():
    p = argparse.ArgumentParser(prog="mireg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write synthetic scenes")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--num-scenes", type=int, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--instances-min", type=int, default=5)
    g.add_argument("--instances-max", type=int, default=10)
    g.add_argument("--inlier-ratio", type=float, default=0.02)
    g.add_argument("--noise-points", type=int, default=512)
    g.add_argument("--n-corr", type=int, default=1000)
    g.add_argument("--hard-outlier-fraction", type=float, default=0.0)
    g.add_argument("--partial", action="store_true")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train the correspondence embedding")
    t.add_argument("--config")
    t.add_argument("--out", required=True)
    t.add_argument("--random-negatives", action="store_true")
    t.add_argument("--seed", type=int)
    t.add_argument("--iterations", type=int)
    t.add_argument("--log", help="training log path (default: OUT.log.jsonl)")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="register one scene file")
    i.add_argument("--scene", required=True)
    i.add_argument("--mode", choices=MODES, required=True)
    i.add_argument("--model")
    i.add_argument("--out", required=True)
    i.add_argument("--dump-clusters", action="store_true")
    i.add_argument("--config")
    i.add_argument("--seed", type=int)
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="score prediction files against scene files")
    e.add_argument("--pred-dir", required=True)
    e.add_argument("--scene-dir", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--re-max", type=float, default=15.0)
    e.add_argument("--te-max", type=float, default=0.1)
    e.add_argument("--csv")
    e.set_defaults(func=cmd_eval)

    for name, func in (("benchmark", cmd_benchmark), ("sweep", cmd_sweep)):
        b = sub.add_parser(name)
        b.add_argument("--config")
        b.add_argument("--num-scenes", type=int, required=True)
        b.add_argument("--out", required=True)
        b.add_argument("--model")
        b.add_argument("--mode", choices=MODES)
        b.add_argument("--seed", type=int)
        b.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        if name == "sweep":
            b.add_argument("--param", choices=bench.SWEEP_PARAMS, required=True)
            b.add_argument("--values", required=True, help="comma separated")
        b.set_defaults(func=func)

    gc = sub.add_parser("gradcheck", help="finite-difference check of all hand-written gradients")
    gc.add_argument("--seeds", type=int, default=5)
    gc.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except (ConfigError, MiregError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
