"""Command line entry point: ``admil {gen,verify,train,al,replay}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Every command records a run manifest (resolved configuration, seed, output
paths, library versions and the argv needed to replay it).
"""

import argparse
import csv
import json
import os
import platform
import sys
from dataclasses import asdict, replace

import numpy as np
import sklearn

from . import __version__, network
from .active import (ALConfig, TrainConfig, mean_curves, run_al, train_passive, write_curve,
                     write_query_log, write_training_log)
from .datasets import DatasetFormatError, SynthConfig, generate, read_dataset, write_dataset
from .dro import DroConfig
from .losses import BAG_LOSSES
from .sampling import DEFAULT_TH_H, STRATEGIES, SamplerConfig
from .validation import ConfigError


class UsageError(Exception):
    pass


def _versions():
    return {"admil": __version__, "numpy": np.__version__, "scikit-learn": sklearn.__version__,
            "python": platform.python_version()}


def _manifest(command, argv, config, seed, artifacts):
    return {"command": command, "argv": list(argv), "seed": seed, "config": config,
            "artifacts": artifacts, "versions": _versions()}


def _write_json(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# -- gen ---------------------------------------------------------------------

_SYNTH_FLAGS = {
    "dim": "feature_dim", "pos_bags": "n_pos_bags", "neg_bags": "n_neg_bags",
    "test_pos_bags": "n_test_pos_bags", "test_neg_bags": "n_test_neg_bags",
    "bag_size": "bag_size", "bag_size_max": "bag_size_max",
    "positives_min": "positives_min", "positives_max": "positives_max",
    "modes": "n_positive_modes", "neg_modes": "n_negative_modes",
    "outlier_rate": "outlier_rate", "separation": "cluster_separation",
}


def cmd_gen(args, argv):
    base = SynthConfig.from_json(args.config) if args.config else SynthConfig()
    overrides = {field: getattr(args, flag) for flag, field in _SYNTH_FLAGS.items()
                 if getattr(args, flag) is not None}
    if args.seed is not None:
        overrides["seed"] = args.seed
    config = replace(base, **overrides)
    dataset = generate(config)
    write_dataset(dataset, args.out)
    manifest_path = args.out + ".manifest.json"
    _write_json(_manifest("gen", argv, config.to_dict(), config.seed,
                          {"dataset": args.out, "manifest": manifest_path}), manifest_path)
    print(f"wrote {args.out}: {len(dataset.train_pos)}+{len(dataset.train_neg)} train bags, "
          f"{len(dataset.test_pos)}+{len(dataset.test_neg)} test bags")
    return 0


# -- verify ------------------------------------------------------------------

def cmd_verify(args, argv):
    from .verify import run_all

    lam = 0.01 if args.lam is None else args.lam
    trials = 10_000 if args.trials is None else args.trials
    seed = 0 if args.seed is None else args.seed
    if lam < 0:
        raise ConfigError("lambda", "must be nonnegative")
    if trials < 100:
        raise ConfigError("trials", "must be at least 100")
    report = run_all(lam=lam, trials=trials, seed=seed, inject_fault=args.inject_fault)
    config = {"lambda": lam, "trials": trials, "inject_fault": args.inject_fault}
    report["manifest"] = _manifest("verify", argv, config, seed,
                                   {"report": args.out} if args.out else {})
    text = json.dumps(report, indent=2, sort_keys=True, default=_json_default)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return 0 if report["passed"] else 1


# -- shared config for train / al ---------------------------------------------

def _al_config(args, strategy="pf", seed=0):
    sampler = SamplerConfig(th_pf=args.th_pf, th_h=args.th_h, bsize=args.bsize, k=args.k)
    train = TrainConfig(learning_rate=args.lr, dropout_rate=args.dropout, seed=seed,
                        epochs_initial=args.epochs_init, epochs_per_step=args.epochs_step,
                        batch_pairs=args.batch_pairs, dropout_mask=args.dropout_mask)
    return ALConfig(strategy=strategy, steps=args.steps, sampler=sampler,
                    dro=DroConfig(lam=args.lam, divergence=args.divergence), train=train,
                    beta=args.beta, seed=seed, loss=args.loss,
                    pooled_map=args.map == "pooled")


def _load(path):
    if not path:
        raise UsageError("--data is required")
    if not os.path.exists(path):
        raise UsageError(f"no such dataset file: {path}")
    return read_dataset(path)


def _out_dir(path):
    if not path:
        raise UsageError("--out is required")
    os.makedirs(path, exist_ok=True)
    return path


def cmd_train(args, argv):
    dataset = _load(args.data)
    out = _out_dir(args.out)
    config = _al_config(args, seed=args.seed)
    est = train_passive(dataset, config)
    ckpt = os.path.join(out, "scorer.json")
    log = os.path.join(out, "training.csv")
    network.save_checkpoint(est.params_, ckpt, seed=args.seed)
    write_training_log(est, log)
    manifest_path = os.path.join(out, "manifest.json")
    _write_json(_manifest("train", argv, asdict(config), args.seed,
                          {"dataset": args.data, "checkpoint": ckpt, "training_log": log,
                           "manifest": manifest_path}), manifest_path)
    return 0


def cmd_al(args, argv):
    dataset = _load(args.data)
    out = _out_dir(args.out)
    strategies = STRATEGIES if args.strategy == "all" else (args.strategy,)
    seeds = [args.seed + r for r in range(args.repeats)]
    artifacts = {"dataset": args.data}
    merged = []
    for strategy in strategies:
        curves = []
        for seed in seeds:
            config = _al_config(args, strategy, seed)
            curve = run_al(dataset, config)
            curves.append(curve)
            stem = os.path.join(out, f"{strategy}_seed{seed}")
            paths = {"curve": stem + "_curve.csv", "queries": stem + "_queries.csv",
                     "training_log": stem + "_training.csv", "checkpoint": stem + "_scorer.json"}
            write_curve(curve, paths["curve"])
            write_query_log(curve, paths["queries"])
            write_training_log(curve.estimator, paths["training_log"])
            network.save_checkpoint(curve.estimator.params_, paths["checkpoint"], seed=seed)
            artifacts[f"{strategy}_seed{seed}"] = paths
            print(f"{strategy} seed {seed}: final test mAP {curve.final_test_map:.4f}")
        merged += [(strategy, r) for r in mean_curves(curves)]
    if args.strategy == "all":
        path = os.path.join(out, "comparison.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["strategy", "step", "cumulative_queries", "train_map", "test_map"])
            for strategy, r in merged:
                w.writerow([strategy, r.step, r.cumulative_queries,
                            f"{r.train_map:.7g}", f"{r.test_map:.7g}"])
        artifacts["comparison"] = path
    manifest_path = os.path.join(out, "manifest.json")
    artifacts["manifest"] = manifest_path
    config = asdict(_al_config(args, strategies[0], args.seed))
    config.update(strategy=args.strategy, seeds=seeds)
    _write_json(_manifest("al", argv, config, args.seed, artifacts), manifest_path)
    return 0


def cmd_replay(args, argv):
    with open(args.manifest) as fh:
        doc = json.load(fh)
    if "argv" not in doc:
        raise UsageError(f"{args.manifest} is not a run manifest")
    return main(doc["argv"])


# -- parser ------------------------------------------------------------------

def _add_training_flags(p):
    p.add_argument("--data", help="dataset CSV")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--bsize", type=int, default=10)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--lambda", dest="lam", type=float, default=0.01)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--divergence", choices=("chi2", "kl"), default="chi2")
    p.add_argument("--th-pf", type=float, default=0.3)
    p.add_argument("--th-h", type=float, default=DEFAULT_TH_H,
                   help="entropy threshold in nats (default: entropy of 0.1)")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--dropout", type=float, default=0.6)
    p.add_argument("--dropout-mask", choices=("instance", "shared"), default="instance")
    p.add_argument("--batch-pairs", type=int, default=1)
    p.add_argument("--epochs-init", type=int, default=100)
    p.add_argument("--epochs-step", type=int, default=20)
    p.add_argument("--loss", choices=BAG_LOSSES, default="drbl")
    p.add_argument("--map", choices=("pooled", "per-bag"), default="pooled")


def build_parser():
    parser = argparse.ArgumentParser(prog="admil", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic dataset CSV")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--config", help="SynthConfig JSON file; flags override it")
    for flag in _SYNTH_FLAGS:
        kind = float if flag in ("outlier_rate", "separation") else int
        g.add_argument("--" + flag.replace("_", "-"), dest=flag, type=kind)

    v = sub.add_parser("verify", help="run the solver self-checks, print a JSON report")
    v.add_argument("--lambda", dest="lam", type=float)
    v.add_argument("--trials", type=int)
    v.add_argument("--seed", type=int)
    v.add_argument("--out", help="also write the report here")
    v.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)

    t = sub.add_parser("train", help="passive training on bag labels only")
    _add_training_flags(t)

    a = sub.add_parser("al", help="active learning run(s)")
    _add_training_flags(a)
    a.add_argument("--strategy", choices=STRATEGIES + ("all",), default="pf")
    a.add_argument("--repeats", type=int, default=1,
                   help="run seeds seed..seed+repeats-1 and average them")

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    r.add_argument("manifest")
    return parser


COMMANDS = {"gen": cmd_gen, "verify": cmd_verify, "train": cmd_train, "al": cmd_al,
            "replay": cmd_replay}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code
    if getattr(args, "repeats", 1) < 1:
        parser.print_usage(sys.stderr)
        print("admil: error: --repeats must be >= 1", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args, argv)
    except (UsageError, ConfigError) as exc:
        print(f"admil: error: {exc}", file=sys.stderr)
        return 2
    except (DatasetFormatError, OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"admil: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
