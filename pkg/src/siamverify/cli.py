"""Command-line entry point: train / eval / pairs / gradcheck / ablate.

Exit codes: 0 success, 1 runtime or numeric error, 2 usage error.  Every run
writes its fully resolved configuration as JSON next to its outputs.  All
randomness flows from --seed (default 0, never wall clock).  DGNET_THREADS
caps loader parallelism; the current loaders are sequential, so any value
keeps the determinism contract.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .dataset import (AugmentConfig, export_pairs_csv, generate_pairs,
                      merge_weak_labels, parse_manifest)
from .evaluator import (metrics_report, roc_curve, run_ablation, score_pairs)
from .gradcheck import grad_check
from .losses import LossConfig, total_loss
from .network import (DEFAULT_FREEZE, NetworkSpec, build_network, freeze_prefix,
                      load_params, siamese_forward)
from .tensor import Tensor
from .trainer import TrainConfig, train
from . import losses, ops
from .tensor import Graph


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="siamverify",
                                     description="Siamese face-verification pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a manifest")
    p_train.add_argument("--manifest", required=True)
    p_train.add_argument("--web-manifest")
    p_train.add_argument("--profile", default="tiny", choices=["tiny", "vggface16"])
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--protocol", default="overall",
                         choices=["impersonation", "obfuscation", "overall"])
    p_train.add_argument("--margin", type=float)
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--batch-size", type=int)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--freeze-k", type=int)
    p_train.add_argument("--checkpoint-every", type=int)
    p_train.add_argument("--no-balance", action="store_true")
    p_train.add_argument("--no-lr-loss", action="store_true")
    p_train.add_argument("--no-bce-loss", action="store_true")
    p_train.add_argument("--no-augment", action="store_true")
    p_train.add_argument("--config", help="JSON config file; flags override it")

    p_eval = sub.add_parser("eval", help="score pairs with a trained checkpoint")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--protocol", default="overall",
                        choices=["impersonation", "obfuscation", "overall"])
    p_eval.add_argument("--mode", default="head", choices=["head", "cosine"])
    p_eval.add_argument("--split", default=None, choices=["train", "val", "test"])
    p_eval.add_argument("--out", required=True)

    p_pairs = sub.add_parser("pairs", help="export the pair list for a protocol")
    p_pairs.add_argument("--manifest", required=True)
    p_pairs.add_argument("--protocol", required=True,
                         choices=["impersonation", "obfuscation", "overall"])
    p_pairs.add_argument("--out", required=True)

    p_gc = sub.add_parser("gradcheck", help="finite-difference gradient validation")
    p_gc.add_argument("--profile", default="tiny", choices=["tiny", "vggface16"])
    p_gc.add_argument("--tol", type=float, default=1e-4)
    p_gc.add_argument("--eps", type=float, default=1e-5)
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.add_argument("--max-coords", type=int, default=20,
                      help="coordinates sampled per parameter tensor")

    p_abl = sub.add_parser("ablate", help="run a training/eval grid")
    p_abl.add_argument("--grid", required=True, help="JSON list of grid entries")
    p_abl.add_argument("--manifest", required=True)
    p_abl.add_argument("--web-manifest")
    p_abl.add_argument("--profile", default="tiny", choices=["tiny", "vggface16"])
    p_abl.add_argument("--protocol", default="overall",
                       choices=["impersonation", "obfuscation", "overall"])
    p_abl.add_argument("--epochs", type=int, default=10)
    p_abl.add_argument("--seed", type=int, default=0)
    p_abl.add_argument("--out", required=True)
    return parser


def _file_config(path) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _write_config(out_dir, config: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "resolved_config.json"), "w", encoding="utf-8") as f:
        json.dump(config, f, indent=2, sort_keys=True)


def _records_for_split(records, split):
    return records if split is None else [r for r in records if r.split == split]


def _cmd_train(args) -> int:
    file_cfg = _file_config(args.config)

    def pick(flag, key, default):
        return flag if flag is not None else file_cfg.get(key, default)

    spec = NetworkSpec.profile(args.profile)
    loss_cfg = LossConfig(
        margin=pick(args.margin, "margin", 0.5),
        enable_lr=not (args.no_lr_loss or file_cfg.get("no_lr_loss", False)),
        enable_lbce=not (args.no_bce_loss or file_cfg.get("no_bce_loss", False)),
    )
    no_aug = args.no_augment or file_cfg.get("no_augment", False)
    aug_cfg = (AugmentConfig(gaussian_sigma=0.0, flip_prob=0.0,
                             max_rotation_deg=0.0, max_translate_px=0)
               if no_aug else AugmentConfig())
    cfg = TrainConfig(
        lr=pick(args.lr, "lr", 1e-3),
        epochs=pick(args.epochs, "epochs", 10),
        batch_size=pick(args.batch_size, "batch_size", 16),
        freeze_k=pick(args.freeze_k, "freeze_k", DEFAULT_FREEZE[args.profile]),
        loss=loss_cfg,
        augment=aug_cfg,
        seed=pick(args.seed, "seed", 0),
        checkpoint_every=pick(args.checkpoint_every, "checkpoint_every", 0),
        class_balance=not (args.no_balance or file_cfg.get("no_balance", False)),
    )
    records = parse_manifest(args.manifest)
    records = [r for r in records if r.split == "train"]
    if args.web_manifest:
        records = merge_weak_labels(records, parse_manifest(args.web_manifest))
    pairs = generate_pairs(records, args.protocol)

    resolved = {
        "command": "train", "manifest": args.manifest, "web_manifest": args.web_manifest,
        "profile": args.profile, "protocol": args.protocol, "out": args.out,
        "lr": cfg.lr, "epochs": cfg.epochs, "batch_size": cfg.batch_size,
        "freeze_k": cfg.freeze_k, "seed": cfg.seed, "class_balance": cfg.class_balance,
        "checkpoint_every": cfg.checkpoint_every,
        "margin": cfg.loss.margin, "enable_lr": cfg.loss.enable_lr,
        "enable_lbce": cfg.loss.enable_lbce, "augment": not no_aug,
        "n_records": len(records), "n_pairs": len(pairs),
    }
    _write_config(args.out, resolved)

    params = build_network(spec, seed=cfg.seed)
    freeze_prefix(params, cfg.freeze_k)
    _, log, checkpoints = train(params, pairs, cfg, out_dir=args.out)
    log.write_csv(os.path.join(args.out, "trainlog.csv"))
    print(f"trained {cfg.epochs} epochs on {len(pairs)} pairs; "
          f"checkpoints: {', '.join(checkpoints)}")
    return 0


def _cmd_eval(args) -> int:
    params = load_params(args.checkpoint)
    records = _records_for_split(parse_manifest(args.manifest), args.split)
    pairs = generate_pairs(records, args.protocol)
    resolved = {"command": "eval", "checkpoint": args.checkpoint,
                "manifest": args.manifest, "protocol": args.protocol,
                "mode": args.mode, "split": args.split, "out": args.out,
                "n_pairs": len(pairs)}
    _write_config(args.out, resolved)
    scores = score_pairs(params, pairs, mode=args.mode)
    roc_curve(scores).write_csv(os.path.join(args.out, "roc.csv"))
    report = metrics_report(scores, args.mode)
    with open(os.path.join(args.out, "metrics.json"), "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2)
    print(json.dumps(report, indent=2))
    return 0


def _cmd_pairs(args) -> int:
    records = parse_manifest(args.manifest)
    pairs = generate_pairs(records, args.protocol)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    _write_config(out_dir, {"command": "pairs", "manifest": args.manifest,
                            "protocol": args.protocol, "out": args.out,
                            "n_pairs": len(pairs)})
    export_pairs_csv(pairs, args.out)
    print(f"wrote {len(pairs)} pairs to {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    spec = NetworkSpec.profile(args.profile)
    params = build_network(spec, seed=args.seed)
    rng = np.random.default_rng(args.seed + 1)
    c, h, w = spec.input_shape
    batch = [(Tensor(rng.random((c, h, w))), Tensor(rng.random((c, h, w))), y)
             for y in (1, 0, 1, 0)]
    cfg = LossConfig(margin=0.5)

    def loss_fn(g: Graph | None):
        d_scalars, p_scalars, ys = [], [], []
        for xa, xb, y in batch:
            emb_a, emb_b, p = siamese_forward(params, xa, xb, g)
            d_scalars.append(losses.cosine_distance(emb_a, emb_b, g))
            p_scalars.append(p)
            ys.append(y)
        bd = total_loss(ops.stack(g, d_scalars), ops.stack(g, p_scalars),
                        np.array(ys, dtype=np.float64), cfg, g)
        return bd.total_node

    err = grad_check(loss_fn, params.tensors, eps=args.eps,
                     max_coords_per_tensor=args.max_coords, seed=args.seed)
    print(f"max relative error: {err:.3e} (tolerance {args.tol:.3e})")
    return 0 if err < args.tol else 1


def _cmd_ablate(args) -> int:
    with open(args.grid, "r", encoding="utf-8") as f:
        grid = json.load(f)
    if not isinstance(grid, list):
        raise ValueError("grid file must contain a JSON list")
    records = [r for r in parse_manifest(args.manifest) if r.split == "train"]
    eval_records = [r for r in parse_manifest(args.manifest) if r.split in ("val", "test")]
    if not eval_records:
        eval_records = records
    web = parse_manifest(args.web_manifest) if args.web_manifest else None
    spec = NetworkSpec.profile(args.profile)
    base_cfg = TrainConfig(epochs=args.epochs, seed=args.seed,
                           freeze_k=DEFAULT_FREEZE[args.profile])
    _write_config(args.out, {"command": "ablate", "grid": grid,
                             "manifest": args.manifest, "profile": args.profile,
                             "protocol": args.protocol, "epochs": args.epochs,
                             "seed": args.seed, "out": args.out})
    rows = run_ablation(grid, records, eval_records, base_cfg, spec,
                        out_dir=args.out, base_seed=args.seed, web_records=web,
                        protocol=args.protocol)
    for row in rows:
        status = row.error or f"best_acc={row.best_accuracy:.4f} gar={row.gar_at}"
        print(f"{row.label}: {status}")
    return 0


_COMMANDS = {"train": _cmd_train, "eval": _cmd_eval, "pairs": _cmd_pairs,
             "gradcheck": _cmd_gradcheck, "ablate": _cmd_ablate}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        _ = int(os.environ.get("DGNET_THREADS", "1"))
    except ValueError:
        print("DGNET_THREADS must be an integer", file=sys.stderr)
        return 2
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
