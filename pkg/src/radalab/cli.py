"""Command-line front end.

Subcommands: gen (write a dataset CSV), train (run a config, flags
override config keys), sweep (grid over one parameter), eval (diagnostics
row for a checkpoint) and features (dump post-training features with
domain/class columns). Exit codes: 0 success, 1 runtime failure, 2 usage
error; errors go to stderr.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .datasets import (
    SOURCE, TARGET, Dataset, generate_blobs, generate_moons, read_dataset,
    write_dataset,
)
from .diagnostics import (
    METRICS_HEADER, MetricsRow, extract_features, format_metrics_row,
    mean_domain_entropy, mmd, target_accuracy,
)
from .harness import (
    RunConfig, build_dataset, build_model, load_checkpoint, load_model_params,
    parse_config, parse_config_text, run_training, set_config_key,
)


def _load_config(args) -> RunConfig:
    cfg = parse_config(args.config) if args.config else RunConfig()
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ValueError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        set_config_key(cfg, key.strip(), value)
    if getattr(args, "seed", None) is not None:
        cfg.master_seed = args.seed
    if getattr(args, "epochs", None) is not None:
        cfg.epochs = args.epochs
    if getattr(args, "output", None) is not None:
        cfg.output_dir = args.output
    return cfg


def _model_from_checkpoint(args):
    ckpt = load_checkpoint(args.checkpoint)
    cfg = parse_config_text(ckpt.config_text)
    dataset = read_dataset(args.data) if args.data else build_dataset(cfg)
    model = build_model(cfg, dataset.d, dataset.num_classes)
    load_model_params(model, ckpt)
    return ckpt, cfg, dataset, model


def cmd_gen(args) -> int:
    if args.generator == "moons":
        dataset = generate_moons(args.n_per_domain, args.noise, args.rotation,
                                 (args.shift_x, args.shift_y), seed=args.seed)
    else:
        dataset = generate_blobs(args.num_classes, args.n_per_class, args.radius,
                                 args.noise, rotation_deg=args.rotation,
                                 scale=args.scale, shift=(args.shift_x, args.shift_y),
                                 seed=args.seed)
    write_dataset(dataset, args.out)
    print(f"wrote {dataset.n} samples to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    result = run_training(cfg, resume_from=args.resume)
    last = result.rows[-1]
    print(f"finished {cfg.epochs} epochs -> {result.metrics_path}")
    print(f"final: entropy={last.mean_domain_entropy:.6f} mmd={last.mmd:.6f} "
          f"target_accuracy={last.target_accuracy:.4f}")
    return 0


def cmd_sweep(args) -> int:
    base = _load_config(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ValueError("--values is empty")
    out_base = Path(args.output if args.output else base.output_dir)
    for value in values:
        cfg = dataclasses.replace(base)
        set_config_key(cfg, args.param, value)
        cfg.output_dir = str(out_base / f"{args.param}_{value.replace(',', '-')}")
        result = run_training(cfg)
        last = result.rows[-1]
        print(f"{args.param}={value}: target_accuracy={last.target_accuracy:.4f} "
              f"-> {result.metrics_path}")
    return 0


def cmd_eval(args) -> int:
    ckpt, cfg, dataset, model = _model_from_checkpoint(args)
    feats = extract_features(model, dataset.features)
    src, tgt = dataset.indices_of(SOURCE), dataset.indices_of(TARGET)
    row = MetricsRow(
        epoch=ckpt.epoch,
        loss_cls=float("nan"),   # loss terms only exist during training
        loss_adv=float("nan"),
        mean_domain_entropy=mean_domain_entropy(model, dataset),
        mmd=mmd(feats[src], feats[tgt], cfg.mmd_config()),
        target_accuracy=target_accuracy(model, dataset),
        relabel_fraction=float("nan"),
        rada_active=ckpt.rada_state.active,
    )
    print(METRICS_HEADER)
    print(format_metrics_row(row))
    return 0


def cmd_features(args) -> int:
    _, _, dataset, model = _model_from_checkpoint(args)
    feats = extract_features(model, dataset.features)
    dump = Dataset(feats, dataset.class_labels, dataset.domain_labels,
                   num_classes=dataset.num_classes)
    write_dataset(dump, args.out)
    print(f"wrote {dump.n} x {dump.d} feature rows to {args.out}")
    return 0


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="run config file (key = value lines)")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--epochs", type=int, help="override epochs")
    p.add_argument("--output", help="override output_dir")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override any config key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radalab")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write a dataset CSV from a generator")
    gen.add_argument("--out", required=True)
    gen.add_argument("--generator", choices=("moons", "blobs"), default="moons")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--n-per-domain", type=int, default=1000)
    gen.add_argument("--noise", type=float, default=0.1)
    gen.add_argument("--rotation", type=float, default=45.0)
    gen.add_argument("--shift-x", type=float, default=0.5)
    gen.add_argument("--shift-y", type=float, default=0.0)
    gen.add_argument("--num-classes", type=int, default=3)
    gen.add_argument("--n-per-class", type=int, default=200)
    gen.add_argument("--radius", type=float, default=4.0)
    gen.add_argument("--scale", type=float, default=1.0)
    gen.set_defaults(func=cmd_gen)

    train = sub.add_parser("train", help="run training from a config")
    _add_config_flags(train)
    train.add_argument("--resume", help="checkpoint to resume from")
    train.set_defaults(func=cmd_train)

    sweep = sub.add_parser("sweep", help="repeat training over one parameter grid")
    _add_config_flags(sweep)
    sweep.add_argument("--param", required=True, help="config key to sweep")
    sweep.add_argument("--values", required=True, help="comma-separated values")
    sweep.set_defaults(func=cmd_sweep)

    evalp = sub.add_parser("eval", help="print a diagnostics row for a checkpoint")
    evalp.add_argument("--checkpoint", required=True)
    evalp.add_argument("--data", help="dataset CSV (default: regenerate from config)")
    evalp.set_defaults(func=cmd_eval)

    feats = sub.add_parser("features", help="dump post-training features as CSV")
    feats.add_argument("--checkpoint", required=True)
    feats.add_argument("--data", help="dataset CSV (default: regenerate from config)")
    feats.add_argument("--out", required=True)
    feats.set_defaults(func=cmd_features)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"radalab: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
