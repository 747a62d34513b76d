"""Command-line interface: data generation, training, evaluation, ablation.

Every subcommand accepts `--config <file>` (flat `key = value` text) and
`--seed`; when `--seed` is absent the LCTR_SEED environment variable is the
fallback, then the config file value.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import RunConfig, load_config, save_config
from .data import generate_dataset, load_dataset, save_dataset
from .errors import ConfigurationError, ManifestError
from .runner import ablate, dump_attention, run_eval, sweep_threshold
from .train import build_model, train


def _resolve_config(args, data_dir=None) -> RunConfig:
    path = getattr(args, "config", None)
    if path is None and data_dir is not None:
        candidate = Path(data_dir) / "config.txt"
        if candidate.exists():
            path = candidate
    cfg = load_config(path) if path else RunConfig()
    seed = getattr(args, "seed", None)
    if seed is None and os.environ.get("LCTR_SEED"):
        seed = int(os.environ["LCTR_SEED"])
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    if getattr(args, "threshold_ratio", None) is not None:
        cfg = cfg.replace(threshold_ratio=args.threshold_ratio)
    if getattr(args, "no_rpam", False):
        cfg = cfg.replace(rpam_enabled=False)
    if getattr(args, "no_cdm", False):
        cfg = cfg.replace(cdm_enabled=False)
    return cfg


def _load_split(data_dir, split: str):
    path = Path(data_dir) / split
    if not path.is_dir():
        raise FileNotFoundError(f"dataset split not found: {path}")
    return load_dataset(path)


def _load_model(config: RunConfig, checkpoint):
    if not Path(checkpoint).is_file():
        raise FileNotFoundError(f"checkpoint not found: {checkpoint}")
    model = build_model(config)
    model.load(checkpoint)
    return model


def _print_metrics(metrics):
    for key, value in metrics.as_dict().items():
        print(f"{key} = {value!r}")


def cmd_gen_data(args) -> int:
    cfg = _resolve_config(args)
    if args.n_train is not None:
        cfg = cfg.replace(n_train=args.n_train)
    if args.n_test is not None:
        cfg = cfg.replace(n_test=args.n_test)
    train_set, test_set = generate_dataset(
        cfg.n_train, cfg.n_test, cfg.image_size, cfg.image_size, cfg.num_classes, cfg.seed
    )
    out = Path(args.out)
    save_dataset(out / "train", train_set)
    save_dataset(out / "test", test_set)
    save_config(cfg, out / "config.txt")
    print(f"wrote {len(train_set)} train / {len(test_set)} test samples to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args, data_dir=args.data)
    samples = _load_split(args.data, "train")

    def log(epoch, loss, acc):
        print(f"epoch {epoch:3d}  loss {loss:.4f}  train_acc {acc:.4f}")

    model, _ = train(cfg, samples, log_fn=log)
    model.save(args.out)
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve_config(args, data_dir=args.data)
    samples = _load_split(args.data, "test")
    model = _load_model(cfg, args.checkpoint)
    metrics = run_eval(model, samples, cfg, out_dir=args.out)
    _print_metrics(metrics)
    if args.out:
        print(f"artifacts written to {args.out}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _resolve_config(args, data_dir=args.data)
    if args.data:
        train_set = _load_split(args.data, "train")
        test_set = _load_split(args.data, "test")
    else:
        train_set, test_set = generate_dataset(
            cfg.n_train, cfg.n_test, cfg.image_size, cfg.image_size, cfg.num_classes, cfg.seed
        )
    rows = ablate(cfg, train_set, test_set, out_dir=args.out)
    header = f"{'mode':<10} {'top1_cls':>9} {'top1_loc':>9} {'gt_known':>9}"
    print(header)
    for mode, m in rows:
        print(f"{mode:<10} {m.top1_cls:9.4f} {m.top1_loc:9.4f} {m.gt_known:9.4f}")
    return 0


def cmd_sweep_threshold(args) -> int:
    cfg = _resolve_config(args, data_dir=args.data)
    samples = _load_split(args.data, "test")
    model = _load_model(cfg, args.checkpoint)
    rows = sweep_threshold(model, samples, cfg, out_dir=args.out)
    for ratio, acc in rows:
        print(f"ratio {ratio:.2f}  gt_known {acc:.4f}")
    return 0


def cmd_dump_attn(args) -> int:
    cfg = _resolve_config(args, data_dir=args.data)
    samples = _load_split(args.data, "test")
    if not 0 <= args.index < len(samples):
        raise ConfigurationError(f"index {args.index} out of range for {len(samples)} samples")
    model = _load_model(cfg, args.checkpoint)
    path = dump_attention(model, samples[args.index], cfg, args.out)
    print(f"attention dump written to {path.parent}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lctr",
        description="Weakly supervised localization toolkit: synthetic data, "
        "training, evaluation, ablations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, help="overrides config and LCTR_SEED")

    p = sub.add_parser("gen-data", help="generate a synthetic shape dataset")
    common(p)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--n-train", type=int, dest="n_train")
    p.add_argument("--n-test", type=int, dest="n_test")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train on a generated dataset")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory from gen-data")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="artifact directory (heatmaps, boxes, metrics, figures)")
    p.add_argument("--threshold-ratio", type=float, dest="threshold_ratio")
    p.add_argument("--no-rpam", action="store_true", dest="no_rpam")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train and evaluate all four module configurations")
    common(p)
    p.add_argument("--data", help="reuse a generated dataset (default: generate)")
    p.add_argument("--out", help="artifact directory")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep-threshold", help="Gt-known accuracy across binarization ratios")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="artifact directory")
    p.set_defaults(func=cmd_sweep_threshold)

    p = sub.add_parser("dump-attn", help="dump per-block attention maps for one image")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0, help="test-set image index")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dump_attn)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, ManifestError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
