"""Command-line surface: datagen, train, eval, infer, bench, export.

Every successful run echoes its fully resolved configuration to stderr as a
single `config:` line, so any result can be reproduced from the log. Exit
codes: 0 success, 1 runtime failure (one-line diagnostic on stderr), 2 usage.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import bench, model, train
from .data import (DatasetManifest, SHAPE_KINDS, load_cloud_xyz,
                   load_image_ppm, make_dataset, save_cloud_xyz)
from .errors import Fi2pError


def _add_config_flag(p):
    p.add_argument("--config", type=Path, default=None,
                   help="JSON file with model/train settings; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fi2p",
        description="Single-image point-cloud autoencoder: data generation, "
                    "training, evaluation, inference, benchmarking, export.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate a synthetic dataset")
    p.add_argument("--categories", required=True,
                   help=f"comma-separated subset of {','.join(SHAPE_KINDS)}")
    p.add_argument("--count", type=int, required=True,
                   help="samples per category")
    p.add_argument("--image-size", type=int, default=64)
    p.add_argument("--points", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", help="train one model variant")
    p.add_argument("--data", type=Path, required=True, help="manifest path")
    p.add_argument("--variant", choices=model.VARIANTS, default=None)
    p.add_argument("--scale", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--weight-decay", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--checkpoint", type=Path, required=True,
                   help="where to write the trained checkpoint")
    _add_config_flag(p)

    p = sub.add_parser("eval", help="mean Chamfer loss of a checkpoint on a split")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")

    p = sub.add_parser("infer", help="reconstruct a point cloud from one image")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--image", type=Path, required=True, help="PPM input image")
    p.add_argument("--out", type=Path, required=True, help="XYZ output path")

    p = sub.add_parser("bench", help="latency/accuracy comparison of variants")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--checkpoints", type=Path, required=True,
                   help="directory of <category>_<variant>.fi2p checkpoints")
    p.add_argument("--no-train", action="store_true",
                   help="fail instead of training missing checkpoints")
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--out", type=Path, required=True, help="summary CSV path")
    p.add_argument("--scale", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    _add_config_flag(p)

    p = sub.add_parser("export", help="convert a point-cloud file")
    p.add_argument("--in", dest="in_path", type=Path, required=True)
    p.add_argument("--format", choices=("xyz", "ply"), required=True)
    p.add_argument("--out", type=Path, required=True)

    return parser


def parse_args(argv) -> argparse.Namespace:
    return build_parser().parse_args(argv)


def _echo_config(d: dict) -> None:
    print("config: " + json.dumps(d, sort_keys=True, default=str),
          file=sys.stderr)


def _load_json_config(path):
    if path is None:
        return {}
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _merged(file_section: dict, flag_values: dict, defaults: dict) -> dict:
    """defaults < config file < explicit flags."""
    out = dict(defaults)
    out.update({k: v for k, v in file_section.items() if k in defaults})
    out.update({k: v for k, v in flag_values.items() if v is not None})
    return out


def _model_train_configs(args, manifest):
    file_cfg = _load_json_config(getattr(args, "config", None))
    model_defaults = {"variant": "stride", "scale": 8}
    model_vals = _merged(file_cfg.get("model", {}),
                         {"variant": getattr(args, "variant", None),
                          "scale": getattr(args, "scale", None)},
                         model_defaults)
    extra = {k: v for k, v in file_cfg.get("model", {}).items()
             if k != "point_count"}
    extra.update(model_vals)
    try:
        # point count always comes from the data; image_size stays at the
        # full-scale reference (or config-file value) and must match the
        # data once divided by scale
        model_config = model.ModelConfig(
            point_count=manifest.point_count,
            **extra,
        )
    except TypeError as exc:
        raise Fi2pError(f"bad model config: {exc}") from exc
    if manifest.image_size and \
            model_config.eff_image_size != manifest.image_size:
        raise Fi2pError(
            f"model expects {model_config.eff_image_size}px images "
            f"(image_size {model_config.image_size} / scale "
            f"{model_config.scale}) but the dataset holds "
            f"{manifest.image_size}px images"
        )
    train_defaults = train.TrainConfig().to_dict()
    train_vals = _merged(file_cfg.get("train", {}), {
        "learning_rate": getattr(args, "lr", None),
        "batch_size": getattr(args, "batch", None),
        "weight_decay": getattr(args, "weight_decay", None),
        "max_epochs": getattr(args, "epochs", None),
        "early_stop_patience": getattr(args, "patience", None),
        "seed": getattr(args, "seed", None),
    }, train_defaults)
    try:
        train_config = train.TrainConfig(**train_vals)
    except TypeError as exc:
        raise Fi2pError(f"bad train config: {exc}") from exc
    return model_config, train_config


def _cmd_datagen(args) -> int:
    categories = [c.strip() for c in args.categories.split(",") if c.strip()]
    _echo_config({"command": "datagen", "categories": categories,
                  "count": args.count, "image_size": args.image_size,
                  "points": args.points, "seed": args.seed,
                  "out": str(args.out)})
    manifest = make_dataset(categories, args.count, args.image_size,
                            args.points, args.seed, args.out)
    for w in manifest.warnings:
        print(f"warning: {w}", file=sys.stderr)
    counts = manifest.to_dict()["counts"]
    print(f"wrote {len(manifest.samples)} samples to {args.out} "
          f"(train {counts['train']}, val {counts['val']}, "
          f"test {counts['test']})")
    return 0


def _cmd_train(args) -> int:
    manifest = DatasetManifest.load(args.data)
    model_config, train_config = _model_train_configs(args, manifest)
    _echo_config({"command": "train", "data": str(args.data),
                  "checkpoint": str(args.checkpoint),
                  "model": model_config.to_dict(),
                  "train": train_config.to_dict()})
    params, history = train.train(model_config, train_config, manifest,
                                  log=lambda m: print(m, file=sys.stderr))
    args.checkpoint.parent.mkdir(parents=True, exist_ok=True)
    model.save_checkpoint(params, model_config, args.checkpoint)
    history.to_csv(args.checkpoint.with_suffix(args.checkpoint.suffix
                                               + ".history.csv"))
    best = min((r.val_loss for r in history.records), default=float("nan"))
    print(f"stopped: {history.stop_reason} after {len(history.records)} "
          f"epochs, best val loss {best:.6f}")
    return 0


def _cmd_eval(args) -> int:
    params, config = model.load_checkpoint(args.checkpoint)
    manifest = DatasetManifest.load(args.data)
    _echo_config({"command": "eval", "checkpoint": str(args.checkpoint),
                  "data": str(args.data), "split": args.split,
                  "model": config.to_dict()})
    loss = train.evaluate(params, config, manifest, args.split)
    print(f"{loss:.6f}")
    return 0


def _cmd_infer(args) -> int:
    params, config = model.load_checkpoint(args.checkpoint)
    _echo_config({"command": "infer", "checkpoint": str(args.checkpoint),
                  "image": str(args.image), "out": str(args.out),
                  "model": config.to_dict()})
    image = load_image_ppm(args.image)
    cloud, _ = model.forward(params, config,
                             image[None].astype(params.dtype))
    save_cloud_xyz(cloud[0].astype(np.float64), args.out)
    print(f"wrote {cloud.shape[1]} points to {args.out}")
    return 0


def _cmd_bench(args) -> int:
    if args.reps < 30:
        # reported means are only meaningful with a real sample size
        print(f"usage error: bench needs --reps >= 30, got {args.reps}",
              file=sys.stderr)
        return 2
    manifest = DatasetManifest.load(args.data)
    if args.no_train:
        missing = [
            str(bench._checkpoint_path(args.checkpoints, c, v))
            for c in manifest.categories for v in model.VARIANTS
            if not bench._checkpoint_path(args.checkpoints, c, v).exists()
        ]
        if missing:
            print("usage error: --no-train set but checkpoints missing: "
                  + ", ".join(missing), file=sys.stderr)
            return 2
    model_config, train_config = _model_train_configs(args, manifest)
    if getattr(args, "epochs", None) is None and args.config is None:
        # short default budget: both variants get the same one
        train_config = dataclasses.replace(train_config, max_epochs=3,
                                           learning_rate=1e-3)
    _echo_config({"command": "bench", "data": str(args.data),
                  "checkpoints": str(args.checkpoints),
                  "no_train": args.no_train, "reps": args.reps,
                  "warmup": args.warmup, "out": str(args.out),
                  "model": model_config.to_dict(),
                  "train": train_config.to_dict()})
    report = bench.compare_variants(
        manifest, model_config, train_config, args.checkpoints,
        reps=args.reps, warmup=args.warmup, no_train=args.no_train,
        log=lambda m: print(m, file=sys.stderr),
    )
    report.to_csv(args.out)
    report.raw_to_csv(Path(str(args.out) + ".raw.csv"))
    for r in report.rows:
        print(f"{r.category},{r.variant}: mean {r.stats.mean_ms:.3f} ms, "
              f"chamfer {r.mean_chamfer:.6g}, {r.checkpoint_bytes} bytes")
    print(f"wrote {args.out} and {args.out}.raw.csv "
          f"(backend: {report.backend})")
    return 0


def _cmd_export(args) -> int:
    _echo_config({"command": "export", "in": str(args.in_path),
                  "format": args.format, "out": str(args.out)})
    cloud = load_cloud_xyz(args.in_path)
    if args.format == "xyz":
        save_cloud_xyz(cloud, args.out)
    else:
        with open(args.out, "w", encoding="ascii") as f:
            f.write("ply\nformat ascii 1.0\n")
            f.write(f"element vertex {cloud.shape[0]}\n")
            f.write("property float x\nproperty float y\nproperty float z\n")
            f.write("end_header\n")
            for x, y, z in cloud:
                f.write(f"{x:.9g} {y:.9g} {z:.9g}\n")
    print(f"wrote {cloud.shape[0]} points to {args.out}")
    return 0


_COMMANDS = {
    "datagen": _cmd_datagen,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "infer": _cmd_infer,
    "bench": _cmd_bench,
    "export": _cmd_export,
}


def run(args: argparse.Namespace) -> int:
    return _COMMANDS[args.command](args)


def main(argv=None) -> int:
    args = parse_args(sys.argv[1:] if argv is None else argv)
    try:
        return run(args)
    except Fi2pError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
