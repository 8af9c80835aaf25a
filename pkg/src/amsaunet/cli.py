"""Command-line interface.

Subcommands: train, deblur, eval, bench-attn, bench-kernels, synth-data.
Exit codes: 0 success, 2 usage or invalid value, 3 I/O or dataset problem,
4 corrupt checkpoint. A ``--config FILE`` with ``key=value`` lines (flag
names as keys) supplies defaults; explicit flags take precedence.
"""

import argparse
import math
import os
import sys

import numpy as np

from amsaunet import backend as bk
from amsaunet import bench as bench_mod
from amsaunet import data as D
from amsaunet.errors import (CheckpointError, ContractError, DatasetError,
                             DimensionError, ParseError, TrainingError)
from amsaunet.metrics import psnr, ssim
from amsaunet.model import ModelConfig
from amsaunet.train import (TrainConfig, load_model, restore_image,
                            train_loop)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="amsaunet",
        description="Asymmetric multi-scale U-Net deblurring toolkit")
    parser.add_argument("--config", metavar="FILE",
                        help="key=value defaults file (flag names as keys)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train on a blur/sharp directory pair")
    p.add_argument("--data-blur", required=True)
    p.add_argument("--data-sharp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--crop", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--decay", type=float, default=0.5)
    p.add_argument("--decay-every", type=int, default=500)
    p.add_argument("--freq-weight", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--base-channels", type=int, default=16)
    p.add_argument("--blocks-per-level", type=int, default=2)
    p.add_argument("--patch", type=int, default=8)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--checkpoint-every", type=int, default=0,
                   help="epochs between checkpoints (0 = final only)")
    p.add_argument("--resume", metavar="CKPT",
                   help="resume from a checkpoint written by a previous run")
    p.add_argument("--symmetric", action="store_true",
                   help="ablation: attention in the encoder as well")
    p.add_argument("--no-aff", action="store_true",
                   help="ablation: decoder inputs are plain upsampling only")

    p = sub.add_parser("deblur", help="restore one image with a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)

    p = sub.add_parser("eval", help="PSNR/SSIM of a checkpoint over a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data-blur", required=True)
    p.add_argument("--data-sharp", required=True)

    p = sub.add_parser("bench-attn",
                       help="time spectral vs quadratic attention, CSV report")
    p.add_argument("--sizes", default="64,256,1024,4096",
                   help="comma-separated patch pixel counts")
    p.add_argument("--repeats", type=int, default=9)
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV file (default: stdout)")

    p = sub.add_parser("bench-kernels",
                       help="compare compiled and pure-python kernel backends")
    p.add_argument("--repeats", type=int, default=9)
    p.add_argument("--out", help="CSV file (default: stdout)")

    p = sub.add_parser("synth-data",
                       help="generate a synthetic blur/sharp pair dataset")
    p.add_argument("--out-blur", required=True)
    p.add_argument("--out-sharp", required=True)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--frames", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _apply_config_file(args, argv):
    """Fill args from the key=value file wherever no explicit flag was given."""
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ContractError(f"cannot read config file: {exc}") from exc
    explicit = {a.split("=", 1)[0] for a in argv if a.startswith("--")}
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ContractError(
                f"{args.config}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if f"--{key}" in explicit:
            continue
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise ContractError(f"{args.config}:{lineno}: unknown key {key!r}")
        current = getattr(args, dest)
        if isinstance(current, bool):
            setattr(args, dest, value.lower() in ("1", "true", "yes", "on"))
        elif isinstance(current, int):
            setattr(args, dest, int(value))
        elif isinstance(current, float):
            setattr(args, dest, float(value))
        else:
            setattr(args, dest, value)
    return args


def _cmd_train(args):
    model_cfg = ModelConfig(
        base_channels=args.base_channels,
        blocks_per_level=args.blocks_per_level,
        patch=args.patch,
        symmetric_mode=args.symmetric,
        use_aff=not args.no_aff,
        seed=args.seed,
    )
    train_cfg = TrainConfig(
        epochs=args.epochs,
        lr0=args.lr,
        decay_factor=args.decay,
        decay_every=args.decay_every,
        batch=args.batch,
        crop=args.crop,
        loss_freq_weight=args.freq_weight,
        seed=args.seed,
        val_fraction=args.val_fraction,
        checkpoint_every=args.checkpoint_every,
    )
    print(f"train: data-blur={args.data_blur} data-sharp={args.data_sharp} "
          f"out={args.out}")
    print(f"train: epochs={args.epochs} batch={args.batch} crop={args.crop} "
          f"lr={args.lr:g} decay={args.decay:g} decay-every={args.decay_every} "
          f"freq-weight={args.freq_weight:g} seed={args.seed}")
    print(f"train: base-channels={args.base_channels} "
          f"blocks-per-level={args.blocks_per_level} patch={args.patch} "
          f"symmetric={args.symmetric} aff={not args.no_aff} "
          f"backend={bk.NAME}")
    result = train_loop(model_cfg, train_cfg, args.data_blur, args.data_sharp,
                        args.out, resume_from=args.resume)
    print(f"final checkpoint: {result.checkpoint_path}")
    print(f"final validation PSNR: {result.final_val_psnr}")
    return 0


def _cmd_deblur(args):
    model = load_model(args.model)[0]
    image = D.read_image(args.input)
    restored = restore_image(model, image)
    D.write_image(restored, args.output)
    print(f"wrote {args.output}")
    return 0


def _cmd_eval(args):
    model = load_model(args.model)[0]
    dataset = D.PairDataset(args.data_blur, args.data_sharp)
    print("file,psnr,ssim")
    psnrs, ssims = [], []
    for name in dataset.names:
        blur, sharp = dataset.load_pair(name)
        restored = restore_image(model, blur)
        p = psnr(restored, sharp)
        s = ssim(restored, sharp)
        psnrs.append(p)
        ssims.append(s)
        print(f"{name},{p!r},{s!r}")
    print(f"mean,{sum(psnrs) / len(psnrs)!r},{sum(ssims) / len(ssims)!r}")
    return 0


def _cmd_bench_attn(args):
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s]
    except ValueError as exc:
        raise ContractError(f"invalid --sizes: {exc}") from exc
    report = bench_mod.bench_attention(sizes, repeats=args.repeats,
                                       channels=args.channels, seed=args.seed)
    if args.out:
        with open(args.out, "w") as fh:
            report.write_csv(fh)
        print(f"wrote {args.out}")
    else:
        report.write_csv(sys.stdout)
    return 0


def _cmd_bench_kernels(args):
    rows = bench_mod.bench_kernels(repeats=args.repeats)
    if args.out:
        with open(args.out, "w") as fh:
            bench_mod.write_kernel_csv(rows, fh)
        print(f"wrote {args.out}")
    else:
        bench_mod.write_kernel_csv(rows, sys.stdout)
    return 0


def _cmd_synth_data(args):
    if args.count < 1 or args.size < 16:
        raise ContractError("synth-data needs --count >= 1 and --size >= 16")
    os.makedirs(args.out_blur, exist_ok=True)
    os.makedirs(args.out_sharp, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    digits = max(4, len(str(args.count)))
    for i in range(args.count):
        sharp = D.random_texture(args.size, rng)
        spec = D.random_blur_spec(args.frames, rng)
        blur = D.synthesize_blur(sharp, spec)
        name = f"pair{i:0{digits}d}.ppm"
        D.write_image(sharp, os.path.join(args.out_sharp, name))
        D.write_image(blur, os.path.join(args.out_blur, name))
    print(f"wrote {args.count} pairs ({args.size}x{args.size}, "
          f"{args.frames} frames) to {args.out_blur} / {args.out_sharp}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "deblur": _cmd_deblur,
    "eval": _cmd_eval,
    "bench-attn": _cmd_bench_attn,
    "bench-kernels": _cmd_bench_kernels,
    "synth-data": _cmd_synth_data,
}


def run(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        args = _apply_config_file(args, argv)
        return _COMMANDS[args.command](args)
    except (ContractError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    except (ParseError, DatasetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except CheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
