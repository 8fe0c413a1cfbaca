"""Command-line front end: ``fdpl {prepare,diff-matrix,train,eval,sr}``.

Images must be PNG; convert BSDS500/Set5 JPEGs beforehand. By convention the
BSDS500 train+test images form the training corpus and Set5 the evaluation
set, but any directory of PNGs works.

Exit codes: 0 success, 2 usage or input error, 1 internal error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import dataset as ds
from .degrade import DegradeConfig, upscale
from .image import (
    ImageFormatError,
    check_rgb,
    load_image,
    rgb_to_ycbcr,
    save_rgb,
    ycbcr_to_rgb,
)
from .loss import (
    DEFAULT_EPSILON,
    compute_diff_matrix,
    load_weight_matrix,
    make_loss,
    save_weight_matrix,
)
from .metrics import evaluate_pairs, load_eval_set
from .srcnn import (
    DEFAULT_LEARNING_RATES,
    CheckpointError,
    SrcnnModel,
    TrainConfig,
    TrainingDiverged,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)

log = logging.getLogger("fdpl")

CHECKPOINT_NAME = "model.srcnn"
METRICS_NAME = "metrics.csv"


class UsageError(Exception):
    pass


def read_config(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def _learning_rates(text: str) -> tuple[float, ...]:
    try:
        rates = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad learning rates {text!r}") from None
    if len(rates) != 3 or any(r < 0 for r in rates):
        raise argparse.ArgumentTypeError("expected three comma-separated non-negative rates")
    return rates


def _init_std(text: str):
    if text == "he":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"init std must be a number or 'he', got {text!r}") from None


def _degrade_cfg(args) -> DegradeConfig:
    try:
        return DegradeConfig(args.scale, args.blur_sigma, args.blur_radius)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _require_dir(path: str, what: str) -> None:
    if not os.path.isdir(path):
        raise UsageError(f"{what} not found: {path}")


def cmd_prepare(args) -> int:
    _require_dir(args.images, "image directory")
    manifest = ds.prepare_corpus(args.images, _degrade_cfg(args), args.out, seed=args.seed)
    msg = f"{len(manifest)} patch pairs written to {args.out}"
    if manifest.skipped:
        msg += f" ({manifest.skipped} file(s) skipped)"
    print(msg)
    return 0


def cmd_diff_matrix(args) -> int:
    _require_dir(args.images, "image directory")
    cfg = _degrade_cfg(args)
    pairs = ((gt, deg) for _, gt, deg in ds.image_pairs(args.images, cfg))
    stats = compute_diff_matrix(pairs, args.epsilon, args.reduction)
    header = [
        "mean relative DCT difference, ground truth vs degraded",
        f"num_blocks = {stats.num_blocks}",
        f"epsilon = {stats.epsilon!r}",
        f"reduction = {stats.reduction}",
        f"scale = {cfg.scale}",
        f"blur_sigma = {cfg.blur_sigma!r}",
        f"blur_kernel_radius = {cfg.blur_kernel_radius}",
    ]
    save_weight_matrix(stats.d, args.out, header)
    print(f"difference matrix over {stats.num_blocks} blocks written to {args.out}")
    return 0


def cmd_train(args) -> int:
    kind = args.loss.replace("-", "_")
    d = None
    if kind != "mse":
        if not args.diff_matrix:
            raise UsageError(
                f"--loss {args.loss} needs --diff-matrix; create one with 'fdpl diff-matrix'"
            )
        d = load_weight_matrix(args.diff_matrix)
    _require_dir(args.corpus, "corpus directory")
    corpus = ds.load_corpus(args.corpus)
    if len(corpus) == 0:
        raise UsageError(f"corpus {args.corpus} is empty")
    try:
        cfg = TrainConfig(
            batch_size=args.batch_size,
            max_steps=args.steps,
            loss_kind=kind,
            seed=args.seed,
            eval_every=args.eval_every,
            checkpoint_every=args.checkpoint_every,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    evaluate = None
    if args.eval_dir:
        eval_pairs = load_eval_set(args.eval_dir, _degrade_cfg(args))
        evaluate = lambda m: evaluate_pairs(m, eval_pairs).mean_psnr  # noqa: E731
        if not cfg.eval_every:
            cfg.eval_every = max(1, cfg.max_steps // 10)
    os.makedirs(args.out, exist_ok=True)

    def checkpoint(model, step):
        save_checkpoint(model, os.path.join(args.out, f"step-{step:08d}.srcnn"))

    model = SrcnnModel.create(seed=args.seed, learning_rates=args.lr, init_std=args.init_std)
    model, trainlog = train(model, corpus, cfg, make_loss(kind, d), evaluate, checkpoint)
    save_checkpoint(model, os.path.join(args.out, CHECKPOINT_NAME))
    trainlog.to_csv(os.path.join(args.out, METRICS_NAME))
    last = trainlog.rows[-1]
    msg = f"trained {last.step} steps ({kind}), final loss {last.train_loss:.6g}"
    evals = [r.eval_psnr for r in trainlog.rows if r.eval_psnr is not None]
    if evals:
        msg += f", eval PSNR {evals[-1]:.4f} dB"
    print(msg)
    return 0


def cmd_eval(args) -> int:
    if args.baseline == bool(args.checkpoint):
        raise UsageError("give exactly one of --checkpoint or --baseline")
    model = None if args.baseline else load_checkpoint(args.checkpoint)
    _require_dir(args.set, "evaluation directory")
    report = evaluate_pairs(model, load_eval_set(args.set, _degrade_cfg(args)))
    print(report.to_table())
    if args.csv:
        with open(args.csv, "w") as f:
            f.write(report.to_csv())
    return 0


def super_resolve(model, rgb: np.ndarray, scale: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(model output, plain bicubic)`` RGB images enlarged by ``scale``."""
    y, cb, cr = (upscale(p, scale) for p in rgb_to_ycbcr(check_rgb(rgb)))
    bicubic = np.clip(ycbcr_to_rgb(np.clip(y, 0, 1), cb, cr), 0, 1)
    y_sr = np.clip(predict(model, y), 0, 1)
    return np.clip(ycbcr_to_rgb(y_sr, cb, cr), 0, 1), bicubic


def cmd_sr(args) -> int:
    if args.scale < 1:
        raise UsageError("--scale must be >= 1")
    model = load_checkpoint(args.checkpoint)
    resolved, bicubic = super_resolve(model, load_image(args.input), args.scale)
    save_rgb(resolved, args.output)
    if args.compare:
        save_rgb(bicubic, args.compare)
    print(f"wrote {args.output} ({resolved.shape[1]}x{resolved.shape[0]})")
    return 0


def _add_degrade_flags(p) -> None:
    p.add_argument("--scale", type=int, default=3, help="upscale factor (default 3)")
    p.add_argument("--blur-sigma", type=float, default=1.0, help="blur std in pixels (default 1)")
    p.add_argument("--blur-radius", type=int, default=2, help="blur kernel radius (default 2)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdpl", description=__doc__.split("\n\n")[0], epilog=__doc__.split("\n\n", 1)[1]
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="degrade images and extract 32x32 training patches")
    p.add_argument("--images", required=True, help="directory of ground-truth PNGs")
    p.add_argument("--out", required=True, help="output directory for patch file + manifest")
    p.add_argument("--seed", type=int, default=0, help="seed recorded in the manifest")
    _add_degrade_flags(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("diff-matrix", help="compute the mean relative DCT difference matrix")
    p.add_argument("--images", required=True, help="directory of ground-truth PNGs")
    p.add_argument("--out", required=True, help="output 8x8 text file")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON, help="denominator guard")
    p.add_argument(
        "--reduction",
        choices=["tile", "aggregate"],
        default="tile",
        help="average per-tile ratios (default) or divide corpus-wide mean magnitudes",
    )
    _add_degrade_flags(p)
    p.set_defaults(func=cmd_diff_matrix)

    p = sub.add_parser("train", help="train SRCNN with MSE, FDPL or FDPL-AT")
    p.add_argument("--config", help="file of 'key = value' lines; flags override it")
    p.add_argument("--corpus", required=True, help="directory written by 'prepare'")
    p.add_argument("--out", required=True, help="output directory for checkpoints and CSV")
    p.add_argument("--loss", choices=["mse", "fdpl", "fdpl-at", "fdpl_at"], default="mse")
    p.add_argument("--steps", type=int, default=1000, help="number of SGD steps")
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--diff-matrix", help="8x8 difference matrix file (FDPL losses)")
    p.add_argument("--eval-dir", help="PNG directory scored every --eval-every steps")
    p.add_argument("--eval-every", type=int, default=0)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument(
        "--lr",
        type=_learning_rates,
        default=",".join(map(str, DEFAULT_LEARNING_RATES)),
        help="per-layer learning rates, comma separated (default 1e-4,1e-4,1e-5)",
    )
    p.add_argument("--init-std", type=_init_std, default="0.001", help="weight init std or 'he'")
    _add_degrade_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="report PSNR/SSIM on a set of images")
    p.add_argument("--checkpoint", help="trained model")
    p.add_argument("--baseline", action="store_true", help="score the degraded input itself")
    p.add_argument("--set", required=True, help="directory of ground-truth PNGs")
    p.add_argument("--csv", help="also write the report as CSV")
    _add_degrade_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sr", help="super-resolve one PNG")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="low-resolution PNG")
    p.add_argument("--output", required=True, help="output colour PNG")
    p.add_argument("--scale", type=int, default=3)
    p.add_argument("--compare", help="also write the plain bicubic enlargement here")
    p.set_defaults(func=cmd_sr)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config or "train" not in argv:
        return
    values = read_config(known.config)
    train_parser = parser._subparsers._group_actions[0].choices["train"]
    dests = {a.dest for a in train_parser._actions}
    unknown = sorted(set(values) - dests)
    if unknown:
        raise UsageError(f"{known.config}: unknown key(s) {', '.join(unknown)}")
    for action in train_parser._actions:
        if action.dest in values:
            action.default = values[action.dest]
            action.required = False


def _set_threads() -> None:
    n = os.environ.get("FDPL_THREADS")
    if not n:
        return
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(max(1, int(n)))
    except ValueError:
        raise UsageError(f"FDPL_THREADS must be an integer, got {n!r}") from None


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except (UsageError, OSError) as exc:
        print(f"fdpl: error: {exc}", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s"
    )
    try:
        _set_threads()
        return args.func(args)
    except (UsageError, FileNotFoundError, ImageFormatError, CheckpointError, ValueError, OSError) as exc:
        print(f"fdpl {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"fdpl {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"fdpl {args.command}: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
