"""``lgan`` command line: phantom-gen, train, eval, segment, compare, inspect.

Exit codes: 0 success, 1 user error (bad flags, bad inputs), 2 internal error.
Failures print one ``lgan: error: ...`` line on stderr, never a traceback.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checkpoint
from .critics import CriticVariant
from .data import DatasetManifest, load_manifest, read_image, resize, write_image, write_mask
from .errors import LganError
from .generator import Generator, capture_activations
from .metrics import MetricReport
from .phantom import MANIFEST_NAME, PhantomConfig, generate
from .report import REPORT_NAME, TABLE_NAME, format_table, read_aggregates, write_eval_outputs
from .trainer import (
    BASELINE,
    VARIANT_CHOICES,
    EmptyStub,
    PerfectStub,
    TrainConfig,
    evaluate_checkpoint,
    read_config_file,
    segment_image,
    train,
)

log = logging.getLogger("lgan")

ECHO_NAME = "config.echo"
GENERATOR_CKPT = Path("checkpoints") / "generator.pt"

# flags that override config-file keys; None means "not given"
_OVERRIDES = {
    "lr": float,
    "batch_size": int,
    "epochs": int,
    "seed": int,
    "n_critic": int,
    "clip_c": float,
    "weight_decay": float,
    "beta1": float,
    "beta2": float,
    "image_size": int,
    "eval_every": int,
    "depth": int,
    "base_channels": int,
    "threshold": float,
    "init_std": str,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage; we reserve 2 for internal errors
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def model_label(variant: str | None) -> str:
    if variant is None or variant == BASELINE:
        return "Benchmark"
    return CriticVariant.parse(variant).label


def _positive(kind):
    def conv(s):
        v = kind(s)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v

    return conv


def _unit_interval(s):
    v = float(s)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {s}")
    return v


def _manifest(path: str) -> DatasetManifest:
    p = Path(path)
    return load_manifest(p / MANIFEST_NAME if p.is_dir() else p)


def _generator_path(path: str) -> Path:
    p = Path(path)
    return p / GENERATOR_CKPT if p.is_dir() else p


# --- commands ----------------------------------------------------------------


def cmd_phantom_gen(args) -> int:
    cfg = PhantomConfig(
        seed=args.seed,
        count=args.count,
        size=args.size,
        noise_sigma=args.noise,
        slices_per_scan=args.slices_per_scan,
        test_fraction=args.test_fraction,
    )
    manifest = generate(cfg, args.out)
    print(
        f"wrote {len(manifest)} slices ({len(manifest.split('train'))} train, "
        f"{len(manifest.split('test'))} test) to {manifest.source}"
    )
    return 0


def train_config(args) -> TrainConfig:
    values: dict[str, object] = dict(read_config_file(args.config)) if args.config else {}
    if args.variant is not None:
        values["variant"] = args.variant
    for key in _OVERRIDES:
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    if args.critic_channels is not None:
        values["critic_channels"] = args.critic_channels
    return TrainConfig.from_mapping(values)


def cmd_train(args) -> int:
    try:
        config = train_config(args)
    except (ValueError, LganError) as exc:
        raise UsageError(f"train: {exc}") from None
    data = _manifest(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / ECHO_NAME).write_text(config.to_lines())
    print(config.header(), flush=True)
    result = train(config, data, out)
    last = result.records[-1]
    print(f"trained {result.generator_updates} generator / {result.critic_updates} critic steps; "
          f"final g_total={last.g_total:.4f}")
    if data.split("test"):
        report = evaluate_checkpoint(result.generator, data, "test", threshold=config.threshold)
        write_eval_outputs(out, report, model_label(config.variant))
        _print_summary(report)
    return 0


def _print_summary(report: MetricReport) -> None:
    iou, dice = report.mean("iou"), report.mean("dice")
    print(f"test slices={len(report.per_slice)} mean iou={iou:.4f} mean dice={dice:.4f}")


def cmd_eval(args) -> int:
    data = _manifest(args.data)
    if args.stub is not None:
        model = PerfectStub() if args.stub == "perfect" else EmptyStub()
        label = f"stub-{args.stub}"
    else:
        path = _generator_path(args.checkpoint)
        model = checkpoint.load_generator(path)
        label = model_label(checkpoint.read(path).get("variant"))
    report = evaluate_checkpoint(model, data, args.split, threshold=args.threshold)
    write_eval_outputs(args.out, report, label)
    _print_summary(report)
    print((Path(args.out) / TABLE_NAME).read_text(), end="")
    return 0


def cmd_segment(args) -> int:
    gen = checkpoint.load_generator(_generator_path(args.checkpoint))
    image = read_image(args.image)
    _, mask = segment_image(gen, image, args.threshold)
    write_mask(args.out, mask)
    print(f"wrote {mask.shape[1]}x{mask.shape[0]} mask to {args.out}")
    return 0


def _run_label(run: Path) -> str:
    echo = run / ECHO_NAME
    if echo.is_file():
        for line in echo.read_text().splitlines():
            key, _, value = line.partition("=")
            if key.strip() == "variant":
                return model_label(value.strip())
    return run.name


def cmd_compare(args) -> int:
    rows = []
    for d in args.runs:
        run = Path(d)
        if not (run / REPORT_NAME).is_file():
            raise LganError(f"no {REPORT_NAME} in run directory {run}")
        rows.append((_run_label(run), read_aggregates(run / REPORT_NAME)))
    table = format_table(rows)
    if args.out:
        Path(args.out).write_text(table)
    print(table, end="")
    return 0


def _block_names(depth: int) -> list[str]:
    enc = [f"enc{i + 1}" for i in range(depth)]
    dec = [f"dec{i}" for i in range(depth, 0, -1)]
    return enc + dec + ["output"]


def cmd_inspect(args) -> int:
    gen: Generator = checkpoint.load_generator(_generator_path(args.checkpoint))
    spec = gen.spec
    image = read_image(args.image)
    if image.shape != (spec.input_size, spec.input_size):
        image = resize(image, spec.input_size, depth=spec.depth)
    maps = capture_activations(gen, image)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_image(out / "00_input.png", image)
    for i, (name, m) in enumerate(zip(_block_names(spec.depth), maps), start=1):
        write_image(out / f"{i:02d}_{name}.png", m)
    _, mask = segment_image(gen, image, args.threshold)
    write_mask(out / f"{len(maps) + 1:02d}_mask.png", mask)
    print(f"wrote {len(maps) + 2} images to {out}")
    return 0


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lgan", description="Lung segmentation with WGAN-style critics.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("phantom-gen", help="write a synthetic dataset")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--count", type=_positive(int), required=True)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--out", required=True)
    g.add_argument("--noise", type=float, default=0.05, help="Gaussian noise std-dev")
    g.add_argument("--slices-per-scan", type=_positive(int), default=5)
    g.add_argument("--test-fraction", type=float, default=0.2)
    g.set_defaults(func=cmd_phantom_gen)

    t = sub.add_parser("train", help="train a generator (and critic)")
    t.add_argument("--config", help="flat key = value file; flags win")
    t.add_argument("--variant", choices=VARIANT_CHOICES)
    t.add_argument("--data", required=True, help="manifest file or dataset directory")
    t.add_argument("--out", required=True, help="run directory")
    for key, kind in _OVERRIDES.items():
        t.add_argument("--" + key.replace("_", "-"), dest=key, type=kind, default=None)
    t.add_argument("--critic-channels", default=None, help="comma separated, e.g. 16,32,64")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a split")
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint", help="generator.pt or a run directory")
    src.add_argument("--stub", choices=("perfect", "empty"), help=argparse.SUPPRESS)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--split", choices=("train", "test"), default="test")
    e.add_argument("--threshold", type=_unit_interval, default=0.5)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("segment", help="segment one image")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--image", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--threshold", type=_unit_interval, default=0.5)
    s.set_defaults(func=cmd_segment)

    c = sub.add_parser("compare", help="tabulate several runs")
    c.add_argument("--runs", nargs="+", required=True)
    c.add_argument("--out", help="also write the table here")
    c.set_defaults(func=cmd_compare)

    i = sub.add_parser("inspect", help="export per-block activation maps")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--image", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--threshold", type=_unit_interval, default=0.5)
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"lgan: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"lgan: error: {exc}", file=sys.stderr)
        return 1
    except (LganError, ValueError, OSError) as exc:
        print(f"lgan: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - last-resort guard
        log.debug("internal error", exc_info=True)
        print(f"lgan: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
