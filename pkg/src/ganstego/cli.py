"""Command-line entry point: embed, extract, train, evaluate, metrics."""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from .errors import CapacityExceeded, ExtentError, MalformedHeader, StegoError, UnsupportedFormat
from .fsutil import atomic_write

DEFAULT_SEED = 42
EXIT_OK, EXIT_CAPACITY, EXIT_IO, EXIT_USAGE, EXIT_NONFINITE = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, code: int, detail: str):
        self.code = code
        self.detail = detail
        super().__init__(detail)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, message)


def _shared(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help=f"random seed (default {DEFAULT_SEED})")
    p.add_argument("--method", action="append", default=None,
                   help="lsb | dct | gan, or a full spec such as lsb:k=4 (repeatable for evaluate)")
    p.add_argument("--k", type=int, default=None, help="LSB bits per channel byte (1-4)")
    p.add_argument("--delta", type=float, default=None, help="DCT quantization step (>= 4)")
    p.add_argument("--checkpoint", default=None, help="trained GAN checkpoint")
    p.add_argument("--bpp", type=int, default=None, help="secret planes per pixel")
    p.add_argument("--out", default=None, help="output file or directory")
    p.add_argument("--format", action="append", choices=("csv", "json"), default=None,
                   help="report format (repeatable; default both)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ganstego", description="Image steganography toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("embed", help="hide a payload file in a cover PNG")
    p.add_argument("cover")
    p.add_argument("payload")
    _shared(p)

    p = sub.add_parser("extract", help="recover a payload file from a stego PNG")
    p.add_argument("stego")
    _shared(p)

    p = sub.add_parser("train", help="train the GAN embedder from a key=value config")
    p.add_argument("config")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.add_argument("--steps", type=int, default=None, help="override the total step budget")
    _shared(p)

    p = sub.add_parser("evaluate", help="benchmark methods on a directory of PNG covers")
    p.add_argument("dataset")
    p.add_argument("--payload", choices=("random", "image"), default="random")
    p.add_argument("--cnn-steps", type=int, default=0, help="train a CNN detector for this many steps")
    p.add_argument("--reference", action="store_true", help="append published reference rows")
    _shared(p)

    p = sub.add_parser("metrics", help="print PSNR, SSIM, RMSE and MAE between two images")
    p.add_argument("a")
    p.add_argument("b")
    _shared(p)
    return parser


def _seed(args) -> int:
    return DEFAULT_SEED if args.seed is None else args.seed


def _method_spec(args, text: str):
    from .evalbench import MethodSpec

    try:
        if ":" in text:
            return MethodSpec.parse(text)
        params = []
        if text == "lsb":
            params.append(("k", str(args.k if args.k is not None else 1)))
        elif text == "dct":
            params.append(("delta", str(args.delta if args.delta is not None else 8.0)))
        elif text == "gan":
            if not args.checkpoint:
                raise CliError(EXIT_USAGE, "method gan requires --checkpoint")
            params.append(("checkpoint", args.checkpoint))
        return MethodSpec(text, tuple(params))
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None


def _single_method(args):
    methods = args.method or ["lsb"]
    if len(methods) != 1:
        raise CliError(EXIT_USAGE, f"exactly one --method expected, got {len(methods)}")
    spec = _method_spec(args, methods[0])
    if spec.kind == "gan" and args.bpp is not None:
        from .trainer import Checkpoint

        bpp = Checkpoint.load(dict(spec.params)["checkpoint"]).config.bpp
        if bpp != args.bpp:
            raise CliError(EXIT_USAGE, f"--bpp {args.bpp} does not match checkpoint bpp {bpp}")
    return spec


def _embedder(spec):
    from .evalbench import Embedder

    try:
        return Embedder(spec)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc)) from None


def _require_out(args) -> Path:
    if not args.out:
        raise CliError(EXIT_USAGE, "--out is required")
    return Path(args.out)


def cmd_embed(args) -> int:
    from .media import bytes_to_bits, load_image, save_image
    from .metrics import psnr

    out = _require_out(args)
    spec = _single_method(args)
    embedder = _embedder(spec)
    cover = load_image(args.cover)
    bits = bytes_to_bits(Path(args.payload).read_bytes())
    capacity = embedder.capacity(cover)
    if bits.size > capacity:
        raise CapacityExceeded(int(bits.size) + 32, capacity + 32)
    stego = embedder.embed(cover, bits, seed=_seed(args))
    save_image(stego, out)
    pct = 100.0 * bits.size / capacity if capacity else 0.0
    print(f"capacity: {bits.size} of {capacity} payload bits used ({pct:.2f}%)")
    print(f"psnr={_fmt(psnr(cover, stego))}")
    return EXIT_OK


def cmd_extract(args) -> int:
    from .media import bits_to_bytes, load_image

    out = _require_out(args)
    embedder = _embedder(_single_method(args))
    bits = embedder.extract(load_image(args.stego))
    if bits.size % 8:
        raise MalformedHeader(f"recovered {bits.size} bits, not a whole number of bytes")
    data = bits_to_bytes(bits)
    atomic_write(out, data)
    print(f"extracted {len(data)} bytes")
    return EXIT_OK


def cmd_train(args) -> int:
    from .trainer import Checkpoint, ConfigHashMismatch, CoverDataset, TrainConfig, train_run

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config: {exc}") from None
    try:
        cfg = TrainConfig.from_text(text)
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        if args.bpp is not None:
            changes["bpp"] = args.bpp
        if args.steps is not None:
            changes["steps"] = args.steps
        cfg = cfg.with_(**changes)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, f"bad config: {exc}") from None
    if not cfg.dataset:
        raise CliError(EXIT_USAGE, "config has no dataset")
    dataset = Path(cfg.dataset)
    if not dataset.is_absolute():
        dataset = Path(args.config).resolve().parent / dataset
    # the config keeps the path as written so checkpoints do not depend on the working tree location
    covers = CoverDataset.from_dir(dataset, cfg.crop, cfg.channels)
    out = Path(args.out or cfg.out_dir or "run")
    resume = None
    if args.resume:
        resume = Checkpoint.load(args.resume)
        if resume.config_hash != cfg.hash():
            raise ConfigHashMismatch(cfg.hash(), resume.config_hash)
    final, trace = train_run(cfg, covers, resume=resume, out_dir=out)
    last = trace[-1] if trace else None
    print(f"steps={final.step} trace_rows={len(trace)} out={out}")
    if last is not None:
        print(f"e_bitacc={last.e_bitacc!r} d_acc={last.d_acc!r} total={last.total!r}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .evalbench import BenchConfig, run_benchmark
    from .trainer import DatasetError

    out = _require_out(args)
    methods = [_method_spec(args, m) for m in (args.method or [])]
    if not Path(args.dataset).is_dir():
        raise DatasetError(f"dataset directory not found: {args.dataset}")
    cfg = BenchConfig(seed=_seed(args), payload=args.payload, cnn_steps=args.cnn_steps,
                      include_reference=args.reference)
    for spec in methods:
        _embedder(spec)
    report = run_benchmark(args.dataset, methods, cfg)
    formats = tuple(dict.fromkeys(args.format or ["csv", "json"]))
    for p in report.write(out, formats):
        print(f"wrote {p}")
    return EXIT_OK


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if math.isnan(v):
        return "nan"
    return f"{v:.6g}"


def cmd_metrics(args) -> int:
    from .media import load_image
    from .metrics import compare

    a, b = load_image(args.a), load_image(args.b)
    if a.shape != b.shape:
        raise CliError(EXIT_USAGE, f"dimension mismatch: {a.shape} vs {b.shape}")
    r = compare(a, b)
    for name, value in (("psnr", r.psnr_db), ("ssim", r.ssim), ("rmse", r.rmse), ("mae", r.mae)):
        print(f"{name}={_fmt(value)}")
    return EXIT_OK


COMMANDS = {
    "embed": cmd_embed,
    "extract": cmd_extract,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "metrics": cmd_metrics,
}


def _classify(exc: BaseException) -> tuple[int, str]:
    from .trainer import CheckpointError, ConfigHashMismatch, DatasetError, NonFiniteLoss

    if isinstance(exc, CliError):
        return exc.code, exc.detail
    if isinstance(exc, CapacityExceeded):
        return EXIT_CAPACITY, f"capacity exceeded: needs {exc.needed} bits, carrier holds {exc.available} bits"
    if isinstance(exc, NonFiniteLoss):
        return EXIT_NONFINITE, str(exc)
    if isinstance(exc, ConfigHashMismatch):
        return EXIT_USAGE, f"config hash mismatch: expected {exc.expected.hex()} found {exc.found.hex()}"
    if isinstance(exc, ExtentError):
        return EXIT_USAGE, str(exc)
    if isinstance(exc, (DatasetError, CheckpointError, UnsupportedFormat, MalformedHeader, OSError)):
        return EXIT_IO, str(exc)
    if isinstance(exc, StegoError):
        return EXIT_IO, str(exc)
    if isinstance(exc, ValueError):
        return EXIT_USAGE, str(exc)
    raise exc


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001
        code, detail = _classify(exc)
        detail = " ".join(str(detail).split())
        print(f"error: {code}: {detail}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
