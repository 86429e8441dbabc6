"""Benchmark runner: embed, extract, score and aggregate per method."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import StegoError
from ..media.image import Image, center_crop, load_image
from ..media.payload import bit_error_rate, bits_to_bytes, bytes_to_bits
from ..metrics import compare
from ..trainer.data import list_pngs
from .detectors import CnnDetector, balanced_accuracy, chi_square_lsb_score
from .methods import Embedder, MethodSpec
from .report import REFERENCE_LABEL, BenchReport, Cell, flag_best, reference_cells

PAYLOAD_MODES = ("random", "image")
QUALITY = ("ssim", "psnr", "rmse", "mae")


@dataclass(frozen=True)
class BenchConfig:
    seed: int = 42
    payload: str = "random"
    threshold: float = 0.5
    cnn_steps: int = 0
    cnn_crop: int = 64
    dataset_name: str = ""
    include_reference: bool = False

    def __post_init__(self):
        if self.payload not in PAYLOAD_MODES:
            raise ValueError(f"payload mode must be one of {PAYLOAD_MODES}, got {self.payload!r}")
        if self.cnn_steps < 0:
            raise ValueError("cnn_steps must be >= 0")


class BenchmarkError(StegoError):
    pass


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def bits_as_image(bits: np.ndarray, width: int) -> Image | None:
    """Lay whole bytes out as a grayscale image ``width`` pixels wide (partial last row dropped)."""
    usable = bits.size - bits.size % 8
    data = np.frombuffer(bits_to_bytes(bits[:usable]), dtype=np.uint8)
    rows = data.size // width
    if rows == 0:
        return None
    return Image(data[: rows * width].reshape(rows, width, 1).copy())


def _secret_image(donor: Image, capacity: int) -> Image | None:
    """Largest centered square crop of ``donor`` whose bytes fit ``capacity`` bits."""
    side = int(math.isqrt(max(0, capacity) // (8 * donor.channels)))
    side = min(side, donor.height, donor.width)
    if side == 0:
        return None
    return center_crop(donor, side, side)


@dataclass
class _Sample:
    quality: dict
    secret: dict
    ber: float
    cover_scores: dict
    stego_scores: dict


def _one(embedder: Embedder, cover: Image, donor: Image, cfg: BenchConfig, key: tuple) -> tuple[_Sample, Image]:
    cap = embedder.capacity(cover)
    if cfg.payload == "random":
        bits = _rng(cfg.seed, *key).integers(0, 2, size=cap, dtype=np.uint8)
        secret = bits_as_image(bits, cover.width)
    else:
        secret = _secret_image(donor, cap)
        if secret is None:
            raise BenchmarkError(f"capacity {cap} bits cannot hold any secret image")
        bits = bytes_to_bits(secret.to_bytes())
    stego = embedder.embed(cover, bits, seed=cfg.seed)
    got = embedder.extract_known_length(stego, bits.size)
    if got.size != bits.size:
        got = np.resize(got, bits.size) if got.size else np.zeros(bits.size, np.uint8)
    ber = bit_error_rate(bits, got)
    q = compare(cover, stego, "cover/stego").as_dict()
    if cfg.payload == "random":
        recovered = bits_as_image(got, cover.width)
    else:
        recovered = Image(np.frombuffer(bits_to_bytes(got), dtype=np.uint8).reshape(secret.shape).copy())
    if secret is None:
        s = {m: math.nan for m in QUALITY}
    else:
        s = compare(secret, recovered, "secret/recovered").as_dict()
    return _Sample(q, s, ber, {"chi2": chi_square_lsb_score(cover)}, {"chi2": chi_square_lsb_score(stego)}), stego


def _mean(values: list[float]) -> float:
    # values arrive in sorted image order, so the reduction is order-insensitive
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return math.nan
    if np.isposinf(arr).any():
        return math.inf
    return float(np.mean(arr))


def config_hash(cfg: BenchConfig, methods: Sequence[MethodSpec], names: Sequence[str]) -> str:
    doc = {"config": asdict(cfg), "methods": [str(m) for m in methods], "images": list(names)}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def load_dataset(directory) -> list[tuple[str, Image | Exception]]:
    out = []
    for p in list_pngs(directory):
        try:
            out.append((p.name, load_image(p)))
        except (OSError, StegoError, ValueError) as exc:
            out.append((p.name, exc))
    return out


def run_benchmark(dataset_dir, methods: Sequence, config: BenchConfig = BenchConfig(),
                  images: list[tuple[str, Image]] | None = None) -> BenchReport:
    """Evaluate each method on every image of a PNG directory.

    Per-image failures are counted and skipped; the run fails only when
    every image fails for a method. Images are processed in name order and
    all randomness is keyed by (seed, image index, method index).
    """
    specs = [m if isinstance(m, MethodSpec) else MethodSpec.parse(m) for m in methods]
    entries = images if images is not None else load_dataset(dataset_dir)
    entries = sorted(entries, key=lambda e: e[0])
    decodable = [(n, im) for n, im in entries if isinstance(im, Image)]
    if not decodable:
        raise BenchmarkError(f"no decodable images in {dataset_dir}")
    dataset = config.dataset_name or (Path(dataset_dir).name if dataset_dir else "dataset")
    names = [n for n, _ in decodable]
    meta = {
        "dataset": dataset,
        "seed": config.seed,
        "config_hash": config_hash(config, specs, names),
        "payload": config.payload,
        "threshold": config.threshold,
        "images": len(decodable),
        "undecodable": len(entries) - len(decodable),
        "methods": {},
    }
    cells: list[Cell] = []
    scores: dict = {}
    for mi, spec in enumerate(specs):
        embedder = Embedder(spec)
        samples: list[_Sample] = []
        pairs: list[tuple[Image, Image]] = []
        failures = []
        for ii, (name, cover) in enumerate(decodable):
            donor = decodable[(ii + 1) % len(decodable)][1]
            try:
                sample, stego = _one(embedder, cover, donor, config, (ii, mi))
            except (StegoError, ValueError) as exc:
                failures.append(f"{name}: {exc}")
                continue
            samples.append(sample)
            pairs.append((cover, stego))
        label = spec.label
        meta["methods"][label] = {"spec": str(spec), "n": len(samples), "failures": len(failures),
                                  "failure_messages": failures}
        if not samples:
            raise BenchmarkError(f"{label}: every image failed ({failures[0]})")
        n = len(samples)
        for pair_kind, attr in (("cover/stego", "quality"), ("secret/recovered", "secret")):
            for metric in QUALITY:
                vals = [getattr(s, attr)[metric] for s in samples]
                cells.append(Cell(dataset, label, metric, pair_kind, _mean(vals), False, n))
        cells.append(Cell(dataset, label, "ber", "secret/recovered", _mean([s.ber for s in samples]), False, n))
        cover_scores = {"chi2": [s.cover_scores["chi2"] for s in samples]}
        stego_scores = {"chi2": [s.stego_scores["chi2"] for s in samples]}
        cells.append(Cell(dataset, label, "detect_chi2", "cover/stego",
                          balanced_accuracy(cover_scores["chi2"], stego_scores["chi2"], config.threshold), False, n))
        if config.cnn_steps and len(pairs) >= 2:
            split = (len(pairs) + 1) // 2
            train, held = pairs[:split], pairs[split:]
            det = CnnDetector(cover.channels, config.cnn_crop, seed=config.seed).fit(
                [c for c, _ in train], [s for _, s in train], steps=config.cnn_steps, seed=config.seed)
            cover_scores["cnn"] = [det.score(c) for c, _ in held]
            stego_scores["cnn"] = [det.score(s) for _, s in held]
            cells.append(Cell(dataset, label, "detect_cnn", "cover/stego",
                              balanced_accuracy(cover_scores["cnn"], stego_scores["cnn"], config.threshold),
                              False, len(held)))
        scores[label] = {d: {"cover": cover_scores[d], "stego": stego_scores[d]} for d in cover_scores}
    cells = flag_best(cells)
    if config.include_reference:
        meta["reference_label"] = REFERENCE_LABEL
        cells.extend(reference_cells())
    return BenchReport(cells, meta, scores)
