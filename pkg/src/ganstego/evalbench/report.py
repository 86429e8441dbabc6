"""Benchmark report model and its CSV / JSON serializations."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..fsutil import atomic_write

CSV_COLUMNS = ("dataset", "method", "metric", "pair_kind", "value", "best_flag", "n")
HIGHER_BETTER = {"psnr", "ssim"}
LOWER_BETTER = {"rmse", "mae", "ber"}
# detection accuracies are best at chance level (0.5)
CHANCE_BEST_PREFIX = "detect_"

# Published reference values for context only; none of them is reproduced here.
REFERENCE_LABEL = "published reference values, not reproduced"
REFERENCE_VALUES = {
    "DIV2K": {
        "4bit-LSB": {"ssim": 0.895, "psnr": 24.99, "rmse": 18.16, "mae": 15.57},
        "CAIS": {"ssim": 0.965, "psnr": 36.1, "rmse": 5.80, "mae": 4.36},
        "HiNet": {"ssim": 0.993, "psnr": 46.57, "rmse": 1.32, "mae": 0.84},
        "GAN": {"ssim": 0.995, "psnr": 47.12, "rmse": 1.25, "mae": 0.78},
    },
    "ImageNet": {
        "4bit-LSB": {"ssim": 0.896, "psnr": 25.00, "rmse": 17.90, "mae": 15.27},
        "CAIS": {"ssim": 0.943, "psnr": 33.54, "rmse": 6.33, "mae": 4.70},
        "HiNet": {"ssim": 0.960, "psnr": 36.63, "rmse": 6.07, "mae": 4.16},
        "GAN": {"ssim": 0.965, "psnr": 37.10, "rmse": 5.80, "mae": 4.00},
    },
    "COCO": {
        "4bit-LSB": {"ssim": 0.894, "psnr": 24.96, "rmse": 17.93, "mae": 15.31},
        "CAIS": {"ssim": 0.944, "psnr": 33.70, "rmse": 6.13, "mae": 4.55},
        "HiNet": {"ssim": 0.961, "psnr": 36.55, "rmse": 6.04, "mae": 4.09},
        "GAN": {"ssim": 0.968, "psnr": 37.20, "rmse": 5.90, "mae": 3.95},
    },
}


def _same(a: float, b: float) -> bool:
    return (math.isnan(a) and math.isnan(b)) or a == b


def fmt_float(v: float) -> str:
    """repr for finite values, 'inf' / '-inf' / 'nan' sentinels otherwise."""
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


@dataclass(frozen=True, eq=False)
class Cell:
    dataset: str
    method: str
    metric: str
    pair_kind: str
    value: float
    best_flag: bool
    n: int

    def key(self) -> tuple:
        return (self.dataset, self.method, self.metric, self.pair_kind)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Cell):
            return NotImplemented
        return (self.key() == other.key() and _same(self.value, other.value)
                and self.best_flag == other.best_flag and self.n == other.n)


@dataclass(eq=False)
class BenchReport:
    cells: list[Cell] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    scores: dict = field(default_factory=dict)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BenchReport):
            return NotImplemented
        return (self.cells == other.cells
                and json.dumps(self.metadata, sort_keys=True) == json.dumps(other.metadata, sort_keys=True)
                and _scores_text(self.scores) == _scores_text(other.scores))

    def value(self, method: str, metric: str, pair_kind: str = "cover/stego", dataset: str | None = None) -> float:
        for c in self.cells:
            if c.method == method and c.metric == metric and c.pair_kind == pair_kind and (
                    dataset is None or c.dataset == dataset):
                return c.value
        raise KeyError((dataset, method, metric, pair_kind))

    def best(self, metric: str, pair_kind: str = "cover/stego") -> list[str]:
        return [c.method for c in self.cells if c.metric == metric and c.pair_kind == pair_kind and c.best_flag]

    # -- CSV ---------------------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for c in self.cells:
            w.writerow([c.dataset, c.method, c.metric, c.pair_kind, fmt_float(c.value),
                        "true" if c.best_flag else "false", str(c.n)])
        return buf.getvalue()

    @staticmethod
    def cells_from_csv(text: str) -> list[Cell]:
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != CSV_COLUMNS:
            raise ValueError(f"report CSV header must be {','.join(CSV_COLUMNS)}")
        return [Cell(r[0], r[1], r[2], r[3], float(r[4]), r[5] == "true", int(r[6])) for r in rows[1:]]

    # -- JSON --------------------------------------------------------------
    def to_json(self) -> str:
        nested: dict = {}
        for c in self.cells:
            slot = nested.setdefault(c.dataset, {}).setdefault(c.method, {}).setdefault(c.pair_kind, {})
            slot[c.metric] = {"value": fmt_float(c.value) if not math.isfinite(c.value) else c.value,
                              "best": c.best_flag, "n": c.n}
        doc = {
            "metadata": self.metadata,
            "results": nested,
            "order": [list(c.key()) for c in self.cells],
            "scores": _encode_scores(self.scores),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "BenchReport":
        doc = json.loads(text)
        cells = []
        for dataset, method, metric, pair_kind in doc["order"]:
            entry = doc["results"][dataset][method][pair_kind][metric]
            cells.append(Cell(dataset, method, metric, pair_kind, float(entry["value"]), bool(entry["best"]),
                              int(entry["n"])))
        return cls(cells, doc["metadata"], _decode_scores(doc.get("scores", {})))

    def write(self, out_dir, formats=("csv", "json")) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = []
        for fmt in formats:
            if fmt == "csv":
                p = out / "report.csv"
                atomic_write(p, self.to_csv().encode())
            elif fmt == "json":
                p = out / "report.json"
                atomic_write(p, self.to_json().encode())
            else:
                raise ValueError(f"unknown report format {fmt!r}")
            written.append(p)
        return written


def _encode_scores(scores: dict) -> dict:
    return {m: {d: {k: [fmt_float(v) for v in vals] for k, vals in per.items()} for d, per in dets.items()}
            for m, dets in scores.items()}


def _decode_scores(doc: dict) -> dict:
    return {m: {d: {k: [float(v) for v in vals] for k, vals in per.items()} for d, per in dets.items()}
            for m, dets in doc.items()}


def _scores_text(scores: dict) -> str:
    return json.dumps(_encode_scores(scores), sort_keys=True)


def emit_report(report: BenchReport, out_dir, formats=("csv", "json")) -> list[Path]:
    return report.write(out_dir, formats)


def flag_best(cells: list[Cell]) -> list[Cell]:
    """Set best_flag per (dataset, metric, pair_kind) honoring each metric's direction.

    Ties are all flagged; NaN never wins; reference rows (n == 0) are ignored.
    """
    groups: dict[tuple, list[int]] = {}
    for i, c in enumerate(cells):
        if c.n > 0 and not math.isnan(c.value):
            groups.setdefault((c.dataset, c.metric, c.pair_kind), []).append(i)
    best = set()
    for (_, metric, _), idx in groups.items():
        if metric in HIGHER_BETTER:
            key = lambda i: -cells[i].value  # noqa: E731
        elif metric in LOWER_BETTER:
            key = lambda i: cells[i].value  # noqa: E731
        elif metric.startswith(CHANCE_BEST_PREFIX):
            key = lambda i: abs(cells[i].value - 0.5)  # noqa: E731
        else:
            continue
        top = min(key(i) for i in idx)
        best.update(i for i in idx if key(i) == top)
    return [Cell(c.dataset, c.method, c.metric, c.pair_kind, c.value, i in best, c.n) for i, c in enumerate(cells)]


def reference_cells() -> list[Cell]:
    """Published reference values as secret/recovered rows with n = 0."""
    out = []
    for dataset, methods in REFERENCE_VALUES.items():
        for method, vals in methods.items():
            for metric in ("ssim", "psnr", "rmse", "mae"):
                out.append(Cell(dataset, f"ref:{method}", metric, "secret/recovered", vals[metric], False, 0))
    return out
