"""Alternating D / G / E optimization with checkpoints and a loss trace."""
from __future__ import annotations

import csv
import io
import math
from contextlib import contextmanager
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from ..autodiff import Adam, Tape, Tensor, set_stat_updates
from ..errors import StegoError
from ..fsutil import atomic_write
from ..gan import (
    ModelBundle, discriminator_loss, generator_adversarial_loss, perceptual_loss,
    reconstruction_loss, total_loss,
)
from .checkpoint import Checkpoint, ConfigHashMismatch
from .config import TrainConfig
from .data import CoverDataset

NETS = ("G", "D", "E")


class NonFiniteLoss(StegoError):
    def __init__(self, phase: str, step: int, value: float):
        self.phase = phase
        self.step = step
        super().__init__(f"non-finite {phase} loss ({value}) at step {step}")


@dataclass(frozen=True)
class TraceRecord:
    step: int
    l_adv: float
    l_rec: float
    l_perc: float
    total: float
    d_acc: float
    e_bitacc: float


TRACE_COLUMNS = tuple(f.name for f in fields(TraceRecord))


class TrainTrace(list):
    """List of :class:`TraceRecord` with CSV round-tripping (floats written via repr)."""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for rec in self:
            w.writerow([str(rec.step)] + [repr(float(v)) for v in astuple(rec)[1:]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrainTrace":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(rows[0]) != TRACE_COLUMNS:
            raise ValueError(f"trace header must be {','.join(TRACE_COLUMNS)}")
        return cls(TraceRecord(int(r[0]), *map(float, r[1:])) for r in rows[1:])

    def save(self, path) -> None:
        atomic_write(path, self.to_csv().encode())


@contextmanager
def _frozen_stats(*nets):
    """Run networks in batch-statistics mode without touching their running buffers."""
    for n in nets:
        set_stat_updates(n, False)
    try:
        yield
    finally:
        for n in nets:
            set_stat_updates(n, True)


def _check(value: float, phase: str, step: int) -> float:
    if not math.isfinite(value):
        raise NonFiniteLoss(phase, step, value)
    return value


class Trainer:
    """Models, optimizers and step counter for one training configuration."""

    def __init__(self, config: TrainConfig, dataset: CoverDataset | None = None):
        self.config = config
        self.dataset = dataset
        self.models = ModelBundle.build(config.model_config(), config.seed)
        self.models.train()
        nets = self.models.networks()
        lrs = {"G": config.lr_g, "D": config.lr_d, "E": config.lr_e}
        self.optimizers = {
            k: Adam(nets[k].parameters(), lr=lrs[k], betas=(config.beta1, config.beta2)) for k in NETS
        }
        self.step = 0

    # -- phases ------------------------------------------------------------
    def _tensors(self, covers: np.ndarray, bits: np.ndarray):
        cfg = self.config
        if covers.shape[1:] != (cfg.channels, cfg.crop, cfg.crop) or bits.shape[1:] != (cfg.bpp, cfg.crop, cfg.crop):
            raise ValueError(f"batch shapes {covers.shape}/{bits.shape} do not match the configuration")
        x = Tensor(covers.astype(np.float32, copy=False))
        s = Tensor(bits.astype(np.float32) * 2 - 1)
        target = Tensor(bits.astype(np.float32))
        return x, s, target

    def phase_d(self, x: Tensor, s: Tensor) -> tuple[float, float]:
        """Update D on covers vs current stegos; returns (loss, balanced accuracy)."""
        G, D = self.models.generator, self.models.discriminator
        with _frozen_stats(G):
            fake = Tensor(G(x, s).data)
        with Tape() as tape:
            d_real, d_fake = D(x), D(fake)
            ld = discriminator_loss(d_real, d_fake)
            _check(ld.item(), "discriminator", self.step)
            self.optimizers["D"].step(tape.backward(ld, D.parameters()))
        acc = 0.5 * (float(np.mean(d_real.data > 0.5)) + float(np.mean(d_fake.data < 0.5)))
        return ld.item(), acc

    def phase_g(self, x: Tensor, s: Tensor, target: Tensor) -> tuple[float, float, float, float]:
        """Update G on adv + lambda_rec * rec + lambda_perc * perc; returns the four values."""
        G, D, E, F = (self.models.generator, self.models.discriminator,
                      self.models.extractor, self.models.features)
        with _frozen_stats(D, E), Tape() as tape:
            stego = G(x, s)
            adv = generator_adversarial_loss(D(stego))
            rec = reconstruction_loss(target, E(stego))
            perc = perceptual_loss(F, x, stego)
            lg = total_loss(adv, rec, perc, self.config.weights)
            _check(lg.item(), "generator", self.step)
            self.optimizers["G"].step(tape.backward(lg, G.parameters()))
        return adv.item(), rec.item(), perc.item(), lg.item()

    def phase_e(self, x: Tensor, s: Tensor, target: Tensor) -> tuple[float, float]:
        """Update E on stegos from the current G; returns (loss, pre-update bit accuracy)."""
        G, E = self.models.generator, self.models.extractor
        with _frozen_stats(G):
            stego = Tensor(G(x, s).data)
        with Tape() as tape:
            logits = E(stego)
            le = reconstruction_loss(target, logits)
            _check(le.item(), "extractor", self.step)
            self.optimizers["E"].step(tape.backward(le, E.parameters()))
        acc = float(np.mean((logits.data > 0) == (target.data > 0.5)))
        return le.item(), acc

    def train_step(self, covers: np.ndarray, bits: np.ndarray) -> TraceRecord:
        """One D phase, one G phase and one E phase (times the configured ratios).

        Only the phase's own network is updated; the other networks still run
        on batch statistics but leave their running buffers alone. The record
        holds the generator objective terms from the last G phase, the
        discriminator's balanced accuracy from the last D phase and the
        extractor's bit accuracy from the last E phase (measured before its
        update).
        """
        cfg = self.config
        x, s, target = self._tensors(covers, bits)
        for _ in range(cfg.d_phases):
            _, d_acc = self.phase_d(x, s)
        for _ in range(cfg.g_phases):
            adv, rec, perc, lg = self.phase_g(x, s, target)
        for _ in range(cfg.e_phases):
            _, e_acc = self.phase_e(x, s, target)
        rec_ = TraceRecord(self.step, adv, rec, perc, lg, d_acc, e_acc)
        self.step += 1
        return rec_

    def next_batch(self) -> tuple[np.ndarray, np.ndarray]:
        if self.dataset is None:
            raise ValueError("trainer has no dataset")
        return self.dataset.batch(self.config.seed, self.step, self.config.batch_size, self.config.bpp)

    # -- state -------------------------------------------------------------
    def checkpoint(self) -> Checkpoint:
        blobs = {}
        for name, p in self.models.named_parameters():
            blobs["param/" + name] = p.data.copy()
        for name, b in self.models.named_buffers():
            blobs["buffer/" + name] = b.copy()
        counters = {}
        for k in NETS:
            st = self.optimizers[k].state
            counters[f"adam/{k}/step"] = st.step
            for i, (m, v) in enumerate(zip(st.m, st.v)):
                blobs[f"adam/{k}/m/{i}"] = m.copy()
                blobs[f"adam/{k}/v/{i}"] = v.copy()
        # batches are keyed by (seed, step), so these two values are the whole RNG state
        counters["rng/seed"] = self.config.seed
        counters["rng/step"] = self.step
        return Checkpoint(self.config, self.step, blobs, counters)

    def restore(self, ckpt: Checkpoint) -> None:
        if ckpt.config_hash != self.config.hash():
            raise ConfigHashMismatch(self.config.hash(), ckpt.config_hash)
        load_models(self.models, ckpt)
        for k in NETS:
            st = self.optimizers[k].state
            st.step = ckpt.counters[f"adam/{k}/step"]
            for i in range(len(st.m)):
                st.m[i][...] = ckpt.blobs[f"adam/{k}/m/{i}"]
                st.v[i][...] = ckpt.blobs[f"adam/{k}/v/{i}"]
        self.step = ckpt.step


def load_models(models: ModelBundle, ckpt: Checkpoint) -> None:
    """Copy parameter and buffer blobs into ``models`` in place."""
    for prefix, items in (("param/", models.named_parameters()), ("buffer/", models.named_buffers())):
        for name, target in items:
            key = prefix + name
            if key not in ckpt.blobs:
                raise KeyError(f"checkpoint is missing {key}")
            arr = target.data if prefix == "param/" else target
            src = ckpt.blobs[key]
            if src.shape != arr.shape:
                raise ValueError(f"{key}: checkpoint shape {src.shape} vs model {arr.shape}")
            arr[...] = src


def _plateaued(trace: TrainTrace, window: int, tol: float) -> bool:
    if len(trace) < 2 * window:
        return False
    acc = np.array([r.e_bitacc for r in trace[-2 * window :]])
    return acc[window:].mean() - acc[:window].mean() < tol


def train_run(config: TrainConfig, dataset: CoverDataset | None = None, resume: Checkpoint | None = None,
              out_dir=None, progress=None) -> tuple[Checkpoint, TrainTrace]:
    """Train until ``config.steps`` total steps (or an early-stop plateau).

    With ``out_dir`` set, checkpoints are written every
    ``checkpoint_interval`` steps as ``ckpt_<step>.sgf`` plus ``final.sgf``
    and ``trace.csv`` at the end. The returned trace covers only the steps
    executed by this call.
    """
    if dataset is None:
        dataset = CoverDataset.from_dir(config.dataset, config.crop, config.channels)
    trainer = Trainer(config, dataset)
    if resume is not None:
        trainer.restore(resume)
    out = Path(out_dir) if out_dir else (Path(config.out_dir) if config.out_dir else None)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    trace = TrainTrace()
    while trainer.step < config.steps:
        rec = trainer.train_step(*trainer.next_batch())
        trace.append(rec)
        if progress is not None:
            progress(rec)
        if out is not None and trainer.step % config.checkpoint_interval == 0:
            trainer.checkpoint().save(out / f"ckpt_{trainer.step:06d}.sgf")
        if config.early_stop and _plateaued(trace, config.early_stop_window, config.early_stop_tol):
            break
    final = trainer.checkpoint()
    if out is not None:
        final.save(out / "final.sgf")
        trace.save(out / "trace.csv")
    return final, trace
