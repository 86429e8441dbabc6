"""Adversarial, reconstruction, perceptual and combined objectives."""
from __future__ import annotations

from dataclasses import dataclass

from ..autodiff import ShapeError, Tensor, clip, log, sigmoid, square
from .models import FeatureNet

PROB_EPS = 1e-7


@dataclass(frozen=True)
class LossWeights:
    rec: float = 10.0
    perc: float = 1.0

    def __post_init__(self):
        if self.rec < 0 or self.perc < 0:
            raise ValueError(f"loss weights must be non-negative, got rec={self.rec}, perc={self.perc}")


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _clamped_log(p: Tensor) -> Tensor:
    return log(clip(p, PROB_EPS, 1.0 - PROB_EPS))


def adversarial_loss(d_real, d_fake) -> Tensor:
    """mean log D(x) + mean log(1 - D(G(s, x))): the value the discriminator maximizes."""
    d_real, d_fake = _as_tensor(d_real), _as_tensor(d_fake)
    if d_real.size == 0 or d_fake.size == 0:
        raise ShapeError("adversarial loss needs a non-empty batch")
    return _clamped_log(d_real).mean() + log(1.0 - clip(d_fake, PROB_EPS, 1.0 - PROB_EPS)).mean()


def discriminator_loss(d_real, d_fake) -> Tensor:
    return -adversarial_loss(d_real, d_fake)


def generator_adversarial_loss(d_fake) -> Tensor:
    """Non-saturating generator term: -mean log D(G(s, x))."""
    d_fake = _as_tensor(d_fake)
    if d_fake.size == 0:
        raise ShapeError("adversarial loss needs a non-empty batch")
    return -_clamped_log(d_fake).mean()


def reconstruction_loss(targets, logits) -> Tensor:
    """Per-element mean of (s - sigmoid(logits))^2 with targets s in {0, 1}."""
    targets, logits = _as_tensor(targets), _as_tensor(logits)
    if targets.shape != logits.shape:
        raise ShapeError(f"target shape {targets.shape} differs from logits {logits.shape}")
    return square(targets - sigmoid(logits)).mean()


def perceptual_loss(f: FeatureNet, cover, stego) -> Tensor:
    """Sum over feature taps of the per-tap mean squared feature difference."""
    cover, stego = _as_tensor(cover), _as_tensor(stego)
    if cover.shape != stego.shape:
        raise ShapeError(f"cover shape {cover.shape} differs from stego {stego.shape}")
    if cover.ndim == 3:
        cover, stego = cover.reshape(1, *cover.shape), stego.reshape(1, *stego.shape)
    total = None
    for fc, fs in zip(f.features(cover), f.features(stego)):
        term = square(fc - fs).mean()
        total = term if total is None else total + term
    return total


def total_loss(adv, rec, perc, w: LossWeights):
    """adv + w.rec * rec + w.perc * perc; works on tensors or plain floats."""
    return adv + w.rec * rec + w.perc * perc
