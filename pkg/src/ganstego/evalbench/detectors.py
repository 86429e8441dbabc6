"""Steganalysis detectors: pairs-of-values chi-square and a learned CNN probe."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import chi2

from ..autodiff import Adam, Tape, Tensor
from ..gan import Discriminator, ModelConfig, discriminator_loss
from ..media.image import Image, center_crop

MIN_EXPECTED = 5.0


def chi_square_lsb_score(image: Image) -> float:
    """Probability-like score that the image carries full-capacity LSB embedding.

    Counts of each value pair (2i, 2i+1) are pooled over all channel bytes.
    LSB replacement with random bits equalizes the two members of every
    pair, so the statistic sum((n_2i - e)^2 / e) with e = (n_2i + n_2i+1) / 2
    stays small. The score is the chi-square upper tail of that statistic
    with (pairs - 1) degrees of freedom: near 1 for embedded images, near 0
    when pairs are unbalanced. Pairs with e < 5 are skipped; with fewer
    than two usable pairs the score is 0.
    """
    pixels = image.pixels if isinstance(image, Image) else np.asarray(image, dtype=np.uint8)
    hist = np.bincount(pixels.reshape(-1), minlength=256).astype(np.float64)
    even, odd = hist[0::2], hist[1::2]
    expected = (even + odd) / 2
    used = expected >= MIN_EXPECTED
    k = int(used.sum())
    if k < 2:
        return 0.0
    stat = float(np.sum((even[used] - expected[used]) ** 2 / expected[used]))
    return float(chi2.sf(stat, k - 1))


@dataclass(frozen=True)
class Detector:
    """A named scoring function returning P(stego) in [0, 1]."""

    kind: str
    score: Callable[[Image], float]
    params: tuple = ()

    def __call__(self, image: Image) -> float:
        return self.score(image)


def chi_square_detector() -> Detector:
    return Detector("chi2", chi_square_lsb_score, (("min_expected", MIN_EXPECTED),))


def balanced_accuracy(cover_scores, stego_scores, threshold: float = 0.5) -> float:
    """Mean of TPR on stegos and TNR on covers; a score above ``threshold`` means stego."""
    cs = np.asarray(cover_scores, dtype=np.float64)
    ss = np.asarray(stego_scores, dtype=np.float64)
    if cs.size == 0 or ss.size == 0:
        raise ValueError("detection accuracy needs non-empty cover and stego sets")
    tpr = float(np.mean(ss > threshold))
    tnr = float(np.mean(cs <= threshold))
    return 0.5 * (tpr + tnr)


def detection_accuracy(detector, covers: Sequence, stegos: Sequence, threshold: float = 0.5) -> float:
    if len(covers) == 0 or len(stegos) == 0:
        raise ValueError("detection accuracy needs non-empty cover and stego sets")
    return balanced_accuracy([detector(c) for c in covers], [detector(s) for s in stegos], threshold)


class CnnDetector:
    """Discriminator-topology classifier trained to tell covers from stegos.

    Images are center-cropped to ``crop`` and normalized; the network's
    P(cover) output is turned into P(stego) = 1 - P(cover).
    """

    def __init__(self, channels: int = 3, crop: int = 64, width: int = 8, seed: int = 0):
        self.crop = crop
        self.net = Discriminator(ModelConfig(channels=channels, d_width=width), seed)

    def _tensor(self, images: Sequence[Image]) -> Tensor:
        arrs = [center_crop(im, self.crop, self.crop).pixels.transpose(2, 0, 1) for im in images]
        return Tensor((np.stack(arrs).astype(np.float32) / np.float32(127.5)) - np.float32(1.0))

    def fit(self, covers: Sequence[Image], stegos: Sequence[Image], steps: int = 200,
            batch: int = 8, lr: float = 1e-3, seed: int = 0) -> "CnnDetector":
        if not covers or not stegos:
            raise ValueError("detector training needs covers and stegos")
        rng = np.random.default_rng(seed)
        opt = Adam(self.net.parameters(), lr=lr)
        self.net.train()
        half = max(2, batch // 2)
        for _ in range(steps):
            ci = rng.integers(0, len(covers), half)
            si = rng.integers(0, len(stegos), half)
            xc = self._tensor([covers[i] for i in ci])
            xs = self._tensor([stegos[i] for i in si])
            with Tape() as tape:
                loss = discriminator_loss(self.net(xc), self.net(xs))
                opt.step(tape.backward(loss, self.net.parameters()))
        self.net.eval()
        return self

    def score(self, image: Image) -> float:
        p_cover = float(self.net(self._tensor([image])).data[0])
        return 1.0 - p_cover

    def detector(self) -> Detector:
        return Detector("cnn", self.score, (("crop", self.crop),))
