"""Generator (U-Net), discriminator, extractor and the fixed feature network."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..autodiff import (
    BatchNorm2d, Conv2d, ConvTranspose2d, Dense, Module, Tensor, concat, global_avg_pool,
    leaky_relu, sigmoid, tanh,
)
from ..autodiff.functional import avg_pool2d
from ..autodiff.nn import LEAKY_SLOPE, layer_rng
from ..errors import ExtentError

# spawn-key prefixes so each network draws from its own streams
_G, _D, _E, _F = 1, 2, 3, 4


@dataclass(frozen=True)
class ModelConfig:
    channels: int = 3
    bpp: int = 1
    g_width: int = 32
    g_depth: int = 3
    d_width: int = 16
    d_blocks: int = 4
    e_width: int = 32
    e_layers: int = 5
    f_widths: tuple = (8, 16, 32)

    def __post_init__(self):
        if self.channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {self.channels}")
        for name in ("bpp", "g_width", "g_depth", "d_width", "d_blocks", "e_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.e_layers < 2:
            raise ValueError("extractor needs at least 2 layers")
        object.__setattr__(self, "f_widths", tuple(int(w) for w in self.f_widths))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["f_widths"] = list(self.f_widths)
        return d


def _lrelu(x: Tensor) -> Tensor:
    return leaky_relu(x, LEAKY_SLOPE)


def _as_batch(x) -> tuple[Tensor, bool]:
    t = x if isinstance(x, Tensor) else Tensor(x)
    if t.ndim == 3:
        return t.reshape(1, *t.shape), True
    if t.ndim != 4:
        raise ExtentError(f"expected [C,H,W] or [N,C,H,W], got shape {t.shape}")
    return t, False


class Generator(Module):
    """U-Net: strided-conv encoder, transposed-conv decoder, skip concatenation.

    Input is the cover concatenated with the secret planes along channels; the
    raw input is also concatenated into the last skip so the head can pass
    cover pixels straight through.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        super().__init__()
        self.depth = cfg.g_depth
        self.channels = cfg.channels
        self.bpp = cfg.bpp
        cin = cfg.channels + cfg.bpp
        w = cfg.g_width
        self.stem = Conv2d(cin, w, 3, 1, 1, rng=layer_rng(seed, _G, 0), dtype=dtype)
        widths = [w * 2**i for i in range(cfg.g_depth + 1)]
        downs, down_bns = [], []
        for i in range(cfg.g_depth):
            downs.append(Conv2d(widths[i], widths[i + 1], 4, 2, 1, bias=False, rng=layer_rng(seed, _G, 1 + i), dtype=dtype))
            down_bns.append(BatchNorm2d(widths[i + 1], dtype=dtype))
        ups, up_bns = [], []
        for i in reversed(range(cfg.g_depth)):
            fin = widths[i + 1] if i == cfg.g_depth - 1 else 2 * widths[i + 1]
            ups.append(ConvTranspose2d(fin, widths[i], 4, 2, 1, bias=False, rng=layer_rng(seed, _G, 10 + i), dtype=dtype))
            up_bns.append(BatchNorm2d(widths[i], dtype=dtype))
        for i, (c, b) in enumerate(zip(downs, down_bns)):
            setattr(self, f"down{i}", c)
            setattr(self, f"down{i}_bn", b)
        for i, (c, b) in enumerate(zip(ups, up_bns)):
            setattr(self, f"up{i}", c)
            setattr(self, f"up{i}_bn", b)
        object.__setattr__(self, "downs", list(zip(downs, down_bns)))
        object.__setattr__(self, "ups", list(zip(ups, up_bns)))
        self.head = Conv2d(2 * w + cin, cfg.channels, 3, 1, 1, rng=layer_rng(seed, _G, 20), dtype=dtype)

    @property
    def multiple(self) -> int:
        return 2**self.depth

    def check_extent(self, h: int, w: int) -> None:
        m = self.multiple
        if h % m or w % m:
            raise ExtentError(f"generator needs extents that are multiples of {m}, got {h}x{w}")

    def forward(self, cover, secret) -> Tensor:
        cover, squeeze = _as_batch(cover)
        secret, _ = _as_batch(secret)
        n, c, h, w = cover.shape
        self.check_extent(h, w)
        if c != self.channels or secret.shape != (n, self.bpp, h, w):
            raise ExtentError(
                f"cover {cover.shape} / secret {secret.shape} do not match a {self.channels}-channel, "
                f"{self.bpp}-plane generator"
            )
        x = concat([cover, secret], axis=1)
        skips = [_lrelu(self.stem(x))]
        for conv, bn in self.downs:
            skips.append(_lrelu(bn(conv(skips[-1]))))
        y = skips.pop()
        for conv, bn in self.ups:
            y = _lrelu(bn(conv(y)))
            y = concat([y, skips.pop()], axis=1)
        out = tanh(self.head(concat([y, x], axis=1)))
        return out.reshape(*out.shape[1:]) if squeeze else out


class Discriminator(Module):
    """Strided conv blocks with batch norm and leaky ReLU, pooled into one dense unit.

    Outputs P(cover) per image.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        super().__init__()
        self.blocks = cfg.d_blocks
        self.channels = cfg.channels
        convs, bns = [], []
        cin = cfg.channels
        for i in range(cfg.d_blocks):
            cout = cfg.d_width * 2**i
            convs.append(Conv2d(cin, cout, 4, 2, 1, bias=(i == 0), rng=layer_rng(seed, _D, i), dtype=dtype))
            bns.append(BatchNorm2d(cout, dtype=dtype) if i > 0 else None)
            cin = cout
        for i, (c, b) in enumerate(zip(convs, bns)):
            setattr(self, f"conv{i}", c)
            if b is not None:
                setattr(self, f"bn{i}", b)
        object.__setattr__(self, "layers", list(zip(convs, bns)))
        self.fc = Dense(cin, 1, rng=layer_rng(seed, _D, 100), dtype=dtype)

    @property
    def multiple(self) -> int:
        return 2**self.blocks

    def logits(self, image) -> Tensor:
        x, _ = _as_batch(image)
        m = self.multiple
        if x.shape[2] % m or x.shape[3] % m:
            raise ExtentError(f"discriminator needs extents that are multiples of {m}, got {x.shape[2]}x{x.shape[3]}")
        if x.shape[1] != self.channels:
            raise ExtentError(f"discriminator expects {self.channels} channels, got {x.shape[1]}")
        for conv, bn in self.layers:
            x = conv(x)
            if bn is not None:
                x = bn(x)
            x = _lrelu(x)
        return self.fc(global_avg_pool(x)).reshape(-1)

    def forward(self, image) -> Tensor:
        return sigmoid(self.logits(image))


class Extractor(Module):
    """Same-extent 3x3 conv stack mapping a stego tensor to secret-plane logits."""

    def __init__(self, cfg: ModelConfig, seed: int = 0, dtype=np.float32):
        super().__init__()
        self.channels = cfg.channels
        self.bpp = cfg.bpp
        convs, bns = [], []
        cin = cfg.channels
        for i in range(cfg.e_layers):
            last = i == cfg.e_layers - 1
            cout = cfg.bpp if last else cfg.e_width
            convs.append(Conv2d(cin, cout, 3, 1, 1, bias=last, rng=layer_rng(seed, _E, i), dtype=dtype))
            bns.append(None if last else BatchNorm2d(cout, dtype=dtype))
            cin = cout
        for i, (c, b) in enumerate(zip(convs, bns)):
            setattr(self, f"conv{i}", c)
            if b is not None:
                setattr(self, f"bn{i}", b)
        object.__setattr__(self, "layers", list(zip(convs, bns)))

    def forward(self, stego) -> Tensor:
        x, squeeze = _as_batch(stego)
        if x.shape[1] != self.channels:
            raise ExtentError(f"extractor expects {self.channels} channels, got {x.shape[1]}")
        for conv, bn in self.layers:
            x = conv(x)
            if bn is not None:
                x = _lrelu(bn(x))
        return x.reshape(*x.shape[1:]) if squeeze else x


# keeps feature variance roughly constant through each conv + leaky ReLU
_LRELU_GAIN = float(np.sqrt(2.0 / (1.0 + LEAKY_SLOPE**2)))


def _orthonormal_rows(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    a = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return q.T if rows <= cols else q


class FeatureNet(Module):
    """Fixed random conv features standing in for a pretrained perceptual network.

    Six 3x3 convs in three pairs, 2x average pooling between pairs, with a
    feature tap after each pair (after conv 2, 4 and 6). Weights have
    orthonormal rows (scaled by the leaky-ReLU gain) and are never trained. ``identity=True`` builds a
    single tap that returns its input unchanged.
    """

    def __init__(self, channels: int = 3, widths=(8, 16, 32), seed: int = 0, dtype=np.float32,
                 identity: bool = False, zero: bool = False):
        super().__init__()
        self.identity = identity
        self.weights: list[Tensor] = []
        if identity:
            return
        cin = channels
        idx = 0
        for w in widths:
            for _ in range(2):
                rng = layer_rng(seed, _F, idx)
                k = cin * 9
                mat = np.zeros((w, k)) if zero else _orthonormal_rows(rng, w, k) * _LRELU_GAIN
                # not requires_grad, so never registered as a trainable parameter
                self.weights.append(Tensor(mat.reshape(w, cin, 3, 3).astype(dtype)))
                cin = w
                idx += 1

    def features(self, x: Tensor) -> list[Tensor]:
        from ..autodiff import conv2d

        if self.identity:
            return [x]
        taps = []
        for i, w in enumerate(self.weights):
            if i and i % 2 == 0:
                x = avg_pool2d(x, 2)
            x = _lrelu(conv2d(x, w, None, 1, 1))
            if i % 2 == 1:
                taps.append(x)
        return taps


@dataclass
class ModelBundle:
    config: ModelConfig
    generator: Generator
    discriminator: Discriminator
    extractor: Extractor
    features: FeatureNet

    @classmethod
    def build(cls, cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> "ModelBundle":
        return cls(
            cfg,
            Generator(cfg, seed, dtype),
            Discriminator(cfg, seed, dtype),
            Extractor(cfg, seed, dtype),
            FeatureNet(cfg.channels, cfg.f_widths, seed, dtype),
        )

    def networks(self) -> dict[str, Module]:
        return {"G": self.generator, "D": self.discriminator, "E": self.extractor}

    def named_parameters(self):
        for prefix, net in self.networks().items():
            yield from net.named_parameters(prefix + ".")

    def named_buffers(self):
        for prefix, net in self.networks().items():
            yield from net.named_buffers(prefix + ".")

    def train(self, mode: bool = True) -> None:
        for net in self.networks().values():
            net.train(mode)

    def eval(self) -> None:
        self.train(False)


def generator_forward(g: Generator, cover, secret) -> Tensor:
    return g(cover, secret)


def discriminator_forward(d: Discriminator, image) -> Tensor:
    return d(image)


def extractor_forward(e: Extractor, stego) -> Tensor:
    return e(stego)
