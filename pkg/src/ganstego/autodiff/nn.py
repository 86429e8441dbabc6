"""Layer objects with named parameters, buffers and seeded initialization."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import functional as F
from .tensor import ShapeError, Tensor, leaky_relu, relu, sigmoid, tanh

LEAKY_SLOPE = 0.2


def layer_rng(seed: int, *path: int) -> np.random.Generator:
    """Independent generator for one layer, keyed by ``(seed, *path)``.

    SeedSequence spawn keys give a counter-style split: the stream for a
    layer depends only on the root seed and the layer's position, never on
    how many draws other layers made.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(path)))


def kaiming_uniform(rng: np.random.Generator, shape: tuple, fan_in: int, dtype) -> np.ndarray:
    gain = math.sqrt(2.0 / (1.0 + LEAKY_SLOPE**2))
    bound = gain * math.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    """Container tracking parameters, buffers and child modules by name.

    Attribute assignment registers ``Tensor`` values with ``requires_grad``
    as parameters, numpy arrays as buffers, and ``Module`` values as children,
    all in assignment order.
    """

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self._children[name] = value
        elif isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, np.ndarray):
            self._buffers[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, b in self._buffers.items():
            yield prefix + name, b
        for cname, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def modules(self) -> Iterator["Module"]:
        yield self
        for child in self._children.values():
            yield from child.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # conv | tconv | batchnorm | dense | activation
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 3
    stride: int = 1
    padding: int = 0
    activation: str = ""
    bias: bool = True

    KINDS = ("conv", "tconv", "batchnorm", "dense", "activation")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "activation" and self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.stride < 1 or self.padding < 0:
            raise ValueError(f"invalid stride {self.stride} / padding {self.padding}")

    def out_extent(self, h: int, w: int) -> tuple[int, int]:
        if self.kind == "conv":
            return (
                F.conv_out_extent(h, self.kernel, self.stride, self.padding),
                F.conv_out_extent(w, self.kernel, self.stride, self.padding),
            )
        if self.kind == "tconv":
            return (
                F.tconv_out_extent(h, self.kernel, self.stride, self.padding),
                F.tconv_out_extent(w, self.kernel, self.stride, self.padding),
            )
        return h, w


def validate_stack(specs: list[LayerSpec], h: int, w: int) -> tuple[int, int]:
    """Run extent arithmetic through a layer stack, raising on the first bad layer."""
    for i, spec in enumerate(specs):
        try:
            h, w = spec.out_extent(h, w)
        except ShapeError as exc:
            raise ShapeError(f"layer {i} ({spec.kind}): {exc}") from None
    return h, w


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "leaky_relu": lambda t: leaky_relu(t, LEAKY_SLOPE),
    "relu": relu,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "identity": lambda t: t,
}


class Conv2d(Module):
    def __init__(self, cin, cout, kernel=3, stride=1, padding=0, bias=True, rng=None, dtype=np.float32):
        super().__init__()
        self.spec = LayerSpec("conv", cin, cout, kernel, stride, padding, bias=bias)
        rng = rng if rng is not None else np.random.default_rng(0)
        shape = (cout, cin, kernel, kernel)
        self.weight = Tensor(kaiming_uniform(rng, shape, cin * kernel * kernel, dtype), requires_grad=True)
        if bias:
            self.bias = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)
        else:
            object.__setattr__(self, "bias", None)

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.spec.stride, self.spec.padding)


class ConvTranspose2d(Module):
    def __init__(self, cin, cout, kernel=4, stride=2, padding=1, bias=True, rng=None, dtype=np.float32):
        super().__init__()
        self.spec = LayerSpec("tconv", cin, cout, kernel, stride, padding, bias=bias)
        rng = rng if rng is not None else np.random.default_rng(0)
        shape = (cin, cout, kernel, kernel)
        # each output pixel sees about cin * k^2 / stride^2 inputs
        fan_in = max(1, cin * kernel * kernel // (stride * stride))
        self.weight = Tensor(kaiming_uniform(rng, shape, fan_in, dtype), requires_grad=True)
        if bias:
            self.bias = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)
        else:
            object.__setattr__(self, "bias", None)

    def forward(self, x: Tensor) -> Tensor:
        return F.conv_transpose2d(x, self.weight, self.bias, self.spec.stride, self.spec.padding)


class Dense(Module):
    def __init__(self, fin, fout, bias=True, rng=None, dtype=np.float32):
        super().__init__()
        self.spec = LayerSpec("dense", fin, fout, kernel=1, bias=bias)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Tensor(kaiming_uniform(rng, (fout, fin), fin, dtype), requires_grad=True)
        if bias:
            self.bias = Tensor(np.zeros(fout, dtype=dtype), requires_grad=True)
        else:
            object.__setattr__(self, "bias", None)

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class BatchNorm2d(Module):
    """Batch normalization with running statistics (momentum 0.1).

    ``update_stats`` can be switched off to run in batch-statistics mode
    without touching the running buffers, which is how a network is used
    while another network is being optimized.
    """

    def __init__(self, channels, momentum=0.1, eps=1e-5, dtype=np.float32):
        super().__init__()
        self.spec = LayerSpec("batchnorm", channels, channels)
        self.momentum = momentum
        self.eps = eps
        self.update_stats = True
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            self.training, self.momentum, self.eps, self.update_stats,
        )


def set_stat_updates(module: Module, enabled: bool) -> None:
    for m in module.modules():
        if isinstance(m, BatchNorm2d):
            m.update_stats = enabled


class Activation(Module):
    def __init__(self, kind: str):
        super().__init__()
        self.spec = LayerSpec("activation", activation=kind)
        self.fn = ACTIVATIONS[kind]

    def forward(self, x: Tensor) -> Tensor:
        return self.fn(x)


class Sequential(Module):
    def __init__(self, *layers: Module):
        super().__init__()
        for i, layer in enumerate(layers):
            setattr(self, str(i), layer)
        object.__setattr__(self, "layers", list(layers))

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x

    def specs(self) -> list[LayerSpec]:
        return [layer.spec for layer in self.layers if hasattr(layer, "spec")]


def build_layer(spec: LayerSpec, rng=None, dtype=np.float32) -> Module:
    if spec.kind == "conv":
        return Conv2d(spec.in_channels, spec.out_channels, spec.kernel, spec.stride, spec.padding, spec.bias, rng, dtype)
    if spec.kind == "tconv":
        return ConvTranspose2d(spec.in_channels, spec.out_channels, spec.kernel, spec.stride, spec.padding, spec.bias, rng, dtype)
    if spec.kind == "dense":
        return Dense(spec.in_channels, spec.out_channels, spec.bias, rng, dtype)
    if spec.kind == "batchnorm":
        return BatchNorm2d(spec.in_channels, dtype=dtype)
    return Activation(spec.activation)
