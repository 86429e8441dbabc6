"""Finite-difference verification of analytic gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor


def numeric_grad(fn: Callable[[], Tensor], t: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``fn()`` w.r.t. each element of ``t``."""
    out = np.zeros_like(t.data, dtype=np.float64)
    flat = t.data.reshape(-1)
    gflat = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn().item()
        flat[i] = orig - eps
        lo = fn().item()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * eps)
    return out


def grad_check(fn: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-5,
               floor: float = 1e-6) -> float:
    """Max relative error between tape gradients and central differences.

    ``fn`` must rebuild its graph from ``inputs`` on each call and return a
    scalar. Inputs should be float64. Relative error per element is
    |a - n| / max(|a|, |n|, floor).
    """
    with Tape() as tape:
        loss = fn()
    analytic = tape.backward(loss, list(inputs))
    worst = 0.0
    for t, a in zip(inputs, analytic):
        n = numeric_grad(fn, t, eps)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        if a.size:
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst
