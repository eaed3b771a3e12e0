"""Adam optimizer over autodiff leaf tensors.

Defaults follow the training recipe used throughout the package:
lr=2e-3, beta1=0.0, beta2=0.99, eps=1e-8. With beta1=0 the first-moment
estimate is just the current gradient, so the very first step on a
parameter with gradient g moves it by exactly -lr * sign-ish
g/(|g| + eps-ish); in particular a unit gradient moves the parameter by
-lr / (1 + eps) after bias correction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .autodiff import Tensor

__all__ = ["AdamState", "adam_init", "adam_step", "Adam"]


@dataclass
class AdamState:
    """Per-parameter moment buffers plus the shared step counter."""
    lr: float = 2e-3
    beta1: float = 0.0
    beta2: float = 0.99
    eps: float = 1e-8
    t: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


def adam_init(params: Sequence[Tensor], lr: float = 2e-3, beta1: float = 0.0,
              beta2: float = 0.99, eps: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for p in params:
        state.m[id(p)] = np.zeros(p.shape, dtype=p.data.dtype)
        state.v[id(p)] = np.zeros(p.shape, dtype=p.data.dtype)
    return state


def adam_step(params: Sequence[Tensor], grads: Mapping[Tensor, Tensor] | Sequence[Tensor],
              state: AdamState) -> None:
    """One Adam update, in place on the parameter buffers.

    ``grads`` is either a map from parameter tensor to gradient tensor
    (parameters missing from the map are treated as zero-gradient and
    still advance their moment buffers) or a sequence aligned with
    ``params``. A zero gradient leaves the parameter bit-identical: the
    update is m_hat / (sqrt(v_hat) + eps) with m_hat == 0.
    """
    if not isinstance(grads, Mapping):
        grads = dict(zip(params, grads))
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for p in params:
        key = id(p)
        if key not in state.m:
            raise KeyError("adam_step: parameter missing from optimizer state")
        g = grads.get(p)
        g_data = np.zeros(p.shape, dtype=p.data.dtype) if g is None else g.data
        if g_data.shape != p.shape:
            raise ValueError(
                f"adam_step: gradient shape {g_data.shape} != parameter shape {p.shape}")
        m = state.m[key]
        v = state.v[key]
        m *= b1
        m += (1.0 - b1) * g_data
        v *= b2
        v += (1.0 - b2) * (g_data * g_data)
        m_hat = m / bc1
        v_hat = v / bc2
        if g is None or not np.any(g_data):
            # m_hat is exactly zero; skip the update so the parameter
            # stays bit-identical (avoids 0/eps rounding noise).
            continue
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


class Adam:
    """Convenience wrapper tying a parameter list to one AdamState."""

    def __init__(self, params: Sequence[Tensor], lr: float = 2e-3,
                 beta1: float = 0.0, beta2: float = 0.99, eps: float = 1e-8):
        self.params = list(params)
        self.state = adam_init(self.params, lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self, grads: Mapping[Tensor, Tensor] | Sequence[Tensor]) -> None:
        adam_step(self.params, grads, self.state)

    @property
    def t(self) -> int:
        return self.state.t
