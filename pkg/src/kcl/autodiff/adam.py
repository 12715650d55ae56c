"""Bias-corrected Adam over named parameters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from kcl.autodiff.tensor import Parameter


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    # per-parameter step counts: a parameter only advances when it is stepped
    t: dict[str, int] = field(default_factory=dict)
    steps: int = 0


def adam_step(params: Iterable[Parameter], state: AdamState) -> None:
    """Apply one Adam update to ``params`` in place, then zero their gradients."""
    state.steps += 1
    b1, b2 = state.beta1, state.beta2
    for p in params:
        g = p.grad
        if p.name not in state.m:
            state.m[p.name] = np.zeros_like(p.data)
            state.v[p.name] = np.zeros_like(p.data)
            state.t[p.name] = 0
        if state.m[p.name].shape != p.data.shape:
            raise ValueError(f"moment shape mismatch for {p.name}")
        t = state.t[p.name] = state.t[p.name] + 1
        m = state.m[p.name] = b1 * state.m[p.name] + (1.0 - b1) * g
        v = state.v[p.name] = b2 * state.v[p.name] + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        if p.frozen_rows:
            update[list(p.frozen_rows)] = 0.0
        p.data = p.data - update
        p.zero_grad()
