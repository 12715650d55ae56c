"""Differentiable operations used by the shared-private model.

Every op returns a new :class:`Tensor`; when any input requires a gradient the
result carries a backward closure. Reductions use numpy's fixed pairwise order
so forward results are reproducible bit-for-bit for identical inputs.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from kcl.autodiff.tensor import Parameter, Tensor, make_node


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- elementwise / reductions -------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape and b.data.size != 1 and a.data.size != 1:
        raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")

    def bw(g):
        ga = g if a.shape == g.shape else np.sum(g).reshape(a.shape)
        gb = g if b.shape == g.shape else np.sum(g).reshape(b.shape)
        return ga, gb

    return make_node(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    return add(a, mul(b, -1.0))


def mul(a: Tensor, c) -> Tensor:
    """Elementwise product with a tensor of equal shape, an array, or a scalar."""
    if isinstance(c, Tensor):
        if c.shape != a.shape:
            raise ValueError(f"mul: shape mismatch {a.shape} vs {c.shape}")
        return make_node(a.data * c.data, (a, c), lambda g: (g * c.data, g * a.data), "mul")
    const = np.asarray(c, dtype=np.float64)
    if const.size != 1 and const.shape != a.shape:
        raise ValueError(f"mul: constant shape {const.shape} vs {a.shape}")
    return make_node(a.data * const, (a,), lambda g: (g * const,), "scale")


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return make_node(np.sum(x.data), (x,), lambda g: (np.broadcast_to(g, x.shape).copy(),), "sum")


def mean(x: Tensor) -> Tensor:
    n = x.data.size
    return make_node(np.sum(x.data) / n, (x,), lambda g: (np.full(x.shape, float(g) / n),), "mean")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_node(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not tensors:
        raise ValueError("concat: no inputs")
    ax = axis % tensors[0].data.ndim
    lead = [t.shape[:ax] + t.shape[ax + 1:] for t in tensors]
    if any(s != lead[0] for s in lead):
        raise ValueError(f"concat: incompatible shapes {[t.shape for t in tensors]}")
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def bw(g):
        return tuple(np.take(g, np.arange(lo, hi), axis=ax) for lo, hi in zip(bounds[:-1], bounds[1:]))

    return make_node(np.concatenate([t.data for t in tensors], axis=ax), tensors, bw, "concat")


# -- dense layers -------------------------------------------------------------


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` with ``weight`` shaped [out, in]."""
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(f"linear: input dim {x.shape[-1]} != weight in-dim {weight.shape[1]}")
    out = x.data @ weight.data.T
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise ValueError(f"linear: bias shape {bias.shape}")
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def bw(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.shape[-1])
        grads = [g @ weight.data, g2.T @ x2]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return grads

    return make_node(out, parents, bw, "linear")


def softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (p * (g - np.sum(g * p, axis=-1, keepdims=True)),)

    return make_node(p, (x,), bw, "softmax")


def log_softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    p = np.exp(out)
    return make_node(out, (x,), lambda g: (g - p * g.sum(axis=-1, keepdims=True),), "log_softmax")


def cross_entropy(logits: Tensor, targets, reduction: str = "mean") -> Tensor:
    """Negative log-likelihood of integer ``targets`` under ``softmax(logits)``.

    ``reduction`` is ``"mean"`` over the batch or ``"sum"``.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if logits.data.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ValueError(f"cross_entropy: logits {logits.shape} vs targets {targets.shape}")
    n, k = logits.shape
    if n and (targets.min() < 0 or targets.max() >= k):
        raise ValueError(f"cross_entropy: targets outside [0, {k})")
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1))
    nll = lse - z[np.arange(n), targets]
    scale = 1.0 / n if reduction == "mean" else 1.0
    total = np.sum(nll) * scale

    def bw(g):
        p = np.exp(z - lse[:, None])
        p[np.arange(n), targets] -= 1.0
        return (p * (float(g) * scale),)

    return make_node(total, (logits,), bw, "cross_entropy")


# -- text CNN pieces ----------------------------------------------------------


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table`` [V, d] for ``ids`` [B, L]; row 0 (PAD) is always zero."""
    ids = np.asarray(ids, dtype=np.int64)
    vocab = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise IndexError(f"embedding_lookup: ids outside [0, {vocab})")
    out = table.data[ids]
    pad = ids == 0
    out[pad] = 0.0

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids, g)
        gt[0] = 0.0
        return (gt,)

    return make_node(out, (table,), bw, "embedding")


def _windows(x: np.ndarray, k: int) -> np.ndarray:
    # [B, L, d] -> [B, T, k*d], each row the flattened window x[t:t+k]
    w = sliding_window_view(x, k, axis=1)  # [B, T, d, k]
    b, t, d, _ = w.shape
    return np.ascontiguousarray(w.transpose(0, 1, 3, 2)).reshape(b, t, k * d)


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Valid cross-correlation along the sequence axis.

    ``x`` [B, L, d], ``kernels`` [C, k, d], ``bias`` [C] -> [B, L-k+1, C].
    """
    if x.data.ndim != 3 or kernels.data.ndim != 3:
        raise ValueError(f"conv1d: expected 3-d input and kernels, got {x.shape}, {kernels.shape}")
    bsz, length, d = x.shape
    c, k, kd = kernels.shape
    if kd != d:
        raise ValueError(f"conv1d: kernel depth {kd} != input depth {d}")
    if bias.shape != (c,):
        raise ValueError(f"conv1d: bias shape {bias.shape} != ({c},)")
    if length < k:
        raise ValueError(f"conv1d: sequence length {length} shorter than kernel size {k}")
    win = _windows(x.data, k)
    wf = kernels.data.reshape(c, k * d)
    out = win @ wf.T + bias.data
    t = length - k + 1

    def bw(g):
        g2 = g.reshape(-1, c)
        gk = (g2.T @ win.reshape(-1, k * d)).reshape(c, k, d)
        gb = g2.sum(axis=0)
        gwin = (g @ wf).reshape(bsz, t, k, d)
        gx = np.zeros_like(x.data)
        for j in range(k):
            gx[:, j:j + t, :] += gwin[:, :, j, :]
        return gx, gk, gb

    return make_node(out, (x, kernels, bias), bw, "conv1d")


def window_mask(lengths, width: int, k: int) -> np.ndarray:
    """Valid conv positions [B, width-k+1]: windows lying inside the document.

    A document shorter than ``k`` keeps only its first window so every row
    has at least one candidate for max pooling.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    t = width - k + 1
    last = np.maximum(lengths - k, 0)
    return np.arange(t)[None, :] <= last[:, None]


def global_max_pool(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Max over axis 1 of [B, T, C]; ties and gradients go to the first maximum.

    ``mask`` [B, T] excludes positions (False) from the max.
    """
    if x.data.ndim != 3 or x.shape[1] < 1:
        raise ValueError(f"global_max_pool: expected [B, T>=1, C], got {x.shape}")
    vals = x.data
    if mask is not None:
        vals = np.where(mask[:, :, None], vals, -np.inf)
    idx = np.argmax(vals, axis=1)  # [B, C], first occurrence
    bsz, _, c = x.shape
    bi, ci = np.meshgrid(np.arange(bsz), np.arange(c), indexing="ij")
    out = x.data[bi, idx, ci]

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[bi, idx, ci] = g
        return (gx,)

    return make_node(out, (x,), bw, "max_pool")


# -- initialisation -----------------------------------------------------------


def xavier_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def init_linear(rng: np.random.Generator, name: str, n_in: int, n_out: int) -> tuple[Parameter, Parameter]:
    w = Parameter(xavier_uniform(rng, (n_out, n_in), n_in, n_out), f"{name}.weight")
    b = Parameter(np.zeros(n_out), f"{name}.bias")
    return w, b


def init_conv(rng: np.random.Generator, name: str, channels: int, k: int, d: int) -> tuple[Parameter, Parameter]:
    w = Parameter(xavier_uniform(rng, (channels, k, d), k * d, channels), f"{name}.weight")
    b = Parameter(np.zeros(channels), f"{name}.bias")
    return w, b


def init_embedding(rng: np.random.Generator, name: str, vocab: int, d: int) -> Parameter:
    table = rng.normal(0.0, 0.1, size=(vocab, d))
    table[0] = 0.0
    return Parameter(table, name, frozen_rows=(0,))
