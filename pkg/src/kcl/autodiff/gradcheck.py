"""Central-difference gradient checks and the seeded per-op suite."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from kcl.autodiff import ops
from kcl.autodiff.tensor import Parameter, Tensor, backward
from kcl.seeding import substream

OP_TOL = 1e-6
NETWORK_TOL = 1e-5


def finite_diff_check(fn: Callable[[Sequence[Tensor]], Tensor], inputs: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Max componentwise relative error between tape and central-difference gradients.

    The denominator is ``max(|analytic|, |numeric|, 1e-8)``.
    """
    for t in inputs:
        t.requires_grad = True
        t.grad = np.zeros_like(t.data)
    backward(fn(inputs))
    worst = 0.0
    for t in inputs:
        analytic = t.grad.copy()
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = fn(inputs).item()
            flat[i] = orig - eps
            f_minus = fn(inputs).item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = analytic.reshape(-1)[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


def _away_from_zero(rng, shape, low=0.1, high=1.0):
    return rng.uniform(low, high, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def _separated(rng, b, t, c):
    # distinct values per column, spaced far beyond eps so no FD step flips the argmax
    base = np.stack([np.stack([rng.permutation(t) for _ in range(c)], axis=1) for _ in range(b)])
    return 0.5 * base + rng.uniform(0.0, 0.1, size=(b, t, c))


Case = tuple[Callable[[Sequence[Tensor]], Tensor], list[Tensor]]


def case_embedding(rng) -> Case:
    v, d = int(rng.integers(3, 7)), int(rng.integers(1, 4))
    ids = rng.integers(0, v, size=(int(rng.integers(1, 4)), int(rng.integers(1, 5))))
    table = Parameter(rng.normal(size=(v, d)), "emb", frozen_rows=(0,))
    w = rng.normal(size=ids.shape + (d,))
    return (lambda xs: ops.sum(ops.mul(ops.embedding_lookup(xs[0], ids), w))), [table]


def case_conv1d(rng) -> Case:
    b, d, c, k = (int(rng.integers(1, 4)), int(rng.integers(1, 5)), int(rng.integers(1, 6)), int(rng.integers(1, 4)))
    length = int(rng.integers(k, 8))
    x, w, bias = Tensor(rng.normal(size=(b, length, d))), Tensor(rng.normal(size=(c, k, d))), Tensor(rng.normal(size=c))
    weights = rng.normal(size=(b, length - k + 1, c))
    return (lambda xs: ops.sum(ops.mul(ops.conv1d(*xs), weights))), [x, w, bias]


def case_max_pool(rng) -> Case:
    b, t, c = int(rng.integers(1, 4)), int(rng.integers(1, 6)), int(rng.integers(1, 5))
    x = Tensor(_separated(rng, b, t, c))
    lengths = rng.integers(1, t + 1, size=b)
    mask = np.arange(t)[None, :] < lengths[:, None]
    weights = rng.normal(size=(b, c))
    return (lambda xs: ops.sum(ops.mul(ops.global_max_pool(xs[0], mask), weights))), [x]


def case_linear(rng) -> Case:
    b, n_in, n_out = int(rng.integers(1, 5)), int(rng.integers(1, 6)), int(rng.integers(1, 6))
    x, w, bias = Tensor(rng.normal(size=(b, n_in))), Tensor(rng.normal(size=(n_out, n_in))), Tensor(rng.normal(size=n_out))
    weights = rng.normal(size=(b, n_out))
    return (lambda xs: ops.sum(ops.mul(ops.linear(*xs), weights))), [x, w, bias]


def case_relu(rng) -> Case:
    x = Tensor(_away_from_zero(rng, (int(rng.integers(1, 4)), int(rng.integers(1, 6)))))
    weights = rng.normal(size=x.shape)
    return (lambda xs: ops.sum(ops.mul(ops.relu(xs[0]), weights))), [x]


def case_concat(rng) -> Case:
    b = int(rng.integers(1, 4))
    a, c = Tensor(rng.normal(size=(b, int(rng.integers(1, 4))))), Tensor(rng.normal(size=(b, int(rng.integers(1, 4)))))
    weights = rng.normal(size=(b, a.shape[1] + c.shape[1]))
    return (lambda xs: ops.sum(ops.mul(ops.concat(xs), weights))), [a, c]


def case_softmax(rng) -> Case:
    x = Tensor(rng.normal(size=(int(rng.integers(1, 4)), int(rng.integers(2, 6)))))
    weights = rng.normal(size=x.shape)
    return (lambda xs: ops.sum(ops.mul(ops.softmax(xs[0]), weights))), [x]


def case_log_softmax(rng) -> Case:
    x = Tensor(rng.normal(size=(int(rng.integers(1, 4)), int(rng.integers(2, 6)))))
    weights = rng.normal(size=x.shape)
    return (lambda xs: ops.sum(ops.mul(ops.log_softmax(xs[0]), weights))), [x]


def case_cross_entropy(rng) -> Case:
    b, k = int(rng.integers(1, 5)), int(rng.integers(2, 5))
    x = Tensor(rng.normal(size=(b, k)))
    targets = rng.integers(0, k, size=b)
    reduction = "sum" if rng.random() < 0.5 else "mean"
    return (lambda xs: ops.cross_entropy(xs[0], targets, reduction)), [x]


def case_arith(rng) -> Case:
    shape = (int(rng.integers(1, 4)), int(rng.integers(1, 4)))
    a, b = Tensor(rng.normal(size=shape)), Tensor(rng.normal(size=shape))
    return (lambda xs: ops.mean(ops.mul(ops.sub(ops.add(xs[0], xs[1]), ops.mul(xs[1], 0.3)), xs[0]))), [a, b]


def case_network(rng) -> Case:
    """embedding -> conv -> relu -> max-pool -> linear -> relu -> linear -> cross-entropy."""
    v, d, c, k, hidden, labels = 7, 3, 4, 2, 5, 3
    b, length = 3, 6
    ids = rng.integers(1, v, size=(b, length))
    lengths = rng.integers(k, length + 1, size=b)
    ids[np.arange(length)[None, :] >= lengths[:, None]] = 0
    mask = ops.window_mask(lengths, length, k)
    targets = rng.integers(0, labels, size=b)
    # init-scale weights keep logits O(1); a saturated softmax leaves gradients
    # near 1e-8 where central differences are dominated by roundoff
    params = [
        Tensor(rng.normal(size=(v, d))),
        Tensor(rng.normal(size=(c, k, d)) * 0.5), Tensor(rng.normal(size=c) * 0.1),
        Tensor(rng.normal(size=(hidden, c)) * 0.5), Tensor(rng.normal(size=hidden) * 0.1),
        Tensor(rng.normal(size=(labels, hidden)) * 0.5), Tensor(rng.normal(size=labels) * 0.1),
    ]

    def fn(xs):
        emb, kw, kb, w1, b1, w2, b2 = xs
        h = ops.relu(ops.conv1d(ops.embedding_lookup(emb, ids), kw, kb))
        h = ops.global_max_pool(h, mask)
        h = ops.relu(ops.linear(h, w1, b1))
        return ops.cross_entropy(ops.linear(h, w2, b2), targets)

    return fn, params


OP_CASES: dict[str, Callable[[np.random.Generator], Case]] = {
    "embedding_lookup": case_embedding,
    "conv1d": case_conv1d,
    "global_max_pool": case_max_pool,
    "linear": case_linear,
    "relu": case_relu,
    "concat": case_concat,
    "softmax": case_softmax,
    "log_softmax": case_log_softmax,
    "cross_entropy": case_cross_entropy,
    "add/sub/mul/mean": case_arith,
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_err: float
    tol: float
    trials: int

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_err <= self.tol)


def run_suite(trials: int = 20, seed: int = 0, cases: dict | None = None, eps: float = 1e-5) -> list[CheckResult]:
    """Check every op at 1e-6 and the composed network at 1e-5 over seeded trials."""
    table = [(name, fn, OP_TOL) for name, fn in (cases or OP_CASES).items()]
    table.append(("network(3-layer)", case_network, NETWORK_TOL))
    results = []
    for name, make_case, tol in table:
        worst = 0.0
        for trial in range(trials):
            fn, inputs = make_case(substream(seed, "gradcheck", name, trial))
            worst = max(worst, finite_diff_check(fn, inputs, eps))
        results.append(CheckResult(name, worst, tol, trials))
    return results
