"""Small seeded models and batches shared by the model and trainer tests."""

import numpy as np

from kcl.autodiff.tensor import backward
from kcl.corpus import TokenizedBatch, Vocabulary
from kcl.model import ModelBundle, ModelConfig, forward_losses


def tiny_bundle(seed=0, num_domains=2, num_labels=2, vocab_size=20, lam=0.05, embed_dim=4,
                kernel_sizes=(2, 3), channels=3, hidden=5):
    cfg = ModelConfig(vocab_size, num_domains, num_labels, embed_dim, kernel_sizes, channels, hidden, lam)
    vocab = Vocabulary(["<pad>", "<unk>"] + [f"t{i}" for i in range(vocab_size - 2)])
    return ModelBundle.create(cfg, seed, vocab, tuple(f"dom{i}" for i in range(num_domains)))


def random_batch(rng, domain, size=3, width=6, vocab_size=20, num_labels=2, labeled=True):
    lengths = rng.integers(1, width + 1, size=size)
    ids = np.zeros((size, width), dtype=np.int64)
    for r, n in enumerate(lengths):
        ids[r, :n] = rng.integers(1, vocab_size, size=n)
    labels = rng.integers(0, num_labels, size=size) if labeled else None
    return TokenizedBatch(ids, lengths.astype(np.int64), domain, labels,
                          tuple(f"dom{domain}/{r}" for r in range(size)))


def grads(params):
    return {p.name: p.grad.copy() for p in params}


def shared_gradient_gap(seed):
    rng = np.random.default_rng(seed)
    b = tiny_bundle(seed, lam=float(rng.uniform(0.01, 1.0)))
    batches = [random_batch(rng, 0), random_batch(rng, 1), random_batch(rng, 1, labeled=False)]
    shared = b.shared_params()
    b.zero_grad()
    backward(forward_losses(b, batches).j_fs)
    combined = grads(shared)
    b.zero_grad()
    backward(forward_losses(b, batches).j_tc)
    g_tc = grads(shared)
    b.zero_grad()
    backward(forward_losses(b, batches).j_dd)
    g_dd = grads(shared)
    b.zero_grad()
    return max(float(np.max(np.abs(combined[k] - (g_tc[k] - b.lam * g_dd[k])))) for k in combined)


def isolation_violations(seed):
    """Largest gradient that must be exactly zero, over routing and discriminator paths."""
    rng = np.random.default_rng(seed)
    b = tiny_bundle(seed, num_domains=3)
    batch = random_batch(rng, 1)
    worst = 0.0
    for name in ("j_tc", "j_dd", "j_fs"):
        b.zero_grad()
        backward(getattr(forward_losses(b, [batch]), name))
        for j in (0, 2):
            worst = max(worst, max(float(np.max(np.abs(p.grad))) for p in b.private_params(j)))
        if name == "j_dd":
            for j in range(3):
                worst = max(worst, max(float(np.max(np.abs(p.grad))) for p in b.private_params(j)))
            worst = max(worst, max(float(np.max(np.abs(p.grad))) for p in b.classifier_params()))
    b.zero_grad()
    return worst
