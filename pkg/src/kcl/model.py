"""Shared-private adversarial text classifier.

One shared extractor ``F_s`` and one private extractor ``F_si`` per domain read
a common word-embedding table. The domain discriminator sees shared features
only; the text classifier sees ``[F_s(x), F_si(x)]`` (shared first).

Objectives, over samples j of domain i (the mini-batch analogue uses per-batch
means summed across domains; ``reduction="sum"`` gives the exact sums):

    J_DD    = -sum_i sum_j log P(domain = i | F_s(x_ij))
    J_TC    = -sum_i sum_j log P(y = y_ij | F_s(x_ij), F_si(x_ij))
    J_F_si  = the domain-i slice of J_TC
    J_F_s   = J_TC - lambda * J_DD
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from kcl.autodiff import ops
from kcl.autodiff.checkpoint import load_params, save_params
from kcl.autodiff.tensor import Parameter, Tensor
from kcl.corpus import TokenizedBatch, Vocabulary
from kcl.seeding import substream


class ModelError(Exception):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    num_domains: int
    num_labels: int
    embed_dim: int = 64
    kernel_sizes: tuple[int, ...] = (3, 4, 5)
    channels: int = 50
    hidden: int = 100
    lam: float = 0.05

    def __post_init__(self):
        if not self.lam > 0:
            raise ModelError(f"lambda must be > 0, got {self.lam}")
        if self.num_domains < 1 or self.num_labels < 1:
            raise ModelError("need at least one domain and one label")

    @property
    def feature_dim(self) -> int:
        return len(self.kernel_sizes) * self.channels


class CNNBank:
    """Parallel conv filters of several widths, ReLU, masked global max pool, concatenated."""

    def __init__(self, rng: np.random.Generator, name: str, embed_dim: int,
                 kernel_sizes: Sequence[int], channels: int):
        self.name = name
        self.kernel_sizes = tuple(kernel_sizes)
        self.convs = [ops.init_conv(rng, f"{name}.conv{k}", channels, k, embed_dim) for k in self.kernel_sizes]
        self.out_dim = len(self.kernel_sizes) * channels

    def parameters(self) -> list[Parameter]:
        return [p for pair in self.convs for p in pair]

    def __call__(self, emb: Tensor, batch: TokenizedBatch) -> Tensor:
        width = emb.shape[1]
        if width < max(self.kernel_sizes):
            raise ModelError(f"batch width {width} is shorter than the largest kernel {max(self.kernel_sizes)}")
        pooled = []
        for k, (w, b) in zip(self.kernel_sizes, self.convs):
            h = ops.relu(ops.conv1d(emb, w, b))
            pooled.append(ops.global_max_pool(h, ops.window_mask(batch.lengths, width, k)))
        return ops.concat(pooled, axis=-1)


class MLP:
    """linear -> relu -> linear."""

    def __init__(self, rng: np.random.Generator, name: str, n_in: int, hidden: int, n_out: int):
        self.name = name
        self.w1, self.b1 = ops.init_linear(rng, f"{name}.fc1", n_in, hidden)
        self.w2, self.b2 = ops.init_linear(rng, f"{name}.fc2", hidden, n_out)

    def parameters(self) -> list[Parameter]:
        return [self.w1, self.b1, self.w2, self.b2]

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(ops.relu(ops.linear(x, self.w1, self.b1)), self.w2, self.b2)


class SharedExtractor(Protocol):
    out_dim: int

    def parameters(self) -> list[Parameter]: ...

    def __call__(self, emb: Tensor, batch: TokenizedBatch) -> Tensor: ...


class PrecomputedSharedExtractor:
    """Frozen per-document feature vectors (e.g. from a large encoder) plus a trainable adapter.

    Features are looked up by ``doc_id``; the adapter is ``relu(linear(.))``
    so the adversarial objective still has shared parameters to move.
    """

    def __init__(self, rng: np.random.Generator, features: dict[str, np.ndarray], out_dim: int):
        dims = {v.shape for v in features.values()}
        if len(dims) != 1:
            raise ModelError(f"precomputed features have mixed shapes {sorted(dims)}")
        self.features = features
        self.in_dim = next(iter(dims))[0]
        self.out_dim = out_dim
        self.w, self.b = ops.init_linear(rng, "shared.adapter", self.in_dim, out_dim)

    @classmethod
    def from_file(cls, rng: np.random.Generator, path: str | Path, out_dim: int) -> PrecomputedSharedExtractor:
        """Load ``.npz`` with arrays ``doc_ids`` [N] and ``features`` [N, D]."""
        with np.load(path, allow_pickle=False) as z:
            ids, feats = z["doc_ids"], np.asarray(z["features"], dtype=np.float64)
        return cls(rng, {str(i): f for i, f in zip(ids, feats)}, out_dim)

    def parameters(self) -> list[Parameter]:
        return [self.w, self.b]

    def __call__(self, emb: Tensor, batch: TokenizedBatch) -> Tensor:
        try:
            x = np.stack([self.features[d] for d in batch.doc_ids])
        except KeyError as exc:
            raise ModelError(f"no precomputed features for document {exc.args[0]!r}") from None
        return ops.relu(ops.linear(Tensor(x), self.w, self.b))


@dataclass
class ModelBundle:
    config: ModelConfig
    embedding: Parameter
    shared: SharedExtractor
    private: list[CNNBank]
    discriminator: MLP
    classifier: MLP
    vocab: Vocabulary | None = None
    domains: tuple[str, ...] = field(default_factory=tuple)

    @classmethod
    def create(cls, config: ModelConfig, seed: int = 0, vocab: Vocabulary | None = None,
               domains: Sequence[str] = (), shared: SharedExtractor | None = None) -> ModelBundle:
        rng = substream(seed, "init")
        c = config
        embedding = ops.init_embedding(rng, "embedding", c.vocab_size, c.embed_dim)
        if shared is None:
            shared = CNNBank(rng, "shared", c.embed_dim, c.kernel_sizes, c.channels)
        private = [CNNBank(rng, f"private{i}", c.embed_dim, c.kernel_sizes, c.channels) for i in range(c.num_domains)]
        disc = MLP(rng, "discriminator", shared.out_dim, c.hidden, c.num_domains)
        clf = MLP(rng, "classifier", shared.out_dim + c.feature_dim, c.hidden, c.num_labels)
        return cls(c, embedding, shared, private, disc, clf, vocab, tuple(domains))

    @property
    def lam(self) -> float:
        return self.config.lam

    @property
    def num_domains(self) -> int:
        return self.config.num_domains

    # parameter groups; the embedding table belongs to the shared side
    def shared_params(self) -> list[Parameter]:
        return [self.embedding] + self.shared.parameters()

    def private_params(self, i: int) -> list[Parameter]:
        return self.private[i].parameters()

    def discriminator_params(self) -> list[Parameter]:
        return self.discriminator.parameters()

    def classifier_params(self) -> list[Parameter]:
        return self.classifier.parameters()

    def parameters(self) -> list[Parameter]:
        out = self.shared_params()
        for i in range(self.num_domains):
            out += self.private_params(i)
        return out + self.discriminator_params() + self.classifier_params()

    def named_parameters(self) -> dict[str, Parameter]:
        return {p.name: p for p in self.parameters()}

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = self.named_parameters()
        if set(state) != set(params):
            raise ModelError(f"state mismatch: missing {sorted(set(params) - set(state))}, "
                             f"unexpected {sorted(set(state) - set(params))}")
        for name, arr in state.items():
            if arr.shape != params[name].shape:
                raise ModelError(f"{name}: shape {arr.shape} != {params[name].shape}")
            params[name].data = np.array(arr, dtype=np.float64)

    def embed(self, batch: TokenizedBatch) -> Tensor:
        return ops.embedding_lookup(self.embedding, batch.ids)


# -- forward paths ------------------------------------------------------------


def shared_forward(bundle: ModelBundle, batch: TokenizedBatch, emb: Tensor | None = None) -> Tensor:
    return bundle.shared(bundle.embed(batch) if emb is None else emb, batch)


def _check_domain(bundle: ModelBundle, i: int) -> None:
    if not 0 <= i < bundle.num_domains:
        raise ModelError(f"domain index {i} outside [0, {bundle.num_domains})")


def classify(bundle: ModelBundle, i: int, batch: TokenizedBatch) -> Tensor:
    _check_domain(bundle, i)
    emb = bundle.embed(batch)
    feats = ops.concat([bundle.shared(emb, batch), bundle.private[i](emb, batch)])
    return bundle.classifier(feats)


def discriminate(bundle: ModelBundle, batch: TokenizedBatch) -> Tensor:
    return bundle.discriminator(shared_forward(bundle, batch))


# -- objectives ---------------------------------------------------------------


@dataclass
class LossTerms:
    j_tc: Tensor
    j_dd: Tensor
    j_fs: Tensor
    tc_slices: dict[int, Tensor]
    dd_slices: dict[int, Tensor]


def _zero() -> Tensor:
    return Tensor(0.0)


def _total(parts: Iterable[Tensor]) -> Tensor:
    out = None
    for p in parts:
        out = p if out is None else ops.add(out, p)
    return out if out is not None else _zero()


def forward_losses(bundle: ModelBundle, batches: Sequence[TokenizedBatch], reduction: str = "mean") -> LossTerms:
    """J_TC, J_DD and J_F_s from one forward pass per batch.

    Labeled batches feed both objectives; unlabeled ones (``labels is None``)
    feed only J_DD. With a single domain J_DD is the constant 0.
    """
    tc: dict[int, list[Tensor]] = {}
    dd: dict[int, list[Tensor]] = {}
    for batch in batches:
        i = batch.domain
        _check_domain(bundle, i)
        emb = bundle.embed(batch)
        fs = bundle.shared(emb, batch)
        if batch.labels is not None:
            feats = ops.concat([fs, bundle.private[i](emb, batch)])
            logits = bundle.classifier(feats)
            tc.setdefault(i, []).append(ops.cross_entropy(logits, batch.labels, reduction))
        if bundle.num_domains > 1:
            targets = np.full(batch.size, i, dtype=np.int64)
            dd.setdefault(i, []).append(ops.cross_entropy(bundle.discriminator(fs), targets, reduction))
    tc_slices = {i: _total(v) for i, v in sorted(tc.items())}
    dd_slices = {i: _total(v) for i, v in sorted(dd.items())}
    j_tc = _total(tc_slices.values())
    j_dd = _total(dd_slices.values())
    j_fs = ops.sub(j_tc, ops.mul(j_dd, bundle.lam))
    return LossTerms(j_tc, j_dd, j_fs, tc_slices, dd_slices)


def loss_dd(bundle: ModelBundle, batches: Sequence[TokenizedBatch], reduction: str = "mean") -> Tensor:
    if bundle.num_domains == 1:
        return _zero()
    parts = []
    for batch in batches:
        _check_domain(bundle, batch.domain)
        targets = np.full(batch.size, batch.domain, dtype=np.int64)
        parts.append(ops.cross_entropy(discriminate(bundle, batch), targets, reduction))
    return _total(parts)


def loss_tc(bundle: ModelBundle, batches: Sequence[TokenizedBatch], reduction: str = "mean") -> Tensor:
    parts = []
    for batch in batches:
        if batch.labels is None:
            raise ModelError(f"unlabeled batch from domain {batch.domain} reached the classification loss")
        parts.append(ops.cross_entropy(classify(bundle, batch.domain, batch), batch.labels, reduction))
    return _total(parts)


def loss_fsi(bundle: ModelBundle, i: int, batch: TokenizedBatch, reduction: str = "mean") -> Tensor:
    if batch.domain != i:
        raise ModelError(f"batch from domain {batch.domain} passed as domain {i}")
    return loss_tc(bundle, [batch], reduction)


def loss_fs(bundle: ModelBundle, batches: Sequence[TokenizedBatch], reduction: str = "mean") -> Tensor:
    if not bundle.lam > 0:
        raise ModelError(f"lambda must be > 0, got {bundle.lam}")
    return forward_losses(bundle, batches, reduction).j_fs


# -- persistence --------------------------------------------------------------


def save_bundle(bundle: ModelBundle, outdir: str | Path, extra: dict | None = None) -> Path:
    """Write ``params.json`` (parameter container), ``model.json`` and ``vocab.json``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_params(outdir / "params.json", bundle.state_dict())
    meta = {
        "architecture": asdict(bundle.config),
        "domains": list(bundle.domains),
        "vocab_hash": bundle.vocab.fingerprint() if bundle.vocab else None,
        "lambda": bundle.lam,
    }
    meta.update(extra or {})
    (outdir / "model.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    if bundle.vocab is not None:
        (outdir / "vocab.json").write_text(json.dumps(bundle.vocab.itos, ensure_ascii=False) + "\n", encoding="utf-8")
    return outdir


def load_bundle(outdir: str | Path) -> ModelBundle:
    outdir = Path(outdir)
    meta = json.loads((outdir / "model.json").read_text(encoding="utf-8"))
    arch = dict(meta["architecture"])
    arch["kernel_sizes"] = tuple(arch["kernel_sizes"])
    vocab = None
    if (outdir / "vocab.json").exists():
        vocab = Vocabulary(json.loads((outdir / "vocab.json").read_text(encoding="utf-8")))
        if meta.get("vocab_hash") and vocab.fingerprint() != meta["vocab_hash"]:
            raise ModelError(f"{outdir}: vocabulary hash mismatch")
    bundle = ModelBundle.create(ModelConfig(**arch), 0, vocab, meta.get("domains", ()))
    bundle.load_state_dict(load_params(outdir / "params.json"))
    return bundle
