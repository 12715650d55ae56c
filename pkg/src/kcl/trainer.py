"""Curriculum schedule, alternating adversarial training loop and evaluation.

A training step draws one labeled batch per domain (plus an unlabeled batch
where available). The discriminator is first updated ``k_d`` times on the
shared features of all those batches, with every other component frozen; a
discriminator that saw one domain per update would only ever fit a class
bias. Then the domains are visited one by one in the fixed curriculum order,
each with its own parameter update: F_si and the classifier descend J_TC,
F_s descends J_TC - lambda*J_DD, and the discriminator stays frozen.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from kcl.autodiff import ops
from kcl.autodiff.adam import AdamState, adam_step
from kcl.autodiff.tensor import Tensor, backward
from kcl.corpus import (
    DEFAULT_MAX_LEN,
    Document,
    DomainSplit,
    DomainStream,
    MultiDomainDataset,
    Vocabulary,
    batch_iter,
    build_vocab,
)
from kcl.keywords.ranking import DomainRanking
from kcl.model import MLP, ModelBundle, ModelConfig, classify, forward_losses, shared_forward
from kcl.seeding import substream


class ScheduleError(Exception):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, domain: str, name: str, value: float):
        super().__init__(f"non-finite {name}={value} at step {step} (domain {domain!r})")
        self.step, self.domain, self.name, self.value = step, domain, name, value


@dataclass(frozen=True)
class CurriculumSchedule:
    order: tuple[str, ...]
    extractor: str
    n: int | None = None
    weights: tuple[float, ...] = ()
    seed: int | None = None

    def to_json(self) -> dict:
        return {"order": list(self.order), "extractor": self.extractor, "N": self.n,
                "W": list(self.weights), "seed": self.seed}


def build_schedule(ranking: DomainRanking, domains: Sequence[str] | None = None) -> CurriculumSchedule:
    order = tuple(ranking.order)
    if len(set(order)) != len(order):
        raise ScheduleError(f"ranking repeats a domain: {order}")
    if domains is not None and sorted(order) != sorted(domains):
        raise ScheduleError(f"ranking {list(order)} does not cover dataset domains {list(domains)}")
    return CurriculumSchedule(order, ranking.extractor, ranking.n, tuple(w for _, w in ranking.entries), ranking.seed)


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    epochs: int = 10
    steps_per_epoch: int | None = None  # default: enough for the largest domain to be seen once
    batch_size: int = 32
    lam: float = 0.05
    lr: float = 1e-3
    disc_lr: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    k_d: int = 1
    eval_every: int = 1
    exact_sum: bool = False
    use_unlabeled: bool = True
    val_fraction: float = 0.0
    max_len: int = DEFAULT_MAX_LEN
    min_freq: int = 1
    max_vocab: int | None = 30000
    embed_dim: int = 64
    kernel_sizes: tuple[int, ...] = (3, 4, 5)
    channels: int = 50
    hidden: int = 100

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if self.k_d < 1:
            raise ValueError("k_d must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must lie in [0, 1)")

    @property
    def reduction(self) -> str:
        return "sum" if self.exact_sum else "mean"

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class StepMetrics:
    step: int
    epoch: int
    order: list[str]
    j_tc: float
    j_dd: float
    j_fs: float
    disc_loss: float
    per_domain: dict[str, dict[str, float]]

    def record(self) -> dict:
        return {"kind": "step", **asdict(self)}


@dataclass
class RunHistory:
    records: list[dict] = field(default_factory=list)
    wall_time: list[float] = field(default_factory=list)  # kept apart so records stay reproducible

    def append(self, rec: dict, elapsed: float = 0.0) -> None:
        rec = dict(rec, index=len(self.records))
        self.records.append(rec)
        self.wall_time.append(elapsed)

    @property
    def steps(self) -> list[dict]:
        return [r for r in self.records if r["kind"] == "step"]

    @property
    def evals(self) -> list[dict]:
        return [r for r in self.records if r["kind"] == "eval"]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


@dataclass
class Optimizers:
    main: AdamState
    disc: AdamState

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> Optimizers:
        kw = dict(beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
        return cls(AdamState(lr=cfg.lr, **kw), AdamState(lr=cfg.disc_lr if cfg.disc_lr is not None else cfg.lr, **kw))


@dataclass
class Streams:
    labeled: dict[str, DomainStream]
    unlabeled: dict[str, DomainStream]


def make_streams(dataset: MultiDomainDataset, vocab: Vocabulary, cfg: TrainConfig, min_len: int) -> Streams:
    lab, unl = {}, {}
    for i, dom in enumerate(dataset.domains):
        lab[dom] = DomainStream(dataset.train(dom), cfg.batch_size, cfg.seed, vocab, i, cfg.max_len, min_len, f"{dom}/train")
        if cfg.use_unlabeled and dataset.unlabeled(dom):
            unl[dom] = DomainStream(dataset.unlabeled(dom), cfg.batch_size, cfg.seed, vocab, i,
                                    cfg.max_len, min_len, f"{dom}/unlabeled")
    return Streams(lab, unl)


def _finite(value: float, step: int, domain: str, name: str) -> float:
    if not math.isfinite(value):
        raise TrainingDiverged(step, domain, name, value)
    return value


def train_step(bundle: ModelBundle, schedule: CurriculumSchedule, streams: Streams, opt: Optimizers,
               cfg: TrainConfig, step: int = 0, epoch: int = 0,
               hook: Callable[[int, str], None] | None = None) -> StepMetrics:
    """One pass over the domains in curriculum order; see module docstring."""
    domains = bundle.domains
    red = cfg.reduction
    per_domain: dict[str, dict[str, float]] = {}
    labeled = {dom: streams.labeled[dom].next() for dom in schedule.order}

    # phase A: discriminator only, on detached shared features of every domain
    disc_loss = 0.0
    if bundle.num_domains > 1:
        for rep in range(cfg.k_d):
            batches = []
            for dom in schedule.order:
                batches.append(labeled[dom] if rep == 0 else streams.labeled[dom].next())
                if dom in streams.unlabeled:
                    batches.append(streams.unlabeled[dom].next())
            loss = None
            for b in batches:
                fs = shared_forward(bundle, b).detach()
                targets = np.full(b.size, b.domain, dtype=np.int64)
                term = ops.cross_entropy(bundle.discriminator(fs), targets, red)
                loss = term if loss is None else ops.add(loss, term)
            disc_loss += _finite(loss.item(), step, "*", "J_DD(discriminator)")
            backward(loss)
            adam_step(bundle.discriminator_params(), opt.disc)

    for dom in schedule.order:
        i = domains.index(dom)
        if hook is not None:
            hook(step, dom)

        # phase B: F_s on J_TC - lambda*J_DD, F_si and classifier on J_TC
        terms = forward_losses(bundle, [labeled[dom]], red)
        j_tc = _finite(terms.j_tc.item(), step, dom, "J_TC")
        j_dd = _finite(terms.j_dd.item(), step, dom, "J_DD")
        j_fs = _finite(terms.j_fs.item(), step, dom, "J_Fs")
        backward(terms.j_fs)
        adam_step(bundle.shared_params() + bundle.private_params(i) + bundle.classifier_params(), opt.main)
        for p in bundle.discriminator_params():
            p.zero_grad()
        per_domain[dom] = {"j_tc": j_tc, "j_dd": j_dd, "j_fs": j_fs}

    return StepMetrics(
        step=step, epoch=epoch, order=list(schedule.order),
        j_tc=math.fsum(v["j_tc"] for v in per_domain.values()),
        j_dd=math.fsum(v["j_dd"] for v in per_domain.values()),
        j_fs=math.fsum(v["j_fs"] for v in per_domain.values()),
        disc_loss=disc_loss, per_domain=per_domain,
    )


# -- evaluation ---------------------------------------------------------------


@dataclass(frozen=True)
class Accuracy:
    per_domain: dict[str, float]

    @property
    def average(self) -> float:
        return math.fsum(self.per_domain.values()) / len(self.per_domain)

    def to_json(self) -> dict:
        return {"per_domain": self.per_domain, "average": self.average}


def _min_len(bundle: ModelBundle) -> int:
    return max(bundle.config.kernel_sizes)


def predict(bundle: ModelBundle, docs: Sequence[Document], domain: int, batch_size: int = 256,
            max_len: int = DEFAULT_MAX_LEN) -> np.ndarray:
    preds = []
    for batch in batch_iter(docs, batch_size, 0, 0, bundle.vocab, domain, max_len, _min_len(bundle), shuffle=False):
        preds.append(np.argmax(classify(bundle, domain, batch).data, axis=1))
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def evaluate(bundle: ModelBundle, dataset: MultiDomainDataset, split: str = "test",
             max_len: int = DEFAULT_MAX_LEN) -> Accuracy:
    """Per-domain argmax accuracy with each sample's own private extractor."""
    acc = {}
    for dom in dataset.domains:
        docs = getattr(dataset, split)(dom)
        if not docs:
            raise ValueError(f"domain {dom!r} has an empty {split} set")
        preds = predict(bundle, docs, bundle.domains.index(dom), max_len=max_len)
        gold = np.array([d.label for d in docs])
        acc[dom] = float(np.mean(preds == gold))
    return Accuracy(acc)


def _shared_features(bundle: ModelBundle, docs: Sequence[Document], domain: int, max_len: int) -> np.ndarray:
    feats = [shared_forward(bundle, b).data
             for b in batch_iter(docs, 256, 0, 0, bundle.vocab, domain, max_len, _min_len(bundle), shuffle=False)]
    return np.concatenate(feats) if feats else np.zeros((0, bundle.shared.out_dim))


def domain_invariance_probe(bundle: ModelBundle, dataset: MultiDomainDataset, seed: int = 0,
                            steps: int = 300, hidden: int = 64, lr: float = 1e-2,
                            max_len: int = DEFAULT_MAX_LEN) -> float:
    """Held-out accuracy of a fresh domain classifier trained on frozen shared features.

    Near ``1/M`` means the shared features carry no domain signal.
    """
    if bundle.num_domains == 1:
        return 1.0
    xs_tr, ys_tr, xs_te, ys_te = [], [], [], []
    for i, dom in enumerate(bundle.domains):
        tr = list(dataset.train(dom)) + list(dataset.unlabeled(dom))
        te = dataset.test(dom)
        xs_tr.append(_shared_features(bundle, tr, i, max_len))
        ys_tr.append(np.full(len(tr), i))
        xs_te.append(_shared_features(bundle, te, i, max_len))
        ys_te.append(np.full(len(te), i))
    x_tr, y_tr = np.concatenate(xs_tr), np.concatenate(ys_tr)
    x_te, y_te = np.concatenate(xs_te), np.concatenate(ys_te)
    mu, sd = x_tr.mean(axis=0), x_tr.std(axis=0) + 1e-8
    x_tr, x_te = (x_tr - mu) / sd, (x_te - mu) / sd
    probe = MLP(substream(seed, "probe"), "probe", x_tr.shape[1], hidden, bundle.num_domains)
    state = AdamState(lr=lr)
    for _ in range(steps):
        loss = ops.cross_entropy(probe(Tensor(x_tr)), y_tr)
        backward(loss)
        adam_step(probe.parameters(), state)
    pred = np.argmax(probe(Tensor(x_te)).data, axis=1)
    return float(np.mean(pred == y_te))


# -- full run -----------------------------------------------------------------


def carve_validation(dataset: MultiDomainDataset, fraction: float, seed: int) -> tuple[MultiDomainDataset, MultiDomainDataset]:
    """Split off ``fraction`` of each domain's train set; returns (train-side, validation-as-test)."""
    tr, va = {}, {}
    for dom in dataset.domains:
        docs = dataset.train(dom)
        perm = substream(seed, "validation", dom).permutation(len(docs))
        n_val = max(1, int(round(fraction * len(docs))))
        va_docs = tuple(docs[j] for j in perm[:n_val])
        tr_docs = tuple(docs[j] for j in perm[n_val:])
        sp = dataset.splits[dom]
        tr[dom] = DomainSplit(tr_docs, sp.test, sp.unlabeled)
        va[dom] = DomainSplit(tr_docs, va_docs, ())
    return (MultiDomainDataset(dataset.domains, tr, dataset.num_labels),
            MultiDomainDataset(dataset.domains, va, dataset.num_labels))


def init_bundle(dataset: MultiDomainDataset, cfg: TrainConfig, vocab: Vocabulary | None = None,
                shared=None) -> ModelBundle:
    vocab = vocab or build_vocab(dataset, cfg.min_freq, cfg.max_vocab)
    mcfg = ModelConfig(len(vocab), dataset.num_domains, dataset.num_labels, cfg.embed_dim,
                       tuple(cfg.kernel_sizes), cfg.channels, cfg.hidden, cfg.lam)
    return ModelBundle.create(mcfg, cfg.seed, vocab, dataset.domains, shared)


def train(dataset: MultiDomainDataset, schedule: CurriculumSchedule, cfg: TrainConfig,
          bundle: ModelBundle | None = None, hook: Callable[[int, str], None] | None = None,
          on_eval: Callable[[ModelBundle, dict], None] | None = None) -> tuple[ModelBundle, RunHistory]:
    """Run ``epochs x steps_per_epoch`` curriculum steps; keep the best-average-accuracy weights.

    Selection uses a validation split carved from train when ``val_fraction``
    is set, otherwise the test split.
    """
    build_schedule(DomainRanking(tuple((d, 0.0) for d in schedule.order), schedule.extractor), dataset.domains)
    select_on = dataset
    if cfg.val_fraction > 0:
        dataset, select_on = carve_validation(dataset, cfg.val_fraction, cfg.seed)
    bundle = bundle or init_bundle(dataset, cfg)
    history = RunHistory()
    if cfg.epochs == 0:
        return bundle, history
    streams = make_streams(dataset, bundle.vocab, cfg, _min_len(bundle))
    opt = Optimizers.from_config(cfg)
    steps = cfg.steps_per_epoch or max(math.ceil(len(dataset.train(d)) / cfg.batch_size) for d in dataset.domains)
    best: tuple[float, dict] | None = None
    t0 = time.perf_counter()
    step = 0
    for epoch in range(cfg.epochs):
        for _ in range(steps):
            metrics = train_step(bundle, schedule, streams, opt, cfg, step, epoch, hook)
            history.append(metrics.record(), time.perf_counter() - t0)
            step += 1
        if (epoch + 1) % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            acc = evaluate(bundle, select_on, max_len=cfg.max_len)
            rec = {"kind": "eval", "step": step, "epoch": epoch, **acc.to_json()}
            history.append(rec, time.perf_counter() - t0)
            if on_eval is not None:
                on_eval(bundle, rec)
            # ties go to the later checkpoint: same accuracy, more adversarial training
            if best is None or acc.average >= best[0]:
                best = (acc.average, copy.deepcopy(bundle.state_dict()))
    if best is not None:
        bundle.load_state_dict(best[1])
    return bundle, history
