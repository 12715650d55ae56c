"""Multi-domain corpus loading, tokenization, vocabulary and batching.

On-disk layout::

    <root>/dataset.json                 {"domains": [...], "num_labels": int}
    <root>/<domain>/train.jsonl         {"text": str, "label": int}
    <root>/<domain>/test.jsonl          optional; ratio split is used when absent
    <root>/<domain>/unlabeled.jsonl     optional; {"text": str}
"""

from __future__ import annotations

import json
import re
import warnings
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from kcl.seeding import substream

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"
DEFAULT_MAX_LEN = 256


class DatasetError(ValueError):
    """Raised for missing files, malformed lines and schema violations."""


@dataclass(frozen=True)
class Document:
    text: str
    domain: str
    label: int | None = None
    doc_id: str = ""

    def __post_init__(self):
        if not self.domain:
            raise DatasetError("document domain must be non-empty")


@dataclass(frozen=True)
class DomainSplit:
    train: tuple[Document, ...] = ()
    test: tuple[Document, ...] = ()
    unlabeled: tuple[Document, ...] = ()


@dataclass(frozen=True)
class MultiDomainDataset:
    domains: tuple[str, ...]
    splits: dict[str, DomainSplit]
    num_labels: int

    def __post_init__(self):
        if set(self.splits) != set(self.domains):
            raise DatasetError(f"split keys {sorted(self.splits)} != domains {list(self.domains)}")
        for name, sp in self.splits.items():
            for doc in sp.train + sp.test + sp.unlabeled:
                if doc.domain != name:
                    raise DatasetError(f"document {doc.doc_id!r} filed under {name!r} has domain {doc.domain!r}")
            for doc in sp.train + sp.test:
                if doc.label is None or not 0 <= doc.label < self.num_labels:
                    raise DatasetError(f"document {doc.doc_id!r} has invalid label {doc.label!r}")
            train_ids = {d.doc_id for d in sp.train}
            if train_ids & {d.doc_id for d in sp.test}:
                raise DatasetError(f"train/test overlap in domain {name!r}")

    @property
    def num_domains(self) -> int:
        return len(self.domains)

    def domain_index(self, domain: str) -> int:
        return self.domains.index(domain)

    def train(self, domain: str) -> tuple[Document, ...]:
        return self.splits[domain].train

    def test(self, domain: str) -> tuple[Document, ...]:
        return self.splits[domain].test

    def unlabeled(self, domain: str) -> tuple[Document, ...]:
        return self.splits[domain].unlabeled

    def keyword_docs(self, domain: str) -> tuple[Document, ...]:
        """Text used for keyword extraction: train plus unlabeled, never test."""
        sp = self.splits[domain]
        return sp.train + sp.unlabeled


@dataclass(frozen=True)
class DatasetLayout:
    """Overrides for what ``dataset.json`` would otherwise declare."""

    domains: tuple[str, ...] | None = None
    num_labels: int | None = None


# -- loading ------------------------------------------------------------------


def _read_jsonl(path: Path, domain: str, split: str, labeled: bool, num_labels: int) -> tuple[Document, ...]:
    docs = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or not isinstance(rec.get("text"), str):
                raise DatasetError(f"{path}:{lineno}: expected an object with a string 'text'")
            label = rec.get("label")
            if labeled:
                if isinstance(label, bool) or not isinstance(label, int):
                    raise DatasetError(f"{path}:{lineno}: missing or non-integer 'label'")
                if not 0 <= label < num_labels:
                    raise DatasetError(f"{path}:{lineno}: label {label} outside [0, {num_labels})")
            else:
                label = None
            docs.append(Document(rec["text"], domain, label, f"{domain}/{split}/{lineno}"))
    return tuple(docs)


def load_dataset(path: str | Path, layout: DatasetLayout | None = None) -> MultiDomainDataset:
    """Load every domain under ``path``.

    Domains without ``test.jsonl`` come back with an empty test set; pass the
    result through :func:`split` to carve one out of train.
    """
    root = Path(path)
    if not root.is_dir():
        raise DatasetError(f"dataset directory not found: {root}")
    layout = layout or DatasetLayout()
    meta: dict = {}
    meta_path = root / "dataset.json"
    if meta_path.exists():
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{meta_path}: malformed JSON ({exc.msg})") from None

    domains = layout.domains or meta.get("domains")
    if domains is None:
        domains = sorted(p.name for p in root.iterdir() if p.is_dir())
    domains = tuple(domains)
    num_labels = layout.num_labels or meta.get("num_labels")
    if not isinstance(num_labels, int) or num_labels < 1:
        raise DatasetError(f"{root}: num_labels must be declared in dataset.json or the layout")
    if not domains:
        raise DatasetError(f"{root}: no domains found")

    splits = {}
    for dom in domains:
        ddir = root / dom
        if not ddir.is_dir():
            raise DatasetError(f"domain directory not found: {ddir}")
        parts = {}
        for name, labeled in (("train", True), ("test", True), ("unlabeled", False)):
            f = ddir / f"{name}.jsonl"
            parts[name] = _read_jsonl(f, dom, name, labeled, num_labels) if f.exists() else ()
        splits[dom] = DomainSplit(**parts)
    return MultiDomainDataset(domains, splits, num_labels)


def split(dataset: MultiDomainDataset, ratio: float = 0.8, seed: int = 0) -> MultiDomainDataset:
    """Shuffle-split ``floor(ratio * n)`` training docs per domain.

    Domains that already ship a test set are left untouched.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    out = {}
    for dom in dataset.domains:
        sp = dataset.splits[dom]
        if sp.test:
            out[dom] = sp
            continue
        docs = sp.train
        if len(docs) < 2:
            raise DatasetError(f"domain {dom!r} has {len(docs)} labeled docs; need at least 2 to split")
        order = substream(seed, "split", dom).permutation(len(docs))
        n_train = int(np.floor(ratio * len(docs)))
        n_train = min(max(n_train, 1), len(docs) - 1)
        out[dom] = DomainSplit(
            train=tuple(docs[i] for i in order[:n_train]),
            test=tuple(docs[i] for i in order[n_train:]),
            unlabeled=sp.unlabeled,
        )
    return replace(dataset, splits=out)


# -- tokenization -------------------------------------------------------------


@dataclass(frozen=True)
class TokenizerConfig:
    lowercase: bool = True
    pattern: str = r"[^\W_]+"


_PATTERN_CACHE: dict[str, re.Pattern] = {}


def tokenize(text: str, cfg: TokenizerConfig = TokenizerConfig()) -> list[str]:
    """Split ``text`` into alphanumeric runs.

    >>> tokenize("The idea is infantile.")
    ['the', 'idea', 'is', 'infantile']
    """
    pat = _PATTERN_CACHE.get(cfg.pattern)
    if pat is None:
        pat = _PATTERN_CACHE[cfg.pattern] = re.compile(cfg.pattern)
    if cfg.lowercase:
        text = text.lower()
    return [t for t in pat.findall(text) if t]


# -- vocabulary ---------------------------------------------------------------


@dataclass
class Vocabulary:
    itos: list[str]
    stoi: dict[str, int] = field(init=False)

    def __post_init__(self):
        if self.itos[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary must start with PAD and UNK")
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def fingerprint(self) -> str:
        import hashlib

        return hashlib.sha256("\n".join(self.itos).encode("utf-8")).hexdigest()


def build_vocab(
    dataset: MultiDomainDataset,
    min_freq: int = 1,
    max_size: int | None = None,
    tok_cfg: TokenizerConfig = TokenizerConfig(),
) -> Vocabulary:
    """Frequency-ordered vocabulary over train + unlabeled text (never test).

    ``max_size`` counts PAD and UNK. Ties in frequency break lexicographically.
    """
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts: Counter[str] = Counter()
    n_docs = 0
    for dom in dataset.domains:
        for doc in dataset.keyword_docs(dom):
            counts.update(tokenize(doc.text, tok_cfg))
            n_docs += 1
    if n_docs == 0:
        raise DatasetError("cannot build a vocabulary from an empty training corpus")
    kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    if max_size is not None:
        kept = kept[: max(max_size - 2, 0)]
    return Vocabulary([PAD_TOKEN, UNK_TOKEN] + kept)


# -- batching -----------------------------------------------------------------


@dataclass(frozen=True)
class TokenizedBatch:
    ids: np.ndarray  # int64 [B, L]
    lengths: np.ndarray  # int64 [B]
    domain: int
    labels: np.ndarray | None = None  # int64 [B]
    doc_ids: tuple[str, ...] = ()

    @property
    def size(self) -> int:
        return self.ids.shape[0]


def encode_batch(
    docs: Sequence[Document],
    vocab: Vocabulary,
    domain: int,
    max_len: int = DEFAULT_MAX_LEN,
    min_len: int = 1,
    tok_cfg: TokenizerConfig = TokenizerConfig(),
) -> TokenizedBatch:
    """Pad to the longest document (tail-truncated at ``max_len``), at least ``min_len`` wide."""
    seqs = [vocab.encode(tokenize(d.text, tok_cfg))[:max_len] for d in docs]
    width = max([len(s) for s in seqs] + [min_len, 1])
    ids = np.full((len(seqs), width), PAD, dtype=np.int64)
    for r, s in enumerate(seqs):
        ids[r, : len(s)] = s
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    labels = None
    if docs and all(d.label is not None for d in docs):
        labels = np.array([d.label for d in docs], dtype=np.int64)
    return TokenizedBatch(ids, lengths, domain, labels, tuple(d.doc_id for d in docs))


def batch_iter(
    docs: Sequence[Document],
    batch_size: int,
    seed: int,
    epoch: int,
    vocab: Vocabulary,
    domain: int = 0,
    max_len: int = DEFAULT_MAX_LEN,
    min_len: int = 1,
    shuffle: bool = True,
) -> Iterator[TokenizedBatch]:
    """One epoch over ``docs`` in a seeded order; the last batch may be short."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if not docs:
        warnings.warn(f"batch_iter: empty document set for domain {domain}", stacklevel=2)
        return
    order = np.arange(len(docs))
    if shuffle:
        order = substream(seed, "shuffle", domain, epoch).permutation(len(docs))
    for start in range(0, len(docs), batch_size):
        chunk = [docs[i] for i in order[start : start + batch_size]]
        yield encode_batch(chunk, vocab, domain, max_len, min_len)


class DomainStream:
    """Endless labeled or unlabeled batches for one domain, reshuffled each epoch."""

    def __init__(self, docs, batch_size, seed, vocab, domain, max_len=DEFAULT_MAX_LEN, min_len=1, tag=""):
        self.docs = tuple(docs)
        self.batch_size = batch_size
        self.seed = seed
        self.vocab = vocab
        self.domain = domain
        self.max_len = max_len
        self.min_len = min_len
        self.tag = tag
        self.epoch = 0
        self._it: Iterator[TokenizedBatch] | None = None

    def _open(self):
        # tag keeps labeled and unlabeled streams of one domain on separate shuffles
        seed = substream(self.seed, "stream", self.tag).integers(2**31) if self.tag else self.seed
        self._it = batch_iter(self.docs, self.batch_size, int(seed), self.epoch, self.vocab,
                              self.domain, self.max_len, self.min_len)

    def __bool__(self) -> bool:
        return bool(self.docs)

    def next(self) -> TokenizedBatch:
        if not self.docs:
            raise DatasetError(f"no documents for domain {self.domain} stream {self.tag!r}")
        if self._it is None:
            self._open()
        try:
            return next(self._it)
        except StopIteration:
            self.epoch += 1
            self._open()
            return next(self._it)
