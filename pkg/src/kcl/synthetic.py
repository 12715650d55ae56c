"""Planted-keyword two-domain corpus for end-to-end checks.

``planted`` documents mention capitalised brand-like names from a small pool
in every sentence, so its domain-specific vocabulary is concentrated, frequent
and (in the embedding table) semantically coherent. ``diffuse`` documents
sprinkle words drawn from a large topic pool, each individually rare. Both
share filler words and the sentiment words that carry the label. The planted
domain is the one every extractor should rank first; its name sorts after
``diffuse`` so the ranking cannot come from the lexicographic tie-break.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from kcl.corpus import Document, DomainSplit, MultiDomainDataset
from kcl.keywords.embedding import EmbeddingTable, save_embedding_table
from kcl.seeding import substream

POSITIVE = ("great", "excellent", "superb", "delightful", "wonderful", "recommend")
NEGATIVE = ("awful", "terrible", "broken", "disappointing", "refund", "worst")
PLANTED = tuple(f"Gizmo{i:02d}" for i in range(30))
DOMAINS = ("diffuse", "planted")


@dataclass(frozen=True)
class SyntheticSpec:
    n_train: int = 400
    n_test: int = 100
    n_unlabeled: int = 0
    n_filler: int = 120
    n_topic: int = 600
    planted_per_sentence: int = 3
    sentences: int = 3
    sentence_len: int = 8
    embed_dim: int = 64


def _filler(spec: SyntheticSpec) -> list[str]:
    return [f"filler{i:03d}" for i in range(spec.n_filler)]


def _topics(spec: SyntheticSpec) -> list[str]:
    return [f"topic{i:03d}" for i in range(spec.n_topic)]


def _document(rng: np.random.Generator, domain: str, label: int | None, spec: SyntheticSpec) -> str:
    filler, topics = _filler(spec), _topics(spec)
    sentences = []
    for s in range(spec.sentences):
        words = list(rng.choice(filler, size=spec.sentence_len - 1))
        if domain == "planted":
            for name in rng.choice(PLANTED, size=spec.planted_per_sentence, replace=False):
                words.insert(int(rng.integers(1, len(words) + 1)), str(name))
        else:
            for _ in range(2):
                words.insert(int(rng.integers(0, len(words) + 1)), str(rng.choice(topics)))
        if label is not None:
            pool = POSITIVE if label == 1 else NEGATIVE
            words.insert(int(rng.integers(0, len(words) + 1)), str(rng.choice(pool)))
        words[0] = words[0].capitalize()
        sentences.append(" ".join(words) + ".")
    return " ".join(sentences)


def make_dataset(seed: int = 0, spec: SyntheticSpec = SyntheticSpec()) -> MultiDomainDataset:
    splits = {}
    for dom in DOMAINS:
        rng = substream(seed, "synthetic", dom)
        parts = {}
        for name, n in (("train", spec.n_train), ("test", spec.n_test), ("unlabeled", spec.n_unlabeled)):
            docs = []
            for i in range(n):
                label = None if name == "unlabeled" else int(i % 2)
                docs.append(Document(_document(rng, dom, label, spec), dom, label, f"{dom}/{name}/{i + 1}"))
            order = rng.permutation(len(docs))
            parts[name] = tuple(docs[j] for j in order)
        splits[dom] = DomainSplit(**parts)
    return MultiDomainDataset(DOMAINS, splits, 2)


def make_embedding_table(seed: int = 0, spec: SyntheticSpec = SyntheticSpec()) -> EmbeddingTable:
    """Planted names share one direction; every other word gets an independent random vector."""
    rng = substream(seed, "synthetic", "embedding")
    base = rng.normal(size=spec.embed_dim)
    base /= np.linalg.norm(base)
    vectors = {}
    for w in PLANTED:
        v = base + 0.1 * rng.normal(size=spec.embed_dim) / np.sqrt(spec.embed_dim)
        vectors[w.lower()] = v
    for w in _filler(spec) + _topics(spec) + list(POSITIVE) + list(NEGATIVE):
        vectors[w] = rng.normal(size=spec.embed_dim) / np.sqrt(spec.embed_dim)
    return EmbeddingTable(vectors, spec.embed_dim)


def write_dataset(root: str | Path, dataset: MultiDomainDataset) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "dataset.json").write_text(
        json.dumps({"domains": list(dataset.domains), "num_labels": dataset.num_labels}, indent=2) + "\n",
        encoding="utf-8",
    )
    for dom in dataset.domains:
        ddir = root / dom
        ddir.mkdir(exist_ok=True)
        sp = dataset.splits[dom]
        for name, docs in (("train", sp.train), ("test", sp.test), ("unlabeled", sp.unlabeled)):
            if name == "unlabeled" and not docs:
                continue
            lines = []
            for d in docs:
                rec = {"text": d.text} if d.label is None else {"text": d.text, "label": d.label}
                lines.append(json.dumps(rec, ensure_ascii=False))
            (ddir / f"{name}.jsonl").write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return root


def write_corpus(root: str | Path, seed: int = 0, spec: SyntheticSpec = SyntheticSpec()) -> Path:
    """Write the dataset layout plus ``embeddings.txt`` under ``root``."""
    root = write_dataset(root, make_dataset(seed, spec))
    save_embedding_table(root / "embeddings.txt", make_embedding_table(seed, spec))
    return root
