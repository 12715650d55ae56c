"""Embedding-similarity keywords from a precomputed word-vector table.

Stands in for an encoder-based extractor: each candidate word is scored by
its cosine similarity to the domain centroid, clamped at zero.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from kcl.corpus import Document
from kcl.keywords.textrank import content_tokens
from kcl.keywords.types import KeywordError, KeywordList


@dataclass(frozen=True)
class EmbeddingTable:
    vectors: dict[str, np.ndarray]
    dim: int

    def __post_init__(self):
        for tok, vec in self.vectors.items():
            if vec.shape != (self.dim,):
                raise ValueError(f"embedding for {tok!r} has shape {vec.shape}, expected ({self.dim},)")
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"embedding for {tok!r} has non-finite components")

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)


def load_embedding_table(path: str | Path) -> EmbeddingTable:
    """Read ``<count> <dim>`` then ``<token> <v1> ... <vd>`` lines."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}:1: expected '<vocab_count> <dim>' header")
        count, dim = int(header[0]), int(header[1])
        vectors = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if not line.strip():
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected token plus {dim} values, got {len(parts) - 1}")
            try:
                vectors[parts[0]] = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric vector component") from None
    if len(vectors) != count:
        raise ValueError(f"{path}: header declares {count} vectors, found {len(vectors)}")
    return EmbeddingTable(vectors, dim)


def save_embedding_table(path: str | Path, table: EmbeddingTable) -> None:
    lines = [f"{len(table)} {table.dim}"]
    for tok in sorted(table.vectors):
        lines.append(" ".join([tok] + [repr(float(v)) for v in table.vectors[tok]]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class EmbeddingConfig:
    centroid: str = "freq"  # "freq": occurrence-weighted, "mean": each distinct word once
    min_coverage: float = 0.5


def extract_embedding_sim(docs: Sequence[Document], table: EmbeddingTable,
                          cfg: EmbeddingConfig = EmbeddingConfig(), domain: str = "") -> KeywordList:
    domain = domain or (docs[0].domain if docs else "")
    counts: Counter[str] = Counter()
    for d in docs:
        counts.update(content_tokens(d.text))
    total = sum(counts.values())
    if total == 0:
        raise KeywordError(f"domain {domain!r}: no content tokens")
    covered = sorted(t for t in counts if t in table)
    coverage = sum(counts[t] for t in covered) / total
    if coverage < cfg.min_coverage:
        raise KeywordError(
            f"domain {domain!r}: embedding table covers {coverage:.1%} of content tokens "
            f"({1 - coverage:.1%} missing); need {cfg.min_coverage:.0%}"
        )
    mat = np.stack([table.vectors[t] for t in covered])
    if cfg.centroid == "freq":
        w = np.array([counts[t] for t in covered], dtype=np.float64)
        centroid = (w[:, None] * mat).sum(axis=0) / w.sum()
    elif cfg.centroid == "mean":
        centroid = mat.mean(axis=0)
    else:
        raise ValueError(f"unknown centroid mode {cfg.centroid!r}")
    c_norm = np.linalg.norm(centroid)
    if c_norm == 0:
        raise KeywordError(f"domain {domain!r}: centroid has zero norm")
    norms = np.linalg.norm(mat, axis=1)
    cos = np.divide(mat @ centroid, norms * c_norm, out=np.zeros(len(covered)), where=norms > 0)
    # rounding can push identical directions a hair past 1
    weights = np.clip(cos, 0.0, 1.0)
    return KeywordList.from_scores(domain, dict(zip(covered, weights.tolist())))
