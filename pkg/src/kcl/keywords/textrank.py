"""Single-word TextRank over an undirected token co-occurrence graph.

Scores follow the Mihalcea-Tarau recurrence

    S(v) = (1 - d) + d * sum_{u in adj(v)} S(u) / deg(u)

iterated from S = 1. Reported keyword weights are the fixed point divided by
its total, i.e. the share of rank mass held by each word in the domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from kcl.corpus import Document, tokenize
from kcl.keywords.types import KeywordError, KeywordList
from kcl.stopwords import STOPWORDS


@dataclass(frozen=True)
class TextRankConfig:
    window: int = 4
    damping: float = 0.85
    iters: int = 200
    tol: float = 1e-8


def content_tokens(text: str) -> list[str]:
    return [t for t in tokenize(text) if t not in STOPWORDS]


def cooccurrence_graph(sequences: Iterable[Sequence[str]], window: int) -> tuple[list[str], np.ndarray]:
    """Sorted node list and unique undirected edges ``[E, 2]`` (i < j).

    Two tokens are linked when they sit fewer than ``window`` positions apart
    in the same sequence; self-pairs are dropped.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    pairs: set[tuple[str, str]] = set()
    vocab: set[str] = set()
    for seq in sequences:
        vocab.update(seq)
        for i, a in enumerate(seq):
            for b in seq[i + 1 : i + window]:
                if a != b:
                    pairs.add((a, b) if a < b else (b, a))
    nodes = sorted(vocab)
    index = {t: i for i, t in enumerate(nodes)}
    edges = np.array(sorted((index[a], index[b]) for a, b in pairs), dtype=np.int64).reshape(-1, 2)
    return nodes, edges


def textrank_scores(n_nodes: int, edges: np.ndarray, damping: float = 0.85,
                    iters: int = 200, tol: float = 1e-8) -> np.ndarray:
    """Fixed point of the TextRank recurrence on an edge list.

    The update is an L1 contraction with factor ``damping``, so iteration stops
    once ``|dS|_1 * d / (1 - d) <= tol``, which bounds the L1 (hence max)
    distance to the true fixed point by ``tol``.
    """
    if not 0 < damping < 1:
        raise ValueError("damping must lie in (0, 1)")
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    deg = np.bincount(src, minlength=n_nodes).astype(np.float64)
    inv_deg = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
    scores = np.ones(n_nodes)
    bound = damping / (1.0 - damping)
    for _ in range(iters):
        flow = np.bincount(dst, weights=scores[src] * inv_deg[src], minlength=n_nodes)
        new = (1.0 - damping) + damping * flow
        delta = np.abs(new - scores).sum()
        scores = new
        if delta * bound <= tol:
            break
    return scores


def extract_textrank(docs: Sequence[Document], cfg: TextRankConfig = TextRankConfig(), domain: str = "") -> KeywordList:
    """Full TextRank keyword list (untruncated) for one domain's documents."""
    seqs = [content_tokens(d.text) for d in docs]
    nodes, edges = cooccurrence_graph(seqs, cfg.window)
    if not nodes:
        raise KeywordError(f"domain {domain!r}: no content tokens left after stopword removal")
    raw = textrank_scores(len(nodes), edges, cfg.damping, cfg.iters, cfg.tol)
    weights = raw / raw.sum()
    return KeywordList.from_scores(domain or (docs[0].domain if docs else ""), dict(zip(nodes, weights.tolist())))
