"""Top-N truncation, per-domain weight sums and the curriculum ranking."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from kcl.corpus import MultiDomainDataset
from kcl.keywords.embedding import EmbeddingConfig, EmbeddingTable, extract_embedding_sim
from kcl.keywords.textrank import TextRankConfig, extract_textrank
from kcl.keywords.types import KeywordError, KeywordList
from kcl.keywords.yake import YakeConfig, extract_yake
from kcl.seeding import substream

EXTRACTORS = ("textrank", "yake", "embedding", "random")
DEFAULT_N = 50
SWEEP_N = (30, 40, 50, 60, 70)


@dataclass(frozen=True)
class DomainRanking:
    entries: tuple[tuple[str, float], ...]
    extractor: str
    n: int | None = None
    seed: int | None = None

    @property
    def order(self) -> list[str]:
        return [d for d, _ in self.entries]

    @property
    def weights(self) -> dict[str, float]:
        return dict(self.entries)

    def to_json(self) -> dict:
        out = {"extractor": self.extractor, "N": self.n}
        if self.seed is not None:
            out["seed"] = self.seed
        out["ranking"] = [{"domain": d, "W": w} for d, w in self.entries]
        return out

    @classmethod
    def from_json(cls, rec: Mapping) -> DomainRanking:
        return cls(tuple((e["domain"], float(e["W"])) for e in rec["ranking"]),
                   rec["extractor"], rec.get("N"), rec.get("seed"))


def top_n(kl: KeywordList, n: int) -> KeywordList:
    if n < 1:
        raise ValueError("N must be >= 1")
    return KeywordList(kl.domain, kl.entries[:n])


def domain_weight(kl: KeywordList) -> float:
    """Sum of the (already truncated) keyword weights, correctly rounded."""
    if not kl.entries:
        raise KeywordError(f"domain {kl.domain!r}: empty keyword list")
    return math.fsum(kl.weights)


def rank_domains(weights: Mapping[str, float], domains: Sequence[str] | None = None,
                 extractor: str = "", n: int | None = None) -> DomainRanking:
    """Order domains by weight, high to low; equal weights fall back to domain id."""
    if domains is not None:
        missing = sorted(set(domains) - set(weights))
        extra = sorted(set(weights) - set(domains))
        if missing or extra:
            raise KeywordError(f"ranking weights do not match domains (missing {missing}, unexpected {extra})")
    entries = sorted(((d, float(w)) for d, w in weights.items()), key=lambda e: (-e[1], e[0]))
    return DomainRanking(tuple(entries), extractor, n)


def extract_random_order(domains: Sequence[str], seed: int) -> DomainRanking:
    perm = substream(seed, "random-order").permutation(len(domains))
    return DomainRanking(tuple((domains[i], 0.0) for i in perm), "random", None, seed)


def extract_keywords(dataset: MultiDomainDataset, extractor: str, table: EmbeddingTable | None = None,
                     textrank: TextRankConfig = TextRankConfig(), yake: YakeConfig = YakeConfig(),
                     embedding: EmbeddingConfig = EmbeddingConfig()) -> dict[str, KeywordList]:
    """Full keyword list per domain from train + unlabeled text."""
    out = {}
    for dom in dataset.domains:
        docs = dataset.keyword_docs(dom)
        if extractor == "textrank":
            out[dom] = extract_textrank(docs, textrank, dom)
        elif extractor == "yake":
            out[dom] = extract_yake(docs, yake, dom)
        elif extractor == "embedding":
            if table is None:
                raise KeywordError("embedding extractor needs an embedding table")
            out[dom] = extract_embedding_sim(docs, table, embedding, dom)
        else:
            raise KeywordError(f"unknown extractor {extractor!r}")
    return out


def rank_from_keywords(lists: Mapping[str, KeywordList], n: int, extractor: str,
                       domains: Sequence[str] | None = None) -> DomainRanking:
    weights = {dom: domain_weight(top_n(kl, n)) for dom, kl in lists.items()}
    return rank_domains(weights, domains, extractor, n)


def keywords_to_json(lists: Mapping[str, KeywordList], n: int, extractor: str,
                     domains: Iterable[str] | None = None) -> dict:
    """Full keyword lists; ``W`` and ``n_used`` describe the Top-N prefix."""
    rows = []
    for dom in domains or lists:
        kl = lists[dom]
        head = top_n(kl, n)
        rows.append({
            "domain": dom,
            "W": domain_weight(head),
            "n_used": len(head),
            "keywords": [{"word": w, "weight": s} for w, s in kl.entries],
        })
    return {"extractor": extractor, "N": n, "domains": rows}


def keywords_from_json(rec: Mapping) -> dict[str, KeywordList]:
    return {
        row["domain"]: KeywordList(row["domain"], tuple((k["word"], float(k["weight"])) for k in row["keywords"]))
        for row in rec["domains"]
    }


def dumps(obj) -> str:
    """Stable JSON text for files whose bytes must not drift between reruns."""
    return json.dumps(obj, indent=2, ensure_ascii=False, allow_nan=False) + "\n"
