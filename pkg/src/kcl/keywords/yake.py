"""Single-token YAKE scoring over a domain corpus.

Per candidate term t (lowercased, not a stopword, not numeric):

    casing      T_case = max(TF_upper, TF_acronym) / (1 + ln TF)
    position    T_pos  = ln(ln(3 + median sentence index of the sentences holding t))
    frequency   T_freq = TF / (mean TF + std TF)        over candidate terms
    relatedness T_rel  = 1 + (DL + DR) * TF / max TF    max over all terms
    dispersion  T_sent = sentences holding t / total sentences

    S(t) = T_rel * T_pos / (T_case + T_freq / T_rel + T_sent / T_rel)

Lower S means more important; the emitted weight is ``1 / (1 + S)``.
Sentence indices restart at 0 in every document. Context counts (DL, DR)
see stopwords; only candidate selection drops them.
"""

from __future__ import annotations

import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from kcl.corpus import Document, TokenizerConfig, tokenize
from kcl.keywords.types import KeywordError, KeywordList
from kcl.stopwords import STOPWORDS

_SENTENCE_END = re.compile(r"(?<=[.!?])\s+|\n+")
_CASED = TokenizerConfig(lowercase=False)


@dataclass(frozen=True)
class YakeConfig:
    window: int = 1
    max_candidates: int | None = None


@dataclass(frozen=True)
class YakeFeatures:
    tf: int
    tf_upper: int
    tf_acronym: int
    sentences: tuple[int, ...]  # within-document index of each distinct sentence holding the term
    left: Counter
    right: Counter
    t_case: float
    t_pos: float
    t_freq: float
    t_rel: float
    t_sent: float
    score: float


def split_sentences(text: str) -> list[str]:
    return [s for s in _SENTENCE_END.split(text) if s.strip()]


def score_to_weight(score: float) -> float:
    return 1.0 / (1.0 + score)


def _is_candidate(term: str) -> bool:
    return term not in STOPWORDS and not term.isdigit()


def yake_features(docs: Sequence[Document], cfg: YakeConfig = YakeConfig()) -> dict[str, YakeFeatures]:
    tf: Counter[str] = Counter()
    upper: Counter[str] = Counter()
    acro: Counter[str] = Counter()
    sent_pos: dict[str, list[int]] = defaultdict(list)
    left: dict[str, Counter] = defaultdict(Counter)
    right: dict[str, Counter] = defaultdict(Counter)
    last_seen: dict[str, tuple[int, int]] = {}
    n_sentences = 0
    for d_idx, doc in enumerate(docs):
        for s_idx, sentence in enumerate(split_sentences(doc.text)):
            raw = tokenize(sentence, _CASED)
            if not raw:
                continue
            n_sentences += 1
            terms = [t.lower() for t in raw]
            for p, (tok, term) in enumerate(zip(raw, terms)):
                tf[term] += 1
                if len(tok) > 1 and tok.isupper() and not tok.isdigit():
                    acro[term] += 1
                elif p > 0 and tok[0].isupper():
                    upper[term] += 1
                if last_seen.get(term) != (d_idx, s_idx):
                    sent_pos[term].append(s_idx)
                    last_seen[term] = (d_idx, s_idx)
                left[term].update(terms[max(0, p - cfg.window):p])
                right[term].update(terms[p + 1:p + 1 + cfg.window])

    candidates = sorted(t for t in tf if _is_candidate(t))
    if not candidates:
        raise KeywordError("no YAKE candidates in corpus")
    cand_tf = np.array([tf[t] for t in candidates], dtype=np.float64)
    mean_tf, std_tf = float(cand_tf.mean()), float(cand_tf.std())
    max_tf = max(tf.values())

    out = {}
    for t in candidates:
        f = tf[t]
        t_case = max(upper[t], acro[t]) / (1.0 + math.log(f))
        t_pos = math.log(math.log(3.0 + float(np.median(sent_pos[t]))))
        t_freq = f / (mean_tf + std_tf)
        dl = len(left[t]) / sum(left[t].values()) if left[t] else 0.0
        dr = len(right[t]) / sum(right[t].values()) if right[t] else 0.0
        t_rel = 1.0 + (dl + dr) * f / max_tf
        t_sent = len(sent_pos[t]) / n_sentences
        score = t_rel * t_pos / (t_case + t_freq / t_rel + t_sent / t_rel)
        out[t] = YakeFeatures(f, upper[t], acro[t], tuple(sent_pos[t]), left[t], right[t],
                              t_case, t_pos, t_freq, t_rel, t_sent, score)
    return out


def extract_yake(docs: Sequence[Document], cfg: YakeConfig = YakeConfig(), domain: str = "") -> KeywordList:
    if not docs:
        raise KeywordError(f"domain {domain!r}: empty corpus")
    feats = yake_features(docs, cfg)
    kl = KeywordList.from_scores(domain or docs[0].domain, {t: score_to_weight(f.score) for t, f in feats.items()})
    if cfg.max_candidates is not None:
        kl = KeywordList(kl.domain, kl.entries[: cfg.max_candidates])
    return kl
