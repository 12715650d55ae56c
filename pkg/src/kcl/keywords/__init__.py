"""Domain keyword extraction and keyword-weight domain ranking."""

from kcl.keywords.embedding import (
    EmbeddingConfig,
    EmbeddingTable,
    extract_embedding_sim,
    load_embedding_table,
    save_embedding_table,
)
from kcl.keywords.ranking import (
    DEFAULT_N,
    EXTRACTORS,
    SWEEP_N,
    DomainRanking,
    domain_weight,
    dumps,
    extract_keywords,
    extract_random_order,
    keywords_from_json,
    keywords_to_json,
    rank_domains,
    rank_from_keywords,
    top_n,
)
from kcl.keywords.textrank import TextRankConfig, extract_textrank
from kcl.keywords.types import KeywordError, KeywordList
from kcl.keywords.yake import YakeConfig, extract_yake

__all__ = [
    "DEFAULT_N", "EXTRACTORS", "SWEEP_N", "DomainRanking", "EmbeddingConfig", "EmbeddingTable",
    "KeywordError", "KeywordList", "TextRankConfig", "YakeConfig", "domain_weight",
    "extract_embedding_sim", "extract_keywords", "extract_random_order", "extract_textrank",
    "dumps", "extract_yake", "keywords_from_json", "keywords_to_json", "load_embedding_table",
    "rank_domains", "rank_from_keywords", "save_embedding_table", "top_n",
]
