from .cascade import CascadeConfig, CascadeResult, GoldMatcher, PassageHit, match_gold, run_cascade
from .core import (
    Bm25Params,
    InvertedIndex,
    Passage,
    build_index,
    chunk_document,
    index_terms,
    load_corpus,
)
from .kernels import KERNEL_NAME

__all__ = [
    "Bm25Params", "CascadeConfig", "CascadeResult", "GoldMatcher",
    "InvertedIndex", "KERNEL_NAME", "Passage", "PassageHit", "build_index",
    "chunk_document", "index_terms", "load_corpus", "match_gold", "run_cascade",
]
