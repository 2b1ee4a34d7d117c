"""Three-stage retrieval cascade and gold-evidence matching.

Stage 1 runs BM25 (fetch 300, keep K=180); stage 2 reranks the K survivors by
embedding cosine similarity (fetch 20, keep 10); stage 3 cross-encodes the 10
and keeps 1. Each stage consumes only the previous stage's keep set. A dense
or cross-encoder backend failure degrades the result to the last completed
stage's ranking, flagged on the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..backends import Backend
from ..errors import ConfigError, TransportError
from .core import InvertedIndex, Passage


@dataclass(frozen=True)
class CascadeConfig:
    bm25_fetch: int = 300
    bm25_keep: int = 180
    dense_fetch: int = 20
    dense_keep: int = 10
    final_keep: int = 1
    stages: tuple = ("bm25", "dense", "ce")

    def __post_init__(self):
        if self.bm25_fetch < self.bm25_keep or self.dense_fetch < self.dense_keep:
            raise ConfigError("fetch must be >= keep at each cascade stage")
        if self.stages[:1] != ("bm25",):
            raise ConfigError("cascade must start with the bm25 stage")


@dataclass
class PassageHit:
    passage: Passage
    scores: dict = field(default_factory=dict)  # stage -> score
    ranks: dict = field(default_factory=dict)  # stage -> 1-based rank


@dataclass
class CascadeResult:
    stage_hits: dict  # stage -> ranked list[PassageHit] (that stage's keep set)
    final_stage: str
    degraded_from: str | None = None

    @property
    def final_hits(self) -> list:
        return self.stage_hits[self.final_stage]

    def top_k(self, stage: str, k: int) -> list:
        return self.stage_hits[stage][:k]


def run_cascade(query_surface: str, index: InvertedIndex, config: CascadeConfig,
                backend: Backend | None = None) -> CascadeResult:
    hits_by_pid: dict[int, PassageHit] = {}

    def hit(pidx: int) -> PassageHit:
        if pidx not in hits_by_pid:
            hits_by_pid[pidx] = PassageHit(passage=index.passages[pidx])
        return hits_by_pid[pidx]

    bm25_top = index.search(query_surface, config.bm25_fetch)
    bm25_hits = []
    for rank, (pidx, score) in enumerate(bm25_top[: config.bm25_keep], start=1):
        h = hit(pidx)
        h.scores["bm25"] = score
        h.ranks["bm25"] = rank
        bm25_hits.append(h)
    stage_hits = {"bm25": bm25_hits}
    final_stage = "bm25"

    if "dense" in config.stages and bm25_hits:
        if backend is None:
            raise ConfigError("dense stage requires a backend with embed")
        try:
            vectors = backend.embed_batch(
                [query_surface] + [h.passage.text for h in bm25_hits])
        except TransportError:
            return CascadeResult(stage_hits, final_stage, degraded_from="dense")
        q = np.asarray(vectors[0], dtype=np.float64)
        qn = np.linalg.norm(q) or 1.0
        scored = []
        for h, vec in zip(bm25_hits, vectors[1:]):
            v = np.asarray(vec, dtype=np.float64)
            vn = np.linalg.norm(v) or 1.0
            scored.append((float(np.dot(q, v) / (qn * vn)), h))
        scored.sort(key=lambda t: (-t[0], t[1].passage.passage_id))
        dense_hits = []
        for rank, (score, h) in enumerate(scored[: config.dense_fetch][: config.dense_keep], start=1):
            h.scores["dense"] = score
            h.ranks["dense"] = rank
            dense_hits.append(h)
        stage_hits["dense"] = dense_hits
        final_stage = "dense"

    if "ce" in config.stages and final_stage == "dense" and stage_hits["dense"]:
        dense_hits = stage_hits["dense"]
        if backend is None:
            raise ConfigError("ce stage requires a backend with cross_encode")
        try:
            scores = backend.cross_encode_batch(
                [(query_surface, h.passage.text) for h in dense_hits])
        except TransportError:
            return CascadeResult(stage_hits, final_stage, degraded_from="ce")
        scored = sorted(zip(scores, dense_hits),
                        key=lambda t: (-t[0], t[1].passage.passage_id))
        ce_hits = []
        for rank, (score, h) in enumerate(scored[: config.final_keep], start=1):
            h.scores["ce"] = float(score)
            h.ranks["ce"] = rank
            ce_hits.append(h)
        stage_hits["ce"] = ce_hits
        final_stage = "ce"

    return CascadeResult(stage_hits, final_stage)


# ---------------------------------------------------------------------------
# gold matching

def _norm(text: str) -> str:
    return " ".join(text.casefold().split())


def _norm_title(title: str) -> str:
    return _norm(title.replace("_", " "))


class GoldMatcher:
    """Maps evidence items to the passages that contain them.

    Doc-level: page-title equality (case-folded, underscores as spaces).
    Sentence-level: the normalized gold sentence is contained in the
    normalized passage text.
    """

    def __init__(self, index: InvertedIndex, level: str = "sentence"):
        if level not in ("sentence", "doc"):
            raise ConfigError("matching level must be 'sentence' or 'doc'")
        self.level = level
        self._by_doc: dict[str, list[int]] = {}
        self._norm_cache: dict[int, str] = {}
        for i, p in enumerate(index.passages):
            self._by_doc.setdefault(_norm_title(p.doc_id), []).append(i)
        self.index = index

    def _passage_norm(self, pidx: int) -> str:
        if pidx not in self._norm_cache:
            self._norm_cache[pidx] = _norm(self.index.passages[pidx].text)
        return self._norm_cache[pidx]

    def matches(self, passage: Passage, item) -> bool:
        if _norm_title(passage.doc_id) != _norm_title(item.page_title):
            return False
        if self.level == "doc":
            return True
        return _norm(item.text) in _norm(passage.text)

    def locatable(self, item) -> bool:
        """True iff some passage in the corpus matches the item at all."""
        pidxs = self._by_doc.get(_norm_title(item.page_title), ())
        if self.level == "doc":
            return bool(pidxs)
        gold = _norm(item.text)
        return any(gold in self._passage_norm(i) for i in pidxs)


def match_gold(hits, evidence, k: int, matcher: GoldMatcher) -> list[bool]:
    """Per-gold-item flag: hit iff any of the top-k passages matches it."""
    top = hits[:k]
    return [any(matcher.matches(h.passage, item) for h in top) for item in evidence]
