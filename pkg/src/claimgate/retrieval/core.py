"""Passage chunking and the BM25 inverted index.

Tokenization is pinned in the index manifest:
  * chunking tokens are whitespace-separated surface tokens (case preserved;
    passage text is the space-rejoined window);
  * index terms are Unicode word tokens (`\\w+`) of the case-folded passage
    text, no stemming or stopwording.
IDF uses the non-negative ln(1 + (N - df + 0.5)/(df + 0.5)) form. Rebuilding
an index with an equal manifest is byte-identical regardless of the document
order in the corpus file (passages are sorted by passage_id at build time).
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, DataError
from .kernels import KERNEL_NAME, accumulate_term

FORMAT_VERSION = "claimgate-index-1"
TOKENIZER_ID = "whitespace-chunk/casefold-word-terms"
IDF_ID = "ln(1+(N-df+0.5)/(df+0.5))"

_TERM_RE = re.compile(r"\w+")


def chunk_tokens(text: str) -> list[str]:
    return text.split()


def index_terms(text: str) -> list[str]:
    return _TERM_RE.findall(text.casefold())


@dataclass(frozen=True)
class Passage:
    passage_id: str
    doc_id: str
    token_offset: int
    tokens: tuple[str, ...]
    text: str


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.5
    b: float = 0.4

    def __post_init__(self):
        if self.k1 < 0:
            raise ConfigError("k1 must be non-negative")
        if not 0.0 <= self.b <= 1.0:
            raise ConfigError("b must lie in [0, 1]")


def chunk_document(doc_id: str, text: str, window: int = 100, stride: int = 50) -> list[Passage]:
    """Fixed-size token windows: offsets 0, stride, 2*stride, ...; the final
    window ends at the last token, and every token is covered.

    Passage count is 1 for n <= window, else ceil((n - window)/stride) + 1.
    """
    if window <= 0 or not 0 < stride <= window:
        raise ConfigError("require window > 0 and 0 < stride <= window")
    tokens = chunk_tokens(text)
    n = len(tokens)
    if n == 0:
        return []
    count = 1 if n <= window else math.ceil((n - window) / stride) + 1
    passages = []
    for i in range(count):
        offset = i * stride
        chunk = tokens[offset : offset + window]
        passages.append(
            Passage(
                passage_id=f"{doc_id}::{offset:06d}",
                doc_id=doc_id,
                token_offset=offset,
                tokens=tuple(chunk),
                text=" ".join(chunk),
            )
        )
    return passages


class InvertedIndex:
    """Term postings over a passage list, with kernel-accelerated scoring."""

    def __init__(self, passages: list[Passage], window: int, stride: int,
                 params: Bm25Params, corpus_hash: str = "", _skip_build: bool = False):
        self.passages = sorted(passages, key=lambda p: p.passage_id)
        self.window = window
        self.stride = stride
        self.params = params
        self.corpus_hash = corpus_hash
        if not _skip_build:
            self._build()

    def _build(self):
        n = len(self.passages)
        self.doc_len = np.zeros(n, dtype=np.int32)
        postings: dict[str, dict[int, int]] = {}
        for i, passage in enumerate(self.passages):
            terms = index_terms(passage.text)
            self.doc_len[i] = len(terms)
            for t in terms:
                postings.setdefault(t, {}).setdefault(i, 0)
                postings[t][i] += 1
        self.postings = {
            t: (
                np.fromiter(sorted(tfs), dtype=np.int32, count=len(tfs)),
                np.array([tfs[i] for i in sorted(tfs)], dtype=np.float64),
            )
            for t, tfs in postings.items()
        }
        self.n_passages = n
        self.avg_len = float(self.doc_len.mean()) if n else 0.0

    def idf(self, term: str) -> float:
        entry = self.postings.get(term)
        if entry is None:
            return 0.0
        df = len(entry[0])
        return math.log(1.0 + (self.n_passages - df + 0.5) / (df + 0.5))

    def score_all(self, query: str) -> np.ndarray:
        """BM25 scores for every passage; absent terms contribute 0. Sums over
        query tokens (with multiplicity)."""
        scores = np.zeros(self.n_passages, dtype=np.float64)
        if self.n_passages == 0:
            return scores
        for term in index_terms(query):
            entry = self.postings.get(term)
            if entry is None:
                continue
            accumulate_term(scores, entry[0], entry[1], self.idf(term),
                            self.doc_len, self.avg_len, self.params.k1, self.params.b)
        return scores

    def search(self, query: str, k: int) -> list[tuple[int, float]]:
        """Top-k (passage index, score), ties broken by ascending passage_id."""
        scores = self.score_all(query)
        order = np.lexsort((np.arange(self.n_passages), -scores))
        top = order[:k]
        return [(int(i), float(scores[i])) for i in top]

    # -- persistence -------------------------------------------------------

    def manifest(self) -> dict:
        return {
            "format": FORMAT_VERSION,
            "tokenizer": TOKENIZER_ID,
            "idf": IDF_ID,
            "kernel": KERNEL_NAME,
            "window": self.window,
            "stride": self.stride,
            "k1": self.params.k1,
            "b": self.params.b,
            "passages": self.n_passages,
            "avg_len": self.avg_len,
            "corpus_hash": self.corpus_hash,
        }

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        manifest = self.manifest()
        manifest["kernel"] = "any"  # kernel choice does not affect the layout
        (directory / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        with open(directory / "passages.jsonl", "w", encoding="utf-8") as fh:
            for p in self.passages:
                fh.write(json.dumps(
                    {"passage_id": p.passage_id, "doc_id": p.doc_id,
                     "token_offset": p.token_offset, "text": p.text},
                    ensure_ascii=False, sort_keys=True) + "\n")
        with open(directory / "doc_lens.json", "w", encoding="utf-8") as fh:
            json.dump(self.doc_len.tolist(), fh)
            fh.write("\n")
        with open(directory / "postings.json", "w", encoding="utf-8") as fh:
            serializable = {
                t: [idx.tolist(), tf.astype(int).tolist()]
                for t, (idx, tf) in sorted(self.postings.items())
            }
            json.dump(serializable, fh, ensure_ascii=False, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, directory) -> "InvertedIndex":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text("utf-8"))
        if manifest.get("format") != FORMAT_VERSION:
            raise DataError(f"unsupported index format {manifest.get('format')!r}")
        passages = []
        with open(directory / "passages.jsonl", encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                passages.append(Passage(
                    passage_id=rec["passage_id"], doc_id=rec["doc_id"],
                    token_offset=rec["token_offset"],
                    tokens=tuple(rec["text"].split()), text=rec["text"],
                ))
        index = cls(passages, window=manifest["window"], stride=manifest["stride"],
                    params=Bm25Params(k1=manifest["k1"], b=manifest["b"]),
                    corpus_hash=manifest.get("corpus_hash", ""), _skip_build=True)
        index.doc_len = np.array(
            json.loads((directory / "doc_lens.json").read_text("utf-8")), dtype=np.int32)
        raw = json.loads((directory / "postings.json").read_text("utf-8"))
        index.postings = {
            t: (np.array(idx, dtype=np.int32), np.array(tf, dtype=np.float64))
            for t, (idx, tf) in raw.items()
        }
        index.n_passages = len(passages)
        index.avg_len = float(index.doc_len.mean()) if len(passages) else 0.0
        return index


def load_corpus(path):
    """Line-delimited (title, text) corpus records."""
    docs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if "title" not in rec or "text" not in rec:
                raise DataError(f"corpus line {line_no}: records need 'title' and 'text'")
            docs.append((rec["title"], rec["text"]))
    return docs


def build_index(corpus_path, window: int = 100, stride: int = 50,
                params: Bm25Params | None = None) -> InvertedIndex:
    params = params or Bm25Params()
    docs = load_corpus(corpus_path)
    passages = []
    empty_docs = 0
    for title, text in docs:
        chunks = chunk_document(title, text, window=window, stride=stride)
        if not chunks:
            empty_docs += 1
            continue
        passages.extend(chunks)
    with open(corpus_path, "rb") as fh:
        corpus_hash = hashlib.sha256(fh.read()).hexdigest()
    index = InvertedIndex(passages, window=window, stride=stride, params=params,
                          corpus_hash=corpus_hash)
    index.empty_docs = empty_docs
    return index
