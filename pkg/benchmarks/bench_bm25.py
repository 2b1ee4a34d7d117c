#!/usr/bin/env python3
"""Compare the compiled and pure-Python BM25 scoring kernels.

Builds a synthetic passage collection, then times `accumulate_term` for both
kernel implementations over the same postings. Usage:

    python benchmarks/bench_bm25.py [--passages 20000] [--queries 200]
"""

import argparse
import random
import time

import numpy as np

from claimgate.retrieval import Bm25Params, InvertedIndex, chunk_document, index_terms
from claimgate.retrieval._score_py import accumulate_term as accumulate_py

try:
    from claimgate.retrieval._score_cy import accumulate_term as accumulate_cy
except ImportError:
    accumulate_cy = None


def build_corpus(n_docs: int, rng: random.Random) -> InvertedIndex:
    vocab = [f"term{i}" for i in range(2000)]
    weights = [1.0 / (i + 1) for i in range(len(vocab))]  # zipf-ish
    passages = []
    for d in range(n_docs):
        n = rng.randint(40, 160)
        text = " ".join(rng.choices(vocab, weights=weights, k=n))
        passages.extend(chunk_document(f"d{d}", text))
    return InvertedIndex(passages, 100, 50, Bm25Params())


def run_kernel(index, queries, accumulate):
    t0 = time.perf_counter()
    checksum = 0.0
    for q in queries:
        scores = np.zeros(index.n_passages, dtype=np.float64)
        for term in index_terms(q):
            entry = index.postings.get(term)
            if entry is None:
                continue
            accumulate(scores, entry[0], entry[1], index.idf(term),
                       index.doc_len, index.avg_len,
                       index.params.k1, index.params.b)
        checksum += float(scores.sum())
    return time.perf_counter() - t0, checksum


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--passages", type=int, default=20_000)
    parser.add_argument("--queries", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    index = build_corpus(args.passages, rng)
    queries = [" ".join(rng.choices([f"term{i}" for i in range(400)], k=5))
               for _ in range(args.queries)]
    print(f"passages: {index.n_passages}  queries: {len(queries)}")

    t_py, sum_py = run_kernel(index, queries, accumulate_py)
    print(f"python kernel: {t_py:.3f}s  ({len(queries) / t_py:.1f} q/s)")
    if accumulate_cy is None:
        print("cython kernel: not built (pip install -e . rebuilds it)")
        return
    t_cy, sum_cy = run_kernel(index, queries, accumulate_cy)
    print(f"cython kernel: {t_cy:.3f}s  ({len(queries) / t_cy:.1f} q/s)")
    assert abs(sum_py - sum_cy) <= 1e-6 * max(1.0, abs(sum_py)), "kernels disagree"
    print(f"speedup: {t_py / t_cy:.1f}x  (checksums agree)")


if __name__ == "__main__":
    main()
