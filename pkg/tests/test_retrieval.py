import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from claimgate.data import EvidenceItem
from claimgate.errors import ConfigError, TransportError
from claimgate.retrieval import (
    Bm25Params,
    CascadeConfig,
    GoldMatcher,
    InvertedIndex,
    build_index,
    chunk_document,
    index_terms,
    match_gold,
    run_cascade,
)
from claimgate.retrieval._score_py import accumulate_term as accumulate_py
from claimgate.retrieval.kernels import KERNEL_NAME, accumulate_term

from conftest import CORPUS_PATH


# -- chunking ---------------------------------------------------------------

def test_chunk_count_formula():
    for n in (1, 50, 100, 101, 149, 150, 151, 600):
        text = " ".join(f"w{i}" for i in range(n))
        expected = 1 if n <= 100 else math.ceil((n - 100) / 50) + 1
        assert len(chunk_document("d", text)) == expected, n


def test_chunk_offsets_and_ids():
    text = " ".join(f"w{i}" for i in range(130))
    passages = chunk_document("doc", text)
    assert [p.token_offset for p in passages] == [0, 50]
    assert passages[0].passage_id == "doc::000000"
    assert passages[1].passage_id == "doc::000050"
    assert passages[1].tokens[0] == "w50"


def test_every_token_covered():
    text = " ".join(f"w{i}" for i in range(237))
    covered = set()
    for p in chunk_document("d", text):
        covered.update(p.tokens)
    assert len(covered) == 237


def test_chunk_param_validation():
    with pytest.raises(ConfigError):
        chunk_document("d", "a b", window=0)
    with pytest.raises(ConfigError):
        chunk_document("d", "a b", window=10, stride=11)
    with pytest.raises(ConfigError):
        Bm25Params(b=1.5)


def test_empty_document_yields_no_passages():
    assert chunk_document("d", "   ") == []


# -- BM25 scoring -----------------------------------------------------------

def brute_force_bm25(index, query):
    """Textbook BM25 computed straight from passage texts."""
    scores = np.zeros(index.n_passages)
    terms = index_terms(query)
    for i, passage in enumerate(index.passages):
        doc_terms = index_terms(passage.text)
        dl = len(doc_terms)
        for t in terms:
            tf = doc_terms.count(t)
            if tf == 0:
                continue
            df = len(index.postings[t][0])
            idf = math.log(1 + (index.n_passages - df + 0.5) / (df + 0.5))
            denom = tf + index.params.k1 * (
                1 - index.params.b + index.params.b * dl / index.avg_len)
            scores[i] += idf * tf * (index.params.k1 + 1) / denom
    return scores


def test_bm25_matches_brute_force(toy_index):
    queries = [
        "elvis presley tupelo mississippi",
        "the walking dead premiered on amc",
        "largest coral reef system in the world",
        "honey honey honey",  # repeated term counted with multiplicity
        "zzz unknown terms only",
    ]
    for q in queries:
        fast = toy_index.score_all(q)
        slow = brute_force_bm25(toy_index, q)
        np.testing.assert_allclose(fast, slow, rtol=1e-9, atol=0)


def test_kernels_agree(toy_index):
    q = "elvis was born in tupelo"
    via_selected = toy_index.score_all(q)
    scores = np.zeros(toy_index.n_passages)
    for term in index_terms(q):
        entry = toy_index.postings.get(term)
        if entry is None:
            continue
        accumulate_py(scores, entry[0], entry[1], toy_index.idf(term),
                      toy_index.doc_len, toy_index.avg_len,
                      toy_index.params.k1, toy_index.params.b)
    np.testing.assert_allclose(via_selected, scores, rtol=1e-12)
    assert KERNEL_NAME in ("cython", "python")


def test_search_tie_break_by_passage_id():
    docs = [("b_doc", "same words here"), ("a_doc", "same words here")]
    passages = [p for title, text in docs for p in chunk_document(title, text)]
    index = InvertedIndex(passages, 100, 50, Bm25Params())
    top = index.search("same words", 2)
    assert index.passages[top[0][0]].passage_id == "a_doc::000000"
    assert top[0][1] == top[1][1]


def test_unknown_terms_score_zero(toy_index):
    assert toy_index.score_all("qqqq zzzz").max() == 0.0


# -- persistence ------------------------------------------------------------

def test_index_round_trip(tmp_path, toy_index):
    toy_index.save(tmp_path / "idx")
    loaded = InvertedIndex.load(tmp_path / "idx")
    assert loaded.n_passages == toy_index.n_passages
    q = "elvis presley memphis"
    np.testing.assert_allclose(loaded.score_all(q), toy_index.score_all(q), rtol=1e-12)


def test_rebuild_invariant_to_document_order(tmp_path):
    docs = [json.loads(line) for line in open(CORPUS_PATH, encoding="utf-8")]
    shuffled = tmp_path / "shuffled.jsonl"
    with open(shuffled, "w", encoding="utf-8") as fh:
        for rec in reversed(docs):
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    a = build_index(CORPUS_PATH)
    b = build_index(shuffled)
    a_dir, b_dir = tmp_path / "a", tmp_path / "b"
    a.save(a_dir)
    b.save(b_dir)
    for name in ("passages.jsonl", "postings.json", "doc_lens.json"):
        assert (a_dir / name).read_bytes() == (b_dir / name).read_bytes(), name


def test_manifest_pins_scoring_identity(toy_index):
    m = toy_index.manifest()
    assert m["format"] == "claimgate-index-1"
    assert m["k1"] == 1.5 and m["b"] == 0.4
    assert m["window"] == 100 and m["stride"] == 50


# -- cascade ----------------------------------------------------------------

def test_cascade_depths_and_stage_nesting(toy_index, stub):
    result = run_cascade("where was elvis presley born", toy_index,
                         CascadeConfig(), stub)
    assert result.final_stage == "ce"
    assert len(result.stage_hits["ce"]) == 1
    assert len(result.stage_hits["dense"]) <= 10
    dense_ids = {h.passage.passage_id for h in result.stage_hits["dense"]}
    bm25_ids = {h.passage.passage_id for h in result.stage_hits["bm25"]}
    assert dense_ids <= bm25_ids
    assert {h.passage.passage_id for h in result.stage_hits["ce"]} <= dense_ids


def test_cascade_config_validation():
    with pytest.raises(ConfigError):
        CascadeConfig(bm25_fetch=10, bm25_keep=20)
    with pytest.raises(ConfigError):
        CascadeConfig(stages=("dense", "bm25"))


def test_cascade_degrades_on_dense_failure(toy_index, stub):
    class NoEmbed(type(stub)):
        def embed_batch(self, texts):
            raise TransportError("embedder down")

    result = run_cascade("elvis presley", toy_index, CascadeConfig(), NoEmbed())
    assert result.degraded_from == "dense"
    assert result.final_stage == "bm25"
    assert result.final_hits  # BM25 ranking still usable


def test_recall_monotone_in_k(toy_index, stub, split):
    matcher = GoldMatcher(toy_index, level="sentence")
    for inst in split:
        gold = [e for e in inst.evidence if matcher.locatable(e)]
        if not gold:
            continue
        result = run_cascade(inst.response, toy_index, CascadeConfig(), stub)
        hits = result.stage_hits["bm25"]
        last = -1.0
        for k in (1, 5, 20, 180):
            flags = match_gold(hits, gold, k, matcher)
            recall = sum(flags) / len(flags)
            assert recall >= last
            last = recall


def test_gold_matching_levels(toy_index):
    doc = GoldMatcher(toy_index, level="doc")
    sent = GoldMatcher(toy_index, level="sentence")
    present = EvidenceItem("Venus", 1, "Venus is the hottest planet in the Solar System, "
                           "with a mean surface temperature of about 464 degrees Celsius, "
                           "despite Mercury orbiting closer to the Sun.")
    absent_sentence = EvidenceItem("Venus", 9, "A sentence that the article does not contain.")
    missing_doc = EvidenceItem("Neptune", 0, "Whatever text.")
    assert doc.locatable(present) and sent.locatable(present)
    assert doc.locatable(absent_sentence) and not sent.locatable(absent_sentence)
    assert not doc.locatable(missing_doc)


def test_title_matching_normalizes_underscores(toy_index):
    matcher = GoldMatcher(toy_index, level="doc")
    item = EvidenceItem("mount_everest", 0, "anything")
    assert matcher.locatable(item)


# -- randomized oracle over small synthetic corpora -------------------------

@given(st.lists(st.integers(1, 40), min_size=1, max_size=8), st.integers(0, 10**6))
@settings(max_examples=25, deadline=None)
def test_random_corpus_brute_force(lengths, seed):
    rng = np.random.default_rng(seed)
    vocab = [f"t{i}" for i in range(15)]
    passages = []
    for d, n in enumerate(lengths):
        text = " ".join(rng.choice(vocab, size=n))
        passages.extend(chunk_document(f"d{d}", text, window=10, stride=5))
    index = InvertedIndex(passages, 10, 5, Bm25Params())
    query = " ".join(rng.choice(vocab, size=4))
    np.testing.assert_allclose(index.score_all(query),
                               brute_force_bm25(index, query), rtol=1e-9, atol=1e-12)
