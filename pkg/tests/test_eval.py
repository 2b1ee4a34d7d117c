import json
import math

import numpy as np
import pytest

from claimgate.data import LABELS
from claimgate.errors import ConfigError
from claimgate.eval import (
    ProtocolConfig,
    aggregate_ir,
    build_hypothesis,
    classwise_f1,
    e2e_eval,
    fv_eval,
    human_table,
    ir_eval,
    make_report,
    metrics_tsv,
    ranking_metrics,
    resolve_surfaces,
)
from claimgate.gate import GateConfig
from claimgate.pipeline import build_surfaces
from claimgate.retrieval import CascadeConfig

RNG = np.random.default_rng(99)


# -- metric oracles ---------------------------------------------------------

def test_hand_confusion_macro_f1():
    m = classwise_f1([[5, 0, 0], [0, 0, 5], [0, 0, 5]])
    # S: perfect; R: zero; NEI: P=0.5, R=1 -> F1=2/3; macro = (1 + 0 + 2/3)/3
    assert math.isclose(m["macro_f1"], 5 / 9, abs_tol=1e-12)
    assert math.isclose(m["accuracy"], 10 / 15, abs_tol=1e-12)


def test_f1_zero_over_zero_convention():
    m = classwise_f1([[3, 0, 0], [0, 2, 0], [0, 0, 0]])  # NEI never occurs
    nei = m["per_class"]["NEI"]
    assert nei == {"precision": 0.0, "recall": 0.0, "f1": 0.0}


def test_confusion_validation():
    with pytest.raises(ConfigError):
        classwise_f1([[1, 2], [3, 4]])
    with pytest.raises(ConfigError):
        classwise_f1([[1, 0, -1], [0, 0, 0], [0, 0, 0]])


def brute_f1(confusion):
    per = []
    for i in range(3):
        tp = confusion[i][i]
        pred = sum(confusion[r][i] for r in range(3))
        gold = sum(confusion[i])
        p = tp / pred if pred else 0.0
        r = tp / gold if gold else 0.0
        per.append(2 * p * r / (p + r) if p + r else 0.0)
    return sum(per) / 3


def test_randomized_f1_oracle():
    for _ in range(200):
        confusion = RNG.integers(0, 6, size=(3, 3)).tolist()
        assert math.isclose(classwise_f1(confusion)["macro_f1"],
                            brute_f1(confusion), abs_tol=1e-12)


def brute_ranking(flag_sets, n_gold, k):
    hit = set()
    dcg = 0.0
    for rank, flags in enumerate(flag_sets[:k], start=1):
        if flags:
            dcg += 1 / math.log2(rank + 1)
        hit |= flags
    idcg = sum(1 / math.log2(r + 1) for r in range(1, min(n_gold, k) + 1))
    return {
        "recall": len(hit) / n_gold,
        "ndcg": dcg / idcg if idcg else 0.0,
        "zero_hit": not hit,
    }


def test_randomized_ranking_oracle():
    for _ in range(200):
        n_gold = int(RNG.integers(1, 4))
        depth = int(RNG.integers(1, 12))
        flag_sets = [
            set(int(g) for g in RNG.choice(n_gold, size=RNG.integers(0, n_gold + 1),
                                           replace=False))
            if RNG.random() < 0.5 else set()
            for _ in range(depth)
        ]
        k = int(RNG.integers(1, depth + 1))
        got = ranking_metrics(flag_sets, n_gold, k)
        want = brute_ranking(flag_sets, n_gold, k)
        assert math.isclose(got["recall"], want["recall"], abs_tol=1e-12)
        assert math.isclose(got["ndcg"], want["ndcg"], abs_tol=1e-12)
        assert got["zero_hit"] == want["zero_hit"]


def test_aggregate_macro_vs_micro():
    per_query = [
        {"recall": 1.0, "hits": 1, "gold": 1, "ndcg": 1.0, "zero_hit": False},
        {"recall": 0.0, "hits": 0, "gold": 3, "ndcg": 0.0, "zero_hit": True},
    ]
    agg = aggregate_ir(per_query)
    assert agg["macro_recall"] == 0.5  # mean of per-query recalls
    assert agg["micro_recall"] == 0.25  # pooled 1 of 4 gold items
    assert agg["zhr"] == 0.5


# -- protocol wiring --------------------------------------------------------

@pytest.fixture(scope="module")
def surfaces(stub_module, split_module):
    return {i.instance_id: build_surfaces(i, stub_module) for i in split_module}


@pytest.fixture(scope="module")
def stub_module():
    from claimgate.backends import StubBackend

    return StubBackend()


@pytest.fixture(scope="module")
def split_module():
    from claimgate.data import load_split

    from conftest import SPLIT_PATH

    return load_split(SPLIT_PATH)


def test_hypothesis_last_k_turns(split_module):
    inst = split_module[0]
    h2 = build_hypothesis(inst, "the claim", 2)
    assert h2 == " ".join(list(inst.context_turns)[-2:] + ["the claim"])
    assert build_hypothesis(inst, "the claim", 0) == "the claim"


def test_protocol_config_validation():
    with pytest.raises(ConfigError):
        ProtocolConfig(protocol="XX")
    with pytest.raises(ConfigError):
        ProtocolConfig(protocol="FV", surface="r9")


def test_fv_excludes_evidence_less_instances(split_module, surfaces, stub_module):
    config = ProtocolConfig(protocol="FV", surface="r0")
    routed = {i.instance_id: i.response for i in split_module}
    metrics = fv_eval(split_module, routed, config, stub_module)
    # 5 fixture instances carry no evidence text (1 factual NEI + 4 personal)
    assert metrics["skipped_no_evidence"] == 5
    assert metrics["total"] == 15
    assert set(metrics["per_class"]) == set(LABELS)


def test_ir_runs_on_factual_subset_only(split_module, surfaces, stub_module, toy_index):
    config = ProtocolConfig(protocol="IR", surface="r0")
    routed = {i.instance_id: i.response for i in split_module}
    metrics = ir_eval(split_module, routed, config, toy_index, CascadeConfig(),
                      stub_module)
    assert metrics["evaluated"] == 15  # 16 factual minus 1 without locatable gold
    assert metrics["skipped_no_locatable_gold"] == 1
    assert set(metrics) >= {"bm25@180", "dense@10", "ce@1"}
    for key in ("bm25@180", "dense@10", "ce@1"):
        assert 0.0 <= metrics[key]["macro_recall"] <= 1.0


def test_e2e_runs_on_full_split(split_module, surfaces, stub_module, toy_index):
    config = ProtocolConfig(protocol="E2E", surface="r0")
    routed = {i.instance_id: i.response for i in split_module}
    metrics = e2e_eval(split_module, routed, config, toy_index, CascadeConfig(),
                       stub_module)
    assert metrics["total"] == 20
    assert metrics["empty_retrieval"] == 0


def test_gated_selector_routes_per_instance(split_module, surfaces, stub_module):
    config = ProtocolConfig(protocol="FV", surface="gated-r4",
                            gate=GateConfig(tau=0.70))
    routed, outcomes = resolve_surfaces(split_module, surfaces, config, stub_module)
    assert len(routed) == len(split_module)
    for out in outcomes:
        expected = (surfaces[out.instance_id].r4 if out.accepted and not out.degenerate_identity
                    else surfaces[out.instance_id].r0)
        assert routed[out.instance_id] == expected


def test_report_serialization_is_deterministic(split_module, surfaces, stub_module):
    config = ProtocolConfig(protocol="FV", surface="gated-r4")
    routed, outcomes = resolve_surfaces(split_module, surfaces, config, stub_module)
    m1 = fv_eval(split_module, dict(routed), config, stub_module)
    m2 = fv_eval(split_module, dict(routed), config, stub_module)
    r1 = make_report("FV", config, m1, outcomes=outcomes)
    r2 = make_report("FV", config, m2, outcomes=outcomes)
    assert r1.to_json() == r2.to_json()
    assert r1.routing_log_jsonl() == r2.routing_log_jsonl()
    payload = json.loads(r1.to_json())
    assert "activation" in payload and payload["activation"]["total"] == 20


def test_report_renderers_cover_metrics(split_module, surfaces, stub_module):
    config = ProtocolConfig(protocol="FV", surface="r0")
    routed = {i.instance_id: i.response for i in split_module}
    metrics = fv_eval(split_module, routed, config, stub_module)
    report = make_report("FV", config, metrics)
    text = human_table(report)
    assert "accuracy" in text and "F1(SUPPORTS)" in text
    tsv = metrics_tsv(report)
    assert tsv.startswith("metric\tvalue")
    assert any(line.startswith("macro_f1\t") for line in tsv.splitlines())
