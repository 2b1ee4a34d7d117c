"""Evaluation protocols and metrics.

Three protocols share one report shape:
  * IR-only: the selected surface (with context) is the retrieval query;
    document/sentence-level Recall@K, nDCG@K and ZHR@K per cascade stage.
  * FV-only: gold evidence sentences are the premise, the last k context
    turns plus the selected surface are the hypothesis; never touches the
    index.
  * E2E: the cascade's top-1 passage is the premise; hypothesis exactly as
    FV-only; runs on the full split.

The verifier's three-way distribution maps entailment -> SUPPORTS,
contradiction -> REFUTES, neutral -> NEI. Reports are deterministic
(no timestamps; keys sorted) so byte-identical reruns are testable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .backends import Backend
from .data import LABELS, DialogueInstance
from .errors import ConfigError, TransportError
from .gate import GateConfig, activation_rate, decide
from .pipeline import ClaimSurfaces, join_context_claim
from .retrieval import CascadeConfig, GoldMatcher, InvertedIndex, match_gold, run_cascade

SURFACE_SELECTORS = ("r0", "r1", "r2", "r3", "r4", "r5", "gated-r4", "gated-r5")
_CLASS_TO_LABEL = {0: "SUPPORTS", 1: "NEI", 2: "REFUTES"}  # ent / neu / ctr


@dataclass(frozen=True)
class ProtocolConfig:
    protocol: str  # IR | FV | E2E
    surface: str = "r0"
    k_turns: int = 2
    gate: GateConfig = field(default_factory=GateConfig)
    matching_level: str = "sentence"

    def __post_init__(self):
        if self.protocol not in ("IR", "FV", "E2E"):
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.surface not in SURFACE_SELECTORS:
            raise ConfigError(f"unknown surface selector {self.surface!r}")
        if self.k_turns < 0:
            raise ConfigError("k_turns must be >= 0")


# ---------------------------------------------------------------------------
# surface routing

def resolve_surfaces(instances, surfaces_by_id, config: ProtocolConfig,
                     backend: Backend | None):
    """(instance_id -> surface text, gate outcomes or None)."""
    if config.surface.startswith("gated-"):
        kind = config.surface.split("-", 1)[1]
        if backend is None:
            raise ConfigError("gated surface selection requires a backend")
        outcomes = []
        routed = {}
        for inst in instances:
            out = decide(inst, kind, surfaces_by_id[inst.instance_id], config.gate, backend)
            outcomes.append(out)
            routed[inst.instance_id] = out.routed_surface
        return routed, outcomes
    routed = {
        inst.instance_id: surfaces_by_id[inst.instance_id].surface(config.surface)
        for inst in instances
    }
    return routed, None


# ---------------------------------------------------------------------------
# IR metrics

def ranking_metrics(hit_flags_per_rank, n_gold: int, k: int) -> dict:
    """Recall/nDCG/zero-hit for one query from per-rank match flags.

    `hit_flags_per_rank[i]` is the set of gold-item indices matched by the
    passage at rank i+1.
    """
    matched = set()
    dcg = 0.0
    for i, flags in enumerate(hit_flags_per_rank[:k]):
        if flags:
            dcg += 1.0 / math.log2(i + 2)
            matched.update(flags)
    ideal = sum(1.0 / math.log2(i + 2) for i in range(min(n_gold, k)))
    return {
        "recall": len(matched) / n_gold if n_gold else 0.0,
        "hits": len(matched),
        "gold": n_gold,
        "ndcg": dcg / ideal if ideal else 0.0,
        "zero_hit": not matched,
    }


def aggregate_ir(per_query: list[dict]) -> dict:
    n = len(per_query)
    if n == 0:
        return {"queries": 0}
    total_hits = sum(q["hits"] for q in per_query)
    total_gold = sum(q["gold"] for q in per_query)
    return {
        "queries": n,
        "macro_recall": sum(q["recall"] for q in per_query) / n,
        "micro_recall": total_hits / total_gold if total_gold else 0.0,
        "ndcg": sum(q["ndcg"] for q in per_query) / n,
        "zhr": sum(1 for q in per_query if q["zero_hit"]) / n,
    }


def query_stage_flags(hits, evidence, matcher: GoldMatcher):
    """Per-rank matched-gold-index sets for a ranked hit list."""
    flags = []
    for h in hits:
        matched = {j for j, item in enumerate(evidence) if matcher.matches(h.passage, item)}
        flags.append(matched)
    return flags


def ir_eval(instances, surfaces_or_routed, config: ProtocolConfig,
            index: InvertedIndex, cascade_config: CascadeConfig,
            backend: Backend) -> dict:
    """IR-only metrics over the factual subset, per cascade stage depth."""
    routed = _as_routed(instances, surfaces_or_routed, config, backend)
    matcher = GoldMatcher(index, level=config.matching_level)
    depths = _stage_depths(cascade_config)
    per_stage: dict[str, list] = {s: [] for s, _ in depths}
    skipped_no_gold = 0
    degraded = 0
    evaluated = 0
    for inst in instances:
        if inst.subset != "factual":
            continue
        gold = [e for e in inst.evidence if e.text.strip() and matcher.locatable(e)]
        if not gold:
            skipped_no_gold += 1
            continue
        evaluated += 1
        query = join_context_claim(inst.context_turns, routed[inst.instance_id])
        result = run_cascade(query, index, cascade_config, backend)
        if result.degraded_from:
            degraded += 1
        for stage, k in depths:
            hits = result.stage_hits.get(stage, [])
            flags = query_stage_flags(hits[:k], gold, matcher)
            per_stage[stage].append(ranking_metrics(flags, len(gold), k))
    metrics = {
        f"{stage}@{k}": aggregate_ir(per_stage[stage]) for stage, k in depths
    }
    metrics["evaluated"] = evaluated
    metrics["skipped_no_locatable_gold"] = skipped_no_gold
    metrics["degraded_queries"] = degraded
    return metrics


def _stage_depths(cc: CascadeConfig):
    depths = [("bm25", cc.bm25_keep)]
    if "dense" in cc.stages:
        depths.append(("dense", cc.dense_keep))
    if "ce" in cc.stages:
        depths.append(("ce", cc.final_keep))
    return depths


# ---------------------------------------------------------------------------
# FV metrics

def classwise_f1(confusion) -> dict:
    """Accuracy, per-class precision/recall/F1 (0/0 -> 0) and macro averages
    from a 3x3 confusion matrix (rows gold, cols predicted; order S/R/NEI)."""
    m = np.asarray(confusion, dtype=np.float64)
    if m.shape != (3, 3) or (m < 0).any():
        raise ConfigError("confusion must be a non-negative 3x3 matrix")
    total = m.sum()
    per_class = {}
    for i, label in enumerate(LABELS):
        tp = m[i, i]
        precision = tp / m[:, i].sum() if m[:, i].sum() else 0.0
        recall = tp / m[i, :].sum() if m[i, :].sum() else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[label] = {"precision": precision, "recall": recall, "f1": f1}
    return {
        "accuracy": float(np.trace(m) / total) if total else 0.0,
        "macro_f1": sum(c["f1"] for c in per_class.values()) / 3,
        "macro_recall": sum(c["recall"] for c in per_class.values()) / 3,
        "per_class": per_class,
        "confusion": m.astype(int).tolist(),
        "total": int(total),
    }


def build_hypothesis(instance: DialogueInstance, surface: str, k_turns: int) -> str:
    turns = list(instance.context_turns)[-k_turns:] if k_turns else []
    return " ".join([t for t in turns] + [surface])


def _predict_batch(backend: Backend, pairs):
    logits = backend.nli_logits_batch(pairs)
    preds = []
    for lg in logits:
        z = lg.as_tuple()
        preds.append(_CLASS_TO_LABEL[int(np.argmax(z))])
    return preds


def fv_eval(instances, surfaces_or_routed, config: ProtocolConfig,
            backend: Backend) -> dict:
    """FV-only metrics using gold evidence sentences as premises."""
    routed = _as_routed(instances, surfaces_or_routed, config, backend)
    pairs = []
    gold_labels = []
    used = []
    skipped_no_evidence = 0
    for inst in instances:
        texts = [e.text for e in inst.evidence if e.text.strip()]
        if not texts:
            skipped_no_evidence += 1
            continue
        premise = " ".join(texts)
        hypothesis = build_hypothesis(inst, routed[inst.instance_id], config.k_turns)
        pairs.append((premise, hypothesis))
        gold_labels.append(inst.label)
        used.append(inst.instance_id)
    backend_errors = 0
    confusion = np.zeros((3, 3), dtype=np.int64)
    predictions = {}
    try:
        preds = _predict_batch(backend, pairs)
    except TransportError:
        preds = []
        for premise, hypothesis in pairs:
            try:
                preds.append(_predict_batch(backend, [(premise, hypothesis)])[0])
            except TransportError:
                preds.append(None)
    for iid, gold, pred in zip(used, gold_labels, preds):
        if pred is None:
            backend_errors += 1
            continue
        confusion[LABELS.index(gold), LABELS.index(pred)] += 1
        predictions[iid] = pred
    metrics = classwise_f1(confusion)
    metrics["skipped_no_evidence"] = skipped_no_evidence
    metrics["backend_errors"] = backend_errors
    metrics["predictions"] = predictions
    return metrics


def e2e_eval(instances, surfaces_or_routed, config: ProtocolConfig,
             index: InvertedIndex, cascade_config: CascadeConfig,
             backend: Backend) -> dict:
    """E2E metrics: retrieval and verification both consume the selected
    surface; the premise is the cascade's top-1 passage."""
    routed = _as_routed(instances, surfaces_or_routed, config, backend)
    pairs = []
    gold_labels = []
    used = []
    empty_retrieval = 0
    for inst in instances:
        surface = routed[inst.instance_id]
        query = join_context_claim(inst.context_turns, surface)
        result = run_cascade(query, index, cascade_config, backend)
        top = result.final_hits[:1]
        if top:
            premise = top[0].passage.text
        else:
            empty_retrieval += 1
            premise = " "  # satisfies the non-empty transport contract
        pairs.append((premise, build_hypothesis(inst, surface, config.k_turns)))
        gold_labels.append(inst.label)
        used.append(inst.instance_id)
    confusion = np.zeros((3, 3), dtype=np.int64)
    predictions = {}
    backend_errors = 0
    preds = _predict_batch(backend, pairs)
    for iid, gold, pred in zip(used, gold_labels, preds):
        confusion[LABELS.index(gold), LABELS.index(pred)] += 1
        predictions[iid] = pred
    metrics = classwise_f1(confusion)
    metrics["empty_retrieval"] = empty_retrieval
    metrics["backend_errors"] = backend_errors
    metrics["predictions"] = predictions
    return metrics


def _as_routed(instances, surfaces_or_routed, config, backend):
    if isinstance(surfaces_or_routed, dict) and surfaces_or_routed and isinstance(
        next(iter(surfaces_or_routed.values())), str
    ):
        return surfaces_or_routed  # already instance_id -> surface text
    routed, _ = resolve_surfaces(instances, surfaces_or_routed, config, backend)
    return routed


# ---------------------------------------------------------------------------
# reports

@dataclass
class EvalReport:
    protocol: str
    config: dict
    metrics: dict
    activation: dict | None = None
    routing_log: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    input_hashes: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "protocol": self.protocol,
            "config": self.config,
            "metrics": self.metrics,
            "activation": self.activation,
            "provenance": self.provenance,
            "input_hashes": self.input_hashes,
        }
        return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def routing_log_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n"
                       for rec in self.routing_log)


def make_report(protocol: str, config: ProtocolConfig, metrics: dict,
                outcomes=None, provenance=None, input_hashes=None) -> EvalReport:
    predictions = metrics.pop("predictions", {}) if isinstance(metrics, dict) else {}
    routing_log = []
    if outcomes:
        for o in sorted(outcomes, key=lambda o: o.instance_id):
            routing_log.append({
                "id": o.instance_id, "candidate": o.candidate_kind,
                "e": round(o.e, 10), "c": round(o.c, 10), "sim": round(o.sim, 10),
                "s": round(o.s, 10), "accepted": o.accepted,
                "degenerate": o.degenerate_identity,
                "backend_error": o.backend_error,
                "prediction": predictions.get(o.instance_id),
            })
    else:
        for iid in sorted(predictions):
            routing_log.append({"id": iid, "prediction": predictions[iid]})
    return EvalReport(
        protocol=protocol,
        config={
            "protocol": config.protocol, "surface": config.surface,
            "k_turns": config.k_turns, "tau": config.gate.tau,
            "temperature": config.gate.temperature,
            "weights": [config.gate.weights.alpha, config.gate.weights.beta,
                        config.gate.weights.gamma],
            "matching_level": config.matching_level,
        },
        metrics=metrics,
        activation=activation_rate(outcomes) if outcomes else None,
        routing_log=routing_log,
        provenance=provenance or {},
        input_hashes=input_hashes or {},
    )


def human_table(report: EvalReport) -> str:
    lines = [f"protocol: {report.protocol}  surface: {report.config['surface']}  "
             f"tau: {report.config['tau']}  k_turns: {report.config['k_turns']}"]
    m = report.metrics
    if report.protocol == "IR":
        lines.append(f"{'stage@K':<12} {'macroR':>8} {'microR':>8} {'nDCG':>8} {'ZHR':>8}")
        for key, val in m.items():
            if not isinstance(val, dict) or "macro_recall" not in val:
                continue
            lines.append(f"{key:<12} {val['macro_recall']:>8.4f} {val['micro_recall']:>8.4f} "
                         f"{val['ndcg']:>8.4f} {val['zhr']:>8.4f}")
        lines.append(f"evaluated: {m.get('evaluated')}  "
                     f"skipped (no locatable gold): {m.get('skipped_no_locatable_gold')}")
    else:
        lines.append(f"accuracy: {m['accuracy']:.4f}  macro-F1: {m['macro_f1']:.4f}")
        for label in LABELS:
            c = m["per_class"][label]
            lines.append(f"  F1({label}): {c['f1']:.4f}  P: {c['precision']:.4f}  R: {c['recall']:.4f}")
    if report.activation:
        a = report.activation
        lines.append(f"activation: {a['accepted']}/{a['total']}"
                     + (f" ({a['rate']:.4f})" if a["rate"] is not None else ""))
    return "\n".join(lines) + "\n"


def metrics_tsv(report: EvalReport) -> str:
    """Flat key\\tvalue table suitable for plotting tools."""
    rows = []

    def walk(prefix, obj):
        if isinstance(obj, dict):
            for k in sorted(obj):
                walk(f"{prefix}{k}." if prefix else f"{k}.", obj[k]) if isinstance(obj[k], dict) \
                    else rows.append((f"{prefix}{k}", obj[k]))
        else:
            rows.append((prefix.rstrip("."), obj))

    walk("", report.metrics)
    lines = ["metric\tvalue"]
    for key, value in rows:
        if isinstance(value, float):
            lines.append(f"{key}\t{value:.6f}")
        elif isinstance(value, (int, bool, str)):
            lines.append(f"{key}\t{value}")
        else:
            lines.append(f"{key}\t{json.dumps(value)}")
    return "\n".join(lines) + "\n"
