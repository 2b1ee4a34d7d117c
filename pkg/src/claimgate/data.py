"""Dialogue split ingestion and corpus statistics.

Input format: one JSON object per line with fields

  =============  ==================================================
  this package   DialFact distribution
  =============  ==================================================
  id             ``id``
  context        ``context`` (list of turn strings, earliest first)
  response       ``response``
  response_label ``response_label`` ("NOT ENOUGH INFO" -> "NEI")
  evidence       ``evidence_list`` (``[title, sentence_id, text]`` triples)
  type_label     ``type_label`` ("factual" | "personal")
  =============  ==================================================

Loading is a single validating pass; the returned instances are immutable
and safe to share between threads. Evidence items without a sentence id are
kept but excluded from sentence-level gold sets downstream; each distinct
(title, sentence_id) pair counts as one evidence item.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field

from .errors import SplitFormatError

LABELS = ("SUPPORTS", "REFUTES", "NEI")
_LABEL_ALIASES = {"NOT ENOUGH INFO": "NEI"}
SUBSETS = ("factual", "personal")


@dataclass(frozen=True)
class EvidenceItem:
    page_title: str
    sentence_id: int | None
    text: str


@dataclass(frozen=True)
class DialogueInstance:
    instance_id: str
    context_turns: tuple[str, ...]
    response: str
    label: str
    evidence: tuple[EvidenceItem, ...]
    subset: str

    def to_record(self) -> dict:
        return {
            "id": self.instance_id,
            "context": list(self.context_turns),
            "response": self.response,
            "response_label": self.label,
            "evidence": [[e.page_title, e.sentence_id, e.text] for e in self.evidence],
            "type_label": self.subset,
        }


@dataclass
class SplitStats:
    total: int = 0
    by_subset_label: dict = field(default_factory=dict)  # (subset, label) -> count
    mean_evidence_items: float = 0.0
    mean_turns: float = 0.0
    has_pronoun: int = 0

    @property
    def has_pronoun_rate(self) -> float:
        return self.has_pronoun / self.total if self.total else 0.0

    def count(self, subset: str | None = None, label: str | None = None) -> int:
        return sum(
            n for (s, l), n in self.by_subset_label.items()
            if (subset is None or s == subset) and (label is None or l == label)
        )


def _parse_evidence(raw, line_no: int) -> tuple[EvidenceItem, ...]:
    if raw is None:
        return ()
    if not isinstance(raw, list):
        raise SplitFormatError(line_no, "evidence must be a list")
    items = []
    for entry in raw:
        if not isinstance(entry, (list, tuple)) or len(entry) != 3:
            raise SplitFormatError(line_no, f"evidence entry must be [title, sentence_id, text], got {entry!r}")
        title, sid, text = entry
        if sid is not None:
            if not isinstance(sid, int) or sid < 0:
                raise SplitFormatError(line_no, f"sentence_id must be a non-negative integer or null, got {sid!r}")
        if not isinstance(text, str) or not text.strip():
            raise SplitFormatError(line_no, "evidence text must be non-empty")
        items.append(EvidenceItem(page_title=str(title), sentence_id=sid, text=text))
    # one item per distinct (title, sentence_id); keep first occurrence order
    seen = set()
    deduped = []
    for item in items:
        key = (item.page_title, item.sentence_id)
        if key in seen:
            continue
        seen.add(key)
        deduped.append(item)
    return tuple(deduped)


def parse_record(obj: dict, line_no: int) -> DialogueInstance:
    if "response" not in obj:
        raise SplitFormatError(line_no, "missing response field")
    response = obj["response"]
    if not isinstance(response, str) or not response.strip():
        raise SplitFormatError(line_no, "response is empty")

    label_raw = obj.get("response_label")
    label = _LABEL_ALIASES.get(label_raw, label_raw)
    if label not in LABELS:
        raise SplitFormatError(line_no, f"unknown label {label_raw!r}")

    subset = obj.get("type_label", "factual")
    if subset not in SUBSETS:
        raise SplitFormatError(line_no, f"unknown type_label {subset!r}")
    if subset == "personal" and label != "NEI":
        raise SplitFormatError(line_no, f"personal instance carries label {label}")

    context = obj.get("context", [])
    if not isinstance(context, list) or any(not isinstance(t, str) for t in context):
        raise SplitFormatError(line_no, "context must be a list of strings")

    evidence_raw = obj.get("evidence", obj.get("evidence_list"))
    return DialogueInstance(
        instance_id=str(obj.get("id", f"line-{line_no}")),
        context_turns=tuple(context),
        response=response,
        label=label,
        evidence=_parse_evidence(evidence_raw, line_no),
        subset=subset,
    )


def load_split(path, subset_filter: str | None = None) -> list[DialogueInstance]:
    """Load a line-delimited split file, preserving file order.

    Raises SplitFormatError on the first invariant-violating record, naming
    the offending line. Duplicate ids are rejected (downstream routing and
    reports key on instance_id).
    """
    instances = []
    seen_ids = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SplitFormatError(line_no, f"invalid JSON: {exc}") from exc
            inst = parse_record(obj, line_no)
            if inst.instance_id in seen_ids:
                raise SplitFormatError(line_no, f"duplicate instance id {inst.instance_id!r}")
            seen_ids.add(inst.instance_id)
            if subset_filter is not None and inst.subset != subset_filter:
                continue
            instances.append(inst)
    return instances


def has_pronoun(text: str, forms) -> bool:
    """Word-boundary surface match after case-folding, over a closed lexicon."""
    tokens = re.findall(r"\w+(?:'\w+)?", text.casefold())
    form_set = {f.casefold() for f in forms}
    return any(t in form_set for t in tokens)


def compute_stats(instances, pronoun_forms) -> SplitStats:
    """Aggregate split statistics; permutation-invariant over the input list.

    ``pronoun_forms`` must be the same closed lexicon the rewriting pipeline
    uses for anchor detection, so the pronoun-prevalence figure is
    reproducible from a single definition.
    """
    stats = SplitStats(total=len(instances))
    counts = Counter()
    ev_total = 0
    turn_total = 0
    for inst in instances:
        counts[(inst.subset, inst.label)] += 1
        ev_total += len(inst.evidence)
        turn_total += len(inst.context_turns)
        if has_pronoun(inst.response, pronoun_forms):
            stats.has_pronoun += 1
    stats.by_subset_label = dict(counts)
    if instances:
        stats.mean_evidence_items = ev_total / len(instances)
        stats.mean_turns = turn_total / len(instances)
    return stats


def format_stats(stats: SplitStats) -> str:
    """Human-readable stats table (also used as the ``stats`` CLI output)."""
    lines = ["subset    label     count"]
    for subset in SUBSETS:
        for label in LABELS:
            n = stats.by_subset_label.get((subset, label), 0)
            if n:
                lines.append(f"{subset:<9} {label:<9} {n}")
    lines.append(f"total                {stats.total}")
    lines.append(f"mean evidence items  {stats.mean_evidence_items:.4f}")
    lines.append(f"mean context turns   {stats.mean_turns:.4f}")
    lines.append(f"has pronoun          {stats.has_pronoun} ({stats.has_pronoun_rate:.4f})")
    return "\n".join(lines) + "\n"
