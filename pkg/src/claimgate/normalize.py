"""De-contraction stage: apostrophe restoration and contraction expansion.

The stage is fully rule-driven. Rules live in ``resources/contractions.json``
(a versioned data file, so the exact rules used in a run are auditable) and are
applied in file order: apostrophe restoration first, then expansion. Dotted
acronyms (Ph.D., U.S.), honorifics (Dr., Mrs., ...) and URLs are protected by
placeholders before any rule runs and restored verbatim afterwards.

Guarantees (tested):
  * ``unprotect(*protect(text)) == text`` byte-exactly, for any text;
  * ``decontract`` is idempotent;
  * rules never alter characters outside a matched contraction.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources as importlib_resources

_PLACEHOLDER = "⸨{}⸩"  # double-paren brackets; never produced by the rules

_HONORIFICS = (
    "Mr", "Mrs", "Ms", "Dr", "Prof", "St", "Jr", "Sr", "Rev", "Gen",
    "Sgt", "Capt", "Lt", "Col", "Hon", "Fr", "Pres", "Gov", "Sen", "Rep",
)

_URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
# Two or more letter groups each followed by a dot: U.S., Ph.D., e.g., U.S.A.
_ACRONYM_RE = re.compile(r"\b(?:[A-Za-z]{1,4}\.){2,}")
_HONORIFIC_RE = re.compile(r"\b(?:%s)\." % "|".join(_HONORIFICS))


@dataclass(frozen=True)
class ProtectionSpan:
    start: int
    end: int
    kind: str  # acronym | honorific | url
    placeholder_token: str
    original: str


@dataclass(frozen=True)
class Rule:
    pattern: re.Pattern
    target: str
    target_alt: str | None = None
    alt_next: frozenset = frozenset()
    require_next: frozenset = frozenset()


@dataclass
class RuleTable:
    version: str
    apostrophe_rules: list[Rule]
    expansion_rules: list[Rule]


@dataclass(frozen=True)
class Edit:
    """One rule application: ``before`` at [start, end) became ``after``."""

    start: int
    end: int
    before: str
    after: str


def _compile_rule(spec: dict) -> Rule:
    src = spec["from"]
    # Word-boundary match; the apostrophe inside contractions is part of the
    # token, so a trailing boundary after "'t" etc. still works.
    pattern = re.compile(r"(?<!\w)%s(?!\w)" % re.escape(src), re.IGNORECASE)
    return Rule(
        pattern=pattern,
        target=spec["to"],
        target_alt=spec.get("to_alt"),
        alt_next=frozenset(spec.get("alt_next", ())),
        require_next=frozenset(spec.get("require_next", ())),
    )


def load_rule_table(path=None) -> RuleTable:
    """Load the rule table from `path`, or the packaged default."""
    if path is None:
        raw = importlib_resources.files("claimgate.resources").joinpath("contractions.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    data = json.loads(raw)
    return RuleTable(
        version=data.get("version", "unversioned"),
        apostrophe_rules=[_compile_rule(r) for r in data["apostrophe_rules"]],
        expansion_rules=[_compile_rule(r) for r in data["expansion_rules"]],
    )


def protect(text: str) -> tuple[str, list[ProtectionSpan]]:
    """Mask URLs, dotted acronyms and honorifics with unique placeholders."""
    matches = []
    for kind, rx in (("url", _URL_RE), ("acronym", _ACRONYM_RE), ("honorific", _HONORIFIC_RE)):
        for m in rx.finditer(text):
            matches.append((m.start(), m.end(), kind))
    # Leftmost-longest, drop overlaps (URL wins over acronym inside it, etc.)
    matches.sort(key=lambda t: (t[0], -(t[1] - t[0])))
    chosen = []
    last_end = -1
    for start, end, kind in matches:
        if start >= last_end:
            chosen.append((start, end, kind))
            last_end = end
    spans = []
    out = []
    cursor = 0
    for i, (start, end, kind) in enumerate(chosen):
        token = _PLACEHOLDER.format(i)
        out.append(text[cursor:start])
        out.append(token)
        spans.append(ProtectionSpan(start, end, kind, token, text[start:end]))
        cursor = end
    out.append(text[cursor:])
    return "".join(out), spans


def unprotect(masked: str, spans: list[ProtectionSpan]) -> str:
    for span in spans:
        masked = masked.replace(span.placeholder_token, span.original, 1)
    return masked


def _recase(matched: str, target: str) -> str:
    if target[:1] == "I" and target[:2] in ("I'", "I "):
        return target  # "I" is capitalized regardless of the source
    if matched.isupper() and len(matched) > 1:
        return target.upper()
    if matched[:1].isupper():
        return target[:1].upper() + target[1:]
    return target


_NEXT_WORD_RE = re.compile(r"[^\w]*(\w+(?:'\w+)?)")


def _next_word(text: str, pos: int) -> str:
    m = _NEXT_WORD_RE.match(text, pos)
    return m.group(1).lower() if m else ""


def _normal_first_word(word: str, table: RuleTable) -> str:
    """The first word of `word`'s fully de-contracted form, lowercased.

    Next-word gates compare against this normal form so a gate decides the
    same way whether its context word is still contracted ("dont") or already
    expanded ("do") — which is what makes de-contraction idempotent.
    """
    current = word
    for _ in range(4):  # apostrophe + expansion chains are short
        for rule in table.apostrophe_rules + table.expansion_rules:
            if rule.require_next:
                continue  # gated rules need context a lone word cannot supply
            if rule.pattern.fullmatch(current):
                current = rule.target
                break
        else:
            break
    first = current.split()
    return first[0].lower() if first else ""


def _apply_rules(text: str, rules: list[Rule], edits: list[Edit],
                 table: RuleTable) -> str:
    norm_cache: dict[str, str] = {}

    def norm(word: str) -> str:
        if word not in norm_cache:
            norm_cache[word] = _normal_first_word(word, table)
        return norm_cache[word]

    for rule in rules:
        out = []
        cursor = 0
        for m in rule.pattern.finditer(text):
            nxt = norm(_next_word(text, m.end()))
            if rule.require_next and nxt not in rule.require_next:
                continue
            target = rule.target
            if rule.target_alt is not None and nxt in rule.alt_next:
                target = rule.target_alt
            replacement = _recase(m.group(0), target)
            out.append(text[cursor:m.start()])
            out.append(replacement)
            edits.append(Edit(m.start(), m.end(), m.group(0), replacement))
            cursor = m.end()
        out.append(text[cursor:])
        text = "".join(out)
    return text


def restore_apostrophes(text: str, rules: RuleTable | None = None) -> str:
    """Apostrophe restoration only ("dont" -> "don't"), under protection."""
    if rules is None:
        rules = _default_table()
    masked, spans = protect(text)
    masked = _apply_rules(masked, rules.apostrophe_rules, [], rules)
    return unprotect(masked, spans)


def decontract(text: str, rules: RuleTable | None = None) -> str:
    return decontract_with_edits(text, rules)[0]


def decontract_with_edits(text: str, rules: RuleTable | None = None) -> tuple[str, list[Edit]]:
    """Restore apostrophes, then expand contractions, under placeholder protection.

    Returned edits carry offsets into the intermediate text at the time each
    rule fired; they are informational (the surface log re-derives exact spans
    by diffing input and output).
    """
    if rules is None:
        rules = _default_table()
    masked, spans = protect(text)
    edits: list[Edit] = []
    masked = _apply_rules(masked, rules.apostrophe_rules, edits, rules)
    masked = _apply_rules(masked, rules.expansion_rules, edits, rules)
    return unprotect(masked, spans), edits


_TABLE_CACHE: RuleTable | None = None


def _default_table() -> RuleTable:
    global _TABLE_CACHE
    if _TABLE_CACHE is None:
        _TABLE_CACHE = load_rule_table()
    return _TABLE_CACHE
