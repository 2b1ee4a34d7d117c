"""Staged construction of claim surfaces.

Cumulative chain: r1 de-contracts r0; r2 restores punctuation (insert-only,
orchestrator appends a final period to non-question turns); r3 true-cases r2
(token-initial case changes only); r4 substitutes antecedents for in-scope
anaphoric pronouns in r3. r5 is an independent one-shot decoder rewrite of r0
given the dialogue context.

Each stage transition is logged as span edits against its predecessor surface;
replaying a stage's edits onto the predecessor reconstructs the surface
byte-exactly. A stage whose backend call fails or violates its contract
degrades to a no-op for that stage and is recorded, never corrupting text.
"""

from __future__ import annotations

import difflib
import re
from dataclasses import dataclass, field

from .backends import (
    Backend,
    SENTENCE_FINAL,
    punctuate_contract_ok,
    truecase_contract_ok,
)
from .data import DialogueInstance
from .errors import TransportError
from .lexicon import PronounLexicon, default_lexicon
from .normalize import RuleTable, decontract

STAGES = ("r1", "r2", "r3", "r4", "r5")

_WORD_RE = re.compile(r"\w+(?:'\w+)?")


@dataclass(frozen=True)
class ScopedMention:
    start: int
    end: int
    form: str
    scope: str  # anaphoric_in_scope | deictic | expletive | no_antecedent


@dataclass(frozen=True)
class EditRecord:
    stage: str
    start: int  # offsets into the predecessor surface
    end: int
    before: str
    after: str


@dataclass
class ClaimSurfaces:
    instance_id: str
    r0: str
    r1: str
    r2: str
    r3: str
    r4: str
    r5: str
    r4_candidate_present: bool
    edits: list[EditRecord] = field(default_factory=list)
    stage_errors: tuple = ()

    def surface(self, name: str) -> str:
        if name not in ("r0",) + STAGES:
            raise KeyError(name)
        return getattr(self, name)

    def to_record(self) -> dict:
        return {
            "id": self.instance_id,
            "surfaces": {k: self.surface(k) for k in ("r0",) + STAGES},
            "r4_candidate_present": self.r4_candidate_present,
            "edits": [[e.stage, e.start, e.end, e.before, e.after] for e in self.edits],
            "stage_errors": list(self.stage_errors),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "ClaimSurfaces":
        s = rec["surfaces"]
        return cls(
            instance_id=rec["id"],
            r0=s["r0"], r1=s["r1"], r2=s["r2"], r3=s["r3"], r4=s["r4"], r5=s["r5"],
            r4_candidate_present=rec["r4_candidate_present"],
            edits=[EditRecord(*e) for e in rec.get("edits", [])],
            stage_errors=tuple(rec.get("stage_errors", ())),
        )


@dataclass(frozen=True)
class PipelineConfig:
    enabled_stages: tuple = STAGES
    apply_possessive_morphology: bool = True
    process_context_for_coref: bool = True


def diff_edits(stage: str, before: str, after: str) -> list[EditRecord]:
    """Span edits (against `before`) that rewrite it into `after`."""
    edits = []
    sm = difflib.SequenceMatcher(a=before, b=after, autojunk=False)
    for tag, i1, i2, j1, j2 in sm.get_opcodes():
        if tag != "equal":
            edits.append(EditRecord(stage, i1, i2, before[i1:i2], after[j1:j2]))
    return edits


def replay_edits(before: str, edits) -> str:
    """Apply span edits (descending offset) to reconstruct the next surface."""
    text = before
    for e in sorted(edits, key=lambda e: e.start, reverse=True):
        text = text[: e.start] + e.after + text[e.end :]
    return text


def classify_pronouns(context, claim_r3: str, lexicon: PronounLexicon | None = None) -> list[ScopedMention]:
    """Assign exactly one scope class to every lexicon match in the claim.

    Deictic forms are always out of scope; non-referential "it" is detected by
    the lexicon's expletive rules; anything else is in scope only when the
    dialogue context is non-empty.
    """
    lexicon = lexicon or default_lexicon()
    has_context = any(t.strip() for t in context)
    mentions = []
    for m in _WORD_RE.finditer(claim_r3):
        form = m.group(0).lower()
        if form not in lexicon.anchor_forms:
            continue
        if form in lexicon.deictic_forms:
            scope = "deictic"
        elif form in ("it", "its") and any(
            p.match(claim_r3, m.start()) for p in lexicon.expletive_patterns
        ):
            scope = "expletive"
        elif not has_context:
            scope = "no_antecedent"
        else:
            scope = "anaphoric_in_scope"
        mentions.append(ScopedMention(m.start(), m.end(), m.group(0), scope))
    return mentions


def ensure_final_punctuation(turn: str) -> str:
    turn = turn.rstrip()
    if turn and turn[-1] not in SENTENCE_FINAL:
        turn += "."
    return turn


def join_context_claim(context, claim: str) -> str:
    """C+R join: turns with guaranteed sentence-final punctuation, single
    spaces, claim verbatim at the end."""
    parts = [ensure_final_punctuation(t) for t in context if t.strip()]
    parts.append(claim)
    return " ".join(parts)


def _guarded(backend_call, turn: str, guard, errors: list, stage: str) -> str:
    try:
        out = backend_call(turn)
    except TransportError as exc:
        errors.append(f"{stage}: transport error ({exc})")
        return turn
    if not guard(turn, out):
        errors.append(f"{stage}: contract violation, stage degraded to no-op")
        return turn
    return out


def _substitute(claim: str, start: int, end: int, antecedent: str, possessive: bool) -> str:
    replacement = antecedent
    if possessive:
        replacement = replacement + ("'" if replacement.endswith("s") else "'s")
    prefix = claim[:start]
    sentence_initial = not prefix.strip() or prefix.rstrip()[-1] in SENTENCE_FINAL
    if sentence_initial and replacement[:1].islower():
        replacement = replacement[0].upper() + replacement[1:]
    return claim[:start] + replacement + claim[end:]


def build_surfaces(
    instance: DialogueInstance,
    backend: Backend,
    config: PipelineConfig | None = None,
    lexicon: PronounLexicon | None = None,
    rules: RuleTable | None = None,
) -> ClaimSurfaces:
    config = config or PipelineConfig()
    lexicon = lexicon or default_lexicon()
    enabled = set(config.enabled_stages)
    errors: list = []
    context = list(instance.context_turns)

    r0 = instance.response
    r1 = decontract(r0, rules) if "r1" in enabled else r0

    if "r2" in enabled:
        r2 = _guarded(backend.punctuate, r1, punctuate_contract_ok, errors, "r2")
        if not r2.rstrip().endswith("?"):
            r2 = ensure_final_punctuation(r2)
    else:
        r2 = r1

    r3 = _guarded(backend.truecase, r2, truecase_contract_ok, errors, "r3") if "r3" in enabled else r2

    r4 = r3
    r4_candidate_present = False
    if "r4" in enabled:
        anaphoric = [
            m for m in classify_pronouns(context, r3, lexicon) if m.scope == "anaphoric_in_scope"
        ]
        if anaphoric:
            coref_context = context
            if config.process_context_for_coref and {"r2", "r3"} & enabled:
                coref_context = [
                    _guarded(backend.truecase,
                             ensure_final_punctuation(
                                 _guarded(backend.punctuate, t, punctuate_contract_ok, errors, "r2")),
                             truecase_contract_ok, errors, "r3")
                    for t in context
                ]
            try:
                proposals = {p.pronoun_span: p for p in backend.coref_propose(coref_context, r3)}
                # all in-scope mentions are substituted independently, right to left
                for m in sorted(anaphoric, key=lambda m: m.start, reverse=True):
                    proposal = proposals.get((m.start, m.end))
                    if proposal is None or not proposal.candidates:
                        continue
                    idx = backend.antecedent_select(coref_context, r3, proposal)
                    if not (0 <= idx < len(proposal.candidates)):
                        errors.append(f"r4: selector index {idx} out of range, mention left as-is")
                        continue
                    possessive = (
                        config.apply_possessive_morphology
                        and m.form.lower() in lexicon.possessive_forms
                    )
                    r4 = _substitute(r4, m.start, m.end, proposal.candidates[idx], possessive)
                    r4_candidate_present = True
            except TransportError as exc:
                errors.append(f"r4: transport error ({exc})")
                r4 = r3
                r4_candidate_present = False

    if "r5" in enabled:
        try:
            r5 = backend.decoder_rewrite(context, r0)
        except TransportError as exc:
            errors.append(f"r5: transport error ({exc})")
            r5 = r0
    else:
        r5 = r0

    edits = []
    chain = [("r1", r0, r1), ("r2", r1, r2), ("r3", r2, r3), ("r4", r3, r4), ("r5", r0, r5)]
    for stage, before, after in chain:
        edits.extend(diff_edits(stage, before, after))

    return ClaimSurfaces(
        instance_id=instance.instance_id,
        r0=r0, r1=r1, r2=r2, r3=r3, r4=r4, r5=r5,
        r4_candidate_present=r4_candidate_present,
        edits=edits,
        stage_errors=tuple(errors),
    )
