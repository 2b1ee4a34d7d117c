"""Deterministic, CPU-only inference engine behind the wire protocol.

This is the desk-scale engine: every capability is implemented with
rule-based or hashed-feature logic, so the service is fully deterministic,
needs no model weights, and starts instantly. A weight-backed engine can
replace it by implementing the same eight methods; whichever engine runs is
what `/health` and per-response `model_id` fields report.

`catalog.PRODUCTION_MODELS` lists the identifiers such a weight-backed engine
is expected to serve.
"""

from __future__ import annotations

import hashlib
import math
import re
from importlib import resources as importlib_resources

CAPABILITIES = (
    "nli",
    "embed",
    "punctuate",
    "truecase",
    "coref_propose",
    "coref_select",
    "rewrite",
    "cross_encode",
)

EMBED_DIM = 32

_WORD_RE = re.compile(r"\w+")
_QUESTION_STARTERS = frozenset(
    "who what when where why how which is are was were do does did can could "
    "would will should has have had am".split()
)
_PRONOUNS = frozenset(
    "he she it they this that these those him her them his their its".split()
)
# contraction table mirrored from the rewrite prompt's worked examples
_CONTRACTIONS = {
    "dont": "do not", "don't": "do not",
    "cant": "cannot", "can't": "cannot",
    "im": "I am", "i'm": "I am",
    "isnt": "is not", "isn't": "is not",
    "arent": "are not", "aren't": "are not",
    "wont": "will not", "won't": "will not",
    "wouldnt": "would not", "wouldn't": "would not",
    "it's": "it is",
    "theyre": "they are", "they're": "they are",
}
_CONTRACTION_RE = re.compile(
    r"(?<!\w)(%s)(?!\w)" % "|".join(re.escape(k) for k in sorted(_CONTRACTIONS, key=len, reverse=True)),
    re.IGNORECASE,
)

_PROMPT_TEMPLATE = (
    importlib_resources.files("claimgate_sidecar.assets")
    .joinpath("rewrite_prompt.txt")
    .read_text("utf-8")
)


def format_rewrite_prompt(context: list[str], claim: str) -> str:
    """Fill the packaged one-shot rewrite prompt; context earliest-first."""
    lines = "\n".join(f"- {turn}" for turn in context) if context else "- (none)"
    return _PROMPT_TEMPLATE.format(context_lines=lines, response_text=claim)


def _tokens(text: str) -> list[str]:
    return _WORD_RE.findall(text.casefold())


class DeterministicEngine:
    """Rule-based implementations of all eight capabilities."""

    def model_ids(self) -> dict[str, str]:
        return {cap: f"rule-based/{cap}-v1" for cap in CAPABILITIES}

    # -- scoring -----------------------------------------------------------

    def nli(self, pairs: list[tuple[str, str]]) -> list[list[float]]:
        out = []
        for premise, hypothesis in pairs:
            p, h = set(_tokens(premise)), set(_tokens(hypothesis))
            if p and p == h:
                out.append([10.0, 0.0, -10.0])
            elif p and h and not (p & h):
                out.append([-10.0, 0.0, 8.0])
            else:
                union = p | h
                j = len(p & h) / len(union) if union else 0.0
                out.append([8.0 * j - 2.0, 1.0, 2.0 - 6.0 * j])
        return out

    def embed(self, texts: list[str]) -> list[list[float]]:
        vectors = []
        for text in texts:
            v = [0.0] * EMBED_DIM
            for tok in _tokens(text):
                digest = hashlib.md5(tok.encode("utf-8")).digest()
                idx = digest[0] % EMBED_DIM
                sign = 1.0 if digest[1] % 2 == 0 else -1.0
                v[idx] += sign
            norm = math.sqrt(sum(x * x for x in v))
            vectors.append([x / norm for x in v] if norm else v)
        return vectors

    def cross_encode(self, pairs: list[tuple[str, str]]) -> list[float]:
        out = []
        for query, passage in pairs:
            q, p = set(_tokens(query)), set(_tokens(passage))
            out.append(2.0 * len(q & p) / (len(q) + len(p)) if q and p else 0.0)
        return out

    # -- surface normalisation --------------------------------------------

    def punctuate(self, turn: str) -> str:
        stripped = turn.rstrip()
        if not stripped or stripped[-1] in ".!?":
            return turn
        first = _tokens(stripped)[:1]
        mark = "?" if first and first[0] in _QUESTION_STARTERS else "."
        return stripped + mark

    def truecase(self, turn: str) -> str:
        tokens = turn.split()
        out = []
        sentence_start = True
        for tok in tokens:
            if tok.casefold() == "i":
                tok = "I"
            elif sentence_start and tok[:1].isalpha():
                tok = tok[:1].upper() + tok[1:]
            out.append(tok)
            sentence_start = tok[-1:] in ".!?"
        return " ".join(out) if tokens else turn

    # -- coreference -------------------------------------------------------

    def coref_propose(self, context: list[str], claim: str) -> list[dict]:
        candidates = self._name_runs(context)
        proposals = []
        for m in re.finditer(r"\b\w+\b", claim):
            if m.group(0).casefold() in _PRONOUNS:
                proposals.append({
                    "span": [m.start(), m.end()],
                    "candidates": candidates[:10],
                })
        return proposals

    def coref_select(self, context: list[str], claim: str,
                     span: list[int], candidates: list[str]) -> int:
        # most recent context mention wins; no candidate means leave as-is
        return 0 if candidates else -1

    @staticmethod
    def _name_runs(context: list[str]) -> list[str]:
        """Capitalised token runs, most recent first, deduplicated."""
        runs: list[str] = []
        for turn in reversed(context):
            current: list[str] = []
            for tok in turn.split():
                word = tok.strip(".,!?;:'\"")
                if word[:1].isupper():
                    current.append(word)
                else:
                    if current:
                        runs.append(" ".join(current))
                    current = []
            if current:
                runs.append(" ".join(current))
        seen = set()
        ordered = []
        for r in runs:
            key = r.casefold()
            if key not in seen:
                seen.add(key)
                ordered.append(r)
        return ordered

    # -- decoder rewrite ---------------------------------------------------

    def rewrite(self, context: list[str], claim: str) -> str:
        prompt = format_rewrite_prompt(context, claim)
        # greedy "decoding": read the response back out of the prompt, then
        # apply the prompt's own normalisation rules deterministically
        body = prompt.split("Response: ", 1)[1].split("\nOutput:", 1)[0]

        def expand(m: re.Match) -> str:
            target = _CONTRACTIONS[m.group(0).casefold()]
            if m.group(0)[:1].isupper() and not target.startswith("I "):
                target = target[:1].upper() + target[1:]
            return target

        text = _CONTRACTION_RE.sub(expand, body)
        text = self.truecase(text)
        return self.punctuate(text)
