"""Model-backend contract: the narrow interface between the pipeline math and
the model ecosystem.

Every model call (NLI, embedding, punctuation, true-casing, coreference,
decoder rewrite, cross-encoding) goes through one of the classes below, so the
HTTP sidecar, the offline stub, and any future in-process inference are
interchangeable. The stub is bit-deterministic and the full offline test suite
runs against it alone.

Structural contracts for the punctuation and true-casing stages are enforced
orchestrator-side (see `punctuate_contract_ok` / `truecase_contract_ok`): a
misbehaving backend degrades those stages to no-ops, never to corrupted text.
"""

from __future__ import annotations

import hashlib
import math
import re
import time
from dataclasses import dataclass, field

from .errors import CapabilityError, TransportError
from .lexicon import PronounLexicon, default_lexicon

ALL_CAPABILITIES = frozenset({
    "nli_logits", "embed", "punctuate", "truecase",
    "coref_propose", "antecedent_select", "decoder_rewrite", "cross_encode",
})

SENTENCE_FINAL = ".?!"
_INSERTABLE = set(",.?! ")


@dataclass(frozen=True)
class NliLogits:
    z_ent: float
    z_neu: float
    z_ctr: float

    def as_tuple(self):
        return (self.z_ent, self.z_neu, self.z_ctr)


@dataclass(frozen=True)
class CorefProposal:
    pronoun_span: tuple[int, int]
    candidates: tuple[str, ...]

    def __post_init__(self):
        if len(self.candidates) > 10:
            raise ValueError("at most 10 antecedent candidates per proposal")


@dataclass(frozen=True)
class BackendDescriptor:
    capabilities: frozenset
    endpoint: str  # "stub" or a base URL
    model_ids: dict = field(default_factory=dict, hash=False, compare=False)

    def require(self, needed) -> None:
        missing = set(needed) - self.capabilities
        if missing:
            raise CapabilityError(f"backend {self.endpoint!r} lacks capabilities: {sorted(missing)}")

    def cache_key(self) -> str:
        ids = ",".join(f"{k}={v}" for k, v in sorted(self.model_ids.items()))
        return f"{self.endpoint}|{ids}"


class Backend:
    """Interface. Single-item calls define semantics; batch calls are
    order-preserving conveniences."""

    descriptor: BackendDescriptor

    def nli_logits(self, premise: str, hypothesis: str) -> NliLogits:
        raise NotImplementedError

    def nli_logits_batch(self, pairs) -> list[NliLogits]:
        return [self.nli_logits(p, h) for p, h in pairs]

    def embed(self, text: str) -> list[float]:
        raise NotImplementedError

    def embed_batch(self, texts) -> list[list[float]]:
        return [self.embed(t) for t in texts]

    def punctuate(self, turn: str) -> str:
        raise NotImplementedError

    def truecase(self, turn: str) -> str:
        raise NotImplementedError

    def coref_propose(self, context, claim: str) -> list[CorefProposal]:
        raise NotImplementedError

    def antecedent_select(self, context, claim: str, proposal: CorefProposal) -> int:
        raise NotImplementedError

    def decoder_rewrite(self, context, claim: str) -> str:
        raise NotImplementedError

    def cross_encode(self, query: str, passage: str) -> float:
        raise NotImplementedError

    def cross_encode_batch(self, pairs) -> list[float]:
        return [self.cross_encode(q, p) for q, p in pairs]


# ---------------------------------------------------------------------------
# contract guards

def punctuate_contract_ok(original: str, output: str) -> bool:
    """True iff deleting inserted characters recovers the input byte-exactly,
    and every inserted character is a comma, a sentence-final mark, or a space."""
    i = 0
    for ch in output:
        if i < len(original) and ch == original[i]:
            i += 1
        elif ch in _INSERTABLE:
            continue
        else:
            return False
    return i == len(original)


def truecase_contract_ok(original: str, output: str) -> bool:
    """True iff output differs from input only in the case of token-initial
    characters."""
    if len(output) != len(original):
        return False
    for i, (a, b) in enumerate(zip(original, output)):
        if a == b:
            continue
        if a.lower() != b.lower():
            return False
        token_initial = i == 0 or not original[i - 1].isalnum()
        if not token_initial:
            return False
    return True


# ---------------------------------------------------------------------------
# deterministic offline stub

def _hash_unit(tag: str, *parts: str) -> float:
    """Deterministic float in [0, 1) from the inputs."""
    h = hashlib.blake2b("\x1f".join((tag,) + parts).encode("utf-8"), digest_size=8)
    return int.from_bytes(h.digest(), "big") / 2**64


_TOKEN_RE = re.compile(r"\w+(?:'\w+)?")

_QUESTION_STARTERS = frozenset(
    "who what when where why how which is are am do does did can could will "
    "would should was were have has had".split()
)

# Function words and frequent verbs that break candidate-NP runs; contracted
# tokens and the hard-exclude set below never join a run regardless of case.
_NP_STOP = frozenset(
    "a an the of in on at to from with for by about into over under as so "
    "and or but nor if then than because since while though although very "
    "really pretty quite too also just only even still again there here now "
    "out up down off back away ago first last next much many more most some "
    "any all both few little lot lots "
    "be been being is are am was were do does did done have has had having "
    "go goes went gone going get gets got gotten getting come comes came "
    "coming know knows knew known think thinks thought say says said see "
    "sees saw seen watch watched love loves loved like likes liked hate "
    "hates hated want wants wanted remember remembered find finds found "
    "look looks looked make makes made take takes took bring brings brought "
    "premiered premiere relocated born hear heard aware perform performs performed "
    "became become becomes becoming bought sold visited visiting moved lived "
    "died wrote written sang sung released recorded started ended stayed "
    "turned grew walked talked spoke stood sat gave told asked used worked "
    "helped showed kept met named called played ran left "
    "past time times day days year years week weeks thing things way stuff".split()
)

_NP_HARD_EXCLUDE = frozenset(
    "where what who when why how which whom whose is are was were am be been "
    "do does did have has had can could will would shall should may might "
    "must not no yes yeah oh hey wow dude lol ok okay thanks thank please "
    "hi hello bye i you he she it they we me him her them us my your his "
    "its their our this that these those".split()
)

_GAZETTEER = frozenset(
    "january february march april may june july august september october "
    "november december monday tuesday wednesday thursday friday saturday "
    "sunday elvis tupelo memphis mississippi fox hulu paris london america "
    "american english wikipedia apollo nasa".split()
)


class StubBackend(Backend):
    """Offline, pure, lock-free backend with pinned behavior for tests.

    NLI: logits are a seeded function of the token overlap of the two texts,
    with two pinned special cases -- an identity pair scores as confident
    entailment ``(10, 0, -10)`` and a disjoint-vocabulary pair as confident
    contradiction ``(-10, 0, 8)`` -- so tests can construct both gate accepts
    and gate rejects on demand.
    """

    EMBED_DIM = 32

    def __init__(self, lexicon: PronounLexicon | None = None):
        self.lexicon = lexicon or default_lexicon()
        self.descriptor = BackendDescriptor(
            capabilities=ALL_CAPABILITIES,
            endpoint="stub",
            model_ids={cap: f"stub/{cap}-v1" for cap in sorted(ALL_CAPABILITIES)},
        )

    # -- NLI ---------------------------------------------------------------
    def nli_logits(self, premise: str, hypothesis: str) -> NliLogits:
        if not premise or not hypothesis:
            raise ValueError("premise and hypothesis must be non-empty")
        if premise == hypothesis:
            return NliLogits(10.0, 0.0, -10.0)
        tp = {t.lower() for t in _TOKEN_RE.findall(premise)}
        th = {t.lower() for t in _TOKEN_RE.findall(hypothesis)}
        if tp and th and not (tp & th):
            return NliLogits(-10.0, 0.0, 8.0)
        union = tp | th
        jac = len(tp & th) / len(union) if union else 0.0
        n1 = _hash_unit("nli-ent", premise, hypothesis) - 0.5
        n2 = _hash_unit("nli-neu", premise, hypothesis) - 0.5
        n3 = _hash_unit("nli-ctr", premise, hypothesis) - 0.5
        return NliLogits(8.0 * jac - 2.0 + n1, n2, 6.0 * (1.0 - jac) - 3.0 + n3)

    # -- embeddings --------------------------------------------------------
    def embed(self, text: str) -> list[float]:
        vec = [0.0] * self.EMBED_DIM
        tokens = [t.lower() for t in _TOKEN_RE.findall(text)]
        if not tokens:
            vec[0] = 1.0
            return vec
        for tok in tokens:
            digest = hashlib.blake2b(tok.encode("utf-8"), digest_size=self.EMBED_DIM * 2).digest()
            for d in range(self.EMBED_DIM):
                word = int.from_bytes(digest[2 * d : 2 * d + 2], "big")
                vec[d] += word / 32767.5 - 1.0
        norm = math.sqrt(sum(v * v for v in vec)) or 1.0
        return [v / norm for v in vec]

    # -- surface stages ----------------------------------------------------
    def punctuate(self, turn: str) -> str:
        stripped = turn.rstrip()
        if not stripped or not stripped[-1].isalnum():
            return turn
        first = _TOKEN_RE.search(stripped)
        if first and first.group(0).lower() in _QUESTION_STARTERS:
            return stripped + "?" + turn[len(stripped):]
        return turn

    def truecase(self, turn: str) -> str:
        chars = list(turn)
        sentence_starts = set()
        for s_start, s_end in _sentence_spans(turn):
            first = _TOKEN_RE.search(turn, s_start, s_end)
            if first:
                sentence_starts.add(first.start())
        for m in _TOKEN_RE.finditer(turn):
            tok = m.group(0)
            i = m.start()
            if tok == "i":
                chars[i] = "I"
            elif (i in sentence_starts or tok.lower() in _GAZETTEER) and tok[0].islower():
                chars[i] = tok[0].upper()
        return "".join(chars)

    # -- coreference -------------------------------------------------------
    def coref_propose(self, context, claim: str) -> list[CorefProposal]:
        anchors = self.lexicon.anchor_forms
        mentions = [m for m in _TOKEN_RE.finditer(claim) if m.group(0).lower() in anchors]
        if not mentions:
            return []
        candidates = _extract_candidates(context, claim)
        claim_sentences = _sentence_spans(claim)
        claim_base = sum(len(t) + 1 for t in context)
        proposals = []
        for m in mentions:
            g = claim_base + m.start()
            sent = _containing_span(claim_sentences, m.start())
            ranked = _rank_candidates(candidates, g, sent, claim_base)
            proposals.append(CorefProposal(pronoun_span=(m.start(), m.end()), candidates=tuple(ranked[:10])))
        return proposals

    def antecedent_select(self, context, claim: str, proposal: CorefProposal) -> int:
        if not proposal.candidates:
            raise ValueError("empty candidate list")
        return 0  # proposals are already recency-ranked

    def decoder_rewrite(self, context, claim: str) -> str:
        # One-shot surface cleanup: de-contraction, final punctuation, initial
        # capital. Pronouns are deliberately left unresolved.
        from .normalize import decontract

        text = decontract(claim).strip()
        if text and text[-1].isalnum():
            text += "."
        if text and text[0].islower():
            text = text[0].upper() + text[1:]
        return text

    # -- cross-encoding ----------------------------------------------------
    def cross_encode(self, query: str, passage: str) -> float:
        tq = [t.lower() for t in _TOKEN_RE.findall(query)]
        tp = [t.lower() for t in _TOKEN_RE.findall(passage)]
        if not tq or not tp:
            return 0.0
        overlap = len(set(tq) & set(tp))
        dice = 2.0 * overlap / (len(set(tq)) + len(set(tp)))
        return dice + 1e-6 * (_hash_unit("ce", query, passage) - 0.5)


def _sentence_spans(text: str):
    spans = []
    start = 0
    for i, ch in enumerate(text):
        if ch in SENTENCE_FINAL:
            # periods inside dotted acronyms ("C.K.") do not end a sentence
            if ch == "." and (
                (i + 1 < len(text) and text[i + 1].isalnum())
                or (i >= 2 and text[i - 2] == ".")
            ):
                continue
            spans.append((start, i + 1))
            start = i + 1
    if start < len(text):
        spans.append((start, len(text)))
    return spans


def _containing_span(spans, pos):
    for s, e in spans:
        if s <= pos < e:
            return (s, e)
    return spans[-1] if spans else (0, 0)


def _run_ok(token: str) -> bool:
    low = token.lower()
    if "'" in token or token.isdigit() or low in _NP_HARD_EXCLUDE:
        return False
    if token[:1].isupper():
        return True
    return low not in _NP_STOP


def _extract_candidates(context, claim: str):
    """Candidate NP runs with global last-mention positions.

    Returns {candidate_text_casefolded: (surface, [global_positions])}. Global
    positions flatten the context turns (in order) followed by the claim.
    """
    out: dict[str, list] = {}
    base = 0
    segments = list(context) + [claim]
    for seg in segments:
        for s_start, s_end in _sentence_spans(seg):
            run: list = []
            run_start = None

            def flush():
                nonlocal run, run_start
                if run:
                    end = run[-1].end()
                    if "." in seg[run_start:end] and seg[end : end + 1] == ".":
                        end += 1  # keep a dotted acronym's final period
                    surface = seg[run_start:end]
                    key = surface.casefold()
                    entry = out.setdefault(key, [surface, []])
                    entry[1].append(base + run_start)
                run = []
                run_start = None

            for m in _TOKEN_RE.finditer(seg, s_start, s_end):
                if _run_ok(m.group(0)):
                    gap = seg[run[-1].end() : m.start()] if run else ""
                    acronym_gap = (
                        run and len(run[-1].group(0)) == 1 and len(m.group(0)) == 1
                        and re.fullmatch(r"[ '.]*", gap)
                    )
                    if run and not (acronym_gap or re.fullmatch(r"[ ']*", gap)):
                        flush()
                    if not run:
                        run_start = m.start()
                    run.append(m)
                else:
                    flush()
            flush()
        base += len(seg) + 1
    return out


def _rank_candidates(candidates, pronoun_global: int, pronoun_sentence, claim_base: int):
    ranked = []
    for surface, positions in candidates.values():
        preceding = [p for p in positions if p < pronoun_global]
        best = max(preceding) if preceding else -1
        local = best - claim_base
        same_sentence = best >= 0 and pronoun_sentence[0] <= local < pronoun_sentence[1]
        bucket = 1 if (same_sentence or best < 0) else 0
        ranked.append((bucket, -best, surface))
    ranked.sort()
    return [surface for _, _, surface in ranked]


# ---------------------------------------------------------------------------
# HTTP client for the sidecar

class HttpBackend(Backend):
    """Speaks the wire protocol in docs/protocol.md. Bounded retries with
    exponential backoff on transport errors; a call that still fails marks the
    instance, not the run (callers catch TransportError per instance)."""

    def __init__(self, endpoint: str, timeout: float = 30.0, max_retries: int = 3,
                 backoff: float = 0.25, session=None):
        import requests

        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self.session = session or requests.Session()
        health = self._request("GET", "/health")
        self.descriptor = BackendDescriptor(
            capabilities=frozenset(health["capabilities"]),
            endpoint=self.endpoint,
            model_ids=dict(health.get("models", {})),
        )

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        import requests

        url = self.endpoint + path
        last_err = None
        for attempt in range(1, self.max_retries + 1):
            try:
                resp = self.session.request(method, url, json=payload, timeout=self.timeout)
                if resp.status_code >= 500:
                    last_err = f"HTTP {resp.status_code}"
                else:
                    resp.raise_for_status()
                    return resp.json()
            except requests.RequestException as exc:
                last_err = str(exc)
            if attempt < self.max_retries:
                time.sleep(self.backoff * 2 ** (attempt - 1))
        raise TransportError(f"{url}: {last_err}", attempts=self.max_retries)

    def nli_logits(self, premise: str, hypothesis: str) -> NliLogits:
        return self.nli_logits_batch([(premise, hypothesis)])[0]

    def nli_logits_batch(self, pairs) -> list[NliLogits]:
        body = {"pairs": [{"premise": p, "hypothesis": h} for p, h in pairs]}
        out = self._request("POST", "/nli", body)
        return [NliLogits(*r["logits"]) for r in out["results"]]

    def embed(self, text: str) -> list[float]:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts) -> list[list[float]]:
        out = self._request("POST", "/embed", {"texts": list(texts)})
        return [r["vector"] for r in out["results"]]

    def punctuate(self, turn: str) -> str:
        return self._request("POST", "/punctuate", {"turns": [turn]})["results"][0]

    def truecase(self, turn: str) -> str:
        return self._request("POST", "/truecase", {"turns": [turn]})["results"][0]

    def coref_propose(self, context, claim: str) -> list[CorefProposal]:
        out = self._request("POST", "/coref/propose", {"context": list(context), "claim": claim})
        return [
            CorefProposal(pronoun_span=tuple(p["span"]), candidates=tuple(p["candidates"][:10]))
            for p in out["proposals"]
        ]

    def antecedent_select(self, context, claim: str, proposal: CorefProposal) -> int:
        out = self._request("POST", "/coref/select", {
            "context": list(context), "claim": claim,
            "span": list(proposal.pronoun_span), "candidates": list(proposal.candidates),
        })
        return int(out["index"])

    def decoder_rewrite(self, context, claim: str) -> str:
        return self._request("POST", "/rewrite", {"context": list(context), "claim": claim})["rewrite"]

    def cross_encode(self, query: str, passage: str) -> float:
        return self.cross_encode_batch([(query, passage)])[0]

    def cross_encode_batch(self, pairs) -> list[float]:
        body = {"pairs": [{"query": q, "passage": p} for q, p in pairs]}
        return [float(s) for s in self._request("POST", "/cross_encode", body)["results"]]


def make_backend(kind: str, **kwargs) -> Backend:
    if kind == "stub":
        return StubBackend()
    if kind == "http":
        return HttpBackend(**kwargs)
    raise CapabilityError(f"unknown backend kind {kind!r}")
