import math

import pytest

from claimgate.backends import (
    ALL_CAPABILITIES,
    CorefProposal,
    StubBackend,
    make_backend,
    punctuate_contract_ok,
    truecase_contract_ok,
)
from claimgate.errors import CapabilityError


# -- contract guards --------------------------------------------------------

@pytest.mark.parametrize("before,after,ok", [
    ("hello world", "hello, world.", True),
    ("hello world", "hello world?", True),
    ("hello world", "hello world", True),
    ("hello world", "hello worlds.", False),   # inserted non-punctuation
    ("hello world", "helloworld", False),      # deletion
    ("hello world", "hello; world", False),    # semicolon not insertable
])
def test_punctuate_contract(before, after, ok):
    assert punctuate_contract_ok(before, after) is ok


@pytest.mark.parametrize("before,after,ok", [
    ("elvis was here", "Elvis was here", True),
    ("a. b c", "A. B c", True),
    ("elvis was here", "ELvis was here", False),  # non-initial char changed
    ("elvis was here", "Elvis was here!", False),  # length changed
    ("elvis was here", "Elvis was hero", False),   # letter changed
])
def test_truecase_contract(before, after, ok):
    assert truecase_contract_ok(before, after) is ok


# -- stub determinism and pinned behavior -----------------------------------

def test_stub_descriptor_covers_all_capabilities(stub):
    assert stub.descriptor.capabilities == ALL_CAPABILITIES
    stub.descriptor.require(["nli_logits", "embed"])
    with pytest.raises(CapabilityError):
        stub.descriptor.require(["teleport"])


def test_stub_nli_pinned_cases(stub):
    identical = stub.nli_logits("the same text", "the same text")
    assert identical.as_tuple() == (10.0, 0.0, -10.0)
    disjoint = stub.nli_logits("alpha beta gamma", "delta epsilon zeta")
    assert disjoint.as_tuple() == (-10.0, 0.0, 8.0)


def test_stub_nli_deterministic(stub):
    a = stub.nli_logits("elvis was born in tupelo", "he was born in mississippi")
    b = StubBackend().nli_logits("elvis was born in tupelo", "he was born in mississippi")
    assert a == b


def test_stub_embed_unit_norm(stub):
    vec = stub.embed("some dialogue claim about elvis")
    assert len(vec) == StubBackend.EMBED_DIM
    assert math.isclose(sum(v * v for v in vec), 1.0, rel_tol=1e-9)
    assert stub.embed("") [0] == 1.0


def test_stub_punctuate_respects_contract(stub):
    for turn in ("where is he from", "elvis lived there", "done already."):
        assert punctuate_contract_ok(turn, stub.punctuate(turn))
    assert stub.punctuate("where is he from") == "where is he from?"


def test_stub_truecase_respects_contract(stub):
    for turn in ("elvis went to memphis in january.", "i think i saw it. really."):
        assert truecase_contract_ok(turn, stub.truecase(turn))
    assert stub.truecase("i saw elvis. he waved.") == "I saw Elvis. He waved."


def test_stub_truecase_acronym_not_sentence_break(stub):
    out = stub.truecase("louis C.K. performed there.")
    assert out == "Louis C.K. performed there."


def test_stub_coref_candidates_capped_and_ranked(stub):
    context = ["Elvis moved to Memphis.", "He bought Graceland in 1957."]
    claim = "Many fans visited it every year."
    proposals = stub.coref_propose(context, claim)
    assert len(proposals) == 1
    (p,) = proposals
    assert claim[p.pronoun_span[0]:p.pronoun_span[1]] == "it"
    assert len(p.candidates) <= 10
    assert p.candidates[0] == "Graceland"  # most recent candidate wins
    assert stub.antecedent_select(context, claim, p) == 0


def test_coref_proposal_cap_enforced():
    with pytest.raises(ValueError):
        CorefProposal(pronoun_span=(0, 2), candidates=tuple(str(i) for i in range(11)))


def test_stub_rewrite_deterministic_and_clean(stub):
    out = stub.decoder_rewrite(["some context."], "he didnt leave memphis")
    assert out == "He did not leave memphis."
    assert out == stub.decoder_rewrite(["some context."], "he didnt leave memphis")


def test_stub_cross_encode_orders_by_overlap(stub):
    query = "elvis was born in tupelo mississippi"
    close = stub.cross_encode(query, "elvis was born in tupelo")
    far = stub.cross_encode(query, "sharks are older than trees")
    assert close > far


def test_batch_calls_preserve_order(stub):
    pairs = [("a b c", "a b"), ("x y", "y z"), ("p q", "p q")]
    batched = stub.nli_logits_batch(pairs)
    assert batched == [stub.nli_logits(p, h) for p, h in pairs]


def test_make_backend_kinds():
    assert isinstance(make_backend("stub"), StubBackend)
    with pytest.raises(CapabilityError):
        make_backend("carrier-pigeon")
