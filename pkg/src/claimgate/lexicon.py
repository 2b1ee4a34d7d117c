"""Closed pronoun lexicon shared by statistics and the rewriting pipeline."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources as importlib_resources


@dataclass(frozen=True)
class PronounLexicon:
    in_scope_forms: frozenset
    first_person_forms: frozenset
    deictic_forms: frozenset
    possessive_forms: frozenset
    expletive_patterns: tuple  # compiled regexes anchored at an "it" mention
    include_first_person: bool = False
    version: str = "unversioned"

    def __post_init__(self):
        if self.in_scope_forms & self.deictic_forms:
            raise ValueError("in-scope and deictic pronoun sets must be disjoint")

    @property
    def anchor_forms(self) -> frozenset:
        forms = self.in_scope_forms | self.deictic_forms
        if self.include_first_person:
            forms = forms | self.first_person_forms
        return forms


def load_lexicon(path=None, include_first_person: bool = False) -> PronounLexicon:
    if path is None:
        raw = importlib_resources.files("claimgate.resources").joinpath("pronouns.json").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    data = json.loads(raw)
    return PronounLexicon(
        in_scope_forms=frozenset(data["in_scope"]),
        first_person_forms=frozenset(data["first_person"]),
        deictic_forms=frozenset(data["deictic"]),
        possessive_forms=frozenset(data["possessive"]),
        expletive_patterns=tuple(re.compile(p, re.IGNORECASE) for p in data["expletive_it_patterns"]),
        include_first_person=include_first_person,
        version=data.get("version", "unversioned"),
    )


_DEFAULT: PronounLexicon | None = None


def default_lexicon() -> PronounLexicon:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_lexicon()
    return _DEFAULT
