"""Deterministic parser for short comma-joined style instructions.

Text is lower-cased and tokenized, split into clauses on commas, semicolons,
periods and "and", and each clause is scanned left to right with longest-match
against a closed phrase lexicon and a garment-noun list. Filler words are
dropped; anything else is kept as residual text for a VLM to handle.
"""

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .errors import AmbiguousBindingError, ContractError, UnknownGarmentError
from .rules import StyleInstruction

_TOKEN = re.compile(r"[a-z0-9]+(?:['-][a-z0-9]+)*|[^\sa-z0-9]")
_CLAUSE_BREAKS = {",", ";", ".", "and", "then"}

# Which garments an unbound clause may attach to, keyed by the field it sets.
_ADMITS = {
    "sleeves": lambda g: g.classification in ("upper", "overall"),
    "tuck": lambda g: g.classification == "upper",
    "closure_state": lambda g: g.closure != "none",
}


def tokenize(text):
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class Phrase:
    id: str
    field: str
    value: str
    forms: tuple


class Lexicon:
    def __init__(self, phrases, garment_nouns, fillers):
        self.phrases = {p.id: p for p in phrases}
        self.fillers = frozenset(fillers)
        self._phrase_forms = {}
        for p in phrases:
            for form in p.forms:
                key = tuple(tokenize(form))
                if key in self._phrase_forms and self._phrase_forms[key] != p.id:
                    raise ContractError(f"phrase form {form!r} maps to two phrase ids")
                self._phrase_forms[key] = p.id
        self._nouns = {tuple(tokenize(n)): " ".join(tokenize(n)) for n in garment_nouns}
        self._max_len = max(len(k) for k in [*self._phrase_forms, *self._nouns])

    @classmethod
    def from_json(cls, doc):
        phrases = [Phrase(p["id"], p["field"], p["value"], tuple(p["forms"])) for p in doc["phrases"]]
        for p in phrases:
            if p.field not in StyleInstruction.__dataclass_fields__:
                raise ContractError(f"phrase {p.id}: unknown field {p.field!r}")
            StyleInstruction().with_field(p.field, p.value)
        return cls(phrases, doc.get("garment_nouns", ()), doc.get("fillers", ()))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))

    def apply(self, phrase_id, instruction):
        p = self.phrases[phrase_id]
        return instruction.with_field(p.field, p.value)

    def longest_match(self, tokens, i):
        """Return (kind, value, length) of the longest phrase or noun at ``tokens[i]``."""
        for n in range(min(self._max_len, len(tokens) - i), 0, -1):
            key = tuple(tokens[i:i + n])
            if key in self._phrase_forms:
                return "phrase", self._phrase_forms[key], n
            if key in self._nouns:
                return "noun", self._nouns[key], n
        return None


@lru_cache(maxsize=None)
def default_lexicon():
    return Lexicon.from_json(json.loads(resources.files("ivton").joinpath("data/lexicon.json").read_text()))


@lru_cache(maxsize=None)
def default_synonyms():
    return json.loads(resources.files("ivton").joinpath("data/synonyms.json").read_text())


@dataclass(frozen=True)
class Clause:
    garment_binding: str  # category noun, or None for an unbound clause
    style_phrase: str


@dataclass(frozen=True)
class ParsedInstruction:
    clauses: tuple = ()
    residual: str = ""

    @property
    def partial(self):
        return bool(self.residual)

    def to_json(self):
        return {
            "clauses": [{"garment_binding": c.garment_binding, "style_phrase": c.style_phrase}
                        for c in self.clauses],
            "residual": self.residual,
            "partial": self.partial,
        }


def _split_clauses(tokens):
    clause = []
    for tok in tokens:
        if tok in _CLAUSE_BREAKS:
            if clause:
                yield clause
            clause = []
        elif tok.isalnum() or "-" in tok or "'" in tok:
            clause.append(tok)
    if clause:
        yield clause


def parse_instruction(text: str, lexicon: Lexicon = None) -> ParsedInstruction:
    lexicon = lexicon or default_lexicon()
    clauses, residual = [], []
    for tokens in _split_clauses(tokenize(text)):
        noun, phrases, i = None, [], 0
        while i < len(tokens):
            hit = lexicon.longest_match(tokens, i)
            if hit is None:
                if tokens[i] not in lexicon.fillers:
                    residual.append(tokens[i])
                i += 1
                continue
            kind, value, n = hit
            if kind == "noun":
                noun = noun or value
            else:
                phrases.append(value)
            i += n
        clauses.extend(Clause(noun, p) for p in phrases)
    return ParsedInstruction(tuple(clauses), " ".join(residual))


def _canonical(noun, synonyms):
    noun = " ".join(tokenize(noun))
    return synonyms.get(noun, noun)


def resolve_bindings(parsed: ParsedInstruction, garments, lexicon: Lexicon = None,
                     synonyms=None) -> dict:
    """Attach each clause to a garment; returns ``{garment.id: StyleInstruction}``.

    Clauses naming a garment noun bind by category noun. Unbound clauses go to
    the single garment that admits the phrase (sleeves: upper/overall, tuck:
    upper, closure: garments with a closure). Later clauses override earlier
    ones on the same field.
    """
    lexicon = lexicon or default_lexicon()
    synonyms = default_synonyms() if synonyms is None else synonyms
    result = {g.id: StyleInstruction() for g in garments}
    for clause in parsed.clauses:
        phrase = lexicon.phrases[clause.style_phrase]
        if clause.garment_binding is not None:
            noun = _canonical(clause.garment_binding, synonyms)
            matches = [g for g in garments if _canonical(g.category_noun, synonyms) == noun]
            if not matches:
                raise UnknownGarmentError(f"instruction mentions {clause.garment_binding!r} "
                                          f"but no garment has that category noun")
            if len(matches) > 1:
                raise AmbiguousBindingError(
                    f"{clause.garment_binding!r} matches garments {[g.id for g in matches]}; "
                    f"use distinct nouns or a VLM planner")
        else:
            matches = [g for g in garments if _ADMITS[phrase.field](g)]
            if len(matches) != 1:
                raise AmbiguousBindingError(
                    f"cannot attach {clause.style_phrase!r}: candidate garments "
                    f"{[g.id for g in matches]}; name the garment or use a VLM planner")
        target = matches[0].id
        result[target] = lexicon.apply(clause.style_phrase, result[target])
    return result
