"""Recursive-descent parser for a restricted referring-expression grammar.

    NP  := DET? ATTR* NOUN (REL NP')*
    NP' := DET? ATTR* NOUN

Every ``REL NP'`` group following a noun phrase attaches to the head of the
top-level phrase, so "the man in the red jacket on skis" gives the star
man -in-> jacket, man -on-> skis. Relation phrases are matched longest first.
"""
from __future__ import annotations

import json
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .scene_graph import SceneGraph, SgEdge, SgNode, validate_graph


class ParseError(ValueError):
    def __init__(self, message: str, position: int | None = None, token: str | None = None):
        super().__init__(message)
        self.position = position
        self.token = token


@dataclass(frozen=True)
class Token:
    text: str
    position: int


@dataclass(frozen=True)
class Grammar:
    determiners: frozenset[str]
    attributes: frozenset[str]
    nouns: frozenset[str]
    relations: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        sets = {"determiners": self.determiners, "attributes": self.attributes, "nouns": self.nouns}
        names = list(sets)
        for i, a in enumerate(names):
            for b in names[i + 1:]:
                both = sets[a] & sets[b]
                if both:
                    raise ValueError(f"{a} and {b} share tokens: {sorted(both)}")
        rels = tuple(tuple(r) for r in self.relations)
        if any(not r for r in rels):
            raise ValueError("relation phrases must be non-empty")
        if len(set(rels)) != len(rels):
            raise ValueError("duplicate relation phrase")
        # longest first, then lexicographic, so matching order is total
        object.__setattr__(self, "relations", tuple(sorted(rels, key=lambda r: (-len(r), r))))

    @classmethod
    def from_dict(cls, doc: dict) -> "Grammar":
        return cls(
            determiners=frozenset(doc.get("determiners", [])),
            attributes=frozenset(doc["attributes"]),
            nouns=frozenset(doc["nouns"]),
            relations=tuple(tuple(r) for r in doc["relations"]),
        )

    def to_dict(self) -> dict:
        return {
            "determiners": sorted(self.determiners),
            "attributes": sorted(self.attributes),
            "nouns": sorted(self.nouns),
            "relations": [list(r) for r in self.relations],
        }

    @classmethod
    def load(cls, path: str | Path) -> "Grammar":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def lexicon(self) -> list[str]:
        """Every token the grammar knows, in a stable order."""
        toks = set(self.determiners) | set(self.attributes) | set(self.nouns)
        for r in self.relations:
            toks.update(r)
        return sorted(toks)


def default_grammar() -> Grammar:
    text = resources.files("jvgn").joinpath("data/default_grammar.json").read_text()
    return Grammar.from_dict(json.loads(text))


_PUNCT = str.maketrans("", "", string.punctuation)


def tokenize(expression: str) -> list[Token]:
    """Lowercase, strip punctuation, split on whitespace."""
    words = [w.translate(_PUNCT) for w in expression.lower().split()]
    words = [w for w in words if w]
    if not words:
        raise ParseError("empty expression")
    return [Token(w, i) for i, w in enumerate(words)]


class _Parser:
    def __init__(self, tokens: list[Token], grammar: Grammar):
        self.toks = tokens
        self.g = grammar
        self.i = 0
        self.nodes: list[SgNode] = []
        self.edges: list[SgEdge] = []

    def peek(self) -> Token | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def match_relation(self) -> tuple[str, ...] | None:
        words = [t.text for t in self.toks[self.i:]]
        for rel in self.g.relations:
            if tuple(words[:len(rel)]) == rel:
                return rel
        return None

    def fail(self, tok: Token, what: str):
        if tok.text not in self.g.lexicon():
            raise ParseError(f"unknown token {tok.text!r} at position {tok.position}",
                             tok.position, tok.text)
        raise ParseError(f"expected {what} at position {tok.position}, got {tok.text!r}",
                         tok.position, tok.text)

    def base_np(self) -> int:
        tok = self.peek()
        if tok is not None and tok.text in self.g.determiners:
            self.i += 1
        attrs = []
        while (tok := self.peek()) is not None and tok.text in self.g.attributes:
            attrs.append((tok.text,))
            self.i += 1
        tok = self.peek()
        if tok is None:
            last = self.toks[-1]
            raise ParseError(f"expected a noun after position {last.position}", last.position + 1)
        if tok.text not in self.g.nouns:
            self.fail(tok, "a noun")
        self.i += 1
        node = SgNode(len(self.nodes), (tok.text,), tuple(attrs))
        self.nodes.append(node)
        return node.id

    def np(self) -> int:
        head = self.base_np()
        while self.peek() is not None:
            rel = self.match_relation()
            if rel is None:
                self.fail(self.peek(), "a relation")
            rel_tok = self.peek()
            self.i += len(rel)
            if self.peek() is None:
                raise ParseError(f"relation {' '.join(rel)!r} at position {rel_tok.position} "
                                 "has no object", rel_tok.position, rel_tok.text)
            obj = self.base_np()
            self.edges.append(SgEdge(head, rel, obj))
        return head


def parse_expression(tokens: list[Token] | str, grammar: Grammar) -> SceneGraph:
    """Parse a token stream (or raw string) into a validated SceneGraph."""
    if isinstance(tokens, str):
        tokens = tokenize(tokens)
    if not tokens:
        raise ParseError("empty expression")
    p = _Parser(list(tokens), grammar)
    root = p.np()
    g = SceneGraph(tuple(p.nodes), tuple(p.edges), root)
    report = validate_graph(g)
    assert report.ok, report
    return g
