"""Concept lexicon, is-a hierarchy, and query-side term normalization."""

from __future__ import annotations

import json
import re
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class Concept:
    code: str
    description: str
    parent: str | None = None


@dataclass
class ConceptHierarchy:
    """A forest of concepts keyed by code, immutable once loaded."""

    concepts: dict[str, Concept] = field(default_factory=dict)
    children: dict[str, list[str]] = field(default_factory=dict)

    @classmethod
    def from_concepts(cls, concepts: Iterable[Concept]) -> ConceptHierarchy:
        table: dict[str, Concept] = {}
        for concept in concepts:
            if concept.code in table:
                raise LexiconError(f"duplicate code {concept.code!r}")
            table[concept.code] = concept
        children: dict[str, list[str]] = {code: [] for code in table}
        for concept in table.values():
            if concept.parent is None:
                continue
            if concept.parent not in table:
                raise LexiconError(
                    f"{concept.code!r} references unknown parent {concept.parent!r}"
                )
            children[concept.parent].append(concept.code)
        h = cls(table, children)
        h._check_acyclic()
        return h

    def _check_acyclic(self) -> None:
        state: dict[str, int] = {}
        for start in self.concepts:
            path = []
            code: str | None = start
            while code is not None and code not in state:
                state[code] = 1
                path.append(code)
                code = self.concepts[code].parent
            if code is not None and state[code] == 1:
                raise LexiconError(f"parent cycle through {code!r}")
            for c in path:
                state[c] = 2

    def __contains__(self, code: object) -> bool:
        return code in self.concepts

    def __len__(self) -> int:
        return len(self.concepts)

    def __iter__(self) -> Iterator[Concept]:
        return iter(self.concepts.values())

    def get(self, code: str) -> Concept | None:
        return self.concepts.get(code)

    def description(self, code: str) -> str | None:
        concept = self.concepts.get(code)
        return None if concept is None else concept.description

    def _require(self, code: str) -> Concept:
        try:
            return self.concepts[code]
        except KeyError:
            raise LexiconError(f"unknown concept code {code!r}") from None

    def descendants(self, code: str) -> set[str]:
        """All transitive children of ``code``, excluding ``code`` itself."""
        self._require(code)
        out: set[str] = set()
        queue = deque(self.children[code])
        while queue:
            c = queue.popleft()
            if c not in out:
                out.add(c)
                queue.extend(self.children[c])
        return out

    def ancestors(self, code: str) -> list[str]:
        """Parents of ``code`` from nearest to root."""
        out = []
        parent = self._require(code).parent
        while parent is not None:
            out.append(parent)
            parent = self.concepts[parent].parent
        return out


def load_hierarchy(path: str | Path) -> ConceptHierarchy:
    """Read a JSON Lines lexicon of ``{"code", "description", "parent"}``."""
    concepts = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                concepts.append(Concept(str(obj["code"]), str(obj["description"]), obj.get("parent")))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise LexiconError(f"line {lineno}: bad lexicon record ({exc})") from None
    return ConceptHierarchy.from_concepts(concepts)


# letter(s)+digits with optional dot suffix (F43, Z79.82), SNOMED-style long
# integers (268400002), or a hyphenated range of two of those (V00-X59)
_CODE_PART = r"(?:[A-Z]{1,2}[0-9]{1,3}(?:\.[0-9A-Z]{1,4})?|[0-9]{6,})"
CODE_PATTERN = re.compile(rf"{_CODE_PART}(?:-{_CODE_PART})?")

_WORD = re.compile(r"[^\W_]+")


@lru_cache(maxsize=1)
def stop_words() -> frozenset[str]:
    text = resources.files("focusmodel").joinpath("data/stopwords.txt").read_text()
    return frozenset(w.strip() for w in text.split() if w.strip())


def is_code_shaped(token: str) -> bool:
    return CODE_PATTERN.fullmatch(token) is not None


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric runs; used on the index side, keeps everything."""
    return [m.group().lower() for m in _WORD.finditer(text)]


def token_spans(text: str) -> list[tuple[str, int, int]]:
    return [(m.group().lower(), m.start(), m.end()) for m in _WORD.finditer(text)]


def normalize_terms(description: str) -> list[str]:
    """Query terms for a concept description.

    >>> normalize_terms("F43 Reaction to severe stress")
    ['reaction', 'severe', 'stress']
    """
    stops = stop_words()
    out = []
    for chunk in description.split():
        if is_code_shaped(chunk.strip(".,;:()[]{}'\"")):
            continue
        for m in _WORD.finditer(chunk):
            word = m.group()
            if is_code_shaped(word):
                continue
            word = word.lower()
            if word in stops or is_code_shaped(word):
                continue
            out.append(word)
    return out
