"""Turn a focus snapshot into a boosted, fielded free-text query.

Each concept contributes the normalized terms of its description; every
term is searched in both the title and abstract fields, boosted by the
concept's importance. The text form is ``field:term^boost`` separated by
single spaces, e.g. ``title:injury^2.5 abstract:injury^2.5``.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Iterable

from .engine import FocusSnapshot
from .ontology import ConceptHierarchy, normalize_terms

log = logging.getLogger(__name__)

FIELDS = ("title", "abstract")


@dataclass(frozen=True, slots=True)
class WeightedTerm:
    field: str
    term: str
    boost: float

    def __post_init__(self) -> None:
        if self.field not in FIELDS:
            raise ValueError(f"unknown field {self.field!r}")
        if not self.boost > 0:
            raise ValueError("boost must be positive")


@dataclass(frozen=True)
class WeightedQuery:
    terms: tuple[WeightedTerm, ...] = ()

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def scaled(self, k: float) -> WeightedQuery:
        return WeightedQuery(tuple(WeightedTerm(t.field, t.term, t.boost * k) for t in self.terms))


def build_query(snapshot: FocusSnapshot, hierarchy: ConceptHierarchy) -> WeightedQuery:
    """Query terms in snapshot order: for each token, title then abstract.

    Codes the hierarchy cannot describe, and concepts whose description
    normalizes to nothing, are skipped with a logged warning.
    """
    terms: list[WeightedTerm] = []
    for item in snapshot.items:
        if item.importance <= 0:
            continue
        description = hierarchy.description(item.code)
        if description is None:
            log.warning("no description for concept %s; skipped", item.code)
            continue
        tokens = normalize_terms(description)
        if not tokens:
            log.warning("concept %s has no query terms after normalization", item.code)
            continue
        for token in tokens:
            for fld in FIELDS:
                terms.append(WeightedTerm(fld, token, item.importance))
    return WeightedQuery(tuple(terms))


def format_boost(boost: float) -> str:
    """Shortest round-trip decimal: 7.3 -> '7.3', 5.0 -> '5'."""
    if boost.is_integer() and abs(boost) < 1e15:
        return str(int(boost))
    return repr(boost)


def render_query(query: WeightedQuery | Iterable[WeightedTerm]) -> str:
    return " ".join(f"{t.field}:{t.term}^{format_boost(t.boost)}" for t in query)


class QuerySyntaxError(ValueError):
    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} at position {position}")
        self.position = position


_CLAUSE = re.compile(
    r"(?P<field>[A-Za-z_]+):(?P<term>[^\W_]+)(?:\^(?P<boost>[0-9]+(?:\.[0-9]*)?(?:[eE][-+]?[0-9]+)?))?"
)


def parse_query(text: str) -> WeightedQuery:
    """Parse the rendered ``field:term^boost`` form back into a query.

    A missing ``^boost`` means boost 1. Terms are lowercased.
    """
    terms = []
    pos = 0
    n = len(text)
    while True:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break
        m = _CLAUSE.match(text, pos)
        if m is None:
            raise QuerySyntaxError("expected field:term[^boost]", pos)
        end = m.end()
        if end < n and not text[end].isspace():
            raise QuerySyntaxError(f"unexpected character {text[end]!r}", end)
        fld = m.group("field").lower()
        if fld not in FIELDS:
            raise QuerySyntaxError(f"unknown field {fld!r}", m.start("field"))
        boost = float(m.group("boost")) if m.group("boost") is not None else 1.0
        if not boost > 0:
            raise QuerySyntaxError("boost must be positive", m.start("boost"))
        terms.append(WeightedTerm(fld, m.group("term").lower(), boost))
        pos = end
    return WeightedQuery(tuple(terms))
