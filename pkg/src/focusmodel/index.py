"""Embedded fielded inverted index with BM25 ranking.

Documents have a title and an abstract. Concept mentions are extracted once
at index time by exact phrase match against the lexicon, so searches only
have to score and look up stored annotations.

Scoring is per-field BM25 combined linearly across weighted query terms::

    score(D) = sum  boost * idf_f(w) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len_f(D) / avglen_f))
    idf_f(w) = ln(1 + (N - df_f(w) + 0.5) / (df_f(w) + 0.5))
"""

from __future__ import annotations

import gzip
import json
import math
import zlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ontology import ConceptHierarchy, token_spans, tokenize
from .query import FIELDS, WeightedQuery

FORMAT_VERSION = 1
SNIPPET_CHARS = 300


class CorpusError(ValueError):
    pass


class IndexFormatError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Mention:
    code: str
    field: str
    offset: int
    length: int

    def to_dict(self) -> dict:
        return {"code": self.code, "field": self.field, "offset": self.offset, "len": self.length}


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    abstract: str
    mentions: tuple[Mention, ...] = ()

    def text(self, fld: str) -> str:
        return self.title if fld == "title" else self.abstract

    @property
    def codes(self) -> tuple[str, ...]:
        return tuple(sorted({m.code for m in self.mentions}))


def ingest_corpus(path: str | Path) -> list[Document]:
    """Read a JSON Lines corpus of ``{"id", "title", "abstract"}`` records."""
    docs: list[Document] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc = Document(str(obj["id"]), str(obj.get("title", "")), str(obj.get("abstract", "")))
            except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as exc:
                raise CorpusError(f"line {lineno}: malformed corpus record ({exc})") from None
            if doc.id in seen:
                raise CorpusError(f"duplicate document id {doc.id!r} at line {lineno}")
            seen.add(doc.id)
            docs.append(doc)
    return docs


class MentionMatcher:
    """Case-insensitive phrase matcher over lexicon descriptions.

    Phrases are compared token by token (stop words kept), so punctuation
    and spacing differences do not block a match. Overlapping candidates are
    resolved longest first, then leftmost.
    """

    def __init__(self, hierarchy: ConceptHierarchy) -> None:
        phrases: dict[tuple[str, ...], str] = {}
        for concept in hierarchy:
            key = tuple(tokenize(concept.description))
            if key and (key not in phrases or concept.code < phrases[key]):
                phrases[key] = concept.code
        self._by_first: dict[str, list[tuple[tuple[str, ...], str]]] = {}
        for key, code in phrases.items():
            self._by_first.setdefault(key[0], []).append((key, code))

    def __bool__(self) -> bool:
        return bool(self._by_first)

    def find(self, text: str, fld: str) -> list[Mention]:
        spans = token_spans(text)
        words = [w for w, _, _ in spans]
        candidates = []
        for i, word in enumerate(words):
            for key, code in self._by_first.get(word, ()):
                j = i + len(key)
                if tuple(words[i:j]) == key:
                    start, end = spans[i][1], spans[j - 1][2]
                    candidates.append((start, end, code))
        candidates.sort(key=lambda c: (-(c[1] - c[0]), c[0], c[2]))
        taken: list[tuple[int, int, str]] = []
        for start, end, code in candidates:
            if all(end <= s or start >= e for s, e, _ in taken):
                taken.append((start, end, code))
        taken.sort()
        return [Mention(code, fld, s, e - s) for s, e, code in taken]


def extract_mentions(doc: Document, hierarchy: ConceptHierarchy | MentionMatcher) -> tuple[Mention, ...]:
    matcher = hierarchy if isinstance(hierarchy, MentionMatcher) else MentionMatcher(hierarchy)
    if not matcher:
        return ()
    return tuple(matcher.find(doc.title, "title")) + tuple(matcher.find(doc.abstract, "abstract"))


def annotate(docs: Iterable[Document], hierarchy: ConceptHierarchy) -> list[Document]:
    matcher = MentionMatcher(hierarchy)
    return [
        Document(d.id, d.title, d.abstract, extract_mentions(d, matcher)) for d in docs
    ]


@dataclass
class FieldIndex:
    postings: dict[str, tuple[np.ndarray, np.ndarray]]
    lengths: np.ndarray
    avglen: float
    norm: np.ndarray = field(init=False, repr=False)

    def set_norm(self, k1: float, b: float) -> None:
        avg = self.avglen if self.avglen > 0 else 1.0
        self.norm = k1 * (1.0 - b + b * self.lengths / avg)


@dataclass(frozen=True)
class SearchResult:
    doc_id: str
    score: float
    snippet: str
    mentions: tuple[Mention, ...]
    codes: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "id": self.doc_id,
            "score": self.score,
            "snippet": self.snippet,
            "mentions": [m.to_dict() for m in self.mentions],
        }


class Index:
    """Immutable after construction; safe for concurrent searches."""

    def __init__(
        self,
        docs: Sequence[Document],
        fields: dict[str, FieldIndex],
        k1: float = 1.2,
        b: float = 0.75,
    ) -> None:
        self.docs = list(docs)
        self.fields = fields
        self.k1 = k1
        self.b = b
        self.n_docs = len(self.docs)
        for fi in fields.values():
            fi.set_norm(k1, b)

    def idf(self, fld: str, term: str) -> float:
        post = self.fields[fld].postings.get(term)
        df = 0 if post is None else len(post[0])
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))

    def score_all(self, query: WeightedQuery) -> np.ndarray:
        scores = np.zeros(self.n_docs, dtype=np.float64)
        for wt in query:
            fi = self.fields[wt.field]
            post = fi.postings.get(wt.term)
            if post is None:
                continue
            docs, tf = post
            idf = self.idf(wt.field, wt.term)
            scores[docs] += wt.boost * idf * tf * (self.k1 + 1.0) / (tf + fi.norm[docs])
        return scores

    def search(self, query: WeightedQuery, k: int = 100) -> list[SearchResult]:
        """Top ``k`` documents by score; ties go to the smaller doc id."""
        if k < 1 or self.n_docs == 0 or len(query) == 0:
            return []
        scores = self.score_all(query)
        hits = np.flatnonzero(scores > 0)
        if len(hits) > k:
            part = np.argpartition(-scores[hits], k - 1)[:k]
            cutoff = scores[hits[part]].min()
            hits = hits[scores[hits] >= cutoff]
        ranked = sorted(hits.tolist(), key=lambda i: (-scores[i], self.docs[i].id))[:k]
        return [self._result(i, float(scores[i])) for i in ranked]

    def _result(self, i: int, score: float) -> SearchResult:
        doc = self.docs[i]
        return SearchResult(doc.id, score, doc.abstract[:SNIPPET_CHARS], doc.mentions, doc.codes)

    def stats(self) -> dict:
        return {
            "documents": self.n_docs,
            "terms": {f: len(fi.postings) for f, fi in self.fields.items()},
        }


def build_index(docs: Sequence[Document], k1: float = 1.2, b: float = 0.75) -> Index:
    """Index title and abstract; all tokens are kept (stop words included)."""
    fields: dict[str, FieldIndex] = {}
    for fld in FIELDS:
        acc: dict[str, tuple[list[int], list[int]]] = {}
        lengths = np.zeros(len(docs), dtype=np.float64)
        for i, doc in enumerate(docs):
            tokens = tokenize(doc.text(fld))
            lengths[i] = len(tokens)
            for term, tf in Counter(tokens).items():
                ids, tfs = acc.setdefault(term, ([], []))
                ids.append(i)
                tfs.append(tf)
        postings = {
            term: (np.asarray(ids, dtype=np.int64), np.asarray(tfs, dtype=np.float64))
            for term, (ids, tfs) in sorted(acc.items())
        }
        avglen = float(lengths.mean()) if len(docs) else 0.0
        fields[fld] = FieldIndex(postings, lengths, avglen)
    return Index(docs, fields, k1, b)


def top_concepts(results: Iterable[SearchResult], n: int = 10) -> list[tuple[str, int]]:
    """Most frequently mentioned concepts, counted once per result document."""
    counts = Counter(code for r in results for code in set(r.codes))
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:n]


def filter_by_concept(results: Iterable[SearchResult], code: str) -> list[SearchResult]:
    return [r for r in results if code in r.codes]


def save_index(index: Index, path: str | Path) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "k1": index.k1,
        "b": index.b,
        "documents": [
            {
                "id": d.id,
                "title": d.title,
                "abstract": d.abstract,
                "mentions": [[m.code, m.field, m.offset, m.length] for m in d.mentions],
            }
            for d in index.docs
        ],
        "fields": {
            fld: {
                "lengths": fi.lengths.astype(int).tolist(),
                "avglen": fi.avglen,
                "postings": {
                    term: [ids.tolist(), tf.astype(int).tolist()]
                    for term, (ids, tf) in fi.postings.items()
                },
            }
            for fld, fi in index.fields.items()
        },
    }
    with gzip.open(path, "wt", encoding="utf-8") as fh:
        json.dump(payload, fh, separators=(",", ":"))


def load_index(path: str | Path) -> Index:
    try:
        with gzip.open(path, "rt", encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise
    except (OSError, EOFError, zlib.error, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise IndexFormatError(f"corrupt index file {path}: {exc}") from None
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise IndexFormatError(f"{path} is not an index file")
    if payload["format_version"] != FORMAT_VERSION:
        raise IndexFormatError(
            f"index format version {payload['format_version']} != {FORMAT_VERSION}"
        )
    try:
        docs = [
            Document(
                d["id"],
                d["title"],
                d["abstract"],
                tuple(Mention(c, f, o, n) for c, f, o, n in d["mentions"]),
            )
            for d in payload["documents"]
        ]
        fields = {}
        for fld in FIELDS:
            raw = payload["fields"][fld]
            postings = {
                term: (np.asarray(ids, dtype=np.int64), np.asarray(tf, dtype=np.float64))
                for term, (ids, tf) in raw["postings"].items()
            }
            fields[fld] = FieldIndex(
                postings, np.asarray(raw["lengths"], dtype=np.float64), float(raw["avglen"])
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise IndexFormatError(f"corrupt index file {path}: {exc}") from None
    return Index(docs, fields, float(payload["k1"]), float(payload["b"]))
