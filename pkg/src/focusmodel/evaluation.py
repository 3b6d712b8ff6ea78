"""Compare self-reported focus lists with focus model snapshots.

Pipeline per pause: standardize each reported concept to a set of snapshot
codes, score it, build the ordered user and model lists, then compute
recall, Jaccard distance and edit distance.

Identity of list and set entries is the set of codes a reported concept
maps to. A reported concept with no codes in the snapshot keeps a unique
identity of its own, so it can never be covered.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Hashable, Iterable, Mapping, Sequence

from .engine import FocusSnapshot
from .ontology import ConceptHierarchy, normalize_terms


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class SelfReport:
    pause: int
    phase: str
    concepts: tuple[str, ...]
    excluded: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.phase not in ("before", "after"):
            raise EvaluationError(f"phase must be 'before' or 'after', got {self.phase!r}")

    @property
    def reported(self) -> list[str]:
        """Reported concepts minus the ones flagged as non-medical."""
        skip = set(self.excluded)
        return [c for c in self.concepts if c not in skip]


@dataclass
class MappingSet:
    mapping: dict[str, frozenset[str]] = field(default_factory=dict)
    provenance: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, reported: str) -> frozenset[str]:
        return self.mapping[reported]


Entry = Hashable


@dataclass(frozen=True)
class Unmapped:
    text: str

    def __str__(self) -> str:
        return f"?{self.text}"


def entry_label(entry: Entry) -> str:
    if isinstance(entry, frozenset):
        return "+".join(sorted(entry))
    return str(entry)


def _stem(token: str) -> str:
    if len(token) > 3 and token.endswith("s") and not token.endswith(("ss", "us", "is")):
        return token[:-1]
    return token


def content_tokens(text: str) -> frozenset[str]:
    return frozenset(_stem(t) for t in normalize_terms(text))


def match_anchors(reported: str, hierarchy: ConceptHierarchy, min_coverage: float = 0.75) -> set[str]:
    """Most general lexicon concepts a reported term refers to.

    An exact code matches itself. Otherwise a concept matches when its
    description contains at least ``min_coverage`` of the term's content
    words. Matches below another match are dropped, since mapping down from
    the higher one reaches them anyway.
    """
    text = reported.strip()
    if text in hierarchy:
        return {text}
    wanted = content_tokens(text)
    if not wanted:
        return set()
    anchors = set()
    for concept in hierarchy:
        have = content_tokens(concept.description)
        if have and len(wanted & have) / len(wanted) >= min_coverage:
            anchors.add(concept.code)
    return {a for a in anchors if not anchors.intersection(hierarchy.ancestors(a))}


def _auto_codes(
    reported: str,
    hierarchy: ConceptHierarchy,
    snapshot_codes: set[str],
    min_coverage: float,
) -> frozenset[str]:
    codes: set[str] = set()
    for a in match_anchors(reported, hierarchy, min_coverage):
        codes |= ({a} | hierarchy.descendants(a)) & snapshot_codes
    return frozenset(codes)


def standardize(
    report: SelfReport,
    hierarchy: ConceptHierarchy,
    snapshot: FocusSnapshot,
    manual: Mapping[str, Iterable[str]] | MappingSet | None = None,
    min_coverage: float = 0.75,
) -> MappingSet:
    """Map each reported concept to model codes.

    Manual mappings win. Otherwise a reported term anchors on lexicon
    concepts whose description covers at least ``min_coverage`` of its
    content words (or on an exact code), and maps to those anchors plus
    their descendants present in the snapshot. Ancestors are never used.
    """
    if isinstance(manual, MappingSet):
        manual = manual.mapping
    manual = manual or {}
    for reported, codes in manual.items():
        for code in codes:
            if code not in hierarchy:
                raise EvaluationError(f"mapping for {reported!r} references unknown code {code!r}")

    snapshot_codes = {item.code for item in snapshot}
    out = MappingSet()
    for reported in report.reported:
        if reported in manual:
            out.mapping[reported] = frozenset(manual[reported])
            out.provenance[reported] = "manual"
        else:
            out.mapping[reported] = _auto_codes(reported, hierarchy, snapshot_codes, min_coverage)
            out.provenance[reported] = "auto"
    return out


@dataclass(frozen=True)
class UserConcept:
    text: str
    codes: frozenset[str]
    score: float

    @property
    def mapped(self) -> bool:
        return bool(self.codes)

    @property
    def identity(self) -> Entry:
        return self.codes if self.codes else Unmapped(self.text)


def score_user_concepts(mapping: MappingSet, snapshot: FocusSnapshot) -> list[UserConcept]:
    """Score each reported concept as the summed snapshot score of its codes.

    Codes absent from the snapshot are dropped; a concept left with none
    scores 0 and stays in the list.
    """
    scores = snapshot.scores()
    out = []
    for text, codes in mapping.mapping.items():
        present = frozenset(c for c in codes if c in scores)
        out.append(UserConcept(text, present, sum(scores[c] for c in present)))
    return out


def model_entries(user: Sequence[UserConcept], snapshot: FocusSnapshot) -> list[tuple[Entry, float]]:
    """Snapshot entries with each mapped code set merged into one entry.

    Sorted by score descending, ties by earliest snapshot position.
    """
    scores = snapshot.scores()
    position = {item.code: i for i, item in enumerate(snapshot)}
    combined: list[frozenset[str]] = []
    for uc in user:
        if uc.mapped and uc.codes not in combined:
            combined.append(uc.codes)
    grouped = set().union(*combined) if combined else set()
    entries: list[frozenset[str]] = combined + [
        frozenset([item.code]) for item in snapshot if item.code not in grouped
    ]
    rows = [(e, sum(scores[c] for c in e), min(position[c] for c in e)) for e in entries]
    rows.sort(key=lambda r: (-r[1], r[2]))
    return [(e, s) for e, s, _ in rows]


def build_lists(
    user: Sequence[UserConcept], snapshot: FocusSnapshot
) -> tuple[list[Entry], list[Entry]]:
    """Ordered user list and model list truncated after the last mapped entry."""
    ranked_user = sorted(
        (uc for uc in user if uc.mapped),
        key=lambda uc: -uc.score,
    )
    l_u = [uc.identity for uc in ranked_user]
    mapped = {uc.codes for uc in user if uc.mapped}
    model = [e for e, _ in model_entries(user, snapshot)]
    last = max((i for i, e in enumerate(model) if e in mapped), default=-1)
    return l_u, model[: last + 1]


def recall(v_u: Iterable[Entry], v_m: Iterable[Entry]) -> Fraction:
    v_u, v_m = set(v_u), set(v_m)
    if not v_u:
        raise EvaluationError("recall is undefined for an empty user concept set")
    return Fraction(len(v_u & v_m), len(v_u))


def jaccard_distance(v_u: Iterable[Entry], v_m: Iterable[Entry]) -> Fraction:
    v_u, v_m = set(v_u), set(v_m)
    union = v_u | v_m
    if not union:
        return Fraction(0)
    return 1 - Fraction(len(v_u & v_m), len(union))


def edit_distance(a: Sequence[Entry], b: Sequence[Entry]) -> int:
    """Levenshtein distance with unit insert, delete and substitute."""
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


@dataclass
class EvalResult:
    pause: int
    phase: str
    recall: Fraction
    jaccard_distance: Fraction
    edit_distance: int
    v_u: list[Entry]
    v_m: list[Entry]
    l_u: list[Entry]
    l_v: list[Entry]

    def to_dict(self) -> dict:
        return {
            "pause": self.pause,
            "phase": self.phase,
            "recall": float(self.recall),
            "recall_exact": str(self.recall),
            "jaccard_distance": float(self.jaccard_distance),
            "jaccard_distance_exact": str(self.jaccard_distance),
            "edit_distance": self.edit_distance,
            "V_u": [entry_label(e) for e in self.v_u],
            "V_m": [entry_label(e) for e in self.v_m],
            "L_u": [entry_label(e) for e in self.l_u],
            "L_v": [entry_label(e) for e in self.l_v],
        }


def evaluate_pause(
    report: SelfReport,
    snapshot: FocusSnapshot,
    hierarchy: ConceptHierarchy,
    manual: Mapping[str, Iterable[str]] | None = None,
    min_coverage: float = 0.75,
) -> EvalResult:
    mapping = standardize(report, hierarchy, snapshot, manual, min_coverage)
    user = score_user_concepts(mapping, snapshot)
    if not user:
        raise EvaluationError(f"pause {report.pause} ({report.phase}) has no concepts to evaluate")
    v_u = list(dict.fromkeys(uc.identity for uc in user))
    v_m = [e for e, _ in model_entries(user, snapshot)]
    l_u, l_v = build_lists(user, snapshot)
    return EvalResult(
        pause=report.pause,
        phase=report.phase,
        recall=recall(v_u, v_m),
        jaccard_distance=jaccard_distance(v_u, v_m),
        edit_distance=edit_distance(l_u, l_v),
        v_u=v_u,
        v_m=v_m,
        l_u=l_u,
        l_v=l_v,
    )


def _aggregate(values: list) -> dict:
    mean = statistics.mean(values)
    median = statistics.median(values)
    return {
        "mean": float(mean),
        "median": float(median),
        "mean_exact": str(Fraction(mean)),
        "median_exact": str(Fraction(median)),
    }


def evaluate_session(
    pauses: Sequence[tuple[SelfReport, FocusSnapshot]],
    hierarchy: ConceptHierarchy,
    mappings: Mapping[str, Iterable[str]] | None = None,
    min_coverage: float = 0.75,
) -> dict:
    """Per-pause metrics plus mean/median per phase."""
    if not pauses:
        raise EvaluationError("nothing to evaluate")
    results = [evaluate_pause(r, s, hierarchy, mappings, min_coverage) for r, s in pauses]
    aggregates = {}
    for phase in ("before", "after"):
        chosen = [r for r in results if r.phase == phase]
        if not chosen:
            continue
        aggregates[phase] = {
            "n": len(chosen),
            "recall": _aggregate([r.recall for r in chosen]),
            "jaccard_distance": _aggregate([r.jaccard_distance for r in chosen]),
            "edit_distance": _aggregate([Fraction(r.edit_distance) for r in chosen]),
        }
    return {"pauses": [r.to_dict() for r in results], "aggregates": aggregates}


def read_self_reports(path: str | Path) -> list[SelfReport]:
    reports = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                reports.append(
                    SelfReport(
                        int(obj["pause"]),
                        obj["phase"],
                        tuple(obj["concepts"]),
                        tuple(obj.get("excluded", ())),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise EvaluationError(f"line {lineno}: bad self-report ({exc})") from None
    return reports


def read_snapshots(path: str | Path) -> list[tuple[int | None, FocusSnapshot]]:
    """Snapshot records, either bare or wrapped in a replay record."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                snap = obj.get("snapshot", obj)
                out.append((obj.get("pause"), FocusSnapshot.from_dict(snap)))
            except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as exc:
                raise EvaluationError(f"line {lineno}: bad snapshot record ({exc})") from None
    return out


def load_mapping(path: str | Path) -> dict[str, list[str]]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or not all(
        isinstance(v, list) and all(isinstance(c, str) for c in v) for v in data.values()
    ):
        raise EvaluationError("mapping file must be an object of string -> [code, ...]")
    return data


def align_pauses(
    reports: Sequence[SelfReport], snapshots: Sequence[tuple[int | None, FocusSnapshot]]
) -> list[tuple[SelfReport, FocusSnapshot]]:
    """Pair every report with its pause's snapshot.

    Snapshot records carrying a ``pause`` key are matched by id; otherwise
    the i-th snapshot belongs to the i-th distinct pause in report order.
    """
    pause_ids = list(dict.fromkeys(r.pause for r in reports))
    if len(pause_ids) != len(snapshots):
        raise EvaluationError(
            f"pause count mismatch: {len(pause_ids)} report pauses, {len(snapshots)} snapshots"
        )
    if all(p is not None for p, _ in snapshots):
        by_id = {p: s for p, s in snapshots}
        missing = [p for p in pause_ids if p not in by_id]
        if missing:
            raise EvaluationError(f"no snapshot for pause(s) {missing}")
    else:
        by_id = {p: s for p, (_, s) in zip(pause_ids, snapshots)}
    return [(r, by_id[r.pause]) for r in reports]
