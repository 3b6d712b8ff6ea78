"""Dynamic focus model: per-concept aging functions summed into importance.

Every action leaves one aging function on each concept it touches::

    contribution(t) = weight * (I0 * exp(-(t - start) / P) + bias)

and a concept's importance is the sum of its contributions. Constant
actions (``P = inf``) contribute ``weight * (I0 + bias)`` forever.

Two decay modes are supported. ``exact`` evaluates the closed form at the
current clock. ``incremental`` keeps a running score per concept and on each
step adds the analytic derivative (a forward Euler step with dt = 1) before
adding new contributions at their creation value ``I0 + bias``. Incremental
scores drift slightly below the exact ones, by roughly ``age / (2 P^2)``
relative.
"""

from __future__ import annotations

import copy
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .events import ActionEvent, ActionParamTable, DecayMode, UnknownActionError


@dataclass(frozen=True, slots=True)
class AgingFunction:
    start_step: int
    initial_importance: float
    persistence: float
    bias: float
    weight: float = 1.0

    @property
    def constant(self) -> bool:
        return math.isinf(self.persistence)

    def decaying(self, t: int) -> float:
        """Weighted decaying term at step ``t`` (the part pruning looks at)."""
        if self.constant:
            return self.weight * self.initial_importance
        return self.weight * self.initial_importance * math.exp(
            -(t - self.start_step) / self.persistence
        )

    def value(self, t: int) -> float:
        return self.decaying(t) + self.weight * self.bias

    def derivative(self, t: int) -> float:
        if self.constant:
            return 0.0
        return -self.decaying(t) / self.persistence


@dataclass(slots=True)
class ConceptEntry:
    concept: str
    functions: list[AgingFunction] = field(default_factory=list)
    collapsed_constant: float = 0.0
    last_step: int = -1
    # incremental mode only
    running: float = 0.0

    def exact(self, t: int) -> float:
        return math.fsum(f.value(t) for f in self.functions) + self.collapsed_constant


@dataclass(frozen=True, slots=True)
class SnapshotItem:
    code: str
    importance: float
    raw_importance: float


@dataclass(frozen=True)
class FocusSnapshot:
    """Concepts in focus at one time step, most important first."""

    time_step: int
    items: tuple[SnapshotItem, ...] = ()

    def __iter__(self) -> Iterator[SnapshotItem]:
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)

    def scores(self) -> dict[str, float]:
        return {item.code: item.importance for item in self.items}

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, float]], time_step: int = 0) -> FocusSnapshot:
        """Build a snapshot from (code, score) pairs, keeping their order.

        Pairs with a non-positive score are dropped, as the engine would.
        """
        items = tuple(SnapshotItem(c, float(s), float(s)) for c, s in pairs if s > 0)
        return cls(time_step, items)

    def to_dict(self) -> dict:
        return {
            "t": self.time_step,
            "items": [{"code": i.code, "score": round_sig(i.importance)} for i in self.items],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> FocusSnapshot:
        return cls.from_pairs(
            ((item["code"], item["score"]) for item in data.get("items", [])),
            time_step=int(data.get("t", 0)),
        )


def round_sig(x: float, digits: int = 6) -> float:
    return float(f"{x:.{digits}g}")


class FocusEngine:
    """Live focus model for one user session.

    Single-writer: :meth:`observe`, :meth:`step_incremental` and
    :meth:`prune` mutate the engine in place and return it. Snapshots are
    immutable and safe to share.
    """

    def __init__(self, params: ActionParamTable, *, auto_prune: bool = True) -> None:
        self.params = params
        self.auto_prune = auto_prune
        self.clock = -1
        self.entries: dict[str, ConceptEntry] = {}
        # survives entry removal, so drift stays attributable per concept
        self.pruned_counts: Counter[str] = Counter()

    @property
    def mode(self) -> DecayMode:
        return self.params.decay_mode

    def copy(self) -> FocusEngine:
        return copy.deepcopy(self)

    def _functions_for(self, event: ActionEvent, step: int) -> list[tuple[str, AgingFunction]]:
        p = self.params[event.action_type]
        return [
            (code, AgingFunction(step, p.initial_importance, p.persistence, p.bias, weight))
            for code, weight in event.expanded()
        ]

    def _attach(self, code: str, fn: AgingFunction) -> None:
        entry = self.entries.get(code)
        if entry is None:
            entry = self.entries[code] = ConceptEntry(code)
        entry.functions.append(fn)
        entry.last_step = fn.start_step
        entry.running += fn.value(fn.start_step)

    def observe(self, event: ActionEvent) -> FocusEngine:
        """Advance the clock by one action and record its contributions.

        Raises :class:`UnknownActionError` (leaving the engine untouched) if
        the action type is not configured.
        """
        if self.mode is DecayMode.INCREMENTAL:
            return self.step_incremental(event)
        new = self._functions_for(event, self.clock + 1)
        self.clock += 1
        for code, fn in new:
            self._attach(code, fn)
        if self.auto_prune:
            self.prune()
        return self

    def step_incremental(self, event: ActionEvent | None = None) -> FocusEngine:
        """One Euler step of the running scores, then add ``event``.

        ``event=None`` advances the clock without a new action.
        """
        if self.mode is not DecayMode.INCREMENTAL:
            raise ValueError("step_incremental requires decay_mode=incremental")
        new = self._functions_for(event, self.clock + 1) if event is not None else []
        t = self.clock
        for entry in self.entries.values():
            entry.running += math.fsum(f.derivative(t) for f in entry.functions)
        self.clock += 1
        for code, fn in new:
            self._attach(code, fn)
        if self.auto_prune:
            self.prune()
        return self

    def prune(self) -> FocusEngine:
        """Collapse decayed functions into their constant bias.

        A finite-persistence function whose weighted decaying term has fallen
        below the prune threshold is removed and its ``weight * bias`` is
        added to the concept's collapsed constant. Each removal changes the
        concept's importance by less than the threshold.
        """
        t = self.clock
        threshold = self.params.prune_threshold
        for code in list(self.entries):
            entry = self.entries[code]
            keep = []
            for fn in entry.functions:
                if not fn.constant and fn.decaying(t) < threshold:
                    entry.collapsed_constant += fn.weight * fn.bias
                    self.pruned_counts[code] += 1
                else:
                    keep.append(fn)
            entry.functions = keep
            if not entry.functions and entry.collapsed_constant == 0.0:
                del self.entries[code]
        return self

    def importance(self, concept: str, t: int | None = None) -> float:
        """Closed-form importance of ``concept`` at step ``t`` (default: now).

        Unknown concepts are out of focus and score 0.
        """
        entry = self.entries.get(concept)
        if entry is None:
            return 0.0
        return entry.exact(self.clock if t is None else t)

    def score(self, concept: str) -> float:
        """Current importance under the configured decay mode."""
        entry = self.entries.get(concept)
        if entry is None:
            return 0.0
        if self.mode is DecayMode.INCREMENTAL:
            return entry.running
        return entry.exact(self.clock)

    def scores(self) -> dict[str, float]:
        return {code: self.score(code) for code in self.entries}

    def snapshot(self) -> FocusSnapshot:
        """Positive-scoring concepts ordered by score, then recency, then code."""
        rows = []
        for code, entry in self.entries.items():
            raw = self.score(code)
            if raw > 0:
                rows.append((-raw, -entry.last_step, code, raw))
        rows.sort()
        return FocusSnapshot(
            self.clock, tuple(SnapshotItem(code, raw, raw) for _, _, code, raw in rows)
        )


def replay(params: ActionParamTable, events: Iterable[ActionEvent], **kwargs) -> FocusEngine:
    engine = FocusEngine(params, **kwargs)
    for event in events:
        engine.observe(event)
    return engine


__all__ = [
    "AgingFunction",
    "ConceptEntry",
    "FocusEngine",
    "FocusSnapshot",
    "SnapshotItem",
    "UnknownActionError",
    "replay",
    "round_sig",
]
