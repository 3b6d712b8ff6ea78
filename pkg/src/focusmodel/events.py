"""Semantic action events, the per-action parameter table, and time steps.

Hosts report one :class:`ActionEvent` per semantic action (a selection, a
filter, a query). The model clock is the action sequence number, so the
first event is step 0 and every further event advances the clock by one no
matter how many concepts it carries.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Mapping


class ConfigError(ValueError):
    """Raised for an invalid action configuration file."""


class EventParseError(ValueError):
    """Raised for a malformed action log line."""


class UnknownActionError(KeyError):
    """Raised when an event names an action type missing from the table."""

    def __str__(self) -> str:
        return f"unknown action type {self.args[0]!r}"


class ActionCategory(str, Enum):
    PERSISTENT = "P"
    TRANSIENT = "T"


class DecayMode(str, Enum):
    EXACT = "exact"
    INCREMENTAL = "incremental"


@dataclass(frozen=True)
class ActionParams:
    """Tuning constants for one action type.

    ``persistence`` is ``math.inf`` for constant actions; those never decay
    and are the only ones allowed a negative ``initial_importance``.
    """

    action_type: str
    category: ActionCategory
    initial_importance: float
    persistence: float
    bias: float

    def __post_init__(self) -> None:
        if not self.persistence > 0:
            raise ConfigError(
                f"{self.action_type}: persistence must be positive or inf"
            )
        if self.initial_importance < 0 and not math.isinf(self.persistence):
            raise ConfigError(
                f"{self.action_type}: negative importance requires infinite persistence"
            )

    @property
    def constant(self) -> bool:
        return math.isinf(self.persistence)


@dataclass(frozen=True)
class ActionParamTable:
    actions: Mapping[str, ActionParams]
    prune_threshold: float = 0.1
    decay_mode: DecayMode = DecayMode.EXACT

    def __post_init__(self) -> None:
        if not self.prune_threshold > 0:
            raise ConfigError("prune_threshold must be positive")

    def __getitem__(self, action_type: str) -> ActionParams:
        try:
            return self.actions[action_type]
        except KeyError:
            raise UnknownActionError(action_type) from None

    def __contains__(self, action_type: object) -> bool:
        return action_type in self.actions

    def with_mode(self, mode: DecayMode | str) -> ActionParamTable:
        return ActionParamTable(dict(self.actions), self.prune_threshold, DecayMode(mode))


_ACTION_FIELDS = {"type", "category", "i0", "p", "b"}
_CONFIG_FIELDS = {"actions", "prune_threshold", "decay_mode"}


def _parse_persistence(value: object, action_type: str) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "+inf", "infinity"):
            return math.inf
        raise ConfigError(f"{action_type}: persistence must be a number or 'inf'")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{action_type}: persistence must be a number or 'inf'")
    return float(value)


def parse_action_config(data: Mapping) -> ActionParamTable:
    """Validate an already-decoded action config object."""
    if not isinstance(data, Mapping):
        raise ConfigError("action config must be a JSON object")
    extra = set(data) - _CONFIG_FIELDS
    if extra:
        raise ConfigError(f"unknown config fields: {sorted(extra)}")
    if "actions" not in data:
        raise ConfigError("missing 'actions'")

    actions: dict[str, ActionParams] = {}
    for row in data["actions"]:
        if not isinstance(row, Mapping):
            raise ConfigError("each action entry must be an object")
        extra = set(row) - _ACTION_FIELDS
        if extra:
            raise ConfigError(f"unknown action fields: {sorted(extra)}")
        missing = _ACTION_FIELDS - set(row)
        if missing:
            raise ConfigError(f"action entry missing fields: {sorted(missing)}")
        name = row["type"]
        if name in actions:
            raise ConfigError(f"duplicate action type {name!r}")
        try:
            category = ActionCategory(row["category"])
        except ValueError:
            raise ConfigError(f"{name}: category must be 'P' or 'T'") from None
        actions[name] = ActionParams(
            action_type=name,
            category=category,
            initial_importance=float(row["i0"]),
            persistence=_parse_persistence(row["p"], name),
            bias=float(row["b"]),
        )

    try:
        mode = DecayMode(data.get("decay_mode", "exact"))
    except ValueError:
        raise ConfigError("decay_mode must be 'exact' or 'incremental'") from None
    return ActionParamTable(
        actions=actions,
        prune_threshold=float(data.get("prune_threshold", 0.1)),
        decay_mode=mode,
    )


def load_action_config(path: str | Path | None = None) -> ActionParamTable:
    """Load an action config file; ``None`` loads the bundled defaults."""
    if path is None:
        text = resources.files("focusmodel").joinpath("data/default_actions.json").read_text()
    else:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"action config not found: {path}")
        text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"action config is not valid JSON: {exc}") from None
    return parse_action_config(data)


def default_action_table() -> ActionParamTable:
    return load_action_config(None)


@dataclass(frozen=True)
class RelatedConcept:
    code: str
    weight: float

    def __post_init__(self) -> None:
        if not 0 < self.weight <= 1:
            raise EventParseError(f"related weight for {self.code!r} must be in (0, 1]")


@dataclass(frozen=True)
class ActionEvent:
    """One semantic action: a type plus the concepts it operates on.

    ``related`` carries concepts adjacent to the action on the host
    interface, each with a weight that scales its contribution.
    ``wall_time`` is kept for provenance and is never read by the model.
    """

    action_type: str
    concepts: tuple[str, ...]
    related: tuple[RelatedConcept, ...] = ()
    wall_time: str | None = None

    def __post_init__(self) -> None:
        if not self.concepts:
            raise EventParseError("event must carry at least one concept")

    def expanded(self) -> Iterator[tuple[str, float]]:
        """(concept, weight) pairs: direct concepts at weight 1, then related."""
        for code in self.concepts:
            yield code, 1.0
        for rel in self.related:
            yield rel.code, rel.weight

    def to_dict(self) -> dict:
        out: dict = {"action": self.action_type, "concepts": list(self.concepts)}
        if self.related:
            out["related"] = [{"code": r.code, "weight": r.weight} for r in self.related]
        if self.wall_time is not None:
            out["wall_time"] = self.wall_time
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


_EVENT_FIELDS = {"action", "concepts", "related", "wall_time"}


def parse_action_event(line: str) -> ActionEvent:
    """Parse one JSON Lines record of the action log."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise EventParseError(f"malformed JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise EventParseError("event must be a JSON object")
    extra = set(obj) - _EVENT_FIELDS
    if extra:
        raise EventParseError(f"unknown event fields: {sorted(extra)}")

    action = obj.get("action")
    if not isinstance(action, str) or not action:
        raise EventParseError("'action' must be a non-empty string")
    concepts = obj.get("concepts")
    if not isinstance(concepts, list) or not all(isinstance(c, str) for c in concepts):
        raise EventParseError("'concepts' must be an array of strings")

    related = []
    for item in obj.get("related") or []:
        if not isinstance(item, dict) or not isinstance(item.get("code"), str):
            raise EventParseError("related entries need a string 'code'")
        weight = item.get("weight", 1.0)
        if isinstance(weight, bool) or not isinstance(weight, (int, float)):
            raise EventParseError("related 'weight' must be a number")
        related.append(RelatedConcept(item["code"], float(weight)))

    wall_time = obj.get("wall_time")
    if wall_time is not None and not isinstance(wall_time, str):
        raise EventParseError("'wall_time' must be a string")
    return ActionEvent(action, tuple(concepts), tuple(related), wall_time)


@dataclass(frozen=True)
class TimedActionConcept:
    action_type: str
    time_step: int
    concept: str
    weight: float = 1.0


def assign_time_steps(events: Iterable[ActionEvent]) -> list[TimedActionConcept]:
    """Flatten events into (action, step, concept, weight) triples.

    All triples from one event share its step; steps count events from 0.
    """
    return [
        TimedActionConcept(event.action_type, step, code, weight)
        for step, event in enumerate(events)
        for code, weight in event.expanded()
    ]


@dataclass
class ActionLog:
    """Events read from a JSON Lines file, with their source line numbers."""

    events: list[ActionEvent] = field(default_factory=list)
    lines: list[int] = field(default_factory=list)


def read_action_log(path: str | Path) -> ActionLog:
    log = ActionLog()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                log.events.append(parse_action_event(line))
            except EventParseError as exc:
                raise EventParseError(f"line {lineno}: {exc}") from None
            log.lines.append(lineno)
    return log
