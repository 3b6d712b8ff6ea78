"""Analytic focus modeling from semantic interaction events, with focus-driven retrieval."""

from .engine import AgingFunction, FocusEngine, FocusSnapshot, SnapshotItem
from .events import (
    ActionCategory,
    ActionEvent,
    ActionParamTable,
    ActionParams,
    DecayMode,
    TimedActionConcept,
    assign_time_steps,
    default_action_table,
    load_action_config,
    parse_action_event,
)
from .index import Index, build_index, ingest_corpus, load_index, save_index
from .ontology import Concept, ConceptHierarchy, load_hierarchy, normalize_terms
from .query import WeightedQuery, WeightedTerm, build_query, parse_query, render_query

__version__ = "0.1.0"
