"""Command line entry point: ``focusmodel {index,replay,search,eval}``.

All errors print exactly one line, ``error: <message>``, on stderr and exit
with a nonzero status.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import nullcontext
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Sequence

from . import evaluation
from .engine import FocusEngine
from .events import EventParseError, UnknownActionError, load_action_config, read_action_log
from .index import (
    annotate,
    build_index,
    ingest_corpus,
    load_index,
    save_index,
    top_concepts,
)
from .ontology import ConceptHierarchy, load_hierarchy
from .query import build_query, parse_query, render_query


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # single-line errors, like every other path
        raise CliError(f"usage: {message}")


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def search_response(query_text: str, results) -> dict:
    return {
        "query": query_text,
        "results": [r.to_dict() for r in results],
        "top_concepts": [{"code": c, "count": n} for c, n in top_concepts(results)],
    }


def cmd_index(corpus: str, lexicon: str | None, out: str, stdout: IO[str]) -> int:
    docs = ingest_corpus(corpus)
    if lexicon:
        docs = annotate(docs, load_hierarchy(lexicon))
    index = build_index(docs)
    save_index(index, out)
    print(_dumps(index.stats()), file=stdout)
    return 0


@dataclass
class ReplayConfig:
    log: Path
    actions_config: Path | None = None
    lexicon: Path | None = None
    index: Path | None = None
    cadence: int = 1
    top_k: int = 100
    out: Path | None = None

    def __post_init__(self) -> None:
        if self.cadence < 1:
            raise CliError("--cadence must be >= 1")
        if self.top_k < 1:
            raise CliError("--top-k must be >= 1")
        if self.index is not None and self.lexicon is None:
            raise CliError("--index requires --lexicon to build queries")


def cmd_replay(config: ReplayConfig, stdout: IO[str]) -> int:
    params = load_action_config(config.actions_config)
    log = read_action_log(config.log)
    hierarchy = load_hierarchy(config.lexicon) if config.lexicon else ConceptHierarchy()
    index = load_index(config.index) if config.index else None
    engine = FocusEngine(params)

    n = len(log.events)
    sink = open(config.out, "w", encoding="utf-8") if config.out else nullcontext(stdout)
    with sink as fh:
        for i, (event, lineno) in enumerate(zip(log.events, log.lines), start=1):
            try:
                engine.observe(event)
            except UnknownActionError as exc:
                raise CliError(f"line {lineno}: {exc}") from None
            if i % config.cadence and i != n:
                continue
            snapshot = engine.snapshot()
            record: dict = {"action": i, "snapshot": snapshot.to_dict()}
            if index is not None:
                query = build_query(snapshot, hierarchy)
                text = render_query(query)
                record.update(search_response(text, index.search(query, config.top_k)))
            fh.write(_dumps(record) + "\n")
    return 0


def cmd_search(index_path: str, query_text: str, k: int, stdout: IO[str]) -> int:
    query = parse_query(query_text)
    index = load_index(index_path)
    results = index.search(query, k)
    print(_dumps(search_response(query_text, results)), file=stdout)
    return 0


def cmd_eval(
    reports: str, snapshots: str, lexicon: str, mapping: str | None, stdout: IO[str]
) -> int:
    rep = evaluation.read_self_reports(reports)
    if not rep:
        raise CliError("nothing to evaluate")
    snaps = evaluation.read_snapshots(snapshots)
    hierarchy = load_hierarchy(lexicon)
    manual = evaluation.load_mapping(mapping) if mapping else None
    pauses = evaluation.align_pauses(rep, snaps)
    report = evaluation.evaluate_session(pauses, hierarchy, manual)
    print(json.dumps(report, indent=2), file=stdout)
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="focusmodel", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("index", help="build and persist a corpus index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon", help="lexicon for index-time concept mentions")
    p.add_argument("--out", required=True)

    p = sub.add_parser("replay", help="replay an action log through the focus engine")
    p.add_argument("--log", required=True, type=Path)
    p.add_argument("--actions-config", type=Path, help="defaults to the bundled table")
    p.add_argument("--lexicon", type=Path)
    p.add_argument("--index", type=Path)
    p.add_argument("--cadence", type=int, default=1)
    p.add_argument("--top-k", type=int, default=100)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("search", help="run a field:term^boost query")
    p.add_argument("--index", required=True)
    p.add_argument("query")
    p.add_argument("--top-k", type=int, default=100)

    p = sub.add_parser("eval", help="score self-reports against snapshots")
    p.add_argument("--reports", required=True)
    p.add_argument("--snapshots", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--mapping")
    return parser


def main(argv: Sequence[str] | None = None, stdout: IO[str] | None = None) -> int:
    stdout = stdout or sys.stdout
    try:
        args = make_parser().parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        if args.command == "index":
            return cmd_index(args.corpus, args.lexicon, args.out, stdout)
        if args.command == "replay":
            config = ReplayConfig(
                args.log, args.actions_config, args.lexicon, args.index,
                args.cadence, args.top_k, args.out,
            )
            return cmd_replay(config, stdout)
        if args.command == "search":
            if args.top_k < 1:
                raise CliError("--top-k must be >= 1")
            return cmd_search(args.index, args.query, args.top_k, stdout)
        return cmd_eval(args.reports, args.snapshots, args.lexicon, args.mapping, stdout)
    except (CliError, EventParseError, UnknownActionError, OSError, ValueError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
