"""Acceptance criteria, one test each, with pinned tolerances and time limits.

Each test prints a ``PASS``/``FAIL`` line for its criterion even when output
capture is on. Run alone with ``pytest tests/test_acceptance.py``.
"""

import io
import json
import math
import random
import time
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from focusmodel.cli import main
from focusmodel.engine import FocusEngine, FocusSnapshot
from focusmodel.evaluation import (
    MappingSet,
    SelfReport,
    align_pauses,
    build_lists,
    evaluate_pause,
    evaluate_session,
    read_self_reports,
    read_snapshots,
    score_user_concepts,
    standardize,
)
from focusmodel.events import ActionEvent, DecayMode
from focusmodel.index import Document, annotate, build_index
from focusmodel.query import WeightedQuery, WeightedTerm, build_query, render_query

from histories import ALL_ACTIONS, SLOW_ACTIONS, random_history, triples_of
from oracles import TABLE1, BruteForceBM25, closed_form_series
from synthetic import synthetic_corpus, synthetic_lexicon, synthetic_queries

GOLDEN = (
    "title:reaction^7.3 abstract:reaction^7.3 title:severe^7.3 abstract:severe^7.3 "
    "title:stress^7.3 abstract:stress^7.3 title:accident^4.5 abstract:accident^4.5 "
    "title:injury^2.5 abstract:injury^2.5"
)

DECAY_TOL = 1e-9
INCREMENTAL_REL_TOL = 0.05
PRUNE_THRESHOLD = 0.1
BM25_TOL = 1e-9
P95_LIMIT_S = 0.100
BUILD_LIMIT_S = 30.0


@pytest.fixture
def criterion(capsys):
    @contextmanager
    def run(name, limit_s=None):
        start = time.perf_counter()
        line = f"FAIL  {name}"
        try:
            yield
            elapsed = time.perf_counter() - start
            if limit_s is not None:
                assert elapsed < limit_s, f"took {elapsed:.1f}s, limit {limit_s}s"
            line = f"PASS  {name}  [{elapsed:.2f}s]"
        except BaseException as exc:
            line = f"FAIL  {name}  ({type(exc).__name__}: {' '.join(str(exc).split())[:160]})"
            raise
        finally:
            with capsys.disabled():
                print(f"\n[acceptance] {line}")

    return run


def test_golden_query_translation(criterion, lexicon):
    with criterion("golden query translation (exact string)", limit_s=1.0):
        snapshot = FocusSnapshot.from_pairs([("F43", 7.3), ("V00-X59", 4.5), ("S00-T14", 2.5)])
        assert render_query(build_query(snapshot, lexicon)) == GOLDEN


def test_decay_correctness(criterion, table):
    with criterion("decay correctness: 1000 histories vs closed form, 1e-9", limit_s=30.0):
        rng = random.Random(20200401)
        worst = 0.0
        for _ in range(1000):
            events = random_history(rng, rng.randint(1, 200))
            series = closed_form_series(triples_of(events), len(events) - 1)
            engine = FocusEngine(table, auto_prune=False)
            for step, event in enumerate(events):
                engine.observe(event)
                for code in engine.entries:
                    worst = max(worst, abs(engine.importance(code) - series[code][step]))
        assert worst <= DECAY_TOL, worst


def _magnitude(entry, t):
    return math.fsum(abs(f.value(t)) for f in entry.functions) + abs(entry.collapsed_constant)


def test_incremental_bound(criterion, table):
    with criterion("incremental mode: P >= 50, <= 100 steps, relative deviation <= 5%", limit_s=30.0):
        assert all(TABLE1[a][1] >= 50 for a in SLOW_ACTIONS)
        inc_table = table.with_mode(DecayMode.INCREMENTAL)
        positive_only = [a for a in SLOW_ACTIONS if TABLE1[a][0] > 0]
        rng = random.Random(7)
        worst = worst_strict = 0.0
        for h in range(500):
            # every other history has no negative constants, where the
            # magnitude-normalized and |exact|-normalized deviations coincide
            actions = SLOW_ACTIONS if h % 2 else positive_only
            events = random_history(rng, rng.randint(1, 100), actions)
            exact = FocusEngine(table, auto_prune=False)
            inc = FocusEngine(inc_table, auto_prune=False)
            for event in events:
                exact.observe(event)
                inc.observe(event)
                for code, entry in exact.entries.items():
                    dev = abs(inc.score(code) - exact.importance(code))
                    worst = max(worst, dev / _magnitude(entry, exact.clock))
                    if actions is positive_only:
                        worst_strict = max(worst_strict, dev / abs(exact.importance(code)))
        assert worst <= INCREMENTAL_REL_TOL, worst
        assert worst_strict <= INCREMENTAL_REL_TOL, worst_strict


def test_pruning_bound(criterion, table):
    with criterion("pruning drift <= l * pruned count, 500 histories", limit_s=30.0):
        assert table.prune_threshold == PRUNE_THRESHOLD
        rng = random.Random(99)
        total_pruned = 0
        for _ in range(500):
            events = random_history(rng, rng.randint(1, 200), ALL_ACTIONS)
            pruned = FocusEngine(table)
            full = FocusEngine(table, auto_prune=False)
            for event in events:
                pruned.observe(event)
                full.observe(event)
                for code in full.entries:
                    drift = abs(pruned.importance(code) - full.importance(code))
                    assert drift <= PRUNE_THRESHOLD * pruned.pruned_counts[code] + 1e-12, (code, drift)
            total_pruned += sum(pruned.pruned_counts.values())
        assert total_pruned > 0


def _random_corpus(rng):
    vocab = [f"t{i}" for i in range(rng.randint(5, 200))]
    n_docs = rng.randint(1, 100)

    def text(lo, hi):
        return " ".join(rng.choice(vocab) for _ in range(rng.randint(lo, hi)))

    return vocab, [Document(f"doc{i:03d}", text(0, 12), text(0, 60)) for i in range(n_docs)]


def _random_query(rng, vocab):
    return WeightedQuery(
        tuple(
            WeightedTerm(
                rng.choice(("title", "abstract")),
                rng.choice(vocab) if rng.random() < 0.9 else "absentterm",
                rng.choice((1.0, 2.5, rng.uniform(0.01, 20.0))),
            )
            for _ in range(rng.randint(1, 20))
        )
    )


def test_bm25_oracle_equivalence(criterion):
    with criterion("BM25: 50 corpora x 200 queries vs brute force, 1e-9", limit_s=60.0):
        rng = random.Random(5)
        for _ in range(50):
            vocab, docs = _random_corpus(rng)
            index = build_index(docs)
            oracle = BruteForceBM25([(d.id, d.title, d.abstract) for d in docs])
            for _ in range(200):
                q = _random_query(rng, vocab)
                got = index.search(q, k=len(docs))
                want = oracle.search([(t.field, t.term, t.boost) for t in q])
                assert [r.doc_id for r in got] == [w[0] for w in want]
                assert all(abs(r.score - w[1]) <= BM25_TOL for r, w in zip(got, want))


def test_metric_fixtures(criterion, fixtures, lexicon):
    with criterion("metric fixtures: exact rationals and worked examples"):
        reports = read_self_reports(fixtures / "session_reports.jsonl")
        snaps = read_snapshots(fixtures / "session_snapshots.jsonl")
        out = evaluate_session(align_pauses(reports, snaps), lexicon)
        ref = json.loads((fixtures / "session_reference.json").read_text())
        for got, want in zip(out["pauses"], ref["pauses"], strict=True):
            assert Fraction(got["recall_exact"]) == Fraction(want["recall_exact"])
            assert Fraction(got["jaccard_distance_exact"]) == Fraction(want["jaccard_distance_exact"])
            assert got["edit_distance"] == want["edit_distance"]
            assert got["L_u"] == want["L_u"] and got["L_v"] == want["L_v"]
        for phase, metrics in ref["aggregates"].items():
            for metric, values in metrics.items():
                for key, value in values.items():
                    assert Fraction(out["aggregates"][phase][metric][key]) == Fraction(value)

        def snap(*pairs):
            return FocusSnapshot.from_pairs(pairs)

        def mapped(text, s):
            return standardize(SelfReport(1, "before", (text,)), lexicon, s)[text]

        assert mapped("lead ECG", snap(("268400002", 1.0))) == {"268400002"}
        assert mapped("long term drug use", snap(("Z79.82", 1.0), ("Z79.84", 0.5), ("Z79.8", 0.5))) == {
            "Z79.8", "Z79.82", "Z79.84"
        }
        assert mapped("eye injury", snap(("S00-T14", 2.5))) == frozenset()

        abc = snap(("A", 5), ("B", 3), ("C", 1))
        users = score_user_concepts(MappingSet({"a": frozenset("A"), "c": frozenset("C")}), abc)
        assert build_lists(users, abc)[1] == [frozenset("A"), frozenset("B"), frozenset("C")]
        users = score_user_concepts(MappingSet({"a": frozenset("A")}), abc)
        assert build_lists(users, abc)[1] == [frozenset("A")]

        result = evaluate_pause(SelfReport(1, "before", ("physical pain", "stress")), snap(("F43", 7.3)), lexicon)
        assert result.recall == Fraction(1, 2)


def _random_log(path, lexicon, n=200, seed=11):
    rng = random.Random(seed)
    codes = sorted(lexicon.concepts)
    with open(path, "w") as fh:
        for _ in range(n):
            ev = ActionEvent(rng.choice(ALL_ACTIONS), tuple(rng.sample(codes, rng.randint(1, 3))))
            fh.write(ev.to_json() + "\n")


def test_determinism(criterion, fixtures, lexicon, tmp_path):
    with criterion("determinism: two replays are byte-identical"):
        log = tmp_path / "log.jsonl"
        _random_log(log, lexicon)
        idx = tmp_path / "fixture.idx"
        assert main(["index", "--corpus", str(fixtures / "corpus.jsonl"), "--lexicon",
                     str(fixtures / "lexicon.jsonl"), "--out", str(idx)], stdout=io.StringIO()) == 0
        outputs = []
        for run in range(2):
            out = tmp_path / f"replay{run}.jsonl"
            assert main(["replay", "--log", str(log), "--lexicon", str(fixtures / "lexicon.jsonl"),
                         "--index", str(idx), "--out", str(out)]) == 0
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]
        assert len(outputs[0].splitlines()) == 200


def test_performance(criterion):
    with criterion("performance: 10k docs, build < 30 s, p95 of 20-term queries < 100 ms"):
        docs, vocab, weights = synthetic_corpus(10_000)
        lexicon = synthetic_lexicon(vocab)
        start = time.perf_counter()
        index = build_index(annotate(docs, lexicon))
        build_s = time.perf_counter() - start
        assert build_s < BUILD_LIMIT_S, build_s

        queries = synthetic_queries(vocab, weights, n=200, terms=20)
        assert all(len(q) == 20 for q in queries)
        latencies = []
        for q in queries:
            t0 = time.perf_counter()
            index.search(q, k=100)
            latencies.append(time.perf_counter() - t0)
        p95 = float(np.percentile(latencies, 95))
        assert p95 < P95_LIMIT_S, p95


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
