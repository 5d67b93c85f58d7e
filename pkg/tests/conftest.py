"""Shared fixtures: small hand corpora and a seeded synthetic collection.

The synthetic collection plants relevance by construction: each topic owns a
group of entities, a query vocabulary, and a disjoint surface vocabulary used
inside tables. Queries and relevant tables share entities and embedding
directions but only weakly share surface terms, while trap tables repeat the
query terms verbatim with the wrong entities. Lexical rankers favour the
traps; semantic features favour the planted relevant tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pytest

from tablerank.corpus import Cell, PageMeta, Table
from tablerank.embeddings import EmbeddingStore
from tablerank.evaluation import Qrels
from tablerank.features import HeadingStats
from tablerank.kb import Entity, KnowledgeBase
from tablerank.lexical import build_entity_index
from tablerank.pipeline import Config, Workspace
from tablerank.textindex import build_table_index


def build_workspace(tables, kb=None, word_store=None, graph_store=None, **config_kwargs):
    """Assemble a Workspace from in-memory objects, bypassing file loading."""
    ws = Workspace(Config(**config_kwargs), tables=tables)
    ws.index = build_table_index(tables)
    ws.kb = kb
    ws.word_store = word_store
    ws.graph_store = graph_store
    if tables:
        ws.heading_stats = HeadingStats.from_tables(tables)
    if kb is not None:
        ws.entity_index = build_entity_index(kb)
    return ws


@dataclass
class Collection:
    tables: list[Table]
    kb: KnowledgeBase
    word_store: EmbeddingStore
    graph_store: EmbeddingStore
    workspace: Workspace
    train_queries: list[tuple[str, str]]
    test_queries: list[tuple[str, str]]
    qrels: Qrels
    train_inputs: list[Table] = field(default_factory=list)
    test_inputs: list[Table] = field(default_factory=list)
    table_qrels: Qrels = field(default_factory=Qrels)


def _topic_entity(t: int, i: int) -> str:
    return f"T{t}_E{i}"


def _make_kb_and_stores(rng, n_topics: int, ents_per_topic: int, dim: int = 12):
    kb = KnowledgeBase()
    word_store = EmbeddingStore(kind="word", dim=dim)
    graph_store = EmbeddingStore(kind="graph", dim=dim)
    for t in range(n_topics):
        axis = np.zeros(dim)
        axis[t] = 1.0
        members = [_topic_entity(t, i) for i in range(ents_per_topic)]
        for i, eid in enumerate(members):
            siblings = [m for m in members if m != eid]
            # sparse cross-topic links keep the graph connected without
            # collapsing the topical structure
            cross = []
            if rng.random() < 0.2:
                t2 = int(rng.integers(0, n_topics))
                cross = [_topic_entity(t2, int(rng.integers(0, ents_per_topic)))]
            kb.add(Entity(
                id=eid,
                fields={
                    "names": (f"topic{t} item {i}",),
                    "categories": (f"topic{t} group",),
                    "attributes": ("synthetic",),
                    "similar_entity_names": tuple(f"topic{t} item {j}" for j in range(2)),
                    "related_entity_names": (f"surface{t}",),
                },
                out_links=frozenset(siblings + cross),
            ))
            graph_store.vectors[eid] = axis + 0.05 * rng.normal(size=dim)
        word_store.vectors[f"topic{t}"] = axis + 0.03 * rng.normal(size=dim)
        word_store.vectors[f"surface{t}"] = axis + 0.03 * rng.normal(size=dim)
    for filler in ("records", "directory", "index", "listing", "collection",
                   "value", "note", "name", "misc", "item"):
        word_store.vectors[filler] = 0.1 * rng.normal(size=dim)
    return kb, word_store, graph_store


def _relevant_table(rng, t: int, r: int, grade: int, ents_per_topic: int,
                    n_rows: int = 12) -> Table:
    # grade 2 tables carry most of the topic's entities, grade 1 only a few;
    # entity rows are interleaved so truncating rows sheds entities gradually
    n_ents = 6 if grade == 2 else 2
    picks = rng.permutation(ents_per_topic)[:n_ents]
    entity_rows = {2 * i: i for i in range(n_ents)}
    # heading vocabulary is shared between topic pairs, so headings alone
    # cannot fully separate topics
    headings = (f"h{t // 2}_name", "detail", "note")
    rows = []
    for j in range(n_rows):
        if j in entity_rows:
            i = int(picks[entity_rows[j]])
            lead = Cell(f"topic{t} item {i}", entity=_topic_entity(t, i))
        else:
            lead = Cell(f"misc {j}")
        # one verbatim query-term occurrence keeps the table lexically
        # reachable without making it the lexical winner
        note = Cell(f"topic{t} note") if j == 0 else Cell("misc")
        rows.append((lead, Cell(f"value {j}"), note))
    return Table(
        id=f"rel-{t}-{r}",
        page_title=f"surface{t} collection {r}",
        section_title=f"surface{t} section",
        caption=f"surface{t} listing",
        headings=headings,
        rows=tuple(rows),
        num_header_rows=1,
        meta=PageMeta(in_links=int(rng.integers(1, 20)),
                      out_links=int(rng.integers(1, 20)),
                      page_views=int(rng.integers(10, 1000)),
                      tables_on_page=int(rng.integers(1, 4))),
    )


def _trap_table(rng, t: int, r: int, n_topics: int, ents_per_topic: int) -> Table:
    # repeats topic t's query vocabulary but holds another topic's entities
    other = (t + 1 + int(rng.integers(0, n_topics - 1))) % n_topics
    picks = rng.permutation(ents_per_topic)[:3]
    rows = []
    for j in range(4):
        if j < 3:
            eid = _topic_entity(other, int(picks[j]))
            rows.append((Cell(f"topic{other} item {int(picks[j])}", entity=eid),
                         Cell(f"topic{t} topic{t}")))
        else:
            rows.append((Cell(f"topic{t}"), Cell(f"topic{t}")))
    return Table(
        id=f"trap-{t}-{r}",
        page_title=f"topic{t} overview",
        section_title=f"topic{t}",
        caption=f"topic{t} topic{t} summary",
        headings=(f"h{t // 2}_name", "remark"),
        rows=tuple(rows),
        num_header_rows=1,
        meta=PageMeta(in_links=2, out_links=2, page_views=50, tables_on_page=1),
    )


def _input_table(rng, t: int, tag: str, n_topics: int, ents_per_topic: int,
                 n_rows: int = 14) -> Table:
    """A query-side table: topical but deliberately imperfect per element.

    Contaminant entities sit in the first row, so truncated prefixes carry a
    worse signal-to-noise ratio than the full table.
    """
    n_ents = 4
    picks = rng.permutation(ents_per_topic)[:n_ents]
    entity_rows = {3 * (i + 1): i for i in range(n_ents)}
    contaminants = [
        _topic_entity((t + 2) % n_topics, int(rng.integers(0, ents_per_topic))),
        _topic_entity((t + 3) % n_topics, int(rng.integers(0, ents_per_topic))),
    ]
    headings = (f"h{t // 2}_name", "detail", "note")
    rows = []
    for j in range(n_rows):
        if j in entity_rows:
            i = int(picks[entity_rows[j]])
            lead = Cell(f"topic{t} item {i}", entity=_topic_entity(t, i))
        elif j == 0:
            lead = Cell("stray", entity=contaminants[0])
        elif j == 1:
            lead = Cell("stray", entity=contaminants[1])
        else:
            lead = Cell(f"misc {j}")
        rows.append((lead, Cell(f"value {j}"), Cell("misc")))
    noise_word = f"surface{(t + 1) % n_topics}" if rng.random() < 0.5 else "records"
    return Table(
        id=f"input-{t}-{tag}",
        page_title="working draft",
        section_title="",
        caption=f"draft {noise_word} listing",
        headings=headings,
        rows=tuple(rows),
        num_header_rows=1,
        meta=PageMeta(),
    )


def make_collection(seed: int, n_topics: int = 5, ents_per_topic: int = 8,
                    rel_per_topic: int = 6, traps_per_topic: int = 2) -> Collection:
    rng = np.random.default_rng(seed)
    kb, word_store, graph_store = _make_kb_and_stores(rng, n_topics, ents_per_topic)

    tables: list[Table] = []
    qrels = Qrels()
    grades: dict[int, list[tuple[str, int]]] = {t: [] for t in range(n_topics)}
    for t in range(n_topics):
        for r in range(rel_per_topic):
            grade = 2 if r < rel_per_topic // 2 else 1
            table = _relevant_table(rng, t, r, grade, ents_per_topic)
            tables.append(table)
            grades[t].append((table.id, grade))
        for r in range(traps_per_topic):
            table = _trap_table(rng, t, r, n_topics, ents_per_topic)
            tables.append(table)
            grades[t].append((table.id, 0))

    train_queries = []
    test_queries = []
    for t in range(n_topics):
        train_queries.append((f"train-{t}-0", f"topic{t} directory"))
        train_queries.append((f"train-{t}-1", f"topic{t} index"))
        test_queries.append((f"test-{t}", f"topic{t} records"))
        for qid in (f"train-{t}-0", f"train-{t}-1", f"test-{t}"):
            for doc_id, grade in grades[t]:
                qrels.set(qid, doc_id, grade)

    train_inputs = []
    test_inputs = []
    table_qrels = Qrels()
    for t in range(n_topics):
        for tag, bucket in (("a", train_inputs), ("b", train_inputs),
                            ("q", test_inputs)):
            table = _input_table(rng, t, tag, n_topics, ents_per_topic)
            bucket.append(table)
            for doc_id, grade in grades[t]:
                table_qrels.set(table.id, doc_id, grade)

    ws = build_workspace(tables, kb=kb, word_store=word_store, graph_store=graph_store)
    return Collection(
        tables=tables, kb=kb, word_store=word_store, graph_store=graph_store,
        workspace=ws, train_queries=train_queries, test_queries=test_queries,
        qrels=qrels, train_inputs=train_inputs, test_inputs=test_inputs,
        table_qrels=table_qrels,
    )


def make_text_corpus(seed: int, n_tables: int = 200, vocab: int = 300) -> list[Table]:
    """Random-text corpus for brute-force ranking oracles."""
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(vocab)]
    entities = [f"E{i}" for i in range(60)]

    def phrase(lo, hi):
        n = int(rng.integers(lo, hi + 1))
        return " ".join(words[int(rng.integers(0, vocab))] for _ in range(n))

    tables = []
    for i in range(n_tables):
        n_cols = int(rng.integers(1, 4))
        n_rows = int(rng.integers(1, 6))
        headings = tuple(phrase(1, 2) for _ in range(n_cols))
        rows = []
        for _ in range(n_rows):
            row = []
            for _ in range(n_cols):
                ent = entities[int(rng.integers(0, len(entities)))] if rng.random() < 0.3 else None
                row.append(Cell(phrase(1, 3), entity=ent))
            rows.append(tuple(row))
        tables.append(Table(
            id=f"d{i:03d}",
            page_title=phrase(1, 4),
            section_title=phrase(0, 2),
            caption=phrase(1, 4),
            headings=headings,
            rows=tuple(rows),
            num_header_rows=1,
            meta=PageMeta(tables_on_page=int(rng.integers(1, 4))),
        ))
    return tables


@pytest.fixture(scope="session")
def collection() -> Collection:
    return make_collection(seed=0)


@pytest.fixture(scope="session")
def text_corpus() -> list[Table]:
    return make_text_corpus(seed=11)
