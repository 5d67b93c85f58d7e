"""Semantic matching: term extraction, vector spaces, fusion, feature assembly.

Queries and tables are reduced to term sets (words or entities), each term is
mapped into one of three spaces (bag of linked entities, word embeddings,
graph embeddings), and set similarity is computed either on centroids (early
fusion) or by aggregating all pairwise cosines (late fusion: max, sum, avg).

Bag-of-entities vectors are sparse binary (a frozenset of linked entity
ids); embedding vectors are dense float64. The late-fusion sum is computed
as avg * (n*m) so the sum/avg identity holds exactly in floating point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .corpus import Table, core_column_entities
from .embeddings import EmbeddingStore, centroid, lookup
from .features import FeatureVector, HeadingStats, table_features
from .kb import KnowledgeBase, entity_vector
from .kernels import pairwise_cosine
from .lexical import retrieve_entities
from .textindex import CATCHALL, Index, tokenize

BAG_OF_ENTITIES = "bag_of_entities"
WORD_EMBEDDINGS = "word_embeddings"
GRAPH_EMBEDDINGS = "graph_embeddings"
SPACES = (BAG_OF_ENTITIES, WORD_EMBEDDINGS, GRAPH_EMBEDDINGS)
_SPACE_LABEL = {
    BAG_OF_ENTITIES: "Entity",
    WORD_EMBEDDINGS: "Word",
    GRAPH_EMBEDDINGS: "Graph",
}
MEASURES = ("Early", "Late-max", "Late-sum", "Late-avg")

ELEMENTS = ("topic", "headings", "entities", "data")
ELEMENT_SPACES = {
    "topic": (BAG_OF_ENTITIES, WORD_EMBEDDINGS, GRAPH_EMBEDDINGS),
    "headings": (WORD_EMBEDDINGS,),
    "entities": (BAG_OF_ENTITIES, GRAPH_EMBEDDINGS),
    "data": (BAG_OF_ENTITIES, WORD_EMBEDDINGS, GRAPH_EMBEDDINGS),
}


@dataclass(frozen=True)
class TermSet:
    """Ordered unique terms with their occurrence counts in the source."""

    kind: str  # "words" or "entities"
    items: tuple[str, ...]
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.kind not in ("words", "entities"):
            raise ValueError(f"unknown term kind {self.kind!r}")
        if len(self.items) != len(set(self.items)):
            raise ValueError("term set items must be unique")
        if len(self.counts) != len(self.items):
            raise ValueError("counts must align with items")

    @classmethod
    def from_tokens(cls, kind: str, tokens: Sequence[str]) -> "TermSet":
        order: dict[str, int] = {}
        for tok in tokens:
            order[tok] = order.get(tok, 0) + 1
        return cls(kind, tuple(order), tuple(order.values()))

    def __len__(self) -> int:
        return len(self.items)


@dataclass
class SemanticContext:
    """Immutable providers needed by extraction and projection."""

    kb: KnowledgeBase
    entity_index: Index
    word_store: EmbeddingStore
    graph_store: EmbeddingStore
    table_index: Index | None = None
    heading_stats: HeadingStats | None = None
    page_groups: Mapping[str, Sequence[Table]] | None = None
    k: int = 10
    normalize_late_sum: bool = False
    _rk_cache: dict[str, tuple[str, ...]] = field(default_factory=dict, repr=False)
    _elem_cache: dict = field(default_factory=dict, repr=False)

    def retrieve(self, text: str) -> tuple[str, ...]:
        hit = self._rk_cache.get(text)
        if hit is None:
            hit = tuple(retrieve_entities(text, self.entity_index, k=self.k))
            self._rk_cache[text] = hit
        return hit


# ---------------------------------------------------------------------------
# Content extraction
# ---------------------------------------------------------------------------


def extract_words(x: str | Table) -> TermSet:
    """Word term set of a query string or a table.

    Table words come from the page title, caption, and headings; counts
    reflect occurrences across those sources before deduplication.
    """
    if isinstance(x, Table):
        tokens = tokenize(x.page_title) + tokenize(x.caption)
        for h in x.headings:
            tokens.extend(tokenize(h))
    else:
        tokens = tokenize(x)
    return TermSet.from_tokens("words", tokens)


def extract_entities_query(query: str, ctx: SemanticContext) -> TermSet:
    """Entities standing in for a keyword query: its top-k retrieved entities."""
    return TermSet.from_tokens("entities", ctx.retrieve(query))


def extract_entities_table(table: Table, ctx: SemanticContext) -> TermSet:
    """Entities of a table: core-column links plus entities retrieved for the
    page title and for the caption, deduplicated in that order."""
    merged = list(core_column_entities(table))
    merged.extend(ctx.retrieve(table.page_title))
    merged.extend(ctx.retrieve(table.caption))
    return TermSet.from_tokens("entities", merged)


def _element_words(table: Table, element: str) -> TermSet:
    if element == "topic":
        tokens = tokenize(table.page_title) + tokenize(table.caption)
    elif element == "headings":
        tokens = [t for h in table.headings for t in tokenize(h)]
    elif element == "data":
        tokens = [t for row in table.rows for c in row for t in tokenize(c.text)]
    else:
        raise ValueError(f"element {element!r} has no word content")
    return TermSet.from_tokens("words", tokens)


def _element_entities(table: Table, element: str, ctx: SemanticContext) -> TermSet:
    if element == "topic":
        merged = list(ctx.retrieve(table.page_title))
        merged.extend(ctx.retrieve(table.caption))
    elif element == "entities":
        return extract_entities_table(table, ctx)
    elif element == "data":
        merged = list(table.body_entities())
    else:
        raise ValueError(f"element {element!r} has no entity content")
    return TermSet.from_tokens("entities", merged)


def element_termset(table: Table, element: str, space: str, ctx: SemanticContext) -> TermSet:
    if element not in ELEMENTS:
        raise ValueError(f"unknown table element {element!r}")
    if space not in ELEMENT_SPACES[element]:
        raise ValueError(f"element {element!r} is not defined in space {space!r}")
    if space == WORD_EMBEDDINGS:
        return _element_words(table, element)
    return _element_entities(table, element, ctx)


# ---------------------------------------------------------------------------
# Projection into semantic spaces
# ---------------------------------------------------------------------------


def project(ts: TermSet, space: str, ctx: SemanticContext) -> tuple[list, list[float]]:
    """Per-term semantic vectors plus aligned term counts; misses dropped.

    Bag-of-entities vectors are frozensets of linked ids (entities unknown to
    the knowledge base are dropped; known isolated entities keep an empty
    set, which behaves as a zero vector). Embedding projections drop
    out-of-vocabulary terms.
    """
    if space == BAG_OF_ENTITIES:
        if ts.kind != "entities":
            raise ValueError("bag-of-entities space requires an entity term set")
        vectors: list = []
        counts: list[float] = []
        for term, count in zip(ts.items, ts.counts):
            if term in ctx.kb:
                vectors.append(entity_vector(term, ctx.kb))
                counts.append(float(count))
        return vectors, counts
    if space == WORD_EMBEDDINGS:
        if ts.kind != "words":
            raise ValueError("word-embedding space requires a word term set")
        store = ctx.word_store
    elif space == GRAPH_EMBEDDINGS:
        if ts.kind != "entities":
            raise ValueError("graph-embedding space requires an entity term set")
        store = ctx.graph_store
    else:
        raise ValueError(f"unknown semantic space {space!r}")
    vectors = []
    counts = []
    for term, count in zip(ts.items, ts.counts):
        vec = lookup(term, store)
        if vec is not None:
            vectors.append(vec)
            counts.append(float(count))
    return vectors, counts


def tfidf_weights(
    terms: Sequence[str], counts: Sequence[float], index: Index | None
) -> list[float] | None:
    """Term-frequency times catchall IDF; None when no index or all zero."""
    if index is None:
        return None
    weights = [c * index.idf(t, CATCHALL) for t, c in zip(terms, counts)]
    if not any(w > 0 for w in weights):
        return None
    return weights


# ---------------------------------------------------------------------------
# Similarity measures
# ---------------------------------------------------------------------------


def _cos_sparse(a: Mapping[str, float] | frozenset, b: Mapping[str, float] | frozenset) -> float:
    if isinstance(a, frozenset) and isinstance(b, frozenset):
        if not a or not b:
            return 0.0
        inter = len(a & b)
        if inter == 0:
            return 0.0
        return inter / float(np.sqrt(len(a) * len(b)))
    da = {k: 1.0 for k in a} if isinstance(a, frozenset) else a
    db = {k: 1.0 for k in b} if isinstance(b, frozenset) else b
    na = float(np.sqrt(sum(v * v for v in da.values())))
    nb = float(np.sqrt(sum(v * v for v in db.values())))
    if na == 0.0 or nb == 0.0:
        return 0.0
    if da == db:
        # cos(x, x) is exactly 1; do not let sqrt round-off leak in
        return 1.0
    small, large = (da, db) if len(da) <= len(db) else (db, da)
    dot = sum(v * large.get(k, 0.0) for k, v in small.items())
    return float(np.clip(dot / (na * nb), -1.0, 1.0))


def _sparse_centroid(vectors: Sequence[frozenset], weights: Sequence[float] | None) -> dict[str, float]:
    acc: dict[str, float] = {}
    if weights is None:
        w_each = 1.0 / len(vectors)
        for vec in vectors:
            for key in vec:
                acc[key] = acc.get(key, 0.0) + w_each
    else:
        for vec, w in zip(vectors, weights):
            for key in vec:
                acc[key] = acc.get(key, 0.0) + w
    return acc


def _is_sparse(vectors: Sequence) -> bool:
    return len(vectors) > 0 and isinstance(vectors[0], frozenset)


def sim_early(
    query_vectors: Sequence,
    table_vectors: Sequence,
    query_weights: Sequence[float] | None = None,
    table_weights: Sequence[float] | None = None,
) -> float:
    """Cosine of the two centroids; 0 when either side is empty.

    Weighted centroids are plain weighted sums (cosine is scale-invariant,
    so no normalization is applied); unweighted centroids are means.
    """
    if len(query_vectors) == 0 or len(table_vectors) == 0:
        return 0.0
    if _is_sparse(query_vectors) or _is_sparse(table_vectors):
        cq = _sparse_centroid(query_vectors, query_weights)
        ct = _sparse_centroid(table_vectors, table_weights)
        return _cos_sparse(cq, ct)
    cq = centroid(query_vectors, query_weights)
    ct = centroid(table_vectors, table_weights)
    nq = float(np.linalg.norm(cq))
    nt = float(np.linalg.norm(ct))
    if nq == 0.0 or nt == 0.0:
        return 0.0
    if np.array_equal(cq, ct):
        # cos(x, x) is exactly 1; do not let sqrt round-off leak in
        return 1.0
    return float(np.clip(float(cq @ ct) / (nq * nt), -1.0, 1.0))


def late_stats(query_vectors: Sequence, table_vectors: Sequence) -> tuple[float, float, float]:
    """(max, sum, avg) over all pairwise cosines; zeros when a side is empty.

    The sum is avg * (n*m) by construction, making the identity
    late_avg * n * m == late_sum exact rather than merely close.
    """
    n = len(query_vectors)
    m = len(table_vectors)
    if n == 0 or m == 0:
        return 0.0, 0.0, 0.0
    if _is_sparse(query_vectors) or _is_sparse(table_vectors):
        best = -np.inf
        total = 0.0
        for q in query_vectors:
            for t in table_vectors:
                c = _cos_sparse(q, t)
                total += c
                if c > best:
                    best = c
        avg = float(np.clip(total / (n * m), -1.0, 1.0))
        return float(best), avg * (n * m), avg
    matrix = pairwise_cosine(
        np.asarray(query_vectors, dtype=np.float64),
        np.asarray(table_vectors, dtype=np.float64),
    )
    best = float(matrix.max())
    avg = float(np.clip(matrix.mean(), -1.0, 1.0))
    return best, avg * (n * m), avg


def sim_late(query_vectors: Sequence, table_vectors: Sequence, aggr: str) -> float:
    """Aggregate pairwise cosines with max, sum, or avg."""
    mx, sm, av = late_stats(query_vectors, table_vectors)
    if aggr == "max":
        return mx
    if aggr == "sum":
        return sm
    if aggr == "avg":
        return av
    raise ValueError(f"unknown aggregator {aggr!r} (expected max, sum or avg)")


def _measure_block(
    label: str,
    query_vectors: Sequence,
    table_vectors: Sequence,
    query_weights: Sequence[float] | None,
    table_weights: Sequence[float] | None,
    normalize_sum: bool,
    prefix: str = "",
) -> list[tuple[str, float]]:
    early = sim_early(query_vectors, table_vectors, query_weights, table_weights)
    mx, sm, av = late_stats(query_vectors, table_vectors)
    if normalize_sum:
        sm = av
    return [
        (f"{prefix}{label}_Early", early),
        (f"{prefix}{label}_Late-max", mx),
        (f"{prefix}{label}_Late-sum", sm),
        (f"{prefix}{label}_Late-avg", av),
    ]


# ---------------------------------------------------------------------------
# Feature assembly
# ---------------------------------------------------------------------------


def str_keyword_features(query: str, table: Table, ctx: SemanticContext) -> FeatureVector:
    """The 12 semantic features for keyword search: 3 spaces x 4 measures.

    Word-space early fusion weights the table centroid by TF-IDF (term count
    times catchall IDF); the query centroid stays unweighted.
    """
    q_words = extract_words(query)
    t_words = extract_words(table)
    q_ents = extract_entities_query(query, ctx)
    t_ents = extract_entities_table(table, ctx)
    pairs: list[tuple[str, float]] = []
    for space in SPACES:
        if space == WORD_EMBEDDINGS:
            qv, _ = project(q_words, space, ctx)
            tv, t_counts = project(t_words, space, ctx)
            kept = [t for t in t_words.items if t in ctx.word_store]
            t_weights = tfidf_weights(kept, t_counts, ctx.table_index)
            q_weights = None
        else:
            qv, _ = project(q_ents, space, ctx)
            tv, _ = project(t_ents, space, ctx)
            q_weights = t_weights = None
        pairs.extend(
            _measure_block(
                _SPACE_LABEL[space], qv, tv, q_weights, t_weights, ctx.normalize_late_sum
            )
        )
    return FeatureVector.from_pairs(pairs)


def str_keyword_ranking_features(
    query: str,
    table: Table,
    ctx: SemanticContext,
    index: Index,
    yrank=None,
) -> FeatureVector:
    """Full keyword ranking vector: 23 baseline features + 12 semantic."""
    from .features import ltr_keyword_features

    page_group = None
    if ctx.page_groups is not None:
        page_group = ctx.page_groups.get(table.page_title)
    base = ltr_keyword_features(
        query, table, index, ctx.heading_stats, page_group, yrank
    )
    return base.concat(str_keyword_features(query, table, ctx))


def _element_projection(table: Table, element: str, space: str, ctx: SemanticContext):
    """Vectors and word-space TF-IDF weights for one table element, cached."""
    key = (id(ctx), table.id, element, space)
    hit = ctx._elem_cache.get(key)
    if hit is not None:
        return hit
    ts = element_termset(table, element, space, ctx)
    vectors, counts = project(ts, space, ctx)
    weights = None
    if space == WORD_EMBEDDINGS:
        kept = [t for t in ts.items if t in ctx.word_store]
        weights = tfidf_weights(kept, counts, ctx.table_index)
    result = (vectors, weights)
    ctx._elem_cache[key] = result
    return result


def _table_feature_block(table: Table, prefix: str, ctx: SemanticContext) -> FeatureVector:
    stats = ctx.heading_stats if ctx.heading_stats is not None else HeadingStats()
    group = None
    if ctx.page_groups is not None:
        group = ctx.page_groups.get(table.page_title)
    base = table_features(table, stats, group)
    return FeatureVector(
        tuple(f"{prefix}{n}" for n in base.schema), base.values
    )


def str_table_features(
    query_table: Table, cand_table: Table, variant: str, ctx: SemanticContext
) -> FeatureVector:
    """Semantic table-matching features.

    t1: 36 element-wise features (same element on both sides).
    t2: t1 plus the 9 table features of each table (54 total).
    t3: 72 cross-element features plus table features (90 total).
    t4: element-wise + cross-element + table features (126 total).
    """
    if variant not in ("t1", "t2", "t3", "t4"):
        raise ValueError(f"unknown variant {variant!r}")
    elementwise: list[tuple[str, float]] = []
    cross: list[tuple[str, float]] = []
    want_elementwise = variant in ("t1", "t2", "t4")
    want_cross = variant in ("t3", "t4")
    for q_elem in ELEMENTS:
        for c_elem in ELEMENTS:
            if q_elem == c_elem and not want_elementwise:
                continue
            if q_elem != c_elem and not want_cross:
                continue
            shared = [
                s
                for s in SPACES
                if s in ELEMENT_SPACES[q_elem] and s in ELEMENT_SPACES[c_elem]
            ]
            for space in shared:
                qv, qw = _element_projection(query_table, q_elem, space, ctx)
                cv, cw = _element_projection(cand_table, c_elem, space, ctx)
                block = _measure_block(
                    _SPACE_LABEL[space],
                    qv,
                    cv,
                    qw,
                    cw,
                    ctx.normalize_late_sum,
                    prefix=f"{q_elem}-{c_elem}_",
                )
                (elementwise if q_elem == c_elem else cross).append(block)
    pairs: list[tuple[str, float]] = []
    for block in elementwise:
        pairs.extend(block)
    for block in cross:
        pairs.extend(block)
    vec = FeatureVector.from_pairs(pairs) if pairs else FeatureVector((), np.zeros(0))
    if variant == "t1":
        return vec
    tables_block = _table_feature_block(query_table, "input_", ctx).concat(
        _table_feature_block(cand_table, "cand_", ctx)
    )
    if len(vec) == 0:
        return tables_block
    return vec.concat(tables_block)
