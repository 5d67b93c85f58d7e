"""Feature blocks for learning to rank: query, table, and query-table features.

Heading co-occurrence statistics (single and pair table counts over a corpus)
back the PMI-based schema coherency score and the schema-complement benefit
ratios. All feature functions are pure given their providers.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .corpus import Table
from .textindex import Index, tokenize

_WS_RE = re.compile(r"\s+")


def normalize_heading(h: str) -> str:
    """Lowercase, trim, and collapse internal whitespace."""
    return _WS_RE.sub(" ", h.strip().lower())


def heading_set(table: Table) -> tuple[str, ...]:
    """Unique normalized headings in left-to-right order; blanks dropped."""
    seen: dict[str, None] = {}
    for h in table.headings:
        norm = normalize_heading(h)
        if norm and norm not in seen:
            seen[norm] = None
    return tuple(seen)


@dataclass
class HeadingStats:
    """Per-heading and per-pair table counts over a table corpus."""

    single: dict[str, int] = field(default_factory=dict)
    pair: dict[tuple[str, str], int] = field(default_factory=dict)
    total_tables: int = 0

    @staticmethod
    def _key(a: str, b: str) -> tuple[str, str]:
        return (a, b) if a <= b else (b, a)

    def count(self, h: str) -> int:
        return self.single.get(normalize_heading(h), 0)

    def pair_count(self, a: str, b: str) -> int:
        a = normalize_heading(a)
        b = normalize_heading(b)
        if a == b:
            # a heading trivially co-occurs with itself in every table it is in
            return self.single.get(a, 0)
        return self.pair.get(self._key(a, b), 0)

    @classmethod
    def from_tables(cls, tables: Iterable[Table]) -> "HeadingStats":
        stats = cls()
        for table in tables:
            stats.total_tables += 1
            hs = heading_set(table)
            for h in hs:
                stats.single[h] = stats.single.get(h, 0) + 1
            for i in range(len(hs)):
                for j in range(i + 1, len(hs)):
                    key = cls._key(hs[i], hs[j])
                    stats.pair[key] = stats.pair.get(key, 0) + 1
        return stats

    def dump(self, sink: IO[str]) -> None:
        sink.write(f"__total_tables__\t{self.total_tables}\n")
        for h in sorted(self.single):
            sink.write(f"{h}\t{self.single[h]}\n")
        for (a, b) in sorted(self.pair):
            sink.write(f"{a}\t{b}\t{self.pair[(a, b)]}\n")

    @classmethod
    def parse(cls, lines: Iterable[str] | IO[str]) -> "HeadingStats":
        stats = cls()
        for line_no, line in enumerate(lines, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) == 2:
                key, value = parts
                if key == "__total_tables__":
                    stats.total_tables = int(value)
                else:
                    stats.single[key] = int(value)
            elif len(parts) == 3:
                a, b, count = parts
                stats.pair[cls._key(a, b)] = int(count)
            else:
                raise ValueError(f"heading stats line {line_no}: {len(parts)} fields")
        return stats


def pmi(h1: str, h2: str, stats: HeadingStats) -> float:
    """Pointwise mutual information of two headings' table occurrence.

    log(P(h1,h2) / (P(h1) P(h2))) with probabilities as table-count fractions;
    0 whenever any count involved is zero, so absent evidence stays neutral.
    """
    c1 = stats.count(h1)
    c2 = stats.count(h2)
    c12 = stats.pair_count(h1, h2)
    if c1 == 0 or c2 == 0 or c12 == 0 or stats.total_tables == 0:
        return 0.0
    return math.log(stats.total_tables * c12 / (c1 * c2))


def table_pmi(table: Table, stats: HeadingStats) -> float:
    """Mean PMI over all unordered heading pairs; 0 with fewer than 2 headings."""
    hs = heading_set(table)
    if len(hs) < 2:
        return 0.0
    total = 0.0
    pairs = 0
    for i in range(len(hs)):
        for j in range(i + 1, len(hs)):
            total += pmi(hs[i], hs[j], stats)
            pairs += 1
    return total / pairs


@dataclass(frozen=True)
class FeatureVector:
    """Named real-valued features in a fixed order."""

    schema: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if len(self.schema) != values.shape[0]:
            raise ValueError("schema and values length mismatch")
        if not np.all(np.isfinite(values)):
            raise ValueError("feature values must be finite")

    @classmethod
    def from_pairs(cls, pairs: Mapping[str, float] | Sequence[tuple[str, float]]) -> "FeatureVector":
        items = list(pairs.items()) if isinstance(pairs, Mapping) else list(pairs)
        return cls(tuple(n for n, _ in items), np.array([v for _, v in items], dtype=np.float64))

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.schema, self.values)}

    def concat(self, other: "FeatureVector") -> "FeatureVector":
        overlap = set(self.schema) & set(other.schema)
        if overlap:
            raise ValueError(f"duplicate feature names: {sorted(overlap)}")
        return FeatureVector(
            self.schema + other.schema, np.concatenate([self.values, other.values])
        )

    def project(self, names: Sequence[str]) -> "FeatureVector":
        positions = {n: i for i, n in enumerate(self.schema)}
        missing = [n for n in names if n not in positions]
        if missing:
            raise ValueError(f"unknown feature names: {missing}")
        idx = [positions[n] for n in names]
        return FeatureVector(tuple(names), self.values[idx])

    def __len__(self) -> int:
        return len(self.schema)


class YRankProvider:
    """Offline cache of external search ranks for (query, table page) pairs.

    File lines are "query<TAB>table_id<TAB>rank". Unknown pairs report -1 so
    the feature stays defined without any live lookup.
    """

    def __init__(self, ranks: Mapping[tuple[str, str], int] | None = None):
        self._ranks: dict[tuple[str, str], int] = dict(ranks or {})

    @classmethod
    def parse(cls, lines: Iterable[str] | IO[str]) -> "YRankProvider":
        ranks: dict[tuple[str, str], int] = {}
        for line_no, line in enumerate(lines, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"rank cache line {line_no}: expected 3 fields")
            ranks[(parts[0], parts[1])] = int(parts[2])
        return cls(ranks)

    def get(self, query: str, table_id: str) -> int:
        return self._ranks.get((query, table_id), -1)


QUERY_FEATURE_NAMES = (
    "query_len",
    "idf_page_title",
    "idf_section_title",
    "idf_caption",
    "idf_headings",
    "idf_body",
    "idf_catchall",
)

TABLE_FEATURE_NAMES = (
    "n_rows",
    "n_cols",
    "n_empty_cells",
    "heading_pmi",
    "page_in_links",
    "page_out_links",
    "page_views",
    "table_importance",
    "table_page_fraction",
)

QUERY_TABLE_FEATURE_NAMES = (
    "hits_leftmost_col",
    "hits_second_col",
    "hits_body",
    "query_in_page_title",
    "query_in_caption",
    "page_search_rank",
    "mlm_score",
)


def query_features(query_tokens: Sequence[str], index: Index) -> FeatureVector:
    """Query length plus per-field summed IDF of the query tokens."""
    idf_fields = ("page_title", "section_title", "caption", "headings", "body", "catchall")
    values = [float(len(query_tokens))]
    for field_name in idf_fields:
        values.append(sum(index.idf(t, field_name) for t in query_tokens))
    return FeatureVector(QUERY_FEATURE_NAMES, np.array(values, dtype=np.float64))


def page_fraction(table: Table, page_group: Sequence[Table] | None = None) -> tuple[float, bool]:
    """Table-to-page size ratio and whether it is metadata-exact.

    Prefers the page character length supplied in metadata. Otherwise divides
    by the summed length of the page's tables when the group is supplied, and
    as a last resort assumes equally sized tables (1 / tables_on_page).
    """
    own = table.char_len()
    meta_len = table.meta.page_char_len
    if meta_len is not None and meta_len > 0:
        return min(own / meta_len, 1.0), True
    if page_group:
        total = sum(t.char_len() for t in page_group)
        if table.id not in {t.id for t in page_group}:
            total += own
        if total > 0:
            return own / total, False
    return 1.0 / table.meta.tables_on_page, False


def group_tables_by_page(tables: Iterable[Table]) -> dict[str, list[Table]]:
    groups: dict[str, list[Table]] = {}
    for t in tables:
        groups.setdefault(t.page_title, []).append(t)
    return groups


def table_features(
    table: Table,
    stats: HeadingStats | None = None,
    page_group: Sequence[Table] | None = None,
) -> FeatureVector:
    """The nine query-independent table features."""
    if stats is None:
        stats = HeadingStats()
    n_empty = sum(1 for row in table.rows for c in row if not c.text.strip())
    fraction, _ = page_fraction(table, page_group)
    values = np.array(
        [
            float(table.n_rows),
            float(table.n_cols),
            float(n_empty),
            table_pmi(table, stats),
            float(table.meta.in_links),
            float(table.meta.out_links),
            float(table.meta.page_views),
            1.0 / table.meta.tables_on_page,
            fraction,
        ],
        dtype=np.float64,
    )
    return FeatureVector(TABLE_FEATURE_NAMES, values)


def _column_hits(query_terms: set[str], table: Table, j: int) -> float:
    if j >= table.n_cols or not table.rows:
        return 0.0
    hits = 0
    for cell in table.column(j):
        for tok in tokenize(cell.text):
            if tok in query_terms:
                hits += 1
    return float(hits)


def _containment(query_terms: set[str], text_tokens: Sequence[str]) -> float:
    if not query_terms:
        return 0.0
    present = query_terms & set(text_tokens)
    return len(present) / len(query_terms)


def query_table_features(
    query: str,
    table: Table,
    index: Index,
    mlm_cfg=None,
    yrank: YRankProvider | None = None,
) -> FeatureVector:
    """The seven query-dependent table features.

    Column hit counts sum term frequencies of the distinct query tokens in
    the leftmost and second-left columns and the whole body. The external
    page rank comes from the offline provider (-1 when unknown). The MLM
    score defaults to uniform weights over the five textual fields.
    """
    from .lexical import score_mlm, uniform_config

    q_tokens = tokenize(query)
    q_terms = set(q_tokens)
    body_tokens = [t for row in table.rows for c in row for t in tokenize(c.text)]
    body_hits = float(sum(1 for t in body_tokens if t in q_terms))
    if mlm_cfg is None:
        mlm_cfg = uniform_config(
            ("page_title", "section_title", "caption", "headings", "body")
        )
    rank = float(yrank.get(query, table.id)) if yrank is not None else -1.0
    values = np.array(
        [
            _column_hits(q_terms, table, 0),
            _column_hits(q_terms, table, 1),
            body_hits,
            _containment(q_terms, tokenize(table.page_title)),
            _containment(q_terms, tokenize(table.caption)),
            rank,
            score_mlm(q_tokens, table.id, index, mlm_cfg),
        ],
        dtype=np.float64,
    )
    return FeatureVector(QUERY_TABLE_FEATURE_NAMES, values)


def ltr_keyword_features(
    query: str,
    table: Table,
    index: Index,
    stats: HeadingStats | None = None,
    page_group: Sequence[Table] | None = None,
    yrank: YRankProvider | None = None,
    mlm_cfg=None,
) -> FeatureVector:
    """The 23 baseline keyword-search features: query + table + query-table."""
    q_tokens = tokenize(query)
    vec = query_features(q_tokens, index)
    vec = vec.concat(table_features(table, stats, page_group))
    return vec.concat(query_table_features(query, table, index, mlm_cfg, yrank))


def parse_feature_rows(
    lines: Iterable[str] | IO[str],
) -> list[tuple[str, str, FeatureVector, float | None]]:
    """Inverse of dump_feature_rows: (query_id, doc_id, vector, label) rows."""
    it = iter(lines)
    try:
        header = next(it).rstrip("\n").split("\t")
    except StopIteration:
        return []
    if header[:2] != ["query_id", "doc_id"]:
        raise ValueError("feature file must start with query_id and doc_id columns")
    has_label = header[-1] == "label"
    names = tuple(header[2 : len(header) - (1 if has_label else 0)])
    rows = []
    for line_no, line in enumerate(it, start=2):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        expected = 2 + len(names) + (1 if has_label else 0)
        if len(parts) != expected:
            raise ValueError(f"feature line {line_no}: expected {expected} fields")
        values = np.array([float(x) for x in parts[2 : 2 + len(names)]], dtype=np.float64)
        label = float(parts[-1]) if has_label else None
        rows.append((parts[0], parts[1], FeatureVector(names, values), label))
    return rows


def dump_feature_rows(
    rows: Sequence[tuple[str, str, FeatureVector]], sink: IO[str], label_of=None
) -> None:
    """Delimited feature dump: header then one line per (query, doc) pair."""
    if not rows:
        return
    schema = rows[0][2].schema
    header = ["query_id", "doc_id", *schema]
    if label_of is not None:
        header.append("label")
    sink.write("\t".join(header) + "\n")
    for qid, doc_id, vec in rows:
        if vec.schema != schema:
            raise ValueError("inconsistent feature schema in dump")
        fields = [qid, doc_id, *(repr(float(v)) for v in vec.values)]
        if label_of is not None:
            fields.append(repr(float(label_of(qid, doc_id))))
        sink.write("\t".join(fields) + "\n")
