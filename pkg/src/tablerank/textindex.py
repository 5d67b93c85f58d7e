"""Tokenization and the multi-field inverted index.

Tables are indexed under seven fields. The catchall field concatenates the
other six, so catchall statistics follow from the component fields by
construction. Entity identifiers are indexed verbatim (no stemming or
stopping) so they behave as indivisible tokens.
"""

from __future__ import annotations

import gzip
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .corpus import Table
from .porter import stem

# Fixed English stopword list (the 33-word set commonly shipped with search
# engines). Frozen in-repo so tokenization never drifts with a dependency.
STOP_WORDS = frozenset(
    """a an and are as at be but by for if in into is it no not of on or such
    that the their then there these they this to was will with""".split()
)

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

TABLE_FIELDS = (
    "page_title",
    "section_title",
    "caption",
    "headings",
    "body",
    "entities",
    "catchall",
)

CATCHALL = "catchall"


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-word characters, drop stopwords, stem.

    Purely alphabetic ASCII tokens are stemmed; tokens with digits or
    non-ASCII letters pass through unstemmed.
    """
    out = []
    for raw in _TOKEN_RE.findall(text.lower()):
        if raw in STOP_WORDS:
            continue
        if raw.isascii() and raw.isalpha():
            raw = stem(raw)
        out.append(raw)
    return out


def table_field_tokens(table: Table) -> dict[str, list[str]]:
    """Token streams for the seven index fields of one table.

    Entity ids are kept verbatim. The catchall stream is the concatenation of
    the six component streams in field order.
    """
    body: list[str] = []
    for row in table.rows:
        for cell in row:
            body.extend(tokenize(cell.text))
    fields = {
        "page_title": tokenize(table.page_title),
        "section_title": tokenize(table.section_title),
        "caption": tokenize(table.caption),
        "headings": [t for h in table.headings for t in tokenize(h)],
        "body": body,
        "entities": [c.entity for row in table.rows for c in row if c.entity is not None],
    }
    catchall: list[str] = []
    for name in ("page_title", "section_title", "caption", "headings", "body", "entities"):
        catchall.extend(fields[name])
    fields[CATCHALL] = catchall
    return fields


@dataclass
class Index:
    """Multi-field inverted index with per-field collection statistics."""

    fields: tuple[str, ...]
    doc_ids: list[str] = field(default_factory=list)
    # postings[field][term] -> {doc_id: tf}
    _postings: dict[str, dict[str, dict[str, int]]] = field(default_factory=dict)
    # _doc_len[field][doc_id] -> int
    _doc_len: dict[str, dict[str, int]] = field(default_factory=dict)
    _total_terms: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for f in self.fields:
            self._postings.setdefault(f, {})
            self._doc_len.setdefault(f, {})
            self._total_terms.setdefault(f, 0)

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    def _check_field(self, field_name: str) -> None:
        if field_name not in self._postings:
            raise KeyError(f"unknown field {field_name!r}")

    def add_document(self, doc_id: str, field_tokens: Mapping[str, Sequence[str]]) -> None:
        if doc_id in self._known_ids():
            raise ValueError(f"duplicate document id {doc_id!r}")
        self.doc_ids.append(doc_id)
        for field_name in self.fields:
            tokens = field_tokens.get(field_name, ())
            self._doc_len[field_name][doc_id] = len(tokens)
            self._total_terms[field_name] += len(tokens)
            postings = self._postings[field_name]
            for tok in tokens:
                postings.setdefault(tok, {})
                postings[tok][doc_id] = postings[tok].get(doc_id, 0) + 1

    def _known_ids(self) -> set[str]:
        if not hasattr(self, "_id_set") or len(self._id_set) != len(self.doc_ids):
            self._id_set = set(self.doc_ids)
        return self._id_set

    def tf(self, term: str, field_name: str, doc_id: str) -> int:
        self._check_field(field_name)
        return self._postings[field_name].get(term, {}).get(doc_id, 0)

    def df(self, term: str, field_name: str) -> int:
        self._check_field(field_name)
        return len(self._postings[field_name].get(term, {}))

    def cf(self, term: str, field_name: str) -> int:
        self._check_field(field_name)
        return sum(self._postings[field_name].get(term, {}).values())

    def postings(self, term: str, field_name: str) -> list[tuple[str, int]]:
        """(doc_id, tf) pairs sorted by doc_id."""
        self._check_field(field_name)
        entry = self._postings[field_name].get(term, {})
        return sorted(entry.items())

    def doc_len(self, doc_id: str, field_name: str) -> int:
        self._check_field(field_name)
        return self._doc_len[field_name].get(doc_id, 0)

    def total_terms(self, field_name: str) -> int:
        self._check_field(field_name)
        return self._total_terms[field_name]

    def avg_len(self, field_name: str) -> float:
        self._check_field(field_name)
        if self.n_docs == 0:
            return 0.0
        return self._total_terms[field_name] / self.n_docs

    def idf(self, term: str, field_name: str) -> float:
        """ln(N / df); 0 for unseen terms or an empty index."""
        import math

        df = self.df(term, field_name)
        if df == 0 or self.n_docs == 0:
            return 0.0
        return math.log(self.n_docs / df)

    def vocabulary(self, field_name: str) -> list[str]:
        self._check_field(field_name)
        return sorted(self._postings[field_name])

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        manifest = {
            "format": "tablerank-index",
            "version": 1,
            "fields": list(self.fields),
            "n_docs": self.n_docs,
        }
        (path / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")
        payload = {
            "doc_ids": self.doc_ids,
            "postings": self._postings,
            "doc_len": self._doc_len,
            "total_terms": self._total_terms,
        }
        with gzip.open(path / "index.json.gz", "wt", encoding="utf-8") as fh:
            json.dump(payload, fh)

    @classmethod
    def load(cls, path: str | Path) -> "Index":
        path = Path(path)
        manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
        if manifest.get("format") != "tablerank-index":
            raise ValueError(f"{path} is not a saved index")
        with gzip.open(path / "index.json.gz", "rt", encoding="utf-8") as fh:
            payload = json.load(fh)
        idx = cls(fields=tuple(manifest["fields"]))
        idx.doc_ids = list(payload["doc_ids"])
        idx._postings = payload["postings"]
        idx._doc_len = payload["doc_len"]
        idx._total_terms = {k: int(v) for k, v in payload["total_terms"].items()}
        for f in idx.fields:
            idx._postings.setdefault(f, {})
            idx._doc_len.setdefault(f, {})
            idx._total_terms.setdefault(f, 0)
        return idx


def build_table_index(tables: Iterable[Table]) -> Index:
    """Index tables under the seven standard fields."""
    idx = Index(fields=TABLE_FIELDS)
    for table in tables:
        idx.add_document(table.id, table_field_tokens(table))
    return idx


def build_index(
    docs: Iterable[tuple[str, Mapping[str, Sequence[str]]]], fields: Sequence[str]
) -> Index:
    """Index arbitrary (doc_id, field->tokens) pairs under the given fields."""
    idx = Index(fields=tuple(fields))
    for doc_id, field_tokens in docs:
        idx.add_document(doc_id, field_tokens)
    return idx
