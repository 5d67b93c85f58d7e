"""Web-table corpus model: records, JSON-lines parsing, and derived accessors.

A table is a rectangular grid of cells, each optionally linked to a knowledge
base entity, plus page-level context (page title, section title, caption) and
page metadata. Rows hold data rows only; header rows are captured by the
headings list and num_header_rows count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator


class CorpusFormatError(ValueError):
    """Raised for malformed corpus records under strict parsing."""


@dataclass(frozen=True)
class Cell:
    text: str
    entity: str | None = None


@dataclass(frozen=True)
class PageMeta:
    in_links: int = 0
    out_links: int = 0
    page_views: int = 0
    tables_on_page: int = 1
    # total character length of the embedding page; None when the dump
    # does not carry it (consumers must then fall back or flag the gap)
    page_char_len: int | None = None


@dataclass(frozen=True)
class Table:
    id: str
    page_title: str = ""
    section_title: str = ""
    caption: str = ""
    headings: tuple[str, ...] = ()
    rows: tuple[tuple[Cell, ...], ...] = ()
    num_header_rows: int = 0
    meta: PageMeta = field(default_factory=PageMeta)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        if self.rows:
            return len(self.rows[0])
        return len(self.headings)

    def column(self, j: int) -> tuple[Cell, ...]:
        if not 0 <= j < self.n_cols:
            raise IndexError(f"column {j} out of range for table {self.id}")
        return tuple(row[j] for row in self.rows)

    def body_entities(self) -> tuple[str, ...]:
        """Unique entity links in row-major cell order."""
        seen: dict[str, None] = {}
        for row in self.rows:
            for cell in row:
                if cell.entity is not None and cell.entity not in seen:
                    seen[cell.entity] = None
        return tuple(seen)

    def char_len(self) -> int:
        total = len(self.caption) + sum(len(h) for h in self.headings)
        for row in self.rows:
            total += sum(len(c.text) for c in row)
        return total


@dataclass(frozen=True)
class ParseError:
    line_no: int
    message: str


def _parse_cell(obj) -> Cell:
    if isinstance(obj, str):
        return Cell(text=obj)
    if isinstance(obj, dict):
        text = obj.get("text", "")
        entity = obj.get("entity")
        if not isinstance(text, str):
            raise ValueError("cell text must be a string")
        if entity is not None and not isinstance(entity, str):
            raise ValueError("cell entity must be a string")
        return Cell(text=text, entity=entity)
    raise ValueError("cell must be a string or an object")


def _parse_meta(obj) -> PageMeta:
    if obj is None:
        return PageMeta()
    if not isinstance(obj, dict):
        raise ValueError("meta must be an object")
    tables_on_page = int(obj.get("tablesOnPage", 1))
    if tables_on_page < 1:
        raise ValueError("tablesOnPage must be >= 1")
    page_char_len = obj.get("pageCharLen")
    return PageMeta(
        in_links=int(obj.get("inLinks", 0)),
        out_links=int(obj.get("outLinks", 0)),
        page_views=int(obj.get("pageViews", 0)),
        tables_on_page=tables_on_page,
        page_char_len=None if page_char_len is None else int(page_char_len),
    )


def parse_record(obj: dict) -> Table:
    """Build a Table from one decoded JSON record, validating the grid."""
    if not isinstance(obj, dict):
        raise ValueError("record must be a JSON object")
    table_id = obj.get("id")
    if not isinstance(table_id, str) or not table_id:
        raise ValueError("record requires a non-empty string id")
    headings = tuple(str(h) for h in obj.get("headings", ()))
    raw_rows = obj.get("rows", ())
    rows = []
    for r, raw in enumerate(raw_rows):
        cells = tuple(_parse_cell(c) for c in raw)
        rows.append(cells)
    if rows:
        width = len(rows[0])
        for r, row in enumerate(rows):
            if len(row) != width:
                raise ValueError(
                    f"ragged grid: row {r} has {len(row)} cells, expected {width}"
                )
        if headings and len(headings) != width:
            raise ValueError(
                f"headings count {len(headings)} does not match row width {width}"
            )
    return Table(
        id=table_id,
        page_title=str(obj.get("pgTitle", "")),
        section_title=str(obj.get("secTitle", "")),
        caption=str(obj.get("caption", "")),
        headings=headings,
        rows=tuple(rows),
        num_header_rows=int(obj.get("numHeaderRows", 0)),
        meta=_parse_meta(obj.get("meta")),
    )


def table_to_record(table: Table) -> dict:
    """Inverse of parse_record; parse(serialize(t)) round-trips."""
    rows = [
        [
            {"text": c.text} if c.entity is None else {"text": c.text, "entity": c.entity}
            for c in row
        ]
        for row in table.rows
    ]
    meta = {
        "inLinks": table.meta.in_links,
        "outLinks": table.meta.out_links,
        "pageViews": table.meta.page_views,
        "tablesOnPage": table.meta.tables_on_page,
    }
    if table.meta.page_char_len is not None:
        meta["pageCharLen"] = table.meta.page_char_len
    return {
        "id": table.id,
        "pgTitle": table.page_title,
        "secTitle": table.section_title,
        "caption": table.caption,
        "headings": list(table.headings),
        "rows": rows,
        "numHeaderRows": table.num_header_rows,
        "meta": meta,
    }


def parse_corpus(
    source: Iterable[str] | IO[str], strict: bool = False
) -> tuple[list[Table], list[ParseError]]:
    """Parse JSON-lines table records.

    Lenient mode skips malformed records and reports them with line numbers;
    strict mode raises CorpusFormatError on the first problem. Duplicate table
    ids are malformed in either mode.
    """
    tables: list[Table] = []
    errors: list[ParseError] = []
    seen_ids: set[str] = set()
    for line_no, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
            table = parse_record(obj)
            if table.id in seen_ids:
                raise ValueError(f"duplicate table id {table.id!r}")
        except (ValueError, TypeError) as exc:
            if strict:
                raise CorpusFormatError(f"line {line_no}: {exc}") from exc
            errors.append(ParseError(line_no, str(exc)))
            continue
        seen_ids.add(table.id)
        tables.append(table)
    return tables, errors


def dump_corpus(tables: Iterable[Table], sink: IO[str]) -> None:
    for table in tables:
        sink.write(json.dumps(table_to_record(table), ensure_ascii=False))
        sink.write("\n")


def iter_corpus_file(path: str, strict: bool = False) -> tuple[list[Table], list[ParseError]]:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh, strict=strict)


def resolve_entity_links(table: Table, known: Iterable[str]) -> tuple[Table, int]:
    """Clear cell links pointing outside the known entity set.

    Returns the rewritten table and the number of links cleared. Tables with
    no dangling links are returned unchanged (same object).
    """
    known_set = set(known)
    cleared = 0
    new_rows: list[tuple[Cell, ...]] = []
    dirty = False
    for row in table.rows:
        new_row = []
        for cell in row:
            if cell.entity is not None and cell.entity not in known_set:
                new_row.append(Cell(text=cell.text))
                cleared += 1
                dirty = True
            else:
                new_row.append(cell)
        new_rows.append(tuple(new_row))
    if not dirty:
        return table, 0
    return (
        Table(
            id=table.id,
            page_title=table.page_title,
            section_title=table.section_title,
            caption=table.caption,
            headings=table.headings,
            rows=tuple(new_rows),
            num_header_rows=table.num_header_rows,
            meta=table.meta,
        ),
        cleared,
    )


def column_entity_rate(table: Table, j: int) -> float:
    """Fraction of cells in column j carrying an entity link; 0 for no rows."""
    col = table.column(j)
    if not col:
        return 0.0
    return sum(1 for c in col if c.entity is not None) / len(col)


def detect_core_column(table: Table) -> int:
    """Index of the column with the highest entity rate; leftmost on ties."""
    if table.n_cols == 0:
        raise ValueError(f"table {table.id} has no columns")
    best_j = 0
    best_rate = -1.0
    for j in range(table.n_cols):
        rate = column_entity_rate(table, j)
        if rate > best_rate:
            best_rate = rate
            best_j = j
    return best_j


def core_column_entities(table: Table) -> tuple[str, ...]:
    """Unique entity links of the core column, top to bottom."""
    if table.n_cols == 0:
        return ()
    j = detect_core_column(table)
    seen: dict[str, None] = {}
    for cell in table.column(j):
        if cell.entity is not None and cell.entity not in seen:
            seen[cell.entity] = None
    return tuple(seen)
