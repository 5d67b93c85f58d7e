"""Knowledge base: entity records, link graph, and link-based relatedness.

Entities carry five textual field token lists (names, categories, attributes,
similar entity names, related entity names) and a set of outgoing links to
other entities. The reverse link map is derived once and cached.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable

ENTITY_FIELDS = (
    "names",
    "categories",
    "attributes",
    "similar_entity_names",
    "related_entity_names",
)


@dataclass(frozen=True)
class Entity:
    id: str
    fields: dict[str, tuple[str, ...]]
    out_links: frozenset[str] = frozenset()


class KnowledgeBase:
    def __init__(self, entities: Iterable[Entity] = ()):
        self.entities: dict[str, Entity] = {}
        self._in_links: dict[str, set[str]] | None = None
        for e in entities:
            self.add(e)

    def add(self, entity: Entity) -> None:
        if entity.id in self.entities:
            raise ValueError(f"duplicate entity id {entity.id!r}")
        self.entities[entity.id] = entity
        self._in_links = None

    def __len__(self) -> int:
        return len(self.entities)

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self.entities

    def get(self, entity_id: str) -> Entity:
        try:
            return self.entities[entity_id]
        except KeyError:
            raise KeyError(f"unknown entity {entity_id!r}") from None

    def out_links(self, entity_id: str) -> frozenset[str]:
        return self.get(entity_id).out_links

    def in_links(self, entity_id: str) -> frozenset[str]:
        self.get(entity_id)
        if self._in_links is None:
            rev: dict[str, set[str]] = {}
            for e in self.entities.values():
                for target in e.out_links:
                    rev.setdefault(target, set()).add(e.id)
            self._in_links = rev
        return frozenset(self._in_links.get(entity_id, ()))

    def ids(self) -> list[str]:
        return sorted(self.entities)


def wlm(a: str, b: str, kb: KnowledgeBase) -> float:
    """Link-overlap relatedness of two entities via their out-link sets.

    1 - (log max(|La|,|Lb|) - log|La n Lb|) / (log|KB| - log min(|La|,|Lb|)).
    Zero when either link set is empty or the sets are disjoint. Requires the
    knowledge base to be strictly larger than either link set so the
    denominator is positive.
    """
    la = kb.out_links(a)
    lb = kb.out_links(b)
    if not la or not lb:
        return 0.0
    inter = len(la & lb)
    if inter == 0:
        return 0.0
    n = len(kb)
    lo, hi = sorted((len(la), len(lb)))
    denom = math.log(n) - math.log(lo)
    if denom <= 0:
        raise ValueError("knowledge base too small relative to link sets")
    return 1.0 - (math.log(hi) - math.log(inter)) / denom


def entity_vector(entity_id: str, kb: KnowledgeBase) -> frozenset[str]:
    """Ids j related to the entity by a link in either direction.

    Component j is set when j is in the entity's out-links or the entity is in
    j's out-links. Unknown entities yield the empty vector (all zeros).
    """
    if entity_id not in kb:
        return frozenset()
    return kb.out_links(entity_id) | kb.in_links(entity_id)


def _parse_entity(obj: dict) -> Entity:
    if not isinstance(obj, dict):
        raise ValueError("entity record must be a JSON object")
    eid = obj.get("id")
    if not isinstance(eid, str) or not eid:
        raise ValueError("entity record requires a non-empty string id")
    fields: dict[str, tuple[str, ...]] = {}
    for key, value in obj.items():
        if key in ("id", "outLinks"):
            continue
        if key not in ENTITY_FIELDS:
            raise ValueError(f"unknown entity field {key!r}")
        fields[key] = tuple(str(v) for v in value)
    for name in ENTITY_FIELDS:
        fields.setdefault(name, ())
    out_links = frozenset(str(x) for x in obj.get("outLinks", ()))
    return Entity(id=eid, fields=fields, out_links=out_links)


def load_kb(entity_lines: Iterable[str] | IO[str]) -> KnowledgeBase:
    """Load JSON-lines entity records; out-links may be inline per record."""
    kb = KnowledgeBase()
    for line_no, line in enumerate(entity_lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            kb.add(_parse_entity(json.loads(line)))
        except (ValueError, TypeError) as exc:
            raise ValueError(f"entity line {line_no}: {exc}") from exc
    return kb


def load_out_links(tsv_lines: Iterable[str] | IO[str], kb: KnowledgeBase) -> KnowledgeBase:
    """Attach out-links from 'source<TAB>target' lines, replacing inline ones."""
    links: dict[str, set[str]] = {}
    for line_no, line in enumerate(tsv_lines, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"out-link line {line_no}: expected 2 fields, got {len(parts)}")
        src, dst = parts
        links.setdefault(src, set()).add(dst)
    rebuilt = KnowledgeBase()
    for eid in kb.entities:
        old = kb.entities[eid]
        rebuilt.add(
            Entity(id=eid, fields=old.fields, out_links=frozenset(links.get(eid, ())))
        )
    return rebuilt


def dump_kb(kb: KnowledgeBase, sink: IO[str]) -> None:
    for eid in kb.ids():
        e = kb.entities[eid]
        record: dict = {"id": e.id}
        for name in ENTITY_FIELDS:
            record[name] = list(e.fields.get(name, ()))
        record["outLinks"] = sorted(e.out_links)
        sink.write(json.dumps(record, ensure_ascii=False))
        sink.write("\n")


def entity_field_tokens(entity: Entity) -> dict[str, list[str]]:
    """Tokenized five-field view of one entity for indexing."""
    from .textindex import tokenize

    out: dict[str, list[str]] = {}
    for name in ENTITY_FIELDS:
        tokens: list[str] = []
        for phrase in entity.fields.get(name, ()):
            tokens.extend(tokenize(phrase))
        out[name] = tokens
    return out
