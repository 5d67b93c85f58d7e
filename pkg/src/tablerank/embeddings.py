"""Pre-trained embedding stores and centroid construction.

Stores are loaded from the word2vec text format: a "count dim" header line
followed by one "key v1 .. vdim" line per vector. Word stores are keyed by
lowercase terms, graph stores by entity ids (case-sensitive). Lookups are
exact-match; misses are counted, never imputed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np


@dataclass
class EmbeddingStore:
    kind: str  # "word" or "graph"
    dim: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)
    misses: int = 0

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, key: str) -> bool:
        return key in self.vectors


def load_embeddings(source: Iterable[str] | IO[str], kind: str = "word") -> EmbeddingStore:
    lines = iter(source)
    try:
        header = next(lines)
    except StopIteration:
        raise ValueError("empty embedding file") from None
    parts = header.split()
    if len(parts) != 2:
        raise ValueError(f"bad embedding header {header!r}")
    count, dim = int(parts[0]), int(parts[1])
    if dim <= 0:
        raise ValueError(f"embedding dimension must be positive, got {dim}")
    store = EmbeddingStore(kind=kind, dim=dim)
    for line_no, line in enumerate(lines, start=2):
        line = line.rstrip("\n")
        if not line:
            continue
        fields = line.split(" ")
        if len(fields) != dim + 1:
            raise ValueError(
                f"line {line_no}: expected {dim + 1} fields, got {len(fields)}"
            )
        vec = np.array([float(x) for x in fields[1:]], dtype=np.float64)
        store.vectors[fields[0]] = vec
    if len(store.vectors) != count:
        raise ValueError(
            f"header promised {count} vectors, file held {len(store.vectors)}"
        )
    return store


def dump_embeddings(store: EmbeddingStore, sink: IO[str]) -> None:
    sink.write(f"{len(store.vectors)} {store.dim}\n")
    for key, vec in store.vectors.items():
        sink.write(key + " " + " ".join(repr(float(x)) for x in vec) + "\n")


def lookup(key: str, store: EmbeddingStore) -> np.ndarray | None:
    """Exact-match vector lookup; None on miss (and the miss is counted)."""
    vec = store.vectors.get(key)
    if vec is None:
        store.misses += 1
        return None
    return vec


def centroid(
    vectors: Sequence[np.ndarray], weights: Sequence[float] | None = None
) -> np.ndarray:
    """Unweighted mean, or weighted sum when weights are given.

    The weighted form is a plain weighted sum (no normalization), matching
    how weighted early fusion composes with cosine similarity downstream.
    """
    if len(vectors) == 0:
        raise ValueError("centroid of zero vectors is undefined")
    dim = len(vectors[0])
    for v in vectors:
        if len(v) != dim:
            raise ValueError("mixed dimensions in centroid input")
    mat = np.asarray(vectors, dtype=np.float64)
    if weights is None:
        return mat.mean(axis=0)
    if len(weights) != len(vectors):
        raise ValueError("weights length must match vectors length")
    w = np.asarray(weights, dtype=np.float64)
    if np.all(w == 0):
        raise ValueError("all-zero weights give a degenerate centroid")
    return w @ mat
