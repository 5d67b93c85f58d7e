"""Ranking evaluation: graded relevance, NDCG, significance, pooling, run IO.

File formats follow the TREC conventions: qrels lines are
"qid 0 doc_id grade" and run lines are "qid Q0 doc_id rank score tag".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, Sequence

from scipy import stats


class Qrels:
    """Graded relevance judgments keyed by (query_id, doc_id)."""

    def __init__(self, grades: Mapping[tuple[str, str], float] | None = None):
        self._grades: dict[tuple[str, str], float] = dict(grades or {})

    def set(self, query_id: str, doc_id: str, grade: float) -> None:
        if grade < 0:
            raise ValueError(f"negative grade for ({query_id}, {doc_id})")
        self._grades[(query_id, doc_id)] = grade

    def grade(self, query_id: str, doc_id: str) -> float:
        return self._grades.get((query_id, doc_id), 0.0)

    def query_ids(self) -> list[str]:
        return sorted({q for q, _ in self._grades})

    def judged(self, query_id: str) -> dict[str, float]:
        return {d: g for (q, d), g in self._grades.items() if q == query_id}

    def __len__(self) -> int:
        return len(self._grades)

    def items(self):
        return self._grades.items()

    @classmethod
    def parse(cls, lines: Iterable[str] | IO[str]) -> "Qrels":
        qrels = cls()
        for line_no, line in enumerate(lines, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"qrels line {line_no}: expected 4 fields, got {len(parts)}")
            qid, _, doc_id, grade = parts
            qrels.set(qid, doc_id, float(grade))
        return qrels

    def dump(self, sink: IO[str]) -> None:
        for (qid, doc_id), grade in sorted(self._grades.items()):
            g = int(grade) if float(grade).is_integer() else grade
            sink.write(f"{qid} 0 {doc_id} {g}\n")


class Run:
    """Ranked lists per query; kept sorted by descending score, id on ties."""

    def __init__(self, tag: str = "run"):
        self.tag = tag
        self._results: dict[str, list[tuple[str, float]]] = {}

    def add(self, query_id: str, doc_id: str, score: float) -> None:
        self._results.setdefault(query_id, []).append((doc_id, float(score)))

    def set_ranking(self, query_id: str, ranked: Sequence[tuple[str, float]]) -> None:
        self._results[query_id] = [(d, float(s)) for d, s in ranked]

    def ranking(self, query_id: str) -> list[tuple[str, float]]:
        ranked = sorted(self._results.get(query_id, []), key=lambda x: (-x[1], x[0]))
        return ranked

    def query_ids(self) -> list[str]:
        return sorted(self._results)

    @classmethod
    def parse(cls, lines: Iterable[str] | IO[str], tag: str | None = None) -> "Run":
        run = cls(tag=tag or "run")
        for line_no, line in enumerate(lines, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ValueError(f"run line {line_no}: expected 6 fields, got {len(parts)}")
            qid, _, doc_id, _rank, score, file_tag = parts
            if tag is None:
                run.tag = file_tag
            run.add(qid, doc_id, float(score))
        return run

    def dump(self, sink: IO[str]) -> None:
        for qid in self.query_ids():
            for rank, (doc_id, score) in enumerate(self.ranking(qid), start=1):
                sink.write(f"{qid} Q0 {doc_id} {rank} {score:.6f} {self.tag}\n")


def _gain(grade: float, gain: str) -> float:
    if gain == "exp":
        return 2.0**grade - 1.0
    if gain == "linear":
        return grade
    raise ValueError(f"unknown gain {gain!r} (expected 'exp' or 'linear')")


def dcg(grades: Sequence[float], k: int, gain: str = "exp") -> float:
    """Sum of gain(grade) / log2(rank + 1) over the first k positions."""
    total = 0.0
    for rank, grade in enumerate(grades[:k], start=1):
        total += _gain(grade, gain) / math.log2(rank + 1)
    return total


def ndcg_query(
    ranked_ids: Sequence[str],
    judged: Mapping[str, float],
    k: int,
    gain: str = "exp",
) -> float:
    """NDCG@k for one query; 0 when the query has no relevant documents."""
    if k <= 0:
        raise ValueError("cutoff k must be positive")
    ideal = sorted(judged.values(), reverse=True)
    idcg = dcg(ideal, k, gain)
    if idcg == 0.0:
        return 0.0
    got = [judged.get(doc_id, 0.0) for doc_id in ranked_ids]
    return dcg(got, k, gain) / idcg


@dataclass
class NdcgResult:
    k: int
    per_query: dict[str, float] = field(default_factory=dict)

    @property
    def mean(self) -> float:
        if not self.per_query:
            return 0.0
        return sum(self.per_query.values()) / len(self.per_query)


def ndcg(run: Run, qrels: Qrels, k: int, gain: str = "exp") -> NdcgResult:
    """Mean NDCG@k over every judged query.

    Queries present in the qrels but absent from the run (or with no relevant
    documents) score 0 and stay in the mean.
    """
    result = NdcgResult(k=k)
    for qid in qrels.query_ids():
        ranked_ids = [doc_id for doc_id, _ in run.ranking(qid)]
        result.per_query[qid] = ndcg_query(ranked_ids, qrels.judged(qid), k, gain)
    return result


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    p_value: float
    mean_difference: float
    degenerate: bool = False

    def significant(self, alpha: float) -> bool:
        return not self.degenerate and self.p_value < alpha


def paired_ttest(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Two-tailed paired t-test over per-query metric pairs.

    Identical or zero-variance differences are degenerate: p is reported as
    1.0 with the degenerate flag set rather than NaN.
    """
    if len(a) != len(b):
        raise ValueError("paired samples must have equal length")
    if len(a) < 2:
        raise ValueError("need at least two pairs")
    diffs = [x - y for x, y in zip(a, b)]
    mean_diff = sum(diffs) / len(diffs)
    var = sum((d - mean_diff) ** 2 for d in diffs) / (len(diffs) - 1)
    if var == 0.0:
        return TTestResult(0.0, 1.0, mean_diff, degenerate=True)
    t = mean_diff / math.sqrt(var / len(diffs))
    p = 2.0 * stats.t.sf(abs(t), df=len(diffs) - 1)
    return TTestResult(t, p, mean_diff)


def pool(runs: Sequence[Run], depth: int) -> dict[str, dict[str, list[str]]]:
    """Union of each run's top-`depth` results per query.

    Returns query_id -> doc_id -> sorted list of contributing run tags, so
    assessors can see which systems surfaced each candidate.
    """
    if depth <= 0:
        raise ValueError("pool depth must be positive")
    pooled: dict[str, dict[str, set[str]]] = {}
    for run in runs:
        for qid in run.query_ids():
            for doc_id, _ in run.ranking(qid)[:depth]:
                pooled.setdefault(qid, {}).setdefault(doc_id, set()).add(run.tag)
    return {
        qid: {doc_id: sorted(tags) for doc_id, tags in docs.items()}
        for qid, docs in pooled.items()
    }
