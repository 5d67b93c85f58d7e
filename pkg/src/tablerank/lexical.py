"""Language-model scoring over the multi-field index.

Single-field scoring uses query likelihood with Dirichlet smoothing; terms
absent from the collection are skipped so unseen vocabulary never produces
log(0). Multi-field scoring mixes per-field probabilities (default) or
per-field scores, controlled by MLMConfig.fusion.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field as dc_field
from typing import Iterable, Mapping, Sequence

from .evaluation import Qrels, Run, ndcg
from .kb import ENTITY_FIELDS, KnowledgeBase, entity_field_tokens
from .textindex import Index, build_index, tokenize


@dataclass
class MLMConfig:
    """Field mixture for multi-field language-model scoring.

    fusion="probability" mixes smoothed per-field term probabilities before
    taking logs; fusion="score" mixes per-field log-likelihood scores. With a
    one-hot weight vector both reduce to single-field scoring exactly.
    """

    weights: dict[str, float]
    mu: dict[str, float] = dc_field(default_factory=dict)
    fusion: str = "probability"

    def __post_init__(self) -> None:
        if self.fusion not in ("probability", "score"):
            raise ValueError(f"unknown fusion {self.fusion!r}")
        if not self.weights:
            raise ValueError("weights must name at least one field")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("field weights must be nonnegative")
        if sum(self.weights.values()) <= 0:
            raise ValueError("field weights must sum to a positive value")


def dirichlet_mu(index: Index, field_name: str) -> float:
    """Default smoothing parameter: average field length, floored at 1."""
    return max(index.avg_len(field_name), 1.0)


def _smoothed_prob(term: str, doc_id: str, field_name: str, index: Index, mu: float) -> float:
    total = index.total_terms(field_name)
    if total == 0:
        return 0.0
    cf = index.cf(term, field_name)
    if cf == 0:
        return 0.0
    tf = index.tf(term, field_name, doc_id)
    return (tf + mu * (cf / total)) / (index.doc_len(doc_id, field_name) + mu)


def score_lm(
    query_tokens: Sequence[str],
    doc_id: str,
    field_name: str,
    index: Index,
    mu: float | None = None,
) -> float:
    """Dirichlet-smoothed query log-likelihood for one field.

    Terms with zero collection frequency are skipped, so a query sharing no
    vocabulary with the field scores 0.
    """
    if mu is None:
        mu = dirichlet_mu(index, field_name)
    if mu <= 0:
        raise ValueError("smoothing parameter mu must be positive")
    score = 0.0
    for term, tf_q in Counter(query_tokens).items():
        p = _smoothed_prob(term, doc_id, field_name, index, mu)
        if p <= 0.0:
            continue
        score += tf_q * math.log(p)
    return score


def _resolved_mu(cfg: MLMConfig, field_name: str, index: Index) -> float:
    mu = cfg.mu.get(field_name)
    if mu is None:
        return dirichlet_mu(index, field_name)
    if mu <= 0:
        raise ValueError("smoothing parameter mu must be positive")
    return mu


def score_mlm(
    query_tokens: Sequence[str], doc_id: str, index: Index, cfg: MLMConfig
) -> float:
    """Mixture-of-fields query log-likelihood under cfg."""
    if cfg.fusion == "score":
        score = 0.0
        for field_name, w in cfg.weights.items():
            if w == 0.0:
                continue
            score += w * score_lm(
                query_tokens, doc_id, field_name, index, _resolved_mu(cfg, field_name, index)
            )
        return score
    score = 0.0
    mus = {f: _resolved_mu(cfg, f, index) for f in cfg.weights}
    for term, tf_q in Counter(query_tokens).items():
        p_mix = 0.0
        for field_name, w in cfg.weights.items():
            if w == 0.0:
                continue
            p_mix += w * _smoothed_prob(term, doc_id, field_name, index, mus[field_name])
        if p_mix <= 0.0:
            continue
        score += tf_q * math.log(p_mix)
    return score


def _matching_docs(
    query_tokens: Sequence[str], index: Index, fields: Iterable[str]
) -> set[str]:
    docs: set[str] = set()
    for term in set(query_tokens):
        for field_name in fields:
            docs.update(doc_id for doc_id, _ in index.postings(term, field_name))
    return docs


def rank_documents(
    query_tokens: Sequence[str],
    index: Index,
    cfg: MLMConfig,
    k: int | None = None,
    candidates: Iterable[str] | None = None,
) -> list[tuple[str, float]]:
    """Score and rank documents by MLM, descending score then ascending id.

    Without an explicit candidate set, only documents matching at least one
    query term in a weighted field are ranked; queries with no vocabulary
    overlap produce an empty list.
    """
    active_fields = [f for f, w in cfg.weights.items() if w > 0]
    if candidates is None:
        pool = _matching_docs(query_tokens, index, active_fields)
    else:
        pool = set(candidates)
    scored = [
        (doc_id, score_mlm(query_tokens, doc_id, index, cfg)) for doc_id in sorted(pool)
    ]
    scored.sort(key=lambda x: (-x[1], x[0]))
    if k is not None:
        scored = scored[:k]
    return scored


def single_field_config(field_name: str, mu: float | None = None) -> MLMConfig:
    cfg = MLMConfig(weights={field_name: 1.0})
    if mu is not None:
        cfg.mu[field_name] = mu
    return cfg


def uniform_config(fields: Sequence[str]) -> MLMConfig:
    w = 1.0 / len(fields)
    return MLMConfig(weights={f: w for f in fields})


# ---------------------------------------------------------------------------
# Entity retrieval against the knowledge base
# ---------------------------------------------------------------------------


def build_entity_index(kb: KnowledgeBase) -> Index:
    """Index every entity under its five textual fields."""
    docs = ((eid, entity_field_tokens(kb.entities[eid])) for eid in kb.ids())
    return build_index(docs, ENTITY_FIELDS)


def retrieve_entities(
    text: str,
    entity_index: Index,
    k: int = 10,
    cfg: MLMConfig | None = None,
) -> list[str]:
    """Top-k entity ids for a text query; empty text retrieves nothing.

    Scoring is MLM with uniform weights over the five entity fields unless a
    config is supplied. Ties break on lexicographic entity id.
    """
    tokens = tokenize(text)
    if not tokens:
        return []
    if cfg is None:
        cfg = uniform_config(ENTITY_FIELDS)
    ranked = rank_documents(tokens, entity_index, cfg, k=k)
    return [eid for eid, _ in ranked]


# ---------------------------------------------------------------------------
# Field-weight training by coordinate ascent
# ---------------------------------------------------------------------------


def _evaluate_weights(
    weights: dict[str, float],
    queries: Mapping[str, Sequence[str]],
    qrels: Qrels,
    index: Index,
    cutoff: int,
    fusion: str,
) -> float:
    if sum(weights.values()) <= 0:
        return -1.0
    cfg = MLMConfig(weights=dict(weights), fusion=fusion)
    run = Run(tag="train")
    for qid, tokens in queries.items():
        run.set_ranking(qid, rank_documents(tokens, index, cfg, k=max(cutoff, 100)))
    return ndcg(run, qrels, cutoff).mean


def train_mlm_weights(
    queries: Mapping[str, Sequence[str]],
    qrels: Qrels,
    index: Index,
    fields: Sequence[str],
    cutoff: int = 20,
    grid: Sequence[float] = tuple(round(0.1 * i, 1) for i in range(11)),
    max_sweeps: int = 10,
    fusion: str = "probability",
) -> dict[str, float]:
    """Coordinate ascent on mean NDCG@cutoff over per-field weights.

    One field at a time is swept over the grid, keeping a new value only on
    strict improvement; sweeps repeat until a full pass changes nothing.
    Ranking is invariant to weight scale, so weights are normalized to sum 1
    only at the end. Deterministic: fixed field order, ascending grid.
    """
    weights = {f: 1.0 / len(fields) for f in fields}
    best = _evaluate_weights(weights, queries, qrels, index, cutoff, fusion)
    for _ in range(max_sweeps):
        improved = False
        for field_name in fields:
            for candidate in grid:
                if candidate == weights[field_name]:
                    continue
                trial = dict(weights)
                trial[field_name] = candidate
                score = _evaluate_weights(trial, queries, qrels, index, cutoff, fusion)
                if score > best + 1e-12:
                    weights = trial
                    best = score
                    improved = True
        if not improved:
            break
    total = sum(weights.values())
    if total <= 0:
        return {f: 1.0 / len(fields) for f in fields}
    return {f: w / total for f, w in weights.items()}
