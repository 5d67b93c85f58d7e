"""Table-to-table matching baselines and their combination features.

Five matching scores (soft schema Jaccard, schema complement, entity
complement, heading/data mixture, multi-element cosine) plus three scores
that treat a table element as a keyword query. The bipartite matcher is an
exact augmenting-path assignment solver so small-instance results can be
checked against brute-force enumeration.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Table, core_column_entities
from .features import FeatureVector, HeadingStats, heading_set, table_features
from .kb import KnowledgeBase, wlm
from .lexical import MLMConfig, rank_documents, score_mlm, single_field_config
from .textindex import CATCHALL, Index, tokenize


def levenshtein(a: str, b: str) -> int:
    """Classic edit distance with unit costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[len(b)]


def edit_sim(a: str, b: str) -> float:
    """1 - normalized edit distance; 1.0 for two empty strings."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def _min_cost_assignment(cost: np.ndarray) -> float:
    """Total cost of a minimum-cost perfect assignment on a square matrix.

    Shortest augmenting paths with row/column potentials; O(n^3), exact for
    the small matrices produced by heading comparisons.
    """
    n = cost.shape[0]
    inf = float("inf")
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    assigned = [0] * (n + 1)  # assigned[j] = row held by column j (1-based)
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        assigned[0] = i
        j0 = 0
        minv = [inf] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = assigned[j0]
            delta = inf
            j1 = -1
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[assigned[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if assigned[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            assigned[j0] = assigned[j1]
            j0 = j1
    total = 0.0
    for j in range(1, n + 1):
        total += cost[assigned[j] - 1, j - 1]
    return total


def max_weight_matching(weights: np.ndarray, threshold: float = 0.0) -> float:
    """Maximum total weight of a bipartite matching, exact.

    Edges with weight <= threshold are removed. Weights must be nonnegative;
    unmatched vertices are free, so the result is the best sum over any
    subset of disjoint edges above the threshold.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.ndim != 2:
        raise ValueError("weight matrix must be 2-dimensional")
    if weights.size == 0:
        return 0.0
    if np.any(weights < 0):
        raise ValueError("edge weights must be nonnegative")
    kept = np.where(weights > threshold, weights, 0.0)
    top = float(kept.max())
    if top == 0.0:
        return 0.0
    side = max(kept.shape)
    padded = np.zeros((side, side), dtype=np.float64)
    padded[: kept.shape[0], : kept.shape[1]] = kept
    cost = top - padded
    min_cost = _min_cost_assignment(cost)
    return side * top - min_cost


def _heading_sim_matrix(left: Sequence[str], right: Sequence[str]) -> np.ndarray:
    matrix = np.zeros((len(left), len(right)), dtype=np.float64)
    for i, a in enumerate(left):
        for j, b in enumerate(right):
            matrix[i, j] = edit_sim(a, b)
    return matrix


def msje_score(query_table: Table, cand_table: Table, delta: float = 0.8) -> float:
    """Soft Jaccard over heading sets via thresholded edit similarity.

    Tables must share at least one exact heading to be comparable at all;
    otherwise the score is 0. The soft intersection is the maximum-weight
    matching over edit similarities above delta.
    """
    if not 0.0 <= delta <= 1.0:
        raise ValueError("delta must lie in [0, 1]")
    left = heading_set(query_table)
    right = heading_set(cand_table)
    if not set(left) & set(right):
        return 0.0
    inter = max_weight_matching(_heading_sim_matrix(left, right), delta)
    union = len(left) + len(right) - inter
    if union <= 0:
        return 0.0
    return inter / union


def heading_benefit(query_headings: Sequence[str], heading: str, stats: HeadingStats) -> float:
    """Mean consistency of one candidate heading with the query schema.

    Average over the query headings of #(h, heading) / #(h); headings with
    zero corpus count contribute 0.
    """
    if not query_headings:
        return 0.0
    total = 0.0
    for h in query_headings:
        single = stats.count(h)
        if single == 0:
            continue
        total += stats.pair_count(h, heading) / single
    return total / len(query_headings)


def schema_complement_score(
    query_table: Table, cand_table: Table, stats: HeadingStats, aggr: str = "avg"
) -> float:
    """Entity coverage of the query table times aggregated heading benefit."""
    q_ents = set(query_table.body_entities())
    if not q_ents:
        return 0.0
    c_ents = set(cand_table.body_entities())
    entity_coverage = len(q_ents & c_ents) / len(q_ents)
    q_heads = heading_set(query_table)
    c_heads = heading_set(cand_table)
    if not c_heads:
        return 0.0
    benefits = [heading_benefit(q_heads, h, stats) for h in c_heads]
    if aggr == "avg":
        schema_benefit = sum(benefits) / len(benefits)
    elif aggr == "max":
        schema_benefit = max(benefits)
    elif aggr == "sum":
        schema_benefit = sum(benefits)
    else:
        raise ValueError(f"unknown aggregator {aggr!r}")
    return entity_coverage * schema_benefit


def _safe_wlm(a: str, b: str, kb: KnowledgeBase) -> float:
    if a not in kb or b not in kb:
        return 0.0
    return wlm(a, b, kb)


def entity_complement_score(query_table: Table, cand_table: Table, kb: KnowledgeBase) -> float:
    """Mean pairwise link-based relatedness between the two entity sets."""
    q_ents = query_table.body_entities()
    c_ents = cand_table.body_entities()
    if not q_ents or not c_ents:
        return 0.0
    total = 0.0
    for qe in q_ents:
        for ce in c_ents:
            total += _safe_wlm(qe, ce, kb)
    return total / (len(q_ents) * len(c_ents))


def _column_term_set(table: Table, j: int) -> frozenset[str]:
    terms = set()
    for cell in table.column(j):
        terms.update(tokenize(cell.text))
    return frozenset(terms)


def _binary_cosine(a: frozenset[str], b: frozenset[str]) -> float:
    if not a or not b:
        return 0.0
    inter = len(a & b)
    if inter == 0:
        return 0.0
    return inter / math.sqrt(len(a) * len(b))


def nguyen_score(
    query_table: Table, cand_table: Table, alpha: float = 0.5, delta: float = 0.8
) -> float:
    """Linear mixture of heading similarity and column data similarity.

    Heading similarity is the thresholded matching weight normalized by the
    larger heading set. Data similarity pairs each column with its most
    similar opposite column (binary term-set cosine) and sums both
    directions, halved; it is a sum over columns, not an average.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    left = heading_set(query_table)
    right = heading_set(cand_table)
    if left and right:
        matching = max_weight_matching(_heading_sim_matrix(left, right), delta)
        sim_headings = matching / max(len(left), len(right))
    else:
        sim_headings = 0.0
    q_cols = [_column_term_set(query_table, j) for j in range(query_table.n_cols)] if query_table.rows else []
    c_cols = [_column_term_set(cand_table, j) for j in range(cand_table.n_cols)] if cand_table.rows else []
    sim_data = 0.0
    if q_cols and c_cols:
        forward = sum(max(_binary_cosine(q, c) for c in c_cols) for q in q_cols)
        backward = sum(max(_binary_cosine(c, q) for q in q_cols) for c in c_cols)
        sim_data = 0.5 * (forward + backward)
    return alpha * sim_headings + (1.0 - alpha) * sim_data


INFOGATHER_ELEMENTS = ("table_data", "column_values", "page_title", "headings")


def _dict_cosine(a: Mapping[str, float], b: Mapping[str, float]) -> float:
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    small, large = (a, b) if len(a) <= len(b) else (b, a)
    dot = sum(v * large.get(k, 0.0) for k, v in small.items())
    return max(-1.0, min(1.0, dot / (na * nb)))


def _idf_vector(tokens: Iterable[str], index: Index) -> dict[str, float]:
    return {t: index.idf(t, CATCHALL) for t in set(tokens)}


def _tfidf_vector(tokens: Sequence[str], index: Index) -> dict[str, float]:
    counts: dict[str, int] = {}
    for t in tokens:
        counts[t] = counts.get(t, 0) + 1
    return {t: c * index.idf(t, CATCHALL) for t, c in counts.items()}


def _body_tokens(table: Table) -> list[str]:
    return [t for row in table.rows for c in row for t in tokenize(c.text)]


def _heading_tokens(table: Table) -> list[str]:
    return [t for h in table.headings for t in tokenize(h)]


def _core_column_tokens(table: Table) -> list[str]:
    if table.n_cols == 0 or not table.rows:
        return []
    from .corpus import detect_core_column

    j = detect_core_column(table)
    return [t for cell in table.column(j) for t in tokenize(cell.text)]


def infogather_score(
    query_table: Table,
    cand_table: Table,
    index: Index,
    weights: Mapping[str, float] | None = None,
    use_column_values: bool = True,
) -> float:
    """Weighted sum of per-element cosine similarities.

    Elements: table data and page title under IDF weighting, column headings
    under TF-IDF, and (optionally) column values comparing the candidate's
    core column against the best-matching query column under TF-IDF.
    Default weights are uniform 0.25 per element.
    """
    if weights is None:
        weights = {name: 0.25 for name in INFOGATHER_ELEMENTS}
    sims = infogather_element_sims(query_table, cand_table, index, use_column_values)
    return sum(weights.get(name, 0.0) * sims[name] for name in INFOGATHER_ELEMENTS)


def infogather_element_sims(
    query_table: Table,
    cand_table: Table,
    index: Index,
    use_column_values: bool = True,
) -> dict[str, float]:
    sims = {
        "table_data": _dict_cosine(
            _idf_vector(_body_tokens(query_table), index),
            _idf_vector(_body_tokens(cand_table), index),
        ),
        "page_title": _dict_cosine(
            _idf_vector(tokenize(query_table.page_title), index),
            _idf_vector(tokenize(cand_table.page_title), index),
        ),
        "headings": _dict_cosine(
            _tfidf_vector(_heading_tokens(query_table), index),
            _tfidf_vector(_heading_tokens(cand_table), index),
        ),
        "column_values": 0.0,
    }
    if use_column_values:
        core_vec = _tfidf_vector(_core_column_tokens(cand_table), index)
        best = 0.0
        for j in range(query_table.n_cols):
            if not query_table.rows:
                break
            col_vec = _tfidf_vector(
                [t for cell in query_table.column(j) for t in tokenize(cell.text)], index
            )
            best = max(best, _dict_cosine(col_vec, core_vec))
        sims["column_values"] = best
    return sims


def train_infogather_weights(
    pairs: Sequence[tuple[Table, Table]],
    labels: Sequence[float],
    index: Index,
    use_column_values: bool = True,
) -> dict[str, float]:
    """Least-squares fit of element weights against graded labels."""
    if len(pairs) != len(labels):
        raise ValueError("pairs and labels must align")
    if not pairs:
        raise ValueError("cannot train on zero pairs")
    rows = []
    for qt, ct in pairs:
        sims = infogather_element_sims(qt, ct, index, use_column_values)
        rows.append([sims[name] for name in INFOGATHER_ELEMENTS])
    coef, *_ = np.linalg.lstsq(
        np.asarray(rows, dtype=np.float64), np.asarray(labels, dtype=np.float64), rcond=None
    )
    return dict(zip(INFOGATHER_ELEMENTS, (float(c) for c in coef)))


# ---------------------------------------------------------------------------
# Keyword-query views of a table and candidate pooling
# ---------------------------------------------------------------------------

KEYWORD_METHODS = ("caption", "entities", "headings")


def page_entity(table: Table, kb: KnowledgeBase | None) -> str | None:
    """Entity whose id names the table's page, if the knowledge base has one."""
    if kb is None:
        return None
    if table.page_title in kb:
        return table.page_title
    underscored = "_".join(table.page_title.split())
    if underscored and underscored in kb:
        return underscored
    return None


def _element_query(
    table: Table, method: str, kb: KnowledgeBase | None = None, with_page_entity: bool = False
) -> tuple[list[str], MLMConfig]:
    if method == "caption":
        tokens = tokenize(table.caption)
        cfg = MLMConfig(weights={"caption": 0.5, CATCHALL: 0.5})
    elif method == "entities":
        tokens = list(table.body_entities())
        if with_page_entity:
            extra = page_entity(table, kb)
            if extra is not None and extra not in tokens:
                tokens.append(extra)
        cfg = single_field_config("entities")
    elif method == "headings":
        tokens = _heading_tokens(table)
        cfg = single_field_config("headings")
    else:
        raise ValueError(f"unknown keyword method {method!r}")
    return tokens, cfg


def keyword_query_baselines(
    query_table: Table,
    method: str,
    index: Index,
    k: int | None = None,
    kb: KnowledgeBase | None = None,
) -> list[tuple[str, float]]:
    """Rank corpus tables using one element of the input table as the query.

    caption: caption text against the caption and catchall fields.
    entities: body entity ids against the entities field.
    headings: heading tokens against the headings field.
    The input table itself is excluded from the ranking.
    """
    tokens, cfg = _element_query(query_table, method, kb)
    if not tokens:
        return []
    ranked = rank_documents(tokens, index, cfg, k=None)
    ranked = [(doc_id, s) for doc_id, s in ranked if doc_id != query_table.id]
    if k is not None:
        ranked = ranked[:k]
    return ranked


def candidate_pool(
    query_table: Table,
    index: Index,
    kb: KnowledgeBase | None = None,
    per_query: int = 150,
) -> list[str]:
    """Union of the top results of three element queries, input excluded.

    The entity query also includes the entity matching the table's page,
    when resolvable. With the default depth the pool holds at most 450 ids.
    """
    pool: set[str] = set()
    for method in KEYWORD_METHODS:
        tokens, cfg = _element_query(query_table, method, kb, with_page_entity=True)
        if not tokens:
            continue
        ranked = rank_documents(tokens, index, cfg, k=None)
        ranked = [(doc_id, s) for doc_id, s in ranked if doc_id != query_table.id]
        pool.update(doc_id for doc_id, _ in ranked[:per_query])
    return sorted(pool)


MATCH_SCORE_NAMES = (
    "msje",
    "schema_complement",
    "entity_complement",
    "nguyen",
    "infogather",
    "caption_query_score",
    "entity_query_score",
    "heading_query_score",
)


def match_scores(
    query_table: Table,
    cand_table: Table,
    index: Index,
    kb: KnowledgeBase,
    stats: HeadingStats,
    delta: float = 0.8,
    alpha: float = 0.5,
    infogather_weights: Mapping[str, float] | None = None,
    use_column_values: bool = True,
) -> FeatureVector:
    """All eight matching scores of one (input, candidate) pair."""
    values = []
    values.append(msje_score(query_table, cand_table, delta))
    values.append(schema_complement_score(query_table, cand_table, stats))
    values.append(entity_complement_score(query_table, cand_table, kb))
    values.append(nguyen_score(query_table, cand_table, alpha, delta))
    values.append(
        infogather_score(query_table, cand_table, index, infogather_weights, use_column_values)
    )
    for method in KEYWORD_METHODS:
        tokens, cfg = _element_query(query_table, method, kb)
        if not tokens:
            values.append(0.0)
        else:
            values.append(score_mlm(tokens, cand_table.id, index, cfg))
    return FeatureVector(MATCH_SCORE_NAMES, np.array(values, dtype=np.float64))


def ltr_table_features(
    query_table: Table,
    cand_table: Table,
    variant: str,
    index: Index,
    kb: KnowledgeBase,
    stats: HeadingStats,
    page_groups: Mapping[str, Sequence[Table]] | None = None,
    **score_kwargs,
) -> FeatureVector:
    """Feature vector for table-query learning to rank.

    t1: the 8 matching scores. t2: those plus the 9 table features of each
    of the two tables (26 total).
    """
    if variant not in ("t1", "t2"):
        raise ValueError(f"unknown variant {variant!r}")
    vec = match_scores(query_table, cand_table, index, kb, stats, **score_kwargs)
    if variant == "t1":
        return vec
    q_group = page_groups.get(query_table.page_title) if page_groups else None
    c_group = page_groups.get(cand_table.page_title) if page_groups else None
    q_feats = table_features(query_table, stats, q_group)
    c_feats = table_features(cand_table, stats, c_group)
    vec = vec.concat(
        FeatureVector(tuple(f"input_{n}" for n in q_feats.schema), q_feats.values)
    )
    return vec.concat(
        FeatureVector(tuple(f"cand_{n}" for n in c_feats.schema), c_feats.values)
    )
