"""Configuration and the loaded workspace shared by the CLI and the service.

A Workspace owns every read-only provider (corpus, index, knowledge base,
embedding stores, heading statistics) and exposes the two ranking entry
points: keyword search and table matching. Methods that need a provider that
was not configured fail with a clear error instead of degrading silently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields as dc_fields
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Table, iter_corpus_file
from .embeddings import EmbeddingStore, load_embeddings
from .features import (
    FeatureVector,
    HeadingStats,
    YRankProvider,
    group_tables_by_page,
    ltr_keyword_features,
)
from .kb import KnowledgeBase, load_kb, load_out_links
from .lexical import (
    MLMConfig,
    build_entity_index,
    rank_documents,
    single_field_config,
    uniform_config,
)
from .ltr import ForestModel, LinearModel, predict_instance
from .semantic import (
    SemanticContext,
    str_keyword_features,
    str_table_features,
)
from .tablematch import (
    candidate_pool,
    entity_complement_score,
    infogather_score,
    ltr_table_features,
    msje_score,
    nguyen_score,
    schema_complement_score,
)
from .textindex import CATCHALL, Index, build_table_index, tokenize

MLM_FIELDS = ("page_title", "section_title", "caption", "headings", "body")

KEYWORD_METHODS = ("lm", "mlm", "wtable", "wikitable", "ltr-k", "str-k")
MATCH_METHODS = (
    "msje",
    "schema",
    "entity",
    "nguyen",
    "infogather",
    "ltr-t1",
    "ltr-t2",
    "str-t1",
    "str-t2",
    "str-t3",
    "str-t4",
)


class ConfigError(ValueError):
    """Raised for unusable configuration (missing paths, bad values)."""


@dataclass
class Config:
    corpus: str | None = None
    index_dir: str | None = None
    kb: str | None = None
    out_links: str | None = None
    word_emb: str | None = None
    graph_emb: str | None = None
    heading_stats: str | None = None
    yrank: str | None = None
    k: int = 10
    delta: float = 0.8
    alpha: float = 0.5
    seed: int = 0
    gain: str = "exp"
    folds: int = 5
    n_trees: int = 1000
    mtry: int = 3
    min_leaf: int = 1
    pool_depth: int = 150
    mlm_weights: dict[str, float] | None = None

    @classmethod
    def load(cls, path: str | Path) -> "Config":
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        known = {f.name for f in dc_fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        config = cls(**payload)
        config.validate()
        return config

    def validate(self) -> None:
        for name in ("corpus", "index_dir", "kb", "out_links", "word_emb",
                     "graph_emb", "heading_stats", "yrank"):
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"configured path for {name} does not exist: {value}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError("delta must lie in [0, 1]")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if self.gain not in ("exp", "linear"):
            raise ConfigError("gain must be 'exp' or 'linear'")

    def override(self, **kwargs) -> "Config":
        known = {f.name for f in dc_fields(type(self))}
        updates = {k: v for k, v in kwargs.items() if v is not None}
        unknown = set(updates) - known
        if unknown:
            raise ConfigError(f"unknown config overrides: {sorted(unknown)}")
        merged = Config(**{**self.__dict__, **updates})
        merged.validate()
        return merged


class Workspace:
    """All loaded providers plus the ranking entry points."""

    def __init__(
        self,
        config: Config,
        tables: Sequence[Table] = (),
        index: Index | None = None,
        kb: KnowledgeBase | None = None,
        word_store: EmbeddingStore | None = None,
        graph_store: EmbeddingStore | None = None,
        heading_stats: HeadingStats | None = None,
        yrank: YRankProvider | None = None,
    ):
        self.config = config
        self.tables = list(tables)
        self.table_by_id = {t.id: t for t in self.tables}
        self.index = index
        self.kb = kb
        self.word_store = word_store
        self.graph_store = graph_store
        self.heading_stats = heading_stats
        self.yrank = yrank
        self.page_groups = group_tables_by_page(self.tables) if self.tables else {}
        self.entity_index = build_entity_index(kb) if kb is not None else None
        self._ctx: SemanticContext | None = None

    @classmethod
    def load(cls, config: Config) -> "Workspace":
        tables: list[Table] = []
        if config.corpus is not None:
            tables, errors = iter_corpus_file(config.corpus)
            if errors:
                raise ConfigError(
                    f"corpus {config.corpus} has {len(errors)} malformed records "
                    f"(first: line {errors[0].line_no}: {errors[0].message})"
                )
        index = None
        if config.index_dir is not None:
            index = Index.load(config.index_dir)
        elif tables:
            index = build_table_index(tables)
        kb = None
        if config.kb is not None:
            with open(config.kb, encoding="utf-8") as fh:
                kb = load_kb(fh)
            if config.out_links is not None:
                with open(config.out_links, encoding="utf-8") as fh:
                    kb = load_out_links(fh, kb)
        word_store = None
        if config.word_emb is not None:
            with open(config.word_emb, encoding="utf-8") as fh:
                word_store = load_embeddings(fh, kind="word")
        graph_store = None
        if config.graph_emb is not None:
            with open(config.graph_emb, encoding="utf-8") as fh:
                graph_store = load_embeddings(fh, kind="graph")
        stats = None
        if config.heading_stats is not None:
            with open(config.heading_stats, encoding="utf-8") as fh:
                stats = HeadingStats.parse(fh)
        elif tables:
            stats = HeadingStats.from_tables(tables)
        yrank = None
        if config.yrank is not None:
            with open(config.yrank, encoding="utf-8") as fh:
                yrank = YRankProvider.parse(fh)
        return cls(
            config,
            tables=tables,
            index=index,
            kb=kb,
            word_store=word_store,
            graph_store=graph_store,
            heading_stats=stats,
            yrank=yrank,
        )

    # -- provider access with clear failures --------------------------------

    def require_index(self) -> Index:
        if self.index is None:
            raise ConfigError("this method needs an index: set corpus or index_dir")
        return self.index

    def require_tables(self) -> Mapping[str, Table]:
        if not self.table_by_id:
            raise ConfigError("this method needs the corpus tables: set corpus")
        return self.table_by_id

    def require_kb(self) -> KnowledgeBase:
        if self.kb is None:
            raise ConfigError("this method needs a knowledge base: set kb")
        return self.kb

    def require_stats(self) -> HeadingStats:
        if self.heading_stats is None:
            raise ConfigError("this method needs heading statistics")
        return self.heading_stats

    def semantic_context(self) -> SemanticContext:
        if self._ctx is None:
            if self.kb is None or self.entity_index is None:
                raise ConfigError("semantic methods need a knowledge base: set kb")
            if self.word_store is None or self.graph_store is None:
                raise ConfigError(
                    "semantic methods need embeddings: set word_emb and graph_emb"
                )
            self._ctx = SemanticContext(
                kb=self.kb,
                entity_index=self.entity_index,
                word_store=self.word_store,
                graph_store=self.graph_store,
                table_index=self.index,
                heading_stats=self.heading_stats,
                page_groups=self.page_groups,
                k=self.config.k,
            )
        return self._ctx

    # -- keyword search ------------------------------------------------------

    def mlm_config(self) -> MLMConfig:
        if self.config.mlm_weights:
            return MLMConfig(weights=dict(self.config.mlm_weights))
        return uniform_config(MLM_FIELDS)

    def keyword_candidates(self, query: str) -> list[str]:
        index = self.require_index()
        tokens = tokenize(query)
        docs: set[str] = set()
        for term in set(tokens):
            docs.update(doc_id for doc_id, _ in index.postings(term, CATCHALL))
        return sorted(docs)

    def keyword_feature_vector(self, method: str, query: str, table: Table) -> FeatureVector:
        index = self.require_index()
        base_kwargs = dict(
            stats=self.heading_stats,
            page_group=self.page_groups.get(table.page_title),
            yrank=self.yrank,
        )
        if method in ("wtable", "wikitable", "ltr-k"):
            return ltr_keyword_features(query, table, index, **base_kwargs)
        if method == "str-k":
            base = ltr_keyword_features(query, table, index, **base_kwargs)
            return base.concat(str_keyword_features(query, table, self.semantic_context()))
        raise ConfigError(f"method {method!r} has no keyword feature vector")

    def search(
        self,
        query: str,
        method: str = "mlm",
        k: int = 20,
        model: ForestModel | LinearModel | None = None,
    ) -> list[tuple[str, float]]:
        """Rank corpus tables for a keyword query."""
        index = self.require_index()
        if method == "lm":
            return rank_documents(tokenize(query), index, single_field_config(CATCHALL), k=k)
        if method == "mlm":
            return rank_documents(tokenize(query), index, self.mlm_config(), k=k)
        if method not in KEYWORD_METHODS:
            raise ConfigError(f"unknown search method {method!r}")
        if model is None:
            raise ConfigError(f"method {method!r} needs a trained model")
        tables = self.require_tables()
        scored = []
        for doc_id in self.keyword_candidates(query):
            table = tables.get(doc_id)
            if table is None:
                continue
            vec = self.keyword_feature_vector(method, query, table)
            if isinstance(model, ForestModel):
                score = predict_instance(model, vec)
            else:
                score = model.predict_instance(vec)
            scored.append((doc_id, score))
        scored.sort(key=lambda x: (-x[1], x[0]))
        return scored[:k]

    # -- table matching ------------------------------------------------------

    def match_candidates(self, query_table: Table) -> list[str]:
        return candidate_pool(
            query_table,
            self.require_index(),
            self.kb,
            per_query=self.config.pool_depth,
        )

    def table_feature_vector(self, method: str, qt: Table, ct: Table) -> FeatureVector:
        if method in ("ltr-t1", "ltr-t2"):
            return ltr_table_features(
                qt,
                ct,
                method.removeprefix("ltr-"),
                self.require_index(),
                self.require_kb(),
                self.require_stats(),
                self.page_groups,
                delta=self.config.delta,
                alpha=self.config.alpha,
            )
        if method.startswith("str-t"):
            return str_table_features(
                qt, ct, method.removeprefix("str-"), self.semantic_context()
            )
        raise ConfigError(f"method {method!r} has no table feature vector")

    def match(
        self,
        query_table: Table,
        method: str = "msje",
        k: int = 20,
        model: ForestModel | LinearModel | None = None,
    ) -> list[tuple[str, float]]:
        """Rank corpus tables against an input table over the candidate pool."""
        if method not in MATCH_METHODS:
            raise ConfigError(f"unknown match method {method!r}")
        tables = self.require_tables()
        pool = self.match_candidates(query_table)
        scored: list[tuple[str, float]] = []
        for doc_id in pool:
            ct = tables.get(doc_id)
            if ct is None:
                continue
            if method == "msje":
                score = msje_score(query_table, ct, self.config.delta)
            elif method == "schema":
                score = schema_complement_score(query_table, ct, self.require_stats())
            elif method == "entity":
                score = entity_complement_score(query_table, ct, self.require_kb())
            elif method == "nguyen":
                score = nguyen_score(query_table, ct, self.config.alpha, self.config.delta)
            elif method == "infogather":
                score = infogather_score(query_table, ct, self.require_index())
            else:
                if model is None:
                    raise ConfigError(f"method {method!r} needs a trained model")
                vec = self.table_feature_vector(method, query_table, ct)
                if isinstance(model, ForestModel):
                    score = predict_instance(model, vec)
                else:
                    score = model.predict_instance(vec)
            scored.append((doc_id, score))
        scored.sort(key=lambda x: (-x[1], x[0]))
        return scored[:k]
