"""Configuration handling and workspace-level search and match dispatch."""

import json

import numpy as np
import pytest

from tablerank.corpus import dump_corpus
from tablerank.embeddings import dump_embeddings
from tablerank.features import QUERY_FEATURE_NAMES
from tablerank.kb import dump_kb
from tablerank.lexical import rank_documents, single_field_config, uniform_config
from tablerank.ltr import LinearModel
from tablerank.pipeline import (
    Config,
    ConfigError,
    KEYWORD_METHODS,
    MATCH_METHODS,
    MLM_FIELDS,
    Workspace,
)
from tablerank.tablematch import (
    entity_complement_score,
    infogather_score,
    msje_score,
    nguyen_score,
    schema_complement_score,
)
from tablerank.textindex import CATCHALL, tokenize


class TestConfig:
    def test_defaults(self):
        cfg = Config()
        assert cfg.k == 10 and cfg.delta == 0.8 and cfg.alpha == 0.5
        assert cfg.gain == "exp" and cfg.folds == 5
        cfg.validate()

    def test_load_round_trip(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"k": 7, "delta": 0.6, "seed": 3}))
        cfg = Config.load(path)
        assert cfg.k == 7 and cfg.delta == 0.6 and cfg.seed == 3

    def test_load_rejects_unknown_keys(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"kk": 7}))
        with pytest.raises(ConfigError):
            Config.load(path)

    def test_load_rejects_bad_json_and_missing_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            Config.load(path)
        with pytest.raises(ConfigError):
            Config.load(tmp_path / "absent.json")

    def test_validate_rejects_missing_paths_and_bad_values(self, tmp_path):
        with pytest.raises(ConfigError):
            Config(corpus=str(tmp_path / "nope.jsonl")).validate()
        with pytest.raises(ConfigError):
            Config(k=0).validate()
        with pytest.raises(ConfigError):
            Config(delta=1.5).validate()
        with pytest.raises(ConfigError):
            Config(alpha=-0.1).validate()
        with pytest.raises(ConfigError):
            Config(gain="log").validate()

    def test_override_merges_and_validates(self):
        cfg = Config(k=5)
        merged = cfg.override(k=9, delta=None)
        assert merged.k == 9 and merged.delta == 0.8
        assert cfg.k == 5  # original untouched
        with pytest.raises(ConfigError):
            cfg.override(bogus=1)
        with pytest.raises(ConfigError):
            cfg.override(k=0)


@pytest.fixture(scope="module")
def loaded_workspace(tmp_path_factory, collection):
    """Round-trip the synthetic collection through files, then Workspace.load."""
    root = tmp_path_factory.mktemp("ws")
    corpus_path = root / "corpus.jsonl"
    with open(corpus_path, "w", encoding="utf-8") as fh:
        dump_corpus(collection.tables, fh)
    kb_path = root / "kb.jsonl"
    with open(kb_path, "w", encoding="utf-8") as fh:
        dump_kb(collection.kb, fh)
    word_path = root / "word.vec"
    with open(word_path, "w", encoding="utf-8") as fh:
        dump_embeddings(collection.word_store, fh)
    graph_path = root / "graph.vec"
    with open(graph_path, "w", encoding="utf-8") as fh:
        dump_embeddings(collection.graph_store, fh)
    yrank_path = root / "yrank.tsv"
    yrank_path.write_text("topic0 records\t" + collection.tables[0].id + "\t2\n")
    cfg = Config(
        corpus=str(corpus_path),
        kb=str(kb_path),
        word_emb=str(word_path),
        graph_emb=str(graph_path),
        yrank=str(yrank_path),
    )
    return Workspace.load(cfg)


class TestWorkspaceLoad:
    def test_providers_present(self, loaded_workspace, collection):
        ws = loaded_workspace
        assert len(ws.tables) == len(collection.tables)
        assert ws.index is not None and ws.index.n_docs == len(collection.tables)
        assert ws.kb is not None and len(ws.kb) == len(collection.kb)
        assert len(ws.word_store) == len(collection.word_store)
        assert len(ws.graph_store) == len(collection.graph_store)
        assert ws.heading_stats is not None
        assert ws.heading_stats.total_tables == len(collection.tables)
        assert ws.yrank.get("topic0 records", collection.tables[0].id) == 2

    def test_search_results_survive_round_trip(self, loaded_workspace, collection):
        direct = collection.workspace.search("topic0 records", method="mlm", k=5)
        loaded = loaded_workspace.search("topic0 records", method="mlm", k=5)
        assert [d for d, _ in direct] == [d for d, _ in loaded]
        for (_, a), (_, b) in zip(direct, loaded):
            assert a == pytest.approx(b, abs=1e-12)

    def test_malformed_corpus_rejected(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id": "t1"}\n{"nope": 1}\n')
        with pytest.raises(ConfigError):
            Workspace.load(Config(corpus=str(bad)))

    def test_index_dir_loading(self, tmp_path, collection):
        index_dir = tmp_path / "index"
        collection.workspace.index.save(index_dir)
        ws = Workspace.load(Config(index_dir=str(index_dir)))
        assert ws.index.n_docs == collection.workspace.index.n_docs
        assert ws.tables == []


class TestRequireHelpers:
    def test_empty_workspace_refuses_everything(self):
        ws = Workspace(Config())
        with pytest.raises(ConfigError):
            ws.require_index()
        with pytest.raises(ConfigError):
            ws.require_tables()
        with pytest.raises(ConfigError):
            ws.require_kb()
        with pytest.raises(ConfigError):
            ws.require_stats()
        with pytest.raises(ConfigError):
            ws.semantic_context()

    def test_semantic_context_needs_embeddings(self, collection):
        ws = Workspace(Config(), tables=collection.tables)
        ws.kb = collection.kb
        ws.entity_index = collection.workspace.entity_index
        with pytest.raises(ConfigError, match="embeddings"):
            ws.semantic_context()


class TestMlmConfig:
    def test_default_uniform_over_textual_fields(self, collection):
        cfg = collection.workspace.mlm_config()
        assert cfg.weights == uniform_config(MLM_FIELDS).weights

    def test_explicit_weights_win(self, collection):
        ws = Workspace(Config(mlm_weights={"caption": 1.0}), tables=collection.tables)
        assert ws.mlm_config().weights == {"caption": 1.0}


class TestSearchDispatch:
    def test_lm_is_single_field_catchall(self, collection):
        ws = collection.workspace
        got = ws.search("topic0 records", method="lm", k=5)
        want = rank_documents(
            tokenize("topic0 records"), ws.index, single_field_config(CATCHALL), k=5
        )
        assert got == want

    def test_mlm_uses_workspace_config(self, collection):
        ws = collection.workspace
        got = ws.search("topic0 records", method="mlm", k=5)
        want = rank_documents(tokenize("topic0 records"), ws.index, ws.mlm_config(), k=5)
        assert got == want

    def test_unknown_method_and_missing_model(self, collection):
        ws = collection.workspace
        with pytest.raises(ConfigError):
            ws.search("x", method="bm25")
        for method in ("wtable", "wikitable", "ltr-k", "str-k"):
            with pytest.raises(ConfigError):
                ws.search("x", method=method)

    def test_candidates_are_catchall_posting_union(self, collection):
        ws = collection.workspace
        tokens = set(tokenize("topic0 records"))
        want = set()
        for term in tokens:
            want.update(d for d, _ in ws.index.postings(term, CATCHALL))
        assert ws.keyword_candidates("topic0 records") == sorted(want)

    def test_model_backed_search_scores_with_feature_vector(self, collection):
        ws = collection.workspace
        vec = ws.keyword_feature_vector("ltr-k", "topic0 records",
                                        collection.tables[0])
        coef = np.array([1.0 if n == "mlm_score" else 0.0 for n in vec.schema])
        model = LinearModel(schema=vec.schema, coef=coef, intercept=0.0)
        got = ws.search("topic0 records", method="ltr-k", k=4, model=model)
        assert len(got) == 4
        assert all(got[i][1] >= got[i + 1][1] for i in range(len(got) - 1))
        for doc_id, score in got:
            table = ws.table_by_id[doc_id]
            expect = ws.keyword_feature_vector("ltr-k", "topic0 records", table)
            assert score == pytest.approx(expect.as_dict()["mlm_score"], abs=1e-12)

    def test_str_k_search_with_flat_model(self, collection):
        ws = collection.workspace
        vec = ws.keyword_feature_vector("str-k", "topic0 records", collection.tables[0])
        assert len(vec) == 35
        model = LinearModel(schema=vec.schema, coef=np.zeros(35), intercept=1.0)
        got = ws.search("topic0 records", method="str-k", k=3, model=model)
        assert len(got) == 3
        # constant model: candidates tie and ids break the tie
        assert [d for d, _ in got] == sorted(ws.keyword_candidates("topic0 records"))[:3]


class TestMatchDispatch:
    def test_score_methods_agree_with_functions(self, collection):
        ws = collection.workspace
        qt = collection.train_inputs[0]
        checks = {
            "msje": lambda ct: msje_score(qt, ct, ws.config.delta),
            "schema": lambda ct: schema_complement_score(qt, ct, ws.heading_stats),
            "entity": lambda ct: entity_complement_score(qt, ct, ws.kb),
            "nguyen": lambda ct: nguyen_score(qt, ct, ws.config.alpha, ws.config.delta),
            "infogather": lambda ct: infogather_score(qt, ct, ws.index),
        }
        pool = set(ws.match_candidates(qt))
        for method, fn in checks.items():
            got = ws.match(qt, method=method, k=5)
            assert all(doc_id in pool for doc_id, _ in got)
            assert all(s1 >= s2 for (_, s1), (_, s2) in zip(got, got[1:]))
            for doc_id, score in got:
                assert score == pytest.approx(fn(ws.table_by_id[doc_id]), abs=1e-12)

    def test_model_methods_without_model_refused(self, collection):
        ws = collection.workspace
        qt = collection.train_inputs[0]
        for method in ("ltr-t1", "ltr-t2", "str-t1", "str-t2", "str-t3", "str-t4"):
            with pytest.raises(ConfigError):
                ws.match(qt, method=method)
        with pytest.raises(ConfigError):
            ws.match(qt, method="join")

    def test_model_backed_match(self, collection):
        ws = collection.workspace
        qt = collection.train_inputs[0]
        ct = collection.tables[0]
        schema = ws.table_feature_vector("ltr-t2", qt, ct).schema
        assert len(schema) == 26
        coef = np.array([1.0 if n == "msje" else 0.0 for n in schema])
        model = LinearModel(schema=schema, coef=coef, intercept=0.0)
        got = ws.match(qt, method="ltr-t2", k=5, model=model)
        for doc_id, score in got:
            want = msje_score(qt, ws.table_by_id[doc_id], ws.config.delta)
            assert score == pytest.approx(want, abs=1e-12)

    def test_k_truncation_and_self_exclusion(self, collection):
        ws = collection.workspace
        qt = collection.train_inputs[0]
        got = ws.match(qt, method="msje", k=3)
        assert len(got) <= 3
        assert all(doc_id != qt.id for doc_id, _ in got)

    def test_method_lists_are_wired(self):
        assert set(KEYWORD_METHODS) == {"lm", "mlm", "wtable", "wikitable", "ltr-k", "str-k"}
        assert len(MATCH_METHODS) == 11

    def test_query_feature_names_stable(self):
        assert QUERY_FEATURE_NAMES[0] == "query_len"
