"""Command line front end.

Subcommands: build-index, search, match, features, train, eval, serve.
Exit codes: 0 on success, 1 for usage errors, 2 for data or configuration
errors (missing files, malformed records, method/provider mismatches).
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys
from pathlib import Path
from typing import IO, Iterator, Sequence

from .corpus import Table, parse_record
from .evaluation import Qrels, Run, ndcg, paired_ttest
from .features import dump_feature_rows, parse_feature_rows
from .ltr import (
    TrainingInstance,
    WEBTABLE_FEATURES,
    WIKITABLE_FEATURES,
    cross_validate,
    fit_forest_instances,
    fit_lasso,
    fit_linear_regression,
    load_linear_model,
    load_model,
    save_linear_model,
    save_model,
)
from .pipeline import (
    Config,
    ConfigError,
    KEYWORD_METHODS,
    MATCH_METHODS,
    Workspace,
)
from .textindex import build_table_index

MODEL_KEYWORD_METHODS = ("wtable", "wikitable", "ltr-k", "str-k")
MODEL_MATCH_METHODS = ("ltr-t1", "ltr-t2", "str-t1", "str-t2", "str-t3", "str-t4")


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; remap to the usage-error code."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _workspace_options() -> _Parser:
    parent = _Parser(add_help=False)
    g = parent.add_argument_group("workspace")
    g.add_argument("--config", help="JSON config file; flags below override it")
    g.add_argument("--corpus", help="corpus file (one table record per line)")
    g.add_argument("--index", dest="index_dir", help="prebuilt index directory")
    g.add_argument("--kb", help="knowledge base file")
    g.add_argument("--out-links", help="entity out-link file replacing inline links")
    g.add_argument("--word-emb", help="word embedding file")
    g.add_argument("--graph-emb", help="entity graph embedding file")
    g.add_argument("--heading-stats", help="heading co-occurrence statistics file")
    g.add_argument("--yrank", help="external page search rank file")
    g.add_argument("--k", type=int, help="result cutoff (default 10)")
    g.add_argument("--seed", type=int, help="random seed")
    g.add_argument("--gain", choices=("exp", "linear"), help="NDCG gain function")
    g.add_argument("--delta", type=float, help="heading edit-similarity threshold")
    g.add_argument("--alpha", type=float, help="heading/data interpolation weight")
    g.add_argument("--folds", type=int, help="cross-validation fold count")
    return parent


def _config_from_args(args: argparse.Namespace) -> Config:
    config = Config.load(args.config) if args.config else Config()
    return config.override(
        corpus=args.corpus,
        index_dir=args.index_dir,
        kb=args.kb,
        out_links=args.out_links,
        word_emb=args.word_emb,
        graph_emb=args.graph_emb,
        heading_stats=args.heading_stats,
        yrank=args.yrank,
        k=args.k,
        seed=args.seed,
        gain=args.gain,
        delta=args.delta,
        alpha=args.alpha,
        folds=args.folds,
    )


@contextlib.contextmanager
def _open_out(path: str | None) -> Iterator[IO[str]]:
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _load_any_model(path: str):
    if path.endswith(".npz"):
        return load_model(path)
    return load_linear_model(path)


def _parse_queries(lines: Iterator[str]) -> list[tuple[str, str]]:
    queries = []
    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        qid, sep, text = line.partition("\t")
        if not sep or not qid or not text:
            raise ValueError(f"queries line {line_no}: expected 'id<TAB>text'")
        queries.append((qid, text))
    return queries


def _read_queries(args: argparse.Namespace) -> list[tuple[str, str]]:
    if args.query is not None:
        return [("q1", args.query)]
    with open(args.queries, encoding="utf-8") as fh:
        queries = _parse_queries(fh)
    if not queries:
        raise ValueError(f"no queries in {args.queries}")
    return queries


def _read_input_tables(args: argparse.Namespace, ws: Workspace) -> list[Table]:
    tables: list[Table] = []
    if args.table_id:
        by_id = ws.require_tables()
        for table_id in args.table_id:
            if table_id not in by_id:
                raise ValueError(f"table {table_id!r} is not in the corpus")
            tables.append(by_id[table_id])
    if args.tables:
        with open(args.tables, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    tables.append(parse_record(json.loads(line)))
                except (json.JSONDecodeError, ValueError) as exc:
                    raise ValueError(f"{args.tables} line {line_no}: {exc}") from exc
    if not tables:
        raise ValueError("no input tables: pass --table-id or --tables")
    return tables


# -- subcommands -------------------------------------------------------------


def cmd_build_index(args: argparse.Namespace) -> int:
    from .corpus import iter_corpus_file

    tables, errors = iter_corpus_file(args.corpus, strict=args.strict)
    if errors:
        for err in errors[:10]:
            print(f"skipped line {err.line_no}: {err.message}", file=sys.stderr)
        if len(errors) > 10:
            print(f"... and {len(errors) - 10} more", file=sys.stderr)
    if not tables:
        raise ValueError(f"no usable tables in {args.corpus}")
    index = build_table_index(tables)
    index.save(args.out)
    print(f"indexed {len(tables)} tables into {args.out}", file=sys.stderr)
    return 0


def cmd_search(args: argparse.Namespace) -> int:
    ws = Workspace.load(_config_from_args(args))
    queries = _read_queries(args)
    model = _load_any_model(args.model) if args.model else None
    if model is None and args.method in MODEL_KEYWORD_METHODS:
        raise ConfigError(f"method {args.method!r} needs --model")
    run = Run(tag=args.tag or args.method)
    k = args.k if args.k is not None else ws.config.k
    for qid, text in queries:
        run.set_ranking(qid, ws.search(text, method=args.method, k=k, model=model))
    with _open_out(args.out) as sink:
        run.dump(sink)
    return 0


def cmd_match(args: argparse.Namespace) -> int:
    ws = Workspace.load(_config_from_args(args))
    inputs = _read_input_tables(args, ws)
    model = _load_any_model(args.model) if args.model else None
    if model is None and args.method in MODEL_MATCH_METHODS:
        raise ConfigError(f"method {args.method!r} needs --model")
    run = Run(tag=args.tag or args.method)
    k = args.k if args.k is not None else ws.config.k
    for qt in inputs:
        run.set_ranking(qt.id, ws.match(qt, method=args.method, k=k, model=model))
    with _open_out(args.out) as sink:
        run.dump(sink)
    return 0


def cmd_features(args: argparse.Namespace) -> int:
    ws = Workspace.load(_config_from_args(args))
    qrels = None
    if args.qrels:
        with open(args.qrels, encoding="utf-8") as fh:
            qrels = Qrels.parse(fh)
    by_id = ws.require_tables()
    rows = []
    if args.method in MODEL_KEYWORD_METHODS:
        for qid, text in _read_queries(args):
            doc_ids = set(ws.keyword_candidates(text))
            if qrels is not None:
                doc_ids.update(d for d in qrels.judged(qid) if d in by_id)
            for doc_id in sorted(doc_ids):
                vec = ws.keyword_feature_vector(args.method, text, by_id[doc_id])
                rows.append((qid, doc_id, vec))
    elif args.method in MODEL_MATCH_METHODS:
        for qt in _read_input_tables(args, ws):
            doc_ids = set(ws.match_candidates(qt))
            if qrels is not None:
                doc_ids.update(
                    d for d in qrels.judged(qt.id) if d in by_id and d != qt.id
                )
            for doc_id in sorted(doc_ids):
                vec = ws.table_feature_vector(args.method, qt, by_id[doc_id])
                rows.append((qt.id, doc_id, vec))
    else:
        raise ConfigError(f"method {args.method!r} has no feature representation")
    label_of = (lambda qid, doc_id: qrels.grade(qid, doc_id)) if qrels else None
    with _open_out(args.out) as sink:
        dump_feature_rows(rows, sink, label_of=label_of)
    return 0


_FEATURE_SUBSETS = {
    "all": None,
    "webtable": WEBTABLE_FEATURES,
    "wikitable": WIKITABLE_FEATURES,
}


def cmd_train(args: argparse.Namespace) -> int:
    with open(args.features, encoding="utf-8") as fh:
        parsed = parse_feature_rows(fh)
    if not parsed:
        raise ValueError(f"no feature rows in {args.features}")
    instances = []
    for qid, doc_id, vec, label in parsed:
        if label is None:
            raise ValueError("training needs labelled rows; regenerate with --qrels")
        instances.append(TrainingInstance(qid, doc_id, vec, label))
    subset = _FEATURE_SUBSETS[args.subset]
    if subset is not None:
        instances = [
            TrainingInstance(i.query_id, i.doc_id, i.features.project(subset), i.label)
            for i in instances
        ]
    if args.cv:
        fit_kwargs = {}
        if args.model_type == "forest":
            fit_kwargs = dict(n_trees=args.n_trees, mtry=args.mtry, min_leaf=args.min_leaf)
        elif args.model_type == "lasso":
            fit_kwargs = dict(alpha=args.lasso_alpha)
        result = cross_validate(
            instances,
            k=args.folds,
            cutoff=args.cutoff,
            gain=args.gain,
            seed=args.seed,
            model=args.model_type,
            **fit_kwargs,
        )
        for fold_id, score in enumerate(result.fold_scores):
            print(f"fold {fold_id}\tndcg@{args.cutoff}\t{score:.4f}")
        print(f"mean\tndcg@{args.cutoff}\t{result.mean:.4f}")
    if args.model_type == "forest":
        model = fit_forest_instances(
            instances,
            n_trees=args.n_trees,
            mtry=args.mtry,
            min_leaf=args.min_leaf,
            seed=args.seed,
        )
        save_model(model, args.out)
    elif args.model_type == "linear":
        save_linear_model(fit_linear_regression(instances), args.out)
    else:
        save_linear_model(fit_lasso(instances, alpha=args.lasso_alpha), args.out)
    print(f"saved {args.model_type} model to {args.out}", file=sys.stderr)
    return 0


def _significance_mark(p: float) -> str:
    if p < 0.005:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def cmd_eval(args: argparse.Namespace) -> int:
    with open(args.qrels, encoding="utf-8") as fh:
        qrels = Qrels.parse(fh)
    with open(args.run, encoding="utf-8") as fh:
        run = Run.parse(fh)
    compare = None
    if args.compare:
        with open(args.compare, encoding="utf-8") as fh:
            compare = Run.parse(fh)
    cutoffs = [int(x) for x in args.cutoffs.split(",")]
    if any(c < 1 for c in cutoffs):
        raise ValueError("cutoffs must be positive")
    qids = qrels.query_ids()
    for cutoff in cutoffs:
        base = ndcg(run, qrels, cutoff, gain=args.gain)
        if compare is None:
            print(f"ndcg@{cutoff}\t{base.mean:.4f}")
        else:
            other = ndcg(compare, qrels, cutoff, gain=args.gain)
            test = paired_ttest(
                [base.per_query[q] for q in qids], [other.per_query[q] for q in qids]
            )
            mark = _significance_mark(test.p_value)
            print(
                f"ndcg@{cutoff}\t{base.mean:.4f}\t{other.mean:.4f}"
                f"\t{other.mean - base.mean:+.4f}\tp={test.p_value:.4f}\t{mark}"
            )
    if args.per_query:
        base = ndcg(run, qrels, cutoffs[0], gain=args.gain)
        for qid in qids:
            print(f"{qid}\tndcg@{cutoffs[0]}\t{base.per_query[qid]:.4f}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    from .server import serve

    ws = Workspace.load(_config_from_args(args))
    models = {}
    if args.model:
        if not args.model_method:
            raise ConfigError("--model needs --model-method to name its method")
        models[args.model_method] = _load_any_model(args.model)
    print(f"listening on 127.0.0.1:{args.port}", file=sys.stderr)
    serve(ws, args.port, models)
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="tablerank", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    ws_opts = _workspace_options()

    p = sub.add_parser("build-index", help="build and save an inverted index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="output index directory")
    p.add_argument("--strict", action="store_true", help="fail on malformed records")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("search", parents=[ws_opts], help="rank tables for keyword queries")
    q = p.add_mutually_exclusive_group(required=True)
    q.add_argument("--query", help="single query string")
    q.add_argument("--queries", help="file of 'id<TAB>text' lines")
    p.add_argument("--method", choices=KEYWORD_METHODS, default="mlm")
    p.add_argument("--model", help="trained model for feature-based methods")
    p.add_argument("--tag", help="run tag (default: method name)")
    p.add_argument("--out", help="write the run here instead of stdout")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("match", parents=[ws_opts], help="rank tables against input tables")
    p.add_argument("--table-id", action="append", help="corpus table id (repeatable)")
    p.add_argument("--tables", help="file of JSON table records, one per line")
    p.add_argument("--method", choices=MATCH_METHODS, default="msje")
    p.add_argument("--model", help="trained model for feature-based methods")
    p.add_argument("--tag", help="run tag (default: method name)")
    p.add_argument("--out", help="write the run here instead of stdout")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("features", parents=[ws_opts], help="dump feature vectors")
    p.add_argument("--method", required=True, choices=MODEL_KEYWORD_METHODS + MODEL_MATCH_METHODS)
    q = p.add_mutually_exclusive_group()
    q.add_argument("--query", help="single query string (keyword methods)")
    q.add_argument("--queries", help="file of 'id<TAB>text' lines (keyword methods)")
    p.add_argument("--table-id", action="append", help="corpus table id (table methods)")
    p.add_argument("--tables", help="file of JSON table records (table methods)")
    p.add_argument("--qrels", help="relevance judgments; adds a label column")
    p.add_argument("--out", help="write rows here instead of stdout")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="fit a ranking model from dumped features")
    p.add_argument("--features", required=True, help="labelled feature file")
    p.add_argument("--model-type", choices=("forest", "linear", "lasso"), default="forest")
    p.add_argument("--out", required=True, help="model output path (.npz or .json)")
    p.add_argument("--subset", choices=sorted(_FEATURE_SUBSETS), default="all",
                   help="restrict training to a named feature subset")
    p.add_argument("--n-trees", type=int, default=1000)
    p.add_argument("--mtry", type=int, default=3)
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lasso-alpha", type=float, default=0.01)
    p.add_argument("--cv", action="store_true", help="report cross-validation before fitting")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--cutoff", type=int, default=20, help="NDCG cutoff for --cv")
    p.add_argument("--gain", choices=("exp", "linear"), default="exp")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score runs against relevance judgments")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--cutoffs", default="5,10,15,20", help="comma-separated cutoffs")
    p.add_argument("--gain", choices=("exp", "linear"), default="exp")
    p.add_argument("--compare", help="second run; adds a paired significance test")
    p.add_argument("--per-query", action="store_true",
                   help="also print per-query values at the first cutoff")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", parents=[ws_opts], help="run the HTTP service")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--model", help="preload a trained model")
    p.add_argument("--model-method", help="method served by the preloaded model")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130
    except BrokenPipeError:
        return 0
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
