"""Command line entry point: ``queryvar <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

from . import core
from .adapters import RerankerAdapter, TransformerAdapter
from .annotation import (
    annotate_session,
    apply_annotations,
    read_records,
    records_from_variations,
    validity_report,
    write_records,
)
from .core import ALL_METHODS, MethodId, Query
from .evaluation import Metric, paired_t_test
from .fusion import FusionConfig, rrf_fuse
from .generators import EmbeddingStore, GeneratorResources, SynonymLexicon, generate_all
from .io import (
    ExperimentManifest,
    load_corpus,
    load_queries,
    parse_qrels,
    parse_run,
    read_variations,
    write_run,
    write_variations,
)
from .retrieval import InvertedIndex, RunList, build_index, rerank, retrieve_top_k

log = logging.getLogger("queryvar")


def _global_options(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = parser.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=d(None), help="global seed (default: 7, or the manifest's)")
    g.add_argument("--stopwords", default=d(None), help="stopword file, one token per line")
    g.add_argument("--metric", default=d(None), help="ndcg@K or recall@K (default ndcg@10)")
    g.add_argument("--rerank-threshold", type=int, default=d(None), help="candidates to re-rank (default 100)")
    g.add_argument("--rrf-k", type=float, default=d(None), help="RRF constant (default 60)")
    g.add_argument("-v", "--verbose", action="store_true", default=d(False))


def _load_index(args) -> InvertedIndex:
    if getattr(args, "index", None):
        return InvertedIndex.from_dict(json.loads(Path(args.index).read_text(encoding="utf-8")))
    if getattr(args, "corpus", None):
        return build_index(load_corpus(args.corpus), stem=args.stem)
    raise SystemExit("need --index or --corpus")


def _load_input_queries(args):
    if getattr(args, "variations", None):
        if not args.method:
            raise SystemExit("--variations needs --method")
        method = MethodId(args.method)
        return [Query(v.qid, v.text) for v in read_variations(args.variations) if v.method is method]
    if getattr(args, "queries", None):
        return load_queries(args.queries)
    raise SystemExit("need --queries or --variations")


def _metric(args) -> Metric:
    return Metric.parse(args.metric or "ndcg@10")


# ---------------------------------------------------------------- commands


def cmd_generate(args):
    queries = load_queries(args.queries)
    methods = [MethodId(m) for m in args.methods] if args.methods else list(ALL_METHODS)
    adapters = {}
    for kind, ep in (("desc_to_title", args.desc_to_title), ("qqp", args.qqp),
                     ("back_translation", args.back_translation)):
        if ep:
            adapters[kind] = TransformerAdapter(ep, kind, pivot_language=args.pivot)
    res = GeneratorResources(
        embeddings=EmbeddingStore.load(args.embeddings) if args.embeddings else None,
        lexicon=SynonymLexicon.load(args.lexicon) if args.lexicon else None,
        adapters=adapters, full_ascii=args.full_ascii,
    )
    try:
        result = generate_all(queries, methods, 7 if args.seed is None else args.seed, res)
    finally:
        for a in adapters.values():
            a.close()
    write_variations(args.out, result.variations)
    if args.failures:
        with open(args.failures, "w", encoding="utf-8") as f:
            for fl in result.failures:
                f.write(json.dumps({"qid": fl.qid, "method": fl.method.value, "reason": fl.reason}) + "\n")
    print(f"{len(result.variations)} variations, {len(result.failures)} failures -> {args.out}")


def cmd_index(args):
    index = build_index(load_corpus(args.corpus), stem=args.stem)
    Path(args.out).write_text(json.dumps(index.to_dict()), encoding="utf-8")
    print(f"indexed {index.num_docs} documents, {len(index.postings)} terms -> {args.out}")


def cmd_retrieve(args):
    index = _load_index(args)
    runs = [retrieve_top_k(index, q, args.k, args.tag) for q in _load_input_queries(args)]
    write_run(args.out, runs)
    print(f"{len(runs)} rankings -> {args.out}")


def cmd_rerank(args):
    index = _load_index(args)
    texts = dict(zip(index.docnos, index.texts))
    candidates = parse_run(args.run)
    threshold = args.rerank_threshold or 100
    adapter = RerankerAdapter(args.reranker)
    out = []
    try:
        for q in _load_input_queries(args):
            if q.qid in candidates:
                out.append(rerank(adapter, q, candidates[q.qid], threshold, texts, args.tag))
    finally:
        adapter.close()
    write_run(args.out, out)
    print(f"{len(out)} re-ranked rankings -> {args.out}")


def cmd_evaluate(args):
    metric = _metric(args)
    qrels = parse_qrels(args.qrels)
    runs = parse_run(args.run)
    base = parse_run(args.baseline) if args.baseline else None
    qids = sorted(set(runs) | (set(base) if base else set()) | set(qrels.qids))
    vals, bvals = [], []
    for qid in qids:
        v = metric(runs.get(qid, RunList(qid)), qrels)
        vals.append(v)
        line = f"{metric}\t{qid}\t{v:.4f}"
        if base is not None:
            b = metric(base.get(qid, RunList(qid)), qrels)
            bvals.append(b)
            line += f"\t{b:.4f}\t{v - b:+.4f}"
        if args.per_query:
            print(line)
    mean = math.fsum(vals) / len(vals) if vals else 0.0
    print(f"{metric}\tall\t{mean:.4f}")
    if base is not None and len(vals) >= 2:
        t, p = paired_t_test(vals, bvals)
        bmean = math.fsum(bvals) / len(bvals)
        print(f"baseline\tall\t{bmean:.4f}\tdelta {mean - bmean:+.4f}\tt {t:.4f}\tp {p:.4g}")


def cmd_fuse(args):
    per_file = [parse_run(p) for p in args.runs]
    qids = sorted(set().union(*per_file))
    cfg = FusionConfig(k_rrf=args.rrf_k or 60.0)
    fused = [rrf_fuse([r[q] for r in per_file if q in r], cfg, args.tag) for q in qids]
    write_run(args.out, fused)
    print(f"fused {len(args.runs)} runs over {len(qids)} queries -> {args.out}")


def cmd_annotate(args):
    queries = {q.qid: q for q in load_queries(args.queries)}
    variations = read_variations(args.inp)
    session = Path(args.session or (str(args.inp) + ".annotations.jsonl"))
    if session.exists():
        records = read_records(session)
    else:
        records = records_from_variations(variations, queries, args.dataset)
        write_records(session, records)
    annotate_session(records, args.annotator, session)
    pending = sum(1 for r in records if not r.complete)
    if pending:
        print(f"{pending} records still need annotation; progress saved to {session}")
        return
    for method, dataset, valid, total, pct in validity_report(records):
        print(f"{method}\t{dataset}\t{valid}/{total}\t{pct}")
    if args.out:
        write_variations(args.out, apply_annotations(variations, records))
        print(f"annotated variations -> {args.out}")


def cmd_report(args):
    from .experiment import load_outputs
    from .report import emit_report

    outputs = load_outputs(args.experiment, args.queries, args.qrels,
                           Metric.parse(args.metric) if args.metric else None)
    if args.rrf_k:
        outputs.k_rrf = args.rrf_k
    written = emit_report(outputs, args.out or args.experiment, figures=not args.no_figures)
    print(f"wrote {len(written)} report files to {args.out or args.experiment}")


def cmd_run_experiment(args):
    from .experiment import run_experiment

    m = ExperimentManifest.load(args.manifest)
    if args.seed is not None:
        m.seed = args.seed
    if args.metric:
        m.metric = Metric.parse(args.metric)
    if args.rerank_threshold:
        m.rerank_threshold = args.rerank_threshold
    if args.rrf_k:
        m.k_rrf = args.rrf_k
    if args.output:
        m.output = Path(args.output)
    if args.stopwords:
        m.stopwords = Path(args.stopwords)
    run_experiment(m, figures=False if args.no_figures else None)
    print(f"report -> {Path(m.output) / 'report.md'}")


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="queryvar", description="Query variation robustness toolkit")
    _global_options(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        _global_options(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("generate", cmd_generate, "generate query variations")
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--methods", nargs="+", choices=[m.value for m in MethodId])
    p.add_argument("--embeddings")
    p.add_argument("--lexicon")
    p.add_argument("--desc-to-title", help="adapter endpoint for T5DescToTitle")
    p.add_argument("--qqp", help="adapter endpoint for T5QQP")
    p.add_argument("--back-translation", help="adapter endpoint for BackTranslation")
    p.add_argument("--pivot", default="de")
    p.add_argument("--full-ascii", action="store_true", help="RandomCharSub draws from printable ASCII")
    p.add_argument("--failures", help="write generation failures here (JSON lines)")

    p = add("index", cmd_index, "build and save an inverted index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stem", action="store_true", help="Porter-stem documents and queries (needs nltk)")

    for name, func, help in (("retrieve", cmd_retrieve, "BM25 retrieval"),
                             ("rerank", cmd_rerank, "re-rank a run with an external model")):
        p = add(name, func, help)
        p.add_argument("--index")
        p.add_argument("--corpus")
        p.add_argument("--stem", action="store_true", help="with --corpus: Porter-stem the index (needs nltk)")
        p.add_argument("--queries")
        p.add_argument("--variations")
        p.add_argument("--method", choices=[m.value for m in MethodId])
        p.add_argument("--out", required=True)
        p.add_argument("--tag", default="bm25" if name == "retrieve" else "rerank")
        if name == "retrieve":
            p.add_argument("--k", type=int, default=1000)
        else:
            p.add_argument("--run", required=True)
            p.add_argument("--reranker", required=True, help="stub:<mode>, cmd:<command> or http URL")

    p = add("evaluate", cmd_evaluate, "score a run, optionally against a baseline")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--baseline")
    p.add_argument("--per-query", action="store_true")

    p = add("fuse", cmd_fuse, "reciprocal rank fusion of run files")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tag", default="rrf")

    p = add("annotate", cmd_annotate, "label variation validity interactively")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--annotator", required=True)
    p.add_argument("--session", help="annotation file (default: <in>.annotations.jsonl)")
    p.add_argument("--dataset", default="")
    p.add_argument("--out", help="write variations with the new labels here")

    p = add("report", cmd_report, "emit the report for an experiment directory")
    p.add_argument("--experiment", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--out")
    p.add_argument("--no-figures", action="store_true")

    p = add("run-experiment", cmd_run_experiment, "run a whole experiment from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--output")
    p.add_argument("--no-figures", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.stopwords and args.command != "run-experiment":
        core.load_stopwords(args.stopwords)
    try:
        args.func(args)
    except (core.QueryVarError, ValueError, OSError) as exc:
        print(f"queryvar: error: {exc}", file=sys.stderr)
        return 1
    finally:
        core.set_stopwords(None)
    return 0


if __name__ == "__main__":
    sys.exit(main())
