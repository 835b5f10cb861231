"""One-command experiments driven by a manifest, and reloading their outputs."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional

from . import core
from .adapters import AdapterEndpoint, RerankerAdapter, TransformerAdapter
from .annotation import apply_annotations, read_records
from .core import MethodId, Query, Validity, Variation
from .evaluation import Metric
from .fusion import ORIGINAL
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
from .report import ExperimentOutputs, emit_report
from .retrieval import RunList, build_index, run_pipeline

log = logging.getLogger(__name__)


def resolve_pending(variations: List[Variation], policy: str) -> List[Variation]:
    """Give still-unannotated variations a manual label according to ``policy``."""
    label = Validity.ManualValid if policy == "valid" else Validity.ManualInvalid
    return [v.with_validity(label) if v.validity is Validity.NeedsAnnotation else v for v in variations]


def build_resources(m: ExperimentManifest) -> GeneratorResources:
    adapters = {kind: TransformerAdapter(AdapterEndpoint.parse(ep, m.base_dir), kind, pivot_language=m.pivot)
                for kind, ep in m.adapters.items()}
    return GeneratorResources(
        embeddings=EmbeddingStore.load(m.embeddings) if m.embeddings else None,
        lexicon=SynonymLexicon.load(m.lexicon) if m.lexicon else None,
        adapters=adapters,
    )


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_.+" else "_" for c in name)


def run_experiment(m: ExperimentManifest, figures: Optional[bool] = None) -> ExperimentOutputs:
    if m.stopwords:
        core.load_stopwords(m.stopwords)
    try:
        return _run(m, m.figures if figures is None else figures)
    finally:
        if m.stopwords:
            core.set_stopwords(None)


def _run(m: ExperimentManifest, figures: bool) -> ExperimentOutputs:
    out_dir = Path(m.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    queries = load_queries(m.queries)
    qrels = parse_qrels(m.qrels)
    index = build_index(load_corpus(m.corpus), stem=m.stem)

    if m.variations:
        variations = read_variations(m.variations)
    else:
        res = build_resources(m)
        try:
            gen = generate_all(queries, m.methods, m.seed, res)
        finally:
            for a in res.adapters.values():
                a.close()
        for f in gen.failures:
            log.info("no %s variation for %s: %s", f.method.value, f.qid, f.reason)
        variations = gen.variations
    write_variations(out_dir / "generated_variations.jsonl", variations)
    if m.annotations:
        variations = apply_annotations(variations, read_records(m.annotations))
    variations = resolve_pending(variations, m.pending_validity)
    write_variations(out_dir / "variations.jsonl", variations)

    by_qid = {q.qid: q for q in queries}
    runs: Dict[str, Dict[object, Dict]] = {}
    for model, endpoint in m.models.items():
        adapter = RerankerAdapter(endpoint) if endpoint else None
        try:
            model_runs = {ORIGINAL: run_pipeline(index, queries, adapter, m.k, m.rerank_threshold, tag=model)}
            for method in m.methods:
                vq = [Query(v.qid, v.text) for v in variations if v.method is method]
                first = by_qid if (m.split and adapter is not None) else None
                if m.split and adapter is None:
                    vq = [by_qid[q.qid] for q in vq]
                model_runs[method] = run_pipeline(index, vq, adapter, m.k, m.rerank_threshold, first, tag=model)
        finally:
            if adapter is not None:
                adapter.close()
        runs[model] = model_runs
        run_dir = out_dir / "runs" / _safe(model)
        run_dir.mkdir(parents=True, exist_ok=True)
        for source, rs in model_runs.items():
            name = source if source == ORIGINAL else source.value
            write_run(run_dir / f"{name}.run", rs.values())

    (out_dir / "experiment.json").write_text(json.dumps({
        "models": list(m.models), "methods": [x.value for x in m.methods], "metric": str(m.metric),
        "k_rrf": m.k_rrf, "variations_only": m.variations_only, "seed": m.seed,
    }, indent=2) + "\n", encoding="utf-8")
    outputs = ExperimentOutputs(queries, variations, qrels, m.metric, runs, list(m.models), list(m.methods),
                                m.k_rrf, m.variations_only)
    emit_report(outputs, out_dir, figures=figures)
    return outputs


def load_outputs(out_dir, queries_path, qrels_path, metric: Optional[Metric] = None) -> ExperimentOutputs:
    """Rebuild :class:`ExperimentOutputs` from a finished experiment directory."""
    out_dir = Path(out_dir)
    info = json.loads((out_dir / "experiment.json").read_text(encoding="utf-8"))
    methods = [MethodId(x) for x in info["methods"]]
    queries = load_queries(queries_path)
    variations = read_variations(out_dir / "variations.jsonl")
    runs = {}
    for model in info["models"]:
        run_dir = out_dir / "runs" / _safe(model)
        # queries that retrieved nothing leave no lines in a run file
        parsed = parse_run(run_dir / f"{ORIGINAL}.run")
        model_runs = {ORIGINAL: {q.qid: parsed.get(q.qid, RunList(q.qid, [], model)) for q in queries}}
        for method in methods:
            p = run_dir / f"{method.value}.run"
            parsed = parse_run(p) if p.exists() else {}
            model_runs[method] = {v.qid: parsed.get(v.qid, RunList(v.qid, [], model))
                                  for v in variations if v.method is method}
        runs[model] = model_runs
    return ExperimentOutputs(
        queries, variations, parse_qrels(qrels_path),
        metric or Metric.parse(info["metric"]), runs, info["models"], methods, info["k_rrf"],
        info["variations_only"],
    )
