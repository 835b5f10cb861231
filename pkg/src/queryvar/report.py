"""Experiment report: markdown grids plus the CSVs every number comes from."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .core import Category, MethodId, Query, Variation
from .evaluation import DeltaRecord, Metric, Qrels, ZeroVariance, compute_deltas, delta_matrix, paired_t_test, pearson
from .fusion import ORIGINAL, FusionConfig, best_query_oracle, fuse_experiment, improvement_distribution
from .io import format_score, write_csv, write_deltas_csv

SYNTAX_CATEGORIES = [Category.Misspelling, Category.Naturality, Category.Ordering, Category.Paraphrasing]


@dataclass
class ExperimentOutputs:
    """Everything the report needs; ``runs[model][source][qid]``."""

    queries: List[Query]
    variations: List[Variation]
    qrels: Qrels
    metric: Metric
    runs: Dict[str, Dict[object, Dict[str, object]]]
    models: List[str] = field(default_factory=list)
    methods: List[MethodId] = field(default_factory=list)
    k_rrf: float = 60.0
    variations_only: bool = False

    def __post_init__(self):
        if not self.models:
            self.models = list(self.runs)
        if not self.methods:
            seen = {v.method for v in self.variations}
            self.methods = [m for m in MethodId if m in seen]


@dataclass
class Cell:
    mean: float
    marker: str
    p: float


def _mean(xs):
    return math.fsum(xs) / len(xs) if xs else 0.0


def _cell(orig: Sequence[float], other: Sequence[float]) -> Cell:
    if len(orig) < 2:
        return Cell(_mean(other), "", math.nan)
    t, p = paired_t_test(other, orig)
    marker = "" if (math.isnan(t) or p >= 0.05) else ("↓" if t < 0 else "↑")
    return Cell(_mean(other), marker, p)


def _fmt_p(p: float) -> str:
    return "" if math.isnan(p) else format_score(p)


class Report:
    def __init__(self, out: ExperimentOutputs):
        self.out = out
        self.qids = [q.qid for q in out.queries]
        self.valid = {(v.qid, v.method) for v in out.variations if v.validity.is_valid}
        self.metric_cache: Dict[tuple, float] = {}

    def m(self, model, source, qid) -> float:
        key = (model, source, qid)
        if key not in self.metric_cache:
            self.metric_cache[key] = self.out.metric(self.out.runs[model][source][qid], self.out.qrels)
        return self.metric_cache[key]

    def original(self, model) -> List[float]:
        return [self.m(model, ORIGINAL, q) for q in self.qids]

    def with_replacement(self, model, method) -> List[float]:
        # invalid or missing variations are replaced by the original query
        return [self.m(model, method, q) if (q, method) in self.valid else self.m(model, ORIGINAL, q)
                for q in self.qids]

    def n_valid(self, method) -> int:
        return sum(1 for q in self.qids if (q, method) in self.valid)

    def deltas(self, model) -> List[DeltaRecord]:
        runs = self.out.runs[model]
        variations = [v for v in self.out.variations if v.method in self.out.methods]
        return compute_deltas(runs[ORIGINAL], runs, variations, self.out.qrels, self.out.metric,
                              valid_only=True, model=model)

    # ------------------------------------------------------------ grids

    def robustness_grid(self):
        """Rows of (category, label, {model: Cell}, #Q); the first row is the original query."""
        rows = [("", "original query", {m: Cell(_mean(self.original(m)), "", math.nan) for m in self.out.models},
                 len(self.qids))]
        for cat in SYNTAX_CATEGORIES:
            for method in (x for x in self.out.methods if x.category is cat):
                cells = {m: _cell(self.original(m), self.with_replacement(m, method)) for m in self.out.models}
                rows.append((cat.value, method.value, cells, self.n_valid(method)))
        return rows

    def fusion_grid(self):
        out = self.out
        groups = [c for c in SYNTAX_CATEGORIES if sum(1 for x in out.methods if x.category is c) > 1]
        configs = [(f"RRF {c.value}", FusionConfig(out.k_rrf, c.value, out.variations_only)) for c in groups]
        configs.append(("RRF All", FusionConfig(out.k_rrf, tuple(out.methods), out.variations_only)))
        rows = [("original query", {m: Cell(_mean(self.original(m)), "", math.nan) for m in out.models})]
        for label, cfg in configs:
            cells = {}
            for model in out.models:
                fused = fuse_experiment(out.runs[model], out.variations, cfg)
                vals = [out.metric(fused[q], out.qrels) for q in self.qids]
                cells[model] = _cell(self.original(model), vals)
            rows.append((label, cells))
        cells = {}
        for model in out.models:
            choice = best_query_oracle(out.runs[model], out.variations, out.qrels, out.metric)
            cells[model] = _cell(self.original(model), [choice[q][1] for q in self.qids])
        rows.append(("best query", cells))
        return rows


def _markdown_grid(header: List[str], rows: List[List[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines)


def _bold_best(cells_by_row: List[Dict[str, Cell]], models) -> Dict[str, float]:
    return {m: max(round(c[m].mean, 4) for c in cells_by_row) for m in models}


def _cell_text(c: Cell, best: float) -> str:
    txt = f"{c.mean:.4f}{c.marker}"
    return f"**{txt}**" if round(c.mean, 4) == best else txt


def emit_report(out: ExperimentOutputs, out_dir, figures: bool = True) -> List[Path]:
    """Write report.md and its CSV bundle (and PNG figures) into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rep = Report(out)
    models = out.models
    metric_label = str(out.metric)
    written: List[Path] = []

    def path(name):
        p = out_dir / name
        written.append(p)
        return p

    # per-query metric for every run: the ground truth for everything below
    rows = []
    for model in models:
        for source in [ORIGINAL] + list(out.methods):
            runs = out.runs[model].get(source, {})
            for q in rep.qids:
                if q in runs:
                    name = source if source == ORIGINAL else source.value
                    rows.append([model, name, q, format_score(rep.m(model, source, q))])
    write_csv(path("per_query.csv"), ["model", "source", "qid", "metric"], rows)

    robust = rep.robustness_grid()
    write_csv(path("robustness.csv"), ["category", "method", "model", "mean", "marker", "p_value", "n_valid"],
              [[cat, label, m, format_score(cells[m].mean), cells[m].marker, _fmt_p(cells[m].p), nq]
               for cat, label, cells, nq in robust for m in models])
    fusion_rows = rep.fusion_grid()
    write_csv(path("fusion.csv"), ["row", "model", "mean", "marker", "p_value"],
              [[label, m, format_score(cells[m].mean), cells[m].marker, _fmt_p(cells[m].p)]
               for label, cells in fusion_rows for m in models])

    deltas = {m: rep.deltas(m) for m in models}
    write_deltas_csv(path("deltas.csv"), [r for m in models for r in deltas[m]])

    by_cell: Dict[tuple, List[float]] = defaultdict(list)
    for m in models:
        for r in deltas[m]:
            by_cell[m, r.category.value].append(r.delta)
    cats_present = [c.value for c in SYNTAX_CATEGORIES if any(x.category is c for x in out.methods)]
    dist_rows = []
    for cat in cats_present:
        for m in models:
            xs = by_cell.get((m, cat), [])
            if xs:
                q = np.quantile(np.array(xs), [0.0, 0.25, 0.5, 0.75, 1.0])
                dist_rows.append([cat, m, len(xs), format_score(_mean(xs))] + [format_score(float(v)) for v in q])
            else:
                dist_rows.append([cat, m, 0, "", "", "", "", "", ""])
    write_csv(path("delta_distribution.csv"),
              ["category", "model", "count", "mean", "min", "q25", "median", "q75", "max"], dist_rows)

    summary_rows = []
    for m in models:
        for cat in cats_present:
            rs = [r for r in deltas[m] if r.category.value == cat]
            pct = [r.delta / r.metric_original for r in rs if r.metric_original > 0]
            summary_rows.append([m, cat, len(rs),
                                 format_score(_mean([r.metric_original for r in rs])),
                                 format_score(_mean([r.metric_variation for r in rs])),
                                 format_score(_mean([r.delta for r in rs])),
                                 format_score(100.0 * _mean(pct)) if pct else ""])
    write_csv(path("category_summary.csv"),
              ["model", "category", "count", "mean_original", "mean_variation", "mean_delta", "mean_pct_change"],
              summary_rows)

    counts = improvement_distribution(out.runs, out.variations, out.qrels, out.metric)
    write_csv(path("improvements.csv"), ["model", "category", "count"],
              [[m, c, counts.get((m, Category(c)), 0)] for m in models for c in cats_present])

    _, columns, mat = delta_matrix(deltas)
    write_csv(path("delta_matrix.csv"), ["model"] + [f"{q}|{meth.value}" for q, meth in columns],
              [[m] + [format_score(x) for x in mat[i]] for i, m in enumerate(models)])

    corr_rows = []
    for cat in cats_present:
        for i, a in enumerate(models):
            for b in models[i + 1:]:
                xa = [r.delta for r in deltas[a] if r.category.value == cat]
                xb = [r.delta for r in deltas[b] if r.category.value == cat]
                try:
                    r = format_score(pearson(xa, xb))
                except (ZeroVariance, ValueError):
                    r = ""
                corr_rows.append([cat, a, b, r])
    write_csv(path("correlations.csv"), ["category", "model_a", "model_b", "pearson"], corr_rows)

    # ------------------------------------------------------------ markdown
    best = _bold_best([cells for _, _, cells, _ in robust], models)
    grid = [[cat, label] + [_cell_text(cells[m], best[m]) for m in models] + [str(nq)]
            for cat, label, cells, nq in robust]
    fbest = _bold_best([cells for _, cells in fusion_rows], models)
    fgrid = [[label] + [_cell_text(cells[m], fbest[m]) for m in models] for label, cells in fusion_rows]
    md = [
        "# Query variation robustness report",
        "",
        f"Metric: {metric_label}. Topics: {len(rep.qids)}. Models: {', '.join(models)}.",
        "",
        "## Effectiveness under query variations",
        "",
        f"Mean {metric_label} per method; invalid variations are replaced by the original query. "
        "↓/↑ mark significant losses/gains against the original query "
        "(two-sided paired t-test, p < 0.05). Bold is the best value per model. "
        "#Q is the number of valid variations.",
        "",
        _markdown_grid(["Category", "Method"] + models + ["#Q"], grid),
        "",
        "## Rank fusion",
        "",
        f"Reciprocal rank fusion (k = {out.k_rrf:g}) of each group's valid variations"
        + (" only." if out.variations_only else " together with the original query.")
        + " The best-query row picks, per topic, the most effective of the original and its valid variations.",
        "",
        _markdown_grid(["Queries"] + models, fgrid),
        "",
        "## Delta by category (valid variations)",
        "",
        _markdown_grid(["Model", "Category", "Count", "Mean original", "Mean variation", "Mean delta", "Mean % change"],
                       [[r[0], r[1], str(r[2])] + [f"{float(x):.4f}" if x else "" for x in r[3:6]]
                        + [f"{float(r[6]):.2f}%" if r[6] else ""] for r in summary_rows]),
        "",
        "## Variations better than the original",
        "",
        _markdown_grid(["Model"] + cats_present,
                       [[m] + [str(counts.get((m, Category(c)), 0)) for c in cats_present] for m in models]),
        "",
    ]
    path("report.md").write_text("\n".join(md), encoding="utf-8")

    if figures:
        from . import plots

        fig_dir = out_dir / "figures"
        fig_dir.mkdir(exist_ok=True)
        plots.delta_boxplot(by_cell, models, cats_present, fig_dir / "delta_distribution.png", metric_label)
        plots.improvement_bars({(m, c.value): n for (m, c), n in counts.items()}, models, cats_present,
                               fig_dir / "improvements.png")
        written += [fig_dir / "delta_distribution.png", fig_dir / "improvements.png"]
    return written
