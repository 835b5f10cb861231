"""Reciprocal rank fusion over query variations and the best-query oracle.

Run collections are keyed by *source*: ``"original"`` for the original query,
otherwise a :class:`MethodId`.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple, Union

from .core import ALL_METHODS, Category, MethodId, QueryVarError, Variation
from .evaluation import Qrels, ndcg_at_k
from .retrieval import RunList

ORIGINAL = "original"


class MixedQids(QueryVarError):
    pass


@dataclass(frozen=True)
class FusionConfig:
    k_rrf: float = 60.0
    group: Union[str, Tuple[MethodId, ...]] = "all"
    variations_only: bool = False

    def __post_init__(self):
        if not self.k_rrf > 0:
            raise ValueError("k_rrf must be positive")

    def methods(self) -> Tuple[MethodId, ...]:
        if isinstance(self.group, tuple):
            return self.group
        if self.group == "all":
            return ALL_METHODS
        cat = Category(self.group)
        return tuple(m for m in ALL_METHODS if m.category is cat)

    @property
    def label(self) -> str:
        if isinstance(self.group, tuple):
            return "+".join(m.value for m in self.group)
        return self.group


def rrf_fuse(runs: Sequence[RunList], config: FusionConfig = FusionConfig(), tag: str = "rrf") -> RunList:
    """score(d) = sum over runs containing d of 1 / (k + rank); ties by docno."""
    if not runs:
        raise ValueError("nothing to fuse")
    qids = {r.qid for r in runs}
    if len(qids) != 1:
        raise MixedQids(f"cannot fuse runs of {sorted(qids)}")
    scores: Dict[str, float] = {}
    for run in runs:
        for e in run.entries:
            scores[e.docno] = scores.get(e.docno, 0.0) + 1.0 / (config.k_rrf + e.rank)
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return RunList.from_scored(runs[0].qid, ranked, tag)


def _valid(variations: Sequence[Variation]) -> Dict[Tuple[str, MethodId], bool]:
    return {(v.qid, v.method): v.validity.is_valid for v in variations}


def fuse_experiment(runs: Mapping, variations: Sequence[Variation], config: FusionConfig) -> Dict[str, RunList]:
    """Fuse, per qid, the original run with the runs of valid variations in the group.

    Identical input rankings are fused once. With ``variations_only`` the
    original is left out unless no valid variation exists for the query.
    """
    valid = _valid(variations)
    group = config.methods()
    tag = f"rrf-{config.label}"
    out = {}
    for qid, orig in runs[ORIGINAL].items():
        inputs = [] if config.variations_only else [orig]
        for m in group:
            if valid.get((qid, m)) and qid in runs.get(m, {}):
                inputs.append(runs[m][qid])
        if not inputs:
            inputs = [orig]
        unique, seen = [], set()
        for r in inputs:
            key = tuple(r.docnos)
            if key not in seen:
                seen.add(key)
                unique.append(r)
        out[qid] = rrf_fuse(unique, config, tag)
    return out


def _sources_for(qid: str, runs: Mapping, valid) -> List[Tuple[str, RunList]]:
    cands = [(ORIGINAL, runs[ORIGINAL][qid])]
    for m in sorted((m for m in runs if m != ORIGINAL), key=lambda m: m.value):
        if valid.get((qid, m)) and qid in runs[m]:
            cands.append((m.value, runs[m][qid]))
    return cands


def best_query_oracle(runs: Mapping, variations: Sequence[Variation], qrels: Qrels,
                      metric=ndcg_at_k) -> Dict[str, Tuple[str, float]]:
    """Per qid, the best of the original and its valid variations.

    Ties go to the original, then to the alphabetically first method.
    """
    valid = _valid(variations)
    out = {}
    for qid in runs[ORIGINAL]:
        best_src, best_val = None, None
        for src, run in _sources_for(qid, runs, valid):
            val = metric(run, qrels)
            if best_val is None or val > best_val:
                best_src, best_val = src, val
        out[qid] = (best_src, best_val)
    return out


def oracle_runs(runs: Mapping, choice: Mapping[str, Tuple[str, float]]) -> Dict[str, RunList]:
    by_name = {ORIGINAL: ORIGINAL, **{m.value: m for m in runs if m != ORIGINAL}}
    return {qid: runs[by_name[src]][qid] for qid, (src, _) in choice.items()}


def improvement_distribution(runs_by_model: Mapping[str, Mapping], variations: Sequence[Variation],
                             qrels: Qrels, metric=ndcg_at_k) -> Counter:
    """Count valid variations strictly better than the original, keyed by (model, category)."""
    counts: Counter = Counter()
    for model, runs in runs_by_model.items():
        for v in variations:
            if not v.validity.is_valid or v.qid not in runs.get(v.method, {}):
                continue
            if metric(runs[v.method][v.qid], qrels) > metric(runs[ORIGINAL][v.qid], qrels):
                counts[model, v.category] += 1
    return counts
