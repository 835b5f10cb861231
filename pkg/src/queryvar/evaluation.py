"""Effectiveness metrics, per-query deltas and the statistics used to compare them."""

from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .core import Category, MethodId, QueryVarError, Variation
from .retrieval import RunList


class MissingOriginalRun(QueryVarError):
    pass


class LengthMismatch(QueryVarError, ValueError):
    pass


class TooFewSamples(QueryVarError, ValueError):
    pass


class ZeroVariance(QueryVarError, ValueError):
    pass


class CoverageMismatch(QueryVarError):
    pass


class Qrels:
    """Graded judgments keyed by (qid, docno)."""

    def __init__(self, judgments: Optional[Mapping[Tuple[str, str], int]] = None):
        self.judgments: Dict[Tuple[str, str], int] = {}
        self._by_qid: Dict[str, Dict[str, int]] = defaultdict(dict)
        for (qid, docno), grade in (judgments or {}).items():
            self.set(qid, docno, grade)

    def set(self, qid: str, docno: str, grade: int) -> None:
        if grade < 0:
            raise ValueError(f"negative grade for ({qid}, {docno})")
        self.judgments[qid, docno] = grade
        self._by_qid[qid][docno] = grade

    def for_qid(self, qid: str) -> Dict[str, int]:
        return self._by_qid.get(qid, {})

    @property
    def qids(self) -> List[str]:
        return sorted(self._by_qid)


# ---------------------------------------------------------------- metrics


def ndcg_at_k(run: RunList, qrels: Qrels, k: int = 10) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    judged = qrels.for_qid(run.qid)
    dcg = sum((2 ** judged.get(e.docno, 0) - 1) / math.log2(i + 1)
              for i, e in enumerate(run.entries[:k], start=1))
    ideal = sorted(judged.values(), reverse=True)[:k]
    idcg = sum((2 ** g - 1) / math.log2(i + 1) for i, g in enumerate(ideal, start=1))
    return dcg / idcg if idcg > 0 else 0.0


def recall_at_k(run: RunList, qrels: Qrels, k: int = 1000, rel_threshold: int = 1) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    relevant = {d for d, g in qrels.for_qid(run.qid).items() if g >= rel_threshold}
    if not relevant:
        return 0.0
    return len(relevant.intersection(run.docnos[:k])) / len(relevant)


def judged_fraction(run: RunList, qrels: Qrels, k: int = 10) -> float:
    if k < 1:
        raise ValueError("k must be >= 1")
    top = run.docnos[:k]
    if not top:
        return 0.0
    judged = qrels.for_qid(run.qid)
    return sum(1 for d in top if d in judged) / len(top)


@dataclass(frozen=True)
class Metric:
    name: str = "ndcg"
    k: int = 10

    def __call__(self, run: RunList, qrels: Qrels) -> float:
        if self.name == "ndcg":
            return ndcg_at_k(run, qrels, self.k)
        if self.name == "recall":
            return recall_at_k(run, qrels, self.k)
        raise ValueError(f"unknown metric {self.name!r}")

    def __str__(self):
        return f"{self.name}@{self.k}"

    @classmethod
    def parse(cls, spec: str) -> "Metric":
        m = re.fullmatch(r"(ndcg|recall)@(\d+)", spec.strip().lower())
        if not m or int(m.group(2)) < 1:
            raise ValueError(f"metric must look like ndcg@10 or recall@100, got {spec!r}")
        return cls(m.group(1), int(m.group(2)))


# ---------------------------------------------------------------- deltas


@dataclass(frozen=True)
class DeltaRecord:
    qid: str
    method: MethodId
    metric_original: float
    metric_variation: float
    delta: float
    model: str = ""
    valid: bool = True

    @property
    def category(self) -> Category:
        return self.method.category


def compute_deltas(runs_original: Mapping[str, RunList],
                   runs_variation: Mapping[MethodId, Mapping[str, RunList]],
                   variations: Iterable[Variation], qrels: Qrels, metric=ndcg_at_k,
                   valid_only: bool = True, model: str = "") -> List[DeltaRecord]:
    """Per-(qid, method) metric differences, variation minus original.

    An invalid variation is dropped when ``valid_only``; otherwise the original
    query stands in for it and its delta is 0.
    """
    out = []
    cache: Dict[str, float] = {}
    for v in variations:
        if v.qid not in runs_original:
            raise MissingOriginalRun(f"no original run for {v.qid}")
        if v.qid not in cache:
            cache[v.qid] = metric(runs_original[v.qid], qrels)
        orig = cache[v.qid]
        valid = v.validity.is_valid
        if not valid:
            if valid_only:
                continue
            var = orig
        else:
            var = metric(runs_variation[v.method][v.qid], qrels)
        out.append(DeltaRecord(v.qid, v.method, orig, var, var - orig, model, valid))
    return out


# ---------------------------------------------------------------- statistics


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, 10000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    # the fraction converges fast only below the mean; use the symmetry otherwise
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return betainc(df / 2.0, 0.5, df / (df + t * t))


class TTest(NamedTuple):
    t: float
    p: float


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTest:
    """Two-sided paired Student's t-test on ``a - b``.

    Zero spread in the differences gives ``t = nan`` and ``p = 1.0``.
    """
    if len(a) != len(b):
        raise LengthMismatch(f"{len(a)} vs {len(b)} samples")
    n = len(a)
    if n < 2:
        raise TooFewSamples("need at least two pairs")
    d = [x - y for x, y in zip(a, b)]
    mean = math.fsum(d) / n
    var = math.fsum((x - mean) ** 2 for x in d) / (n - 1)
    if var == 0.0:
        return TTest(math.nan, 1.0)
    t = mean / math.sqrt(var / n)
    return TTest(t, student_t_two_sided(t, n - 1))


def significance(original: Sequence[float], variation: Sequence[float], alpha: float = 0.05) -> str:
    """``"↓"``/``"↑"`` for a significant loss/gain of ``variation`` over ``original``, else ``""``."""
    if len(original) < 2:
        return ""
    t, p = paired_t_test(variation, original)
    if p >= alpha or math.isnan(t):
        return ""
    return "↓" if t < 0 else "↑"


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    if len(x) != len(y):
        raise LengthMismatch(f"{len(x)} vs {len(y)} values")
    if len(x) < 2:
        raise TooFewSamples("need at least two points")
    mx, my = math.fsum(x) / len(x), math.fsum(y) / len(y)
    dx = [v - mx for v in x]
    dy = [v - my for v in y]
    sxx = math.fsum(v * v for v in dx)
    syy = math.fsum(v * v for v in dy)
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVariance("correlation undefined for a constant series")
    r = math.fsum(u * v for u, v in zip(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def delta_matrix(deltas_by_model: Mapping[str, Sequence[DeltaRecord]]):
    """Dense (model x (qid, method)) matrix of deltas.

    Returns ``(models, columns, matrix)``; columns follow the first model's
    record order.
    """
    models = list(deltas_by_model)
    if not models:
        return [], [], np.zeros((0, 0))
    columns = [(r.qid, r.method) for r in deltas_by_model[models[0]]]
    colset = set(columns)
    mat = np.zeros((len(models), len(columns)))
    for i, m in enumerate(models):
        recs = {(r.qid, r.method): r.delta for r in deltas_by_model[m]}
        if set(recs) != colset or len(recs) != len(deltas_by_model[m]):
            raise CoverageMismatch(f"model {m!r} covers a different (qid, method) set")
        mat[i] = [recs[c] for c in columns]
    return models, columns, mat


@dataclass(frozen=True)
class SummaryRow:
    key: str
    count: int
    mean_original: float
    mean_metric: float
    mean_delta: float
    mean_pct_change: float  # over records whose original metric is > 0; nan if none
    pct_count: int


def aggregate(deltas: Iterable[DeltaRecord], group_by: str = "category") -> List[SummaryRow]:
    def key(r):
        if group_by == "category":
            return r.category.value
        if group_by == "method":
            return r.method.value
        if group_by == "model":
            return r.model
        raise ValueError(f"cannot group by {group_by!r}")

    groups: Dict[str, List[DeltaRecord]] = defaultdict(list)
    for r in sorted(deltas, key=lambda r: (r.qid, r.method.value, r.model)):
        groups[key(r)].append(r)
    rows = []
    for k in sorted(groups):
        rs = groups[k]
        pct = [r.delta / r.metric_original for r in rs if r.metric_original > 0]
        rows.append(SummaryRow(
            k, len(rs),
            math.fsum(r.metric_original for r in rs) / len(rs),
            math.fsum(r.metric_variation for r in rs) / len(rs),
            math.fsum(r.delta for r in rs) / len(rs),
            math.fsum(pct) / len(pct) if pct else math.nan,
            len(pct),
        ))
    return rows
