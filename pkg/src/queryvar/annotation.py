"""Validity labelling: automatic rules, terminal annotation sessions, agreement."""

from __future__ import annotations

import json
import os
from collections import defaultdict
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .core import Category, MethodId, Query, QueryVarError, Validity, Variation, normalize


class UnresolvedRecords(QueryVarError):
    pass


class LengthMismatch(QueryVarError, ValueError):
    pass


RULE_VALID = (Category.Misspelling, Category.Ordering)


def validity_rule(category: Category, identical: bool) -> Validity:
    if identical:
        return Validity.AutoInvalid
    if category in RULE_VALID:
        return Validity.AutoValid
    return Validity.NeedsAnnotation


def auto_validity(v: Variation, original: Query) -> Validity:
    """Identity copies are invalid; rule-based categories are valid; the rest need a human."""
    return validity_rule(v.category, normalize(v.text) == normalize(original.text))


@dataclass
class AnnotationRecord:
    qid: str
    method: MethodId
    original_text: str
    variation_text: str
    semantics_preserved: Optional[bool] = None
    category_attributable: Optional[bool] = None
    annotator: str = ""
    source: str = "Auto"  # "Auto" or "Manual"
    validity: Validity = Validity.NeedsAnnotation
    dataset: str = ""

    @property
    def complete(self) -> bool:
        return self.validity.resolved

    def to_json(self) -> str:
        d = asdict(self)
        d["method"] = self.method.value
        d["validity"] = self.validity.value
        return json.dumps(d, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "AnnotationRecord":
        d = json.loads(line)
        d["method"] = MethodId(d["method"])
        d["validity"] = Validity(d.get("validity", "NeedsAnnotation"))
        return cls(**d)


def records_from_variations(variations: Iterable[Variation], queries: Dict[str, Query],
                            dataset: str = "") -> List[AnnotationRecord]:
    out = []
    for v in variations:
        validity = auto_validity(v, queries[v.qid])
        rec = AnnotationRecord(v.qid, v.method, queries[v.qid].text, v.text, validity=validity, dataset=dataset)
        if validity is Validity.AutoValid:
            rec.semantics_preserved = rec.category_attributable = True
        elif validity is Validity.AutoInvalid:
            # an identical copy keeps the meaning but shows no change of the category
            rec.semantics_preserved, rec.category_attributable = True, False
        out.append(rec)
    return out


def read_records(path) -> List[AnnotationRecord]:
    with open(path, encoding="utf-8") as f:
        return [AnnotationRecord.from_json(line) for line in f if line.strip()]


def write_records(path, records: Sequence[AnnotationRecord]) -> None:
    # write-then-rename so an interrupted session never leaves a torn file
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        for r in records:
            f.write(r.to_json() + "\n")
    os.replace(tmp, path)


def _ask(prompt: str, input_fn: Callable[[str], str]) -> Optional[bool]:
    """Returns True/False for y/n, None for quit. Re-asks on anything else."""
    while True:
        ans = input_fn(prompt).strip().lower()
        if ans in ("y", "yes"):
            return True
        if ans in ("n", "no"):
            return False
        if ans in ("q", "quit"):
            return None


def annotate_session(records: List[AnnotationRecord], annotator: str, path=None,
                     input_fn: Optional[Callable[[str], str]] = None,
                     output: Callable[[str], None] = print) -> List[AnnotationRecord]:
    """Interactive y/n labelling of every record still needing annotation.

    Records are updated in place and, when ``path`` is given, the whole list is
    persisted after each answer. Answering ``q`` stops; calling again resumes at
    the first unanswered question.
    """
    input_fn = input_fn or input
    pending = [i for i, r in enumerate(records) if r.validity is Validity.NeedsAnnotation]
    total = len(pending)
    for n, i in enumerate(pending, start=1):
        r = records[i]
        output(f"[{n}/{total}] {r.qid} {r.method.value} ({r.method.category.value})")
        output(f"  original : {r.original_text}")
        output(f"  variation: {r.variation_text}")
        for attr, prompt in (
            ("semantics_preserved", "  same meaning as the original? [y/n/q] "),
            ("category_attributable", f"  change is a {r.method.category.value.lower()} change? [y/n/q] "),
        ):
            if getattr(r, attr) is not None:
                continue
            ans = _ask(prompt, input_fn)
            if ans is None:
                return records
            setattr(r, attr, ans)
            r.annotator = annotator
            r.source = "Manual"
            if r.semantics_preserved is not None and r.category_attributable is not None:
                r.validity = (Validity.ManualValid if r.semantics_preserved and r.category_attributable
                              else Validity.ManualInvalid)
            if path is not None:
                write_records(path, records)
    return records


def apply_annotations(variations: Iterable[Variation], records: Iterable[AnnotationRecord]) -> List[Variation]:
    """Copy resolved validity labels onto matching (qid, method) variations."""
    labels = {(r.qid, r.method): r.validity for r in records if r.validity.resolved}
    out = []
    for v in variations:
        lab = labels.get((v.qid, v.method))
        out.append(v if lab is None or v.identical else v.with_validity(lab))
    return out


def cohen_kappa(labels_a: Sequence[bool], labels_b: Sequence[bool]) -> float:
    if len(labels_a) != len(labels_b):
        raise LengthMismatch("label vectors differ in length")
    n = len(labels_a)
    if n == 0:
        raise LengthMismatch("label vectors are empty")
    p_o = sum(1 for a, b in zip(labels_a, labels_b) if bool(a) == bool(b)) / n
    pa = sum(1 for a in labels_a if a) / n
    pb = sum(1 for b in labels_b if b) / n
    p_e = pa * pb + (1 - pa) * (1 - pb)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return (p_o - p_e) / (1 - p_e)


def validity_report(records: Iterable[AnnotationRecord]) -> List[Tuple[str, str, int, int, str]]:
    """Rows ``(method, dataset, valid, total, "xx.xx%")`` in method table order."""
    buckets: Dict[Tuple[MethodId, str], List[int]] = defaultdict(lambda: [0, 0])
    for r in records:
        if not r.validity.resolved:
            raise UnresolvedRecords(f"{r.qid}/{r.method.value} still needs annotation")
        b = buckets[r.method, r.dataset]
        b[0] += r.validity.is_valid
        b[1] += 1
    order = {m: i for i, m in enumerate(MethodId)}
    rows = []
    for (method, dataset), (valid, total) in sorted(buckets.items(), key=lambda kv: (order[kv[0][0]], kv[0][1])):
        rows.append((method.value, dataset, valid, total, f"{100.0 * valid / total:.2f}%"))
    return rows
