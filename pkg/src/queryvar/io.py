"""Readers and writers for queries, corpora, runs, qrels, variations and manifests."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import yaml

from .core import ALL_METHODS, MethodId, Query, QueryVarError, Validity, Variation
from .evaluation import DeltaRecord, Metric, Qrels
from .retrieval import Document, RunEntry, RunList


class ParseError(QueryVarError, ValueError):
    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path, self.line = path, line


class DuplicateQid(QueryVarError):
    pass


class RankGap(ParseError):
    pass


class NegativeGrade(ParseError):
    pass


class ManifestError(QueryVarError):
    pass


def _lines(path):
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if line.strip():
                yield lineno, line


def load_queries(path) -> List[Query]:
    """TSV ``qid<TAB>text``, one query per line."""
    out, seen = [], set()
    for lineno, line in _lines(path):
        if "\t" not in line:
            raise ParseError(path, lineno, "expected 'qid<TAB>text'")
        qid, text = line.split("\t", 1)
        qid = qid.strip()
        if not qid or not text.strip():
            raise ParseError(path, lineno, "empty qid or query text")
        if qid in seen:
            raise DuplicateQid(f"{path}:{lineno}: duplicate qid {qid!r}")
        seen.add(qid)
        out.append(Query(qid, text.strip()))
    return out


def write_queries(path, queries: Iterable[Query]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for q in queries:
            f.write(f"{q.qid}\t{q.text}\n")


def load_corpus(path) -> List[Document]:
    """JSON Lines ``{"docno", "text"}`` or TSV ``docno<TAB>text`` (by extension)."""
    path = Path(path)
    docs = []
    jsonl = path.suffix in (".jsonl", ".json")
    for lineno, line in _lines(path):
        if jsonl:
            try:
                obj = json.loads(line)
                docs.append(Document(str(obj["docno"]), str(obj["text"])))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ParseError(path, lineno, f"bad corpus record: {exc}") from exc
        else:
            if "\t" not in line:
                raise ParseError(path, lineno, "expected 'docno<TAB>text'")
            docno, text = line.split("\t", 1)
            docs.append(Document(docno.strip(), text))
    return docs


# ---------------------------------------------------------------- runs


def format_score(x: float) -> str:
    return repr(float(x))


def write_run(path, runs: Iterable[RunList]) -> None:
    """TREC 6-column run: ``qid Q0 docno rank score tag``."""
    with open(path, "w", encoding="utf-8") as f:
        for run in runs:
            for e in run.entries:
                f.write(f"{run.qid} Q0 {e.docno} {e.rank} {format_score(e.score)} {run.tag}\n")


def parse_run(path) -> Dict[str, RunList]:
    runs: Dict[str, RunList] = {}
    for lineno, line in _lines(path):
        cols = line.split()
        if len(cols) != 6:
            raise ParseError(path, lineno, f"expected 6 columns, got {len(cols)}")
        qid, _, docno, rank_s, score_s, tag = cols
        try:
            rank, score = int(rank_s), float(score_s)
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from exc
        run = runs.get(qid)
        if run is None:
            run = runs[qid] = RunList(qid, [], tag)
        expected = len(run.entries) + 1
        if rank != expected:
            raise RankGap(path, lineno, f"rank {rank} where {expected} was expected for {qid}")
        if run.entries and score > run.entries[-1].score:
            raise ParseError(path, lineno, f"score increases with rank for {qid}")
        if any(e.docno == docno for e in run.entries):
            raise ParseError(path, lineno, f"duplicate docno {docno} for {qid}")
        run.entries.append(RunEntry(docno, score, rank))
    return runs


def parse_qrels(path) -> Qrels:
    """TREC qrels ``qid 0 docno grade``; a repeated pair overrides the earlier one."""
    qrels = Qrels()
    for lineno, line in _lines(path):
        cols = line.split()
        if len(cols) != 4:
            raise ParseError(path, lineno, f"expected 4 columns, got {len(cols)}")
        qid, _, docno, grade_s = cols
        try:
            grade = int(grade_s)
        except ValueError as exc:
            raise ParseError(path, lineno, f"grade {grade_s!r} is not an integer") from exc
        if grade < 0:
            raise NegativeGrade(path, lineno, f"negative grade {grade}")
        if (qid, docno) in qrels.judgments:
            warnings.warn(f"{path}:{lineno}: duplicate judgment for ({qid}, {docno}); keeping the later one")
        qrels.set(qid, docno, grade)
    return qrels


def write_qrels(path, qrels: Qrels) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for (qid, docno), g in qrels.judgments.items():
            f.write(f"{qid} 0 {docno} {g}\n")


# ---------------------------------------------------------------- variations


def variation_to_json(v: Variation) -> str:
    return json.dumps({
        "qid": v.qid, "method": v.method.value, "category": v.category.value,
        "text": v.text, "identical": v.identical, "validity": v.validity.value,
    }, ensure_ascii=False)


def write_variations(path, variations: Iterable[Variation]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for v in variations:
            f.write(variation_to_json(v) + "\n")


def read_variations(path) -> List[Variation]:
    out = []
    for lineno, line in _lines(path):
        try:
            d = json.loads(line)
            v = Variation(str(d["qid"]), MethodId(d["method"]), d["text"], bool(d["identical"]),
                          Validity(d["validity"]))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ParseError(path, lineno, f"bad variation record: {exc}") from exc
        if d.get("category", v.category.value) != v.category.value:
            raise ParseError(path, lineno, f"category {d['category']} does not match {v.method.value}")
        out.append(v)
    return out


# ---------------------------------------------------------------- csv

DELTA_HEADER = ["qid", "method", "category", "model", "metric_original", "metric_variation", "delta"]


def write_deltas_csv(path, records: Iterable[DeltaRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(DELTA_HEADER)
        for r in records:
            w.writerow([r.qid, r.method.value, r.category.value, r.model,
                        format_score(r.metric_original), format_score(r.metric_variation), format_score(r.delta)])


def read_deltas_csv(path) -> List[DeltaRecord]:
    with open(path, encoding="utf-8", newline="") as f:
        return [DeltaRecord(row["qid"], MethodId(row["method"]), float(row["metric_original"]),
                            float(row["metric_variation"]), float(row["delta"]), row["model"])
                for row in csv.DictReader(f)]


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------- manifest


@dataclass
class ExperimentManifest:
    """A YAML experiment description; relative paths resolve against its directory.

    Keys: ``corpus``, ``queries``, ``qrels`` (required); ``variations``,
    ``embeddings``, ``lexicon``, ``stopwords``, ``annotations`` (optional
    input files); ``methods``; ``seed``; ``metric``; ``pending_validity``
    (``invalid`` or ``valid``, for variations nobody annotated); ``retrieval``
    (``k``, ``rerank_threshold``, ``split``, ``stem``); ``fusion`` (``k_rrf``,
    ``variations_only``); ``adapters`` (``desc_to_title``, ``qqp``,
    ``back_translation``, ``pivot``); ``models`` (name -> re-ranker endpoint or
    null for BM25 alone); ``output``; ``figures``.
    """

    corpus: Path
    queries: Path
    qrels: Path
    output: Path
    variations: Optional[Path] = None
    embeddings: Optional[Path] = None
    lexicon: Optional[Path] = None
    stopwords: Optional[Path] = None
    annotations: Optional[Path] = None
    methods: List[MethodId] = field(default_factory=lambda: list(ALL_METHODS))
    seed: int = 7
    metric: Metric = field(default_factory=Metric)
    pending_validity: str = "invalid"
    k: int = 1000
    rerank_threshold: int = 100
    split: bool = False
    stem: bool = False
    k_rrf: float = 60.0
    variations_only: bool = False
    adapters: Dict[str, str] = field(default_factory=dict)
    pivot: str = "de"
    models: Dict[str, Optional[str]] = field(default_factory=lambda: {"BM25": None})
    figures: bool = True
    base_dir: Path = Path(".")

    @classmethod
    def load(cls, path) -> "ExperimentManifest":
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ManifestError(f"{path}: {exc}") from exc
        return cls.from_dict(raw, path.parent)

    @classmethod
    def from_dict(cls, raw: Mapping, base_dir) -> "ExperimentManifest":
        base_dir = Path(base_dir)
        known = {"corpus", "queries", "qrels", "output", "variations", "embeddings", "lexicon", "stopwords",
                 "annotations", "methods", "seed", "metric", "pending_validity", "retrieval", "fusion",
                 "adapters", "models", "figures"}
        unknown = set(raw) - known
        if unknown:
            raise ManifestError(f"unknown manifest keys: {sorted(unknown)}")

        def p(key, required=False):
            val = raw.get(key)
            if val is None:
                if required:
                    raise ManifestError(f"manifest needs '{key}'")
                return None
            full = (base_dir / str(val)).resolve() if not Path(str(val)).is_absolute() else Path(str(val))
            if key != "output" and not full.exists():
                raise ManifestError(f"{key}: {full} does not exist")
            return full

        retrieval = raw.get("retrieval") or {}
        fusion = raw.get("fusion") or {}
        adapters = dict(raw.get("adapters") or {})
        pending = raw.get("pending_validity", "invalid")
        if pending not in ("invalid", "valid"):
            raise ManifestError("pending_validity must be 'invalid' or 'valid'")
        try:
            methods = [MethodId(m) for m in raw.get("methods", [m.value for m in ALL_METHODS])]
            metric = Metric.parse(str(raw.get("metric", "ndcg@10")))
        except ValueError as exc:
            raise ManifestError(str(exc)) from exc
        models = raw.get("models") or {"BM25": None}
        return cls(
            corpus=p("corpus", True), queries=p("queries", True), qrels=p("qrels", True),
            output=p("output") or (base_dir / "output").resolve(),
            variations=p("variations"), embeddings=p("embeddings"), lexicon=p("lexicon"),
            stopwords=p("stopwords"), annotations=p("annotations"),
            methods=methods, seed=int(raw.get("seed", 7)), metric=metric, pending_validity=pending,
            k=int(retrieval.get("k", 1000)), rerank_threshold=int(retrieval.get("rerank_threshold", 100)),
            split=bool(retrieval.get("split", False)), stem=bool(retrieval.get("stem", False)),
            k_rrf=float(fusion.get("k_rrf", 60)), variations_only=bool(fusion.get("variations_only", False)),
            pivot=str(adapters.pop("pivot", "de")), adapters={k: str(v) for k, v in adapters.items()},
            models={str(k): (None if v in (None, "", "none") else str(v)) for k, v in models.items()},
            figures=bool(raw.get("figures", True)), base_dir=base_dir,
        )
