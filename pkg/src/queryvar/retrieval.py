"""BM25 first-stage retrieval over an inverted index, plus re-ranking."""

from __future__ import annotations

import heapq
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .adapters import RerankerAdapter
from .core import Query, QueryVarError, tokenize

K1 = 1.2
B = 0.75


class DuplicateDocno(QueryVarError):
    pass


class EmptyCorpus(QueryVarError):
    pass


@dataclass(frozen=True)
class Document:
    docno: str
    text: str


@dataclass(frozen=True)
class RunEntry:
    docno: str
    score: float
    rank: int


@dataclass
class RunList:
    """A ranking for one query. Ranks are 1..n, scores non-increasing."""

    qid: str
    entries: List[RunEntry] = field(default_factory=list)
    tag: str = "run"

    @classmethod
    def from_scored(cls, qid: str, scored: Iterable[Tuple[str, float]], tag: str = "run") -> "RunList":
        return cls(qid, [RunEntry(d, s, i) for i, (d, s) in enumerate(scored, start=1)], tag)

    @property
    def docnos(self) -> List[str]:
        return [e.docno for e in self.entries]

    def __len__(self):
        return len(self.entries)

    def validate(self) -> None:
        seen = set()
        for i, e in enumerate(self.entries, start=1):
            if e.rank != i:
                raise ValueError(f"{self.qid}: rank {e.rank} at position {i}")
            if e.docno in seen:
                raise ValueError(f"{self.qid}: duplicate docno {e.docno}")
            seen.add(e.docno)
            if i > 1 and e.score > self.entries[i - 2].score:
                raise ValueError(f"{self.qid}: score increases at rank {i}")


class InvertedIndex:
    """Term -> postings of (doc ordinal, tf), with document length statistics."""

    def __init__(self, docnos, texts, postings, doc_lengths, stem: bool = False):
        self.stem = stem
        self.docnos: List[str] = list(docnos)
        self.texts: List[str] = list(texts)
        self.postings: Dict[str, List[Tuple[int, int]]] = postings
        self.doc_lengths: List[int] = list(doc_lengths)
        self.num_docs = len(self.docnos)
        self.avg_doc_length = sum(self.doc_lengths) / self.num_docs
        self.doc_frequencies = {t: len(p) for t, p in postings.items()}
        self.ordinal = {d: i for i, d in enumerate(self.docnos)}

    def analyze(self, tokens: Sequence[str]) -> List[str]:
        """Map tokens to index terms (Porter stems when the index is stemmed)."""
        return _porter(tokens) if self.stem else list(tokens)

    def idf(self, term: str) -> float:
        df = self.doc_frequencies.get(term, 0)
        return math.log(1.0 + (self.num_docs - df + 0.5) / (df + 0.5))

    def tf(self, term: str, doc: int) -> int:
        for d, f in self.postings.get(term, ()):
            if d == doc:
                return f
        return 0

    def to_dict(self) -> dict:
        return {
            "format": "queryvar-index",
            "version": 1,
            "docnos": self.docnos,
            "texts": self.texts,
            "doc_lengths": self.doc_lengths,
            "stem": self.stem,
            "postings": {t: [list(p) for p in ps] for t, ps in sorted(self.postings.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InvertedIndex":
        if d.get("format") != "queryvar-index" or d.get("version") != 1:
            raise ValueError("not a version-1 queryvar index")
        postings = {t: [(int(a), int(b)) for a, b in ps] for t, ps in d["postings"].items()}
        return cls(d["docnos"], d["texts"], postings, d["doc_lengths"], bool(d.get("stem", False)))


def _porter(tokens: Sequence[str]) -> List[str]:
    try:
        from nltk.stem.porter import PorterStemmer
    except ImportError as exc:  # optional extra
        raise QueryVarError("stemming needs nltk: pip install 'queryvar[stem]'") from exc
    global _STEMMER
    if _STEMMER is None:
        _STEMMER = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)
    return [_STEMMER.stem(t, to_lowercase=False) for t in tokens]


_STEMMER = None


def _doc_terms(text: str) -> List[str]:
    # same lowercasing/whitespace split as tokenize, but empty documents are allowed
    return text.lower().split()


def build_index(corpus: Sequence[Document], stem: bool = False) -> InvertedIndex:
    """Index ``corpus``; ``stem`` applies the original Porter algorithm to documents and queries."""
    if not corpus:
        raise EmptyCorpus("corpus has no documents")
    postings: Dict[str, List[Tuple[int, int]]] = {}
    lengths = []
    seen = set()
    for ordinal, doc in enumerate(corpus):
        if doc.docno in seen:
            raise DuplicateDocno(doc.docno)
        seen.add(doc.docno)
        terms = _doc_terms(doc.text)
        if stem:
            terms = _porter(terms)
        lengths.append(len(terms))
        for term, tf in Counter(terms).items():
            postings.setdefault(term, []).append((ordinal, tf))
    return InvertedIndex([d.docno for d in corpus], [d.text for d in corpus], postings, lengths, stem)


def query_terms(query_tokens) -> List[Tuple[str, int]]:
    """(term, query frequency) pairs in sorted term order.

    Summing contributions in a fixed order makes scores independent of query
    word order down to the last bit.
    """
    return sorted(Counter(_tokens(query_tokens)).items())


def _tokens(query_tokens) -> List[str]:
    return list(query_tokens.tokens if hasattr(query_tokens, "tokens") else query_tokens)


def _term_weight(index: InvertedIndex, tf: int, doc: int) -> float:
    norm = K1 * (1.0 - B + B * index.doc_lengths[doc] / index.avg_doc_length)
    return tf * (K1 + 1.0) / (tf + norm)


def bm25_score(index: InvertedIndex, query_tokens, doc: int) -> float:
    if not 0 <= doc < index.num_docs:
        raise IndexError(f"document ordinal {doc} out of range")
    score = 0.0
    for term, qtf in query_terms(index.analyze(_tokens(query_tokens))):
        tf = index.tf(term, doc)
        if tf:
            score += qtf * index.idf(term) * _term_weight(index, tf, doc)
    return score


def score_all(index: InvertedIndex, query_tokens) -> Dict[int, float]:
    """Term-at-a-time accumulation over postings; same summation order as bm25_score."""
    acc: Dict[int, float] = {}
    for term, qtf in query_terms(index.analyze(_tokens(query_tokens))):
        postings = index.postings.get(term)
        if not postings:
            continue
        idf = index.idf(term)
        for doc, tf in postings:
            acc[doc] = acc.get(doc, 0.0) + qtf * idf * _term_weight(index, tf, doc)
    return acc


def retrieve_top_k(index: InvertedIndex, q: Union[Query, str], k: int = 1000, tag: str = "bm25") -> RunList:
    if k < 1:
        raise ValueError("k must be >= 1")
    qid, text = (q.qid, q.text) if isinstance(q, Query) else ("", q)
    acc = score_all(index, tokenize(text))
    best = heapq.nsmallest(
        k, ((-s, index.docnos[d]) for d, s in acc.items() if s > 0.0))
    return RunList.from_scored(qid, ((docno, -neg) for neg, docno in best), tag)


def rerank(adapter: RerankerAdapter, q: Union[Query, str], candidates: RunList, threshold: int = 100,
           texts: Optional[Mapping[str, str]] = None, tag: Optional[str] = None) -> RunList:
    """Re-order the top ``threshold`` candidates by adapter score.

    Ties keep first-stage order. Candidates past the threshold follow in their
    original order; their scores are shifted down so that the whole list stays
    non-increasing (relative gaps among them are preserved).
    """
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    text = q.text if isinstance(q, Query) else q
    head, tail = candidates.entries[:threshold], candidates.entries[threshold:]
    docs = [(e.docno, (texts or {}).get(e.docno, "")) for e in head]
    scores = adapter.score(candidates.qid, text, docs)
    order = sorted(range(len(head)), key=lambda i: (-scores[head[i].docno], i))
    scored = [(head[i].docno, scores[head[i].docno]) for i in order]
    if tail:
        floor = min(s for _, s in scored) if scored else 0.0
        shift = tail[0].score - floor + 1.0
        scored += [(e.docno, e.score - shift) for e in tail]
    return RunList.from_scored(candidates.qid, scored, tag or candidates.tag)


def run_pipeline(index: InvertedIndex, queries: Sequence[Query], adapter: Optional[RerankerAdapter] = None,
                 k: int = 1000, threshold: int = 100, first_stage: Optional[Mapping[str, Query]] = None,
                 tag: str = "bm25") -> Dict[str, RunList]:
    """BM25 (then optional re-ranking) for each query.

    With ``first_stage`` (qid -> original query) the candidates come from the
    original text and only the re-ranker sees ``queries``.
    """
    texts = dict(zip(index.docnos, index.texts))
    runs = {}
    for q in queries:
        fs = first_stage[q.qid] if first_stage is not None else q
        run = retrieve_top_k(index, Query(q.qid, fs.text), k, tag)
        if adapter is not None:
            run = rerank(adapter, q, run, threshold, texts, tag)
        runs[q.qid] = run
    return runs
