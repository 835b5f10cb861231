import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import bm25_brute
from queryvar.adapters import RerankerAdapter
from queryvar.core import Query
from queryvar.retrieval import (
    DuplicateDocno,
    EmptyCorpus,
    Document,
    InvertedIndex,
    RunList,
    bm25_score,
    build_index,
    rerank,
    retrieve_top_k,
    run_pipeline,
)


def _index(*texts):
    return build_index([Document(f"d{i + 1}", t) for i, t in enumerate(texts)])


def test_index_statistics():
    idx = _index("a b", "a")
    assert idx.doc_frequencies["a"] == 2 and idx.doc_frequencies["b"] == 1
    assert idx.avg_doc_length == 1.5
    assert idx.num_docs == 2


def test_index_errors():
    with pytest.raises(EmptyCorpus):
        build_index([])
    with pytest.raises(DuplicateDocno):
        build_index([Document("d", "x"), Document("d", "y")])


def test_single_document_score():
    idx = _index("cat cat dog")
    s = bm25_score(idx, ["cat"], 0)
    assert s == pytest.approx(math.log(4 / 3) * 1.375, abs=1e-12)
    assert round(s, 4) == 0.3956


def test_idf_positive_even_for_ubiquitous_terms():
    idx = _index("the cat", "the dog", "the end")
    assert idx.idf("the") > 0
    assert idx.idf("cat") > idx.idf("the")


def test_ties_broken_by_docno():
    idx = build_index([Document("z", "cat"), Document("a", "cat"), Document("m", "cat")])
    assert retrieve_top_k(idx, Query("q", "cat")).docnos == ["a", "m", "z"]


def test_zero_score_documents_dropped_and_k_respected():
    idx = _index("cat", "dog", "cat dog", "fish")
    run = retrieve_top_k(idx, Query("q", "cat"), k=10)
    assert set(run.docnos) == {"d1", "d3"}
    assert len(retrieve_top_k(idx, Query("q", "cat dog"), k=1)) == 1
    with pytest.raises(ValueError):
        retrieve_top_k(idx, Query("q", "cat"), k=0)


def test_word_order_exactly_invariant():
    idx = _index("cat dog bird", "dog dog", "bird cat", "the cat of dogs")
    a = retrieve_top_k(idx, Query("q", "cat the dog bird"))
    b = retrieve_top_k(idx, Query("q", "bird dog cat the"))
    assert [(e.docno, e.score) for e in a.entries] == [(e.docno, e.score) for e in b.entries]


def test_index_roundtrip():
    idx = _index("a b c", "b c", "c")
    back = InvertedIndex.from_dict(idx.to_dict())
    q = Query("q", "a c")
    assert retrieve_top_k(back, q).entries == retrieve_top_k(idx, q).entries
    with pytest.raises(ValueError):
        InvertedIndex.from_dict({"format": "other"})


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_matches_brute_force(seed):
    rnd = random.Random(seed)
    vocab = [f"w{i}" for i in range(12)]
    docs = [(f"d{i:02d}", " ".join(rnd.choices(vocab, k=rnd.randint(0, 12)))) for i in range(rnd.randint(1, 30))]
    query = " ".join(rnd.choices(vocab, k=rnd.randint(1, 5)))
    run = retrieve_top_k(build_index([Document(d, t) for d, t in docs]), Query("q", query))
    ref = sorted(((d, s) for d, s in bm25_brute(docs, query).items() if s > 0), key=lambda x: (-x[1], x[0]))
    assert run.docnos == [d for d, _ in ref]
    for e, (_, s) in zip(run.entries, ref):
        assert abs(e.score - s) <= 1e-9


def _candidates(n=5):
    return RunList.from_scored("q", [(f"d{i}", 10.0 - i) for i in range(1, n + 1)], "bm25")


def test_rerank_reverse_stub_threshold():
    out = rerank(RerankerAdapter("stub:reverse"), Query("q", "x"), _candidates(), threshold=3)
    assert out.docnos == ["d3", "d2", "d1", "d4", "d5"]
    assert [e.rank for e in out.entries] == [1, 2, 3, 4, 5]
    out.validate()


def test_rerank_identity_keeps_order():
    out = rerank(RerankerAdapter("stub:identity"), Query("q", "x"), _candidates(), threshold=100)
    assert out.docnos == _candidates().docnos
    with pytest.raises(ValueError):
        rerank(RerankerAdapter("stub:identity"), Query("q", "x"), _candidates(), threshold=0)


def test_rerank_ties_keep_first_stage_order():
    class Flat:
        def score(self, qid, query, docs):
            return {d: 1.0 for d, _ in docs}

    assert rerank(Flat(), Query("q", "x"), _candidates(), threshold=5).docnos == _candidates().docnos


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 30), st.integers(1, 40), st.integers(0, 1000))
def test_rerank_block_structure(n, threshold, seed):
    rnd = random.Random(seed)

    class Rand:
        def score(self, qid, query, docs):
            return {d: rnd.choice([0.0, 1.0, -2.5, 3.25]) for d, _ in docs}

    cands = RunList.from_scored("q", [(f"d{i}", float(n - i) + rnd.random()) for i in range(n)])
    out = rerank(Rand(), Query("q", "x"), cands, threshold)
    out.validate()
    h = min(threshold, n)
    assert sorted(out.docnos[:h]) == sorted(cands.docnos[:h])
    assert out.docnos[h:] == cands.docnos[h:]


def test_pipeline_split_mode_uses_original_candidates():
    idx = _index("cat", "dog", "cat dog")
    orig = {"q": Query("q", "cat")}
    var = [Query("q", "dog")]
    plain = run_pipeline(idx, var, RerankerAdapter("stub:identity"))
    split = run_pipeline(idx, var, RerankerAdapter("stub:identity"), first_stage=orig)
    assert set(plain["q"].docnos) == {"d2", "d3"}
    assert set(split["q"].docnos) == {"d1", "d3"}


def test_recall_grows_with_k(toy_dir):
    from queryvar.evaluation import recall_at_k
    from queryvar.io import load_corpus, load_queries, parse_qrels

    idx = build_index(load_corpus(toy_dir / "corpus.jsonl"))
    qrels = parse_qrels(toy_dir / "qrels.txt")
    for q in load_queries(toy_dir / "queries.tsv"):
        run = retrieve_top_k(idx, q, k=1000)
        vals = [recall_at_k(run, qrels, k) for k in (1, 2, 5, 10, 20)]
        assert vals == sorted(vals)


def test_stemming_matches_prestemmed_brute_force():
    pytest.importorskip("nltk")
    from nltk.stem.porter import PorterStemmer

    ps = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)
    docs = [("d1", "running dogs ran"), ("d2", "the runner runs"), ("d3", "connected connections"),
            ("d4", "cats")]
    idx = build_index([Document(d, t) for d, t in docs], stem=True)
    assert idx.doc_frequencies["run"] == 2
    stemmed = [(d, " ".join(ps.stem(w) for w in t.split())) for d, t in docs]
    for query in ("run", "connecting dog", "cat running"):
        run = retrieve_top_k(idx, Query("q", query))
        ref = bm25_brute(stemmed, " ".join(ps.stem(w) for w in query.split()))
        ref = sorted(((d, s) for d, s in ref.items() if s > 0), key=lambda x: (-x[1], x[0]))
        assert run.docnos == [d for d, _ in ref]
        assert all(abs(e.score - s) <= 1e-9 for e, (_, s) in zip(run.entries, ref))
    back = InvertedIndex.from_dict(idx.to_dict())
    assert back.stem and retrieve_top_k(back, Query("q", "running")).entries == \
        retrieve_top_k(idx, Query("q", "running")).entries
    # unstemmed by default: "running" does not match "runs"
    assert retrieve_top_k(_index("runs"), Query("q", "running")).docnos == []
