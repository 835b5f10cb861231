import warnings

import pytest

from queryvar.core import MethodId, Validity, Variation
from queryvar.evaluation import DeltaRecord, Qrels
from queryvar.io import (
    DuplicateQid,
    ExperimentManifest,
    ManifestError,
    NegativeGrade,
    ParseError,
    RankGap,
    load_corpus,
    load_queries,
    parse_qrels,
    parse_run,
    read_deltas_csv,
    read_variations,
    write_deltas_csv,
    write_qrels,
    write_run,
    write_variations,
)
from queryvar.retrieval import RunList


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_queries(tmp_path):
    qs = load_queries(_write(tmp_path, "q.tsv", "1\twhat is dark energy\n\n2\tdefine  visceral\n"))
    assert [(q.qid, q.text) for q in qs] == [("1", "what is dark energy"), ("2", "define  visceral")]
    with pytest.raises(DuplicateQid):
        load_queries(_write(tmp_path, "d.tsv", "1\ta\n1\tb\n"))
    with pytest.raises(ParseError, match=":2:"):
        load_queries(_write(tmp_path, "m.tsv", "1\ta\nno tab here\n"))


def test_corpus_formats(tmp_path):
    a = load_corpus(_write(tmp_path, "c.jsonl", '{"docno": "d1", "text": "a b"}\n{"docno": 2, "text": ""}\n'))
    assert [(d.docno, d.text) for d in a] == [("d1", "a b"), ("2", "")]
    b = load_corpus(_write(tmp_path, "c.tsv", "d1\ta b\n"))
    assert b[0].text == "a b"
    with pytest.raises(ParseError):
        load_corpus(_write(tmp_path, "bad.jsonl", '{"docno": "d1"}\n'))


def test_run_roundtrip_byte_identical(tmp_path):
    runs = [RunList.from_scored("q1", [("d3", 12.5), ("d1", 0.1 + 0.2), ("d2", 1e-17)], "bm25"),
            RunList.from_scored("q2", [("x", -1.0)], "bm25")]
    p = tmp_path / "a.run"
    write_run(p, runs)
    back = parse_run(p)
    assert back["q1"].entries == runs[0].entries
    q = tmp_path / "b.run"
    write_run(q, back.values())
    assert p.read_bytes() == q.read_bytes()


def test_run_errors(tmp_path):
    with pytest.raises(RankGap):
        parse_run(_write(tmp_path, "g.run", "q Q0 a 1 2.0 t\nq Q0 b 3 1.0 t\n"))
    with pytest.raises(ParseError, match="increases"):
        parse_run(_write(tmp_path, "i.run", "q Q0 a 1 1.0 t\nq Q0 b 2 2.0 t\n"))
    with pytest.raises(ParseError, match="duplicate"):
        parse_run(_write(tmp_path, "d.run", "q Q0 a 1 1.0 t\nq Q0 a 2 1.0 t\n"))
    with pytest.raises(ParseError, match="columns"):
        parse_run(_write(tmp_path, "c.run", "q Q0 a 1 1.0\n"))


def test_qrels(tmp_path):
    q = parse_qrels(_write(tmp_path, "q.txt", "1 0 d1 2\n1 0 d2 0\n2 0 d1 1\n"))
    assert q.for_qid("1") == {"d1": 2, "d2": 0}
    with pytest.raises(NegativeGrade):
        parse_qrels(_write(tmp_path, "n.txt", "1 0 d1 -1\n"))
    with pytest.warns(UserWarning, match="duplicate"):
        q = parse_qrels(_write(tmp_path, "dup.txt", "1 0 d1 2\n1 0 d1 0\n"))
    assert q.for_qid("1") == {"d1": 0}
    out = tmp_path / "w.txt"
    write_qrels(out, Qrels({("a", "x"): 3}))
    assert out.read_text() == "a 0 x 3\n"


def test_variations_roundtrip(tmp_path):
    vs = [Variation("q1", MethodId.T5QQP, "naïve query", False, Validity.ManualValid),
          Variation("q1", MethodId.RemoveStopWords, "same", True, Validity.AutoInvalid)]
    p = tmp_path / "v.jsonl"
    write_variations(p, vs)
    assert read_variations(p) == vs
    assert '"category": "Paraphrasing"' in p.read_text(encoding="utf-8")
    bad = _write(tmp_path, "bad.jsonl", p.read_text(encoding="utf-8").replace("Paraphrasing", "Ordering"))
    with pytest.raises(ParseError, match="category"):
        read_variations(bad)


def test_deltas_csv_roundtrip(tmp_path):
    rs = [DeltaRecord("q1", MethodId.QWERTYCharSub, 0.5, 0.1, 0.5 - 0.1, "BM25")]
    p = tmp_path / "d.csv"
    write_deltas_csv(p, rs)
    assert read_deltas_csv(p) == rs


def _manifest_dir(tmp_path):
    for name in ("c.jsonl", "q.tsv", "r.txt"):
        (tmp_path / name).write_text("")
    return tmp_path


def test_manifest(tmp_path):
    d = _manifest_dir(tmp_path)
    (d / "m.yaml").write_text(
        "corpus: c.jsonl\nqueries: q.tsv\nqrels: r.txt\nseed: 3\nmetric: recall@100\n"
        "methods: [T5QQP, RandomOrderSwap]\nretrieval: {k: 50, rerank_threshold: 10}\n"
        "adapters: {qqp: 'stub:table', pivot: fr}\nmodels: {BM25: null, X: 'stub:overlap'}\n")
    m = ExperimentManifest.load(d / "m.yaml")
    assert m.corpus == (d / "c.jsonl").resolve()
    assert m.output == (d / "output").resolve()
    assert (m.seed, str(m.metric), m.k, m.rerank_threshold) == (3, "recall@100", 50, 10)
    assert m.methods == [MethodId.T5QQP, MethodId.RandomOrderSwap]
    assert m.adapters == {"qqp": "stub:table"} and m.pivot == "fr"
    assert m.models == {"BM25": None, "X": "stub:overlap"}


@pytest.mark.parametrize("body, match", [
    ("queries: q.tsv\nqrels: r.txt\n", "corpus"),
    ("corpus: c.jsonl\nqueries: q.tsv\nqrels: missing.txt\n", "does not exist"),
    ("corpus: c.jsonl\nqueries: q.tsv\nqrels: r.txt\ncolour: red\n", "unknown"),
    ("corpus: c.jsonl\nqueries: q.tsv\nqrels: r.txt\nmethods: [Typo]\n", "Typo"),
    ("corpus: c.jsonl\nqueries: q.tsv\nqrels: r.txt\npending_validity: maybe\n", "pending"),
    ("corpus: [unclosed\n", "m.yaml"),
])
def test_manifest_errors(tmp_path, body, match):
    d = _manifest_dir(tmp_path)
    (d / "m.yaml").write_text(body)
    with pytest.raises(ManifestError, match=match):
        ExperimentManifest.load(d / "m.yaml")


def test_toy_manifest_loads(toy_dir):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        m = ExperimentManifest.load(toy_dir / "manifest.yaml")
    assert m.seed == 7 and len(m.methods) == 10
