"""Stub model servers speaking the adapter line protocols on stdin/stdout.

    python -m queryvar.stubs transformer --mode echo
    python -m queryvar.stubs reranker --mode overlap
"""

import argparse
import json
import sys

from .adapters import _load_table, stub_rerank_scores, stub_transform


def serve_transformer(mode, table_path=None, stdin=sys.stdin, stdout=sys.stdout):
    tables = {}
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        req = json.loads(line)
        kind = req.get("kind", "qqp")
        if kind not in tables:
            tables[kind] = _load_table(table_path, kind)
        resp = {"id": req["id"], "text": stub_transform(mode, req["text"], tables[kind])}
        stdout.write(json.dumps(resp) + "\n")
        stdout.flush()


def serve_reranker(mode, stdin=sys.stdin, stdout=sys.stdout):
    batch = []
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        req = json.loads(line)
        if req.get("flush"):
            by_qid = {}
            for r in batch:
                by_qid.setdefault(r["qid"], []).append(r)
            for qid, reqs in by_qid.items():
                docs = [(r["docno"], r["text"]) for r in reqs]
                for (docno, _), s in zip(docs, stub_rerank_scores(mode, reqs[0]["query"], docs)):
                    stdout.write(json.dumps({"qid": qid, "docno": docno, "score": s}) + "\n")
            stdout.write('{"flush": true}\n')
            stdout.flush()
            batch = []
        else:
            batch.append(req)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="python -m queryvar.stubs")
    sub = ap.add_subparsers(dest="role", required=True)
    t = sub.add_parser("transformer")
    t.add_argument("--mode", choices=["echo", "table", "truncate"], default="echo")
    t.add_argument("--table")
    r = sub.add_parser("reranker")
    r.add_argument("--mode", choices=["identity", "reverse", "overlap"], default="identity")
    args = ap.parse_args(argv)
    if args.role == "transformer":
        serve_transformer(args.mode, args.table)
    else:
        serve_reranker(args.mode)


if __name__ == "__main__":
    main()
