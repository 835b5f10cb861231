"""External model adapters: subprocess and HTTP line protocols, plus stubs.

Transformer request/response (one JSON object per line)::

    -> {"id": "<qid>", "kind": "qqp|desc_to_title|back_translation", "text": "...", "pivot": "de"}
    <- {"id": "<qid>", "text": "..."}

Re-ranker request/response, each batch closed by a ``{"flush": true}`` line
in both directions::

    -> {"qid": ..., "query": ..., "docno": ..., "text": ...}
    <- {"qid": ..., "docno": ..., "score": ...}

Endpoints are written as strings: ``stub:<mode>[=<table.json>]``,
``cmd:<command line>`` or an ``http(s)://`` URL.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import threading
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .core import QueryVarError, tokenize


class AdapterError(QueryVarError):
    pass


class AdapterUnavailable(AdapterError):
    pass


class AdapterMalformedResponse(AdapterError):
    pass


class AdapterIncompleteResponse(AdapterError):
    pass


TRANSFORMER_KINDS = ("desc_to_title", "qqp", "back_translation")


@dataclass(frozen=True)
class AdapterEndpoint:
    mode: str  # "stub", "subprocess" or "http"
    target: str
    table: Optional[str] = None

    @classmethod
    def parse(cls, spec: str, base_dir: Optional[Path] = None) -> "AdapterEndpoint":
        spec = spec.strip()
        if spec.startswith(("http://", "https://")):
            return cls("http", spec)
        if spec.startswith("cmd:"):
            return cls("subprocess", spec[4:].strip())
        if spec.startswith("stub:"):
            mode, _, table = spec[5:].partition("=")
            if table and base_dir is not None and not Path(table).is_absolute():
                table = str(Path(base_dir) / table)
            return cls("stub", mode, table or None)
        raise ValueError(f"unrecognised adapter endpoint {spec!r}")

    def __str__(self):
        if self.mode == "http":
            return self.target
        if self.mode == "subprocess":
            return f"cmd:{self.target}"
        return f"stub:{self.target}" + (f"={self.table}" if self.table else "")


class LineProcess:
    """A long-lived child process spoken to with JSON lines over stdin/stdout."""

    def __init__(self, command: str):
        self.argv = shlex.split(command)
        self.proc: Optional[subprocess.Popen] = None
        self._lock = threading.Lock()

    def _ensure(self) -> subprocess.Popen:
        if self.proc is None or self.proc.poll() is not None:
            try:
                self.proc = subprocess.Popen(
                    self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                    text=True, encoding="utf-8", bufsize=1,
                )
            except OSError as exc:
                raise AdapterUnavailable(f"cannot start {self.argv!r}: {exc}") from exc
        return self.proc

    def exchange(self, requests: Sequence[dict], done: Callable[[List[dict]], bool]) -> List[dict]:
        with self._lock:
            proc = self._ensure()
            payload = "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in requests)
            # write from a thread: the child may fill its stdout pipe before draining stdin
            write_error: List[BaseException] = []

            def writer():
                try:
                    proc.stdin.write(payload)
                    proc.stdin.flush()
                except (BrokenPipeError, OSError) as exc:
                    write_error.append(exc)

            t = threading.Thread(target=writer, daemon=True)
            t.start()
            try:
                out = self._read(proc, done)
            except AdapterError:
                # the stream is out of step now, so start over with a fresh process
                self._kill()
                raise
            t.join()
            if write_error:
                raise AdapterUnavailable(str(write_error[0]))
            return out

    def _read(self, proc, done) -> List[dict]:
        out: List[dict] = []
        while not done(out):
            line = proc.stdout.readline()
            if not line:
                raise AdapterUnavailable(f"adapter process {self.argv[0]!r} closed its output")
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise AdapterMalformedResponse(f"non-JSON adapter line: {line[:80]!r}") from exc
            if not isinstance(obj, dict):
                raise AdapterMalformedResponse(f"adapter line is not an object: {line[:80]!r}")
            out.append(obj)
        return out

    def _kill(self):
        if self.proc is not None:
            self.proc.kill()
            self.proc.wait()
            self.proc = None

    def close(self):
        if self.proc is not None:
            if self.proc.stdin:
                self.proc.stdin.close()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
            self.proc = None


def _post_json(url: str, obj: dict, timeout: float) -> dict:
    req = urllib.request.Request(
        url, data=json.dumps(obj).encode("utf-8"),
        headers={"Content-Type": "application/json"}, method="POST",
    )
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            body = resp.read()
    except (urllib.error.URLError, OSError) as exc:
        raise AdapterUnavailable(f"{url}: {exc}") from exc
    try:
        out = json.loads(body)
    except json.JSONDecodeError as exc:
        raise AdapterMalformedResponse(f"{url} returned non-JSON body") from exc
    if not isinstance(out, dict):
        raise AdapterMalformedResponse(f"{url} returned a non-object body")
    return out


# ---------------------------------------------------------------- stubs

# Small deterministic word tables standing in for model output.
DEFAULT_TABLES: Dict[str, Dict[str, str]] = {
    "back_translation": {
        "what is durable medical equipment consist of": "what is sustainable medical equipment",
        "durable": "sustainable",
        "consist": "comprise",
        "causes": "reasons",
        "cures": "remedies",
        "define": "what is",
        "sosiology": "sociology",
    },
    "qqp": {
        "what is durable medical equipment consist of": "what is durable medical equipment",
        "how sun rises": "how does the sun rise",
        "define": "what is the meaning of",
        "causes": "what causes",
        "rises": "does rise",
        "cheap": "inexpensive",
    },
    "desc_to_title": {},
}


def _load_table(path: Optional[str], kind: str) -> Dict[str, str]:
    if path is None:
        return dict(DEFAULT_TABLES.get(kind, {}))
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return {str(k).lower(): str(v) for k, v in data.items()}


def stub_transform(mode: str, text: str, table: Optional[Mapping[str, str]] = None, n_words: int = 3) -> str:
    """Deterministic stand-ins for the encoder-decoder models.

    ``echo`` returns the input. ``table`` returns the entry for the whole
    normalised query if there is one, else replaces every token found in the
    table. ``truncate`` keeps the first ``n_words`` non-stopword tokens; when
    the query has fewer, the remaining slots are filled with the query's
    trailing tokens. Kept tokens stay in their original order.
    """
    toks = tokenize(text)
    if mode == "echo":
        return toks.text()
    if mode == "table":
        table = table or {}
        whole = toks.text()
        if whole in table:
            return table[whole]
        return " ".join(table.get(t, t) for t in toks.tokens)
    if mode == "truncate":
        keep = [i for i, s in enumerate(toks.is_stopword) if not s][:n_words]
        for i in reversed(range(len(toks))):
            if len(keep) >= n_words:
                break
            if i not in keep:
                keep.append(i)
        return " ".join(toks.tokens[i] for i in sorted(keep))
    raise ValueError(f"unknown transformer stub mode {mode!r}")


def stub_rerank_scores(mode: str, query: str, docs: Sequence[Tuple[str, str]]) -> List[float]:
    """Scores for ``docs`` (in first-stage order) under a stub re-ranker.

    ``identity`` scores ``-rank`` (keeps the order), ``reverse`` scores
    ``+rank``, ``overlap`` counts query unigrams plus query bigrams found in
    the document, so it is sensitive to word order.
    """
    if mode == "identity":
        return [-float(i + 1) for i in range(len(docs))]
    if mode == "reverse":
        return [float(i + 1) for i in range(len(docs))]
    if mode == "overlap":
        q = query.lower().split()
        q_bi = set(zip(q, q[1:]))
        scores = []
        for _, text in docs:
            d = text.lower().split()
            d_set = set(d)
            d_bi = set(zip(d, d[1:]))
            uni = sum(1 for t in set(q) if t in d_set)
            bi = sum(1 for b in q_bi if b in d_bi)
            scores.append(uni + 2.0 * bi + 1.0 / (1 + len(d)))
        return scores
    raise ValueError(f"unknown re-ranker stub mode {mode!r}")


# ---------------------------------------------------------------- adapters


class TransformerAdapter:
    """Client for a query-rewriting model (T5 title/QQP or back-translation)."""

    def __init__(self, endpoint, kind: str, pivot_language: str = "de",
                 max_concurrency: int = 4, timeout: float = 60.0):
        if kind not in TRANSFORMER_KINDS:
            raise ValueError(f"unknown transformer kind {kind!r}")
        self.endpoint = AdapterEndpoint.parse(endpoint) if isinstance(endpoint, str) else endpoint
        self.kind = kind
        self.pivot_language = pivot_language
        self.max_concurrency = max_concurrency
        self.timeout = timeout
        self._proc = LineProcess(self.endpoint.target) if self.endpoint.mode == "subprocess" else None
        self._table = (_load_table(self.endpoint.table, kind)
                       if self.endpoint.mode == "stub" else None)

    def _request(self, qid: str, text: str) -> dict:
        req = {"id": qid, "kind": self.kind, "text": text}
        if self.kind == "back_translation":
            req["pivot"] = self.pivot_language
        return req

    def transform(self, items: Sequence[Tuple[str, str]]) -> Dict[str, str]:
        """Rewrite ``(qid, text)`` pairs; returns qid -> rewritten text."""
        if not items:
            return {}
        if self.endpoint.mode == "stub":
            return {qid: stub_transform(self.endpoint.target, text, self._table) for qid, text in items}
        requests = [self._request(qid, text) for qid, text in items]
        wanted = {r["id"] for r in requests}
        if self.endpoint.mode == "subprocess":
            def done(got):
                # one line per request; ids may arrive in any order
                return len(got) >= len(requests)
            responses = self._proc.exchange(requests, done)
        else:
            with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
                responses = list(pool.map(lambda r: _post_json(self.endpoint.target, r, self.timeout), requests))
        out = {}
        for resp in responses:
            if "id" not in resp or not isinstance(resp.get("text"), str):
                raise AdapterMalformedResponse(f"response missing 'id' or 'text': {resp!r}")
            out[str(resp["id"])] = resp["text"].strip()
        missing = wanted - out.keys()
        if missing:
            raise AdapterMalformedResponse(f"no response for ids {sorted(missing)}")
        return out

    def close(self):
        if self._proc is not None:
            self._proc.close()


class RerankerAdapter:
    """Client for an external re-ranking model."""

    def __init__(self, endpoint, max_concurrency: int = 4, timeout: float = 60.0):
        self.endpoint = AdapterEndpoint.parse(endpoint) if isinstance(endpoint, str) else endpoint
        self.max_concurrency = max_concurrency
        self.timeout = timeout
        self._proc = LineProcess(self.endpoint.target) if self.endpoint.mode == "subprocess" else None

    def score(self, qid: str, query: str, docs: Sequence[Tuple[str, str]]) -> Dict[str, float]:
        """Score ``(docno, text)`` candidates given in first-stage order."""
        if not docs:
            return {}
        if self.endpoint.mode == "stub":
            scores = stub_rerank_scores(self.endpoint.target, query, docs)
            return {docno: s for (docno, _), s in zip(docs, scores)}
        requests = [{"qid": qid, "query": query, "docno": d, "text": t} for d, t in docs]
        if self.endpoint.mode == "subprocess":
            responses = self._proc.exchange(
                requests + [{"flush": True}], lambda got: bool(got) and got[-1].get("flush") is True)
            responses = responses[:-1]
        else:
            with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
                responses = list(pool.map(lambda r: _post_json(self.endpoint.target, r, self.timeout), requests))
        out: Dict[str, float] = {}
        for resp in responses:
            try:
                if resp["qid"] != qid:
                    continue
                out[str(resp["docno"])] = float(resp["score"])
            except (KeyError, TypeError, ValueError) as exc:
                raise AdapterMalformedResponse(f"bad re-ranker response {resp!r}") from exc
        requested = {d for d, _ in docs}
        if set(out) != requested:
            missing = sorted(requested - set(out))
            extra = sorted(set(out) - requested)
            raise AdapterIncompleteResponse(f"qid {qid}: missing {missing[:5]}, unexpected {extra[:5]}")
        return out

    def close(self):
        if self._proc is not None:
            self._proc.close()
