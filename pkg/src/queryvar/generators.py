"""Query variation generators, one function per method."""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .adapters import AdapterError, TransformerAdapter
from .annotation import validity_rule
from .core import (
    EmptyQuery,
    MethodId,
    Query,
    QueryVarError,
    SeededRng,
    TokenList,
    Variation,
    derive_rng,
    normalize,
    tokenize,
)


class GenerationError(QueryVarError):
    pass


class NoEligibleTerm(GenerationError):
    pass


class AllStopwords(GenerationError):
    pass


class InsufficientTokens(GenerationError):
    pass


LETTERS = string.ascii_lowercase
# printable, non-whitespace, no uppercase (tokenization lowercases)
FULL_ASCII = "".join(chr(c) for c in range(33, 127) if not chr(c).isupper())


def _load_qwerty() -> Dict[str, Tuple[str, ...]]:
    raw = json.loads((resources.files("queryvar.data") / "qwerty.json").read_text(encoding="utf-8"))
    return {k: tuple(v) for k, v in raw.items()}


QWERTY: Dict[str, Tuple[str, ...]] = _load_qwerty()


def _variation(q: Query, method: MethodId, text: str) -> Variation:
    text = text.strip()
    if not text:
        raise EmptyQuery(f"{method.value} produced an empty query for {q.qid!r}")
    identical = normalize(text) == normalize(q.text)
    return Variation(q.qid, method, text, identical, validity_rule(method.category, identical))


def _replace_token(toks: TokenList, i: int, new: str) -> str:
    out = list(toks.tokens)
    out[i] = new
    return " ".join(out)


def _pick_term(toks: TokenList, rng: SeededRng, ok) -> int:
    eligible = [i for i, (t, stop) in enumerate(zip(toks.tokens, toks.is_stopword)) if not stop and ok(t)]
    if not eligible:
        raise NoEligibleTerm("no non-stopword term can be modified")
    return rng.choice(eligible)


# ---------------------------------------------------------------- misspelling


def neighb_char_swap(q: Query, rng: SeededRng) -> Variation:
    """Transpose one pair of adjacent, differing characters in a random content term."""
    toks = tokenize(q.text)

    def pairs(t):
        return [j for j in range(len(t) - 1) if t[j] != t[j + 1]]

    i = _pick_term(toks, rng, lambda t: bool(pairs(t)))
    t = toks.tokens[i]
    j = rng.choice(pairs(t))
    return _variation(q, MethodId.NeighbCharSwap, _replace_token(toks, i, t[:j] + t[j + 1] + t[j] + t[j + 2:]))


def random_char_sub(q: Query, rng: SeededRng, full_ascii: bool = False) -> Variation:
    """Replace one letter of a random content term with a different random character."""
    toks = tokenize(q.text)
    i = _pick_term(toks, rng, lambda t: any(c in LETTERS for c in t))
    t = toks.tokens[i]
    j = rng.choice([k for k, c in enumerate(t) if c in LETTERS])
    alphabet = [c for c in (FULL_ASCII if full_ascii else LETTERS) if c != t[j]]
    return _variation(q, MethodId.RandomCharSub, _replace_token(toks, i, t[:j] + rng.choice(alphabet) + t[j + 1:]))


def qwerty_char_sub(q: Query, rng: SeededRng) -> Variation:
    """Replace one letter of a random content term with a neighbouring key."""
    toks = tokenize(q.text)
    i = _pick_term(toks, rng, lambda t: any(c in QWERTY for c in t))
    t = toks.tokens[i]
    j = rng.choice([k for k, c in enumerate(t) if c in QWERTY])
    return _variation(q, MethodId.QWERTYCharSub, _replace_token(toks, i, t[:j] + rng.choice(QWERTY[t[j]]) + t[j + 1:]))


# ---------------------------------------------------------------- naturality


def remove_stopwords(q: Query) -> Variation:
    toks = tokenize(q.text)
    kept = [t for t, stop in zip(toks.tokens, toks.is_stopword) if not stop]
    if not kept:
        raise AllStopwords(f"query {q.qid!r} consists only of stopwords")
    return _variation(q, MethodId.RemoveStopWords, " ".join(kept))


def _check_kind(adapter: TransformerAdapter, kind: str):
    if adapter.kind != kind:
        raise ValueError(f"expected a {kind!r} adapter, got {adapter.kind!r}")


def t5_desc_to_title(q: Query, adapter: TransformerAdapter) -> Variation:
    _check_kind(adapter, "desc_to_title")
    return _variation(q, MethodId.T5DescToTitle, adapter.transform([(q.qid, q.text)])[q.qid])


# ---------------------------------------------------------------- ordering


def random_order_swap(q: Query, rng: SeededRng) -> Variation:
    """Exchange one uniformly drawn unordered pair of token positions."""
    toks = tokenize(q.text)
    n = len(toks)
    if n < 2:
        raise InsufficientTokens(f"query {q.qid!r} has a single token")
    # decode a uniform index over the n*(n-1)/2 pairs i < j
    k = rng.below(n * (n - 1) // 2)
    i = 0
    while k >= n - 1 - i:
        k -= n - 1 - i
        i += 1
    j = i + 1 + k
    out = list(toks.tokens)
    out[i], out[j] = out[j], out[i]
    return _variation(q, MethodId.RandomOrderSwap, " ".join(out))


# ---------------------------------------------------------------- paraphrasing


def back_translation(q: Query, adapter: TransformerAdapter) -> Variation:
    _check_kind(adapter, "back_translation")
    return _variation(q, MethodId.BackTranslation, adapter.transform([(q.qid, q.text)])[q.qid])


def t5_qqp(q: Query, adapter: TransformerAdapter) -> Variation:
    _check_kind(adapter, "qqp")
    return _variation(q, MethodId.T5QQP, adapter.transform([(q.qid, q.text)])[q.qid])


class EmbeddingStore:
    """Word vectors with cosine nearest-neighbour lookup."""

    def __init__(self, vocabulary: Sequence[str], vectors):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(vocabulary):
            raise ValueError("need one vector per vocabulary word, all of one dimension")
        if len(set(vocabulary)) != len(vocabulary):
            raise ValueError("vocabulary entries must be unique")
        self.vocabulary = list(vocabulary)
        self.vectors = vectors
        self.index = {w: i for i, w in enumerate(self.vocabulary)}
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        self._unit = np.divide(vectors, norms, out=np.zeros_like(vectors), where=norms > 0)
        self._cache: Dict[str, Optional[str]] = {}

    def __contains__(self, word):
        return word in self.index

    def nearest(self, word: str) -> Optional[str]:
        """Most cosine-similar other word; ties go to the lower vocabulary index."""
        if word not in self._cache:
            if word not in self.index or len(self.vocabulary) < 2:
                self._cache[word] = None
            else:
                i = self.index[word]
                sims = self._unit @ self._unit[i]
                sims[i] = -np.inf
                self._cache[word] = self.vocabulary[int(np.argmax(sims))]
        return self._cache[word]

    @classmethod
    def load(cls, path) -> "EmbeddingStore":
        """Text format: header ``<vocab_size> <dim>``, then ``word v1 ... vdim`` per line."""
        with open(path, encoding="utf-8") as f:
            header = f.readline().split()
            if len(header) != 2:
                raise ValueError(f"{path}: bad embedding header")
            size, dim = int(header[0]), int(header[1])
            words, rows = [], []
            for lineno, line in enumerate(f, start=2):
                parts = line.rstrip("\n").split(" ")
                if not line.strip():
                    continue
                if len(parts) != dim + 1:
                    raise ValueError(f"{path}:{lineno}: expected {dim} values")
                words.append(parts[0])
                rows.append([float(x) for x in parts[1:]])
        if len(words) != size:
            raise ValueError(f"{path}: header says {size} words, found {len(words)}")
        return cls(words, np.array(rows).reshape(len(rows), dim))


@dataclass
class SynonymLexicon:
    entries: Dict[str, List[str]]

    def __post_init__(self):
        clean = {}
        for head, syns in self.entries.items():
            head = head.lower()
            syns = [s.replace("_", " ").lower().strip() for s in syns]
            syns = [s for s in syns if s and s != head]
            if syns:
                clean[head] = syns
        self.entries = clean

    def first(self, word: str) -> Optional[str]:
        syns = self.entries.get(word)
        return syns[0] if syns else None

    @classmethod
    def load(cls, path) -> "SynonymLexicon":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ValueError(f"{path}: lexicon must be a JSON object")
        return cls({str(k): [str(s) for s in v] for k, v in data.items()})


def word_embed_syn_swap(q: Query, store: EmbeddingStore, rng: SeededRng) -> Variation:
    toks = tokenize(q.text)
    i = _pick_term(toks, rng, lambda t: store.nearest(t) is not None)
    return _variation(q, MethodId.WordEmbedSynSwap, _replace_token(toks, i, store.nearest(toks.tokens[i])))


def wordnet_syn_swap(q: Query, lex: SynonymLexicon, rng: SeededRng) -> Variation:
    toks = tokenize(q.text)
    i = _pick_term(toks, rng, lambda t: lex.first(t) is not None)
    return _variation(q, MethodId.WordNetSynSwap, _replace_token(toks, i, lex.first(toks.tokens[i])))


# ---------------------------------------------------------------- batch


ADAPTER_KIND = {
    MethodId.T5DescToTitle: "desc_to_title",
    MethodId.T5QQP: "qqp",
    MethodId.BackTranslation: "back_translation",
}


@dataclass
class GeneratorResources:
    embeddings: Optional[EmbeddingStore] = None
    lexicon: Optional[SynonymLexicon] = None
    adapters: Dict[str, TransformerAdapter] = field(default_factory=dict)
    full_ascii: bool = False


@dataclass(frozen=True)
class GenerationFailure:
    qid: str
    method: MethodId
    reason: str


@dataclass
class GenerationResult:
    variations: List[Variation]
    failures: List[GenerationFailure]


def _generate_one(q: Query, method: MethodId, seed: int, res: GeneratorResources) -> Variation:
    rng = derive_rng(seed, q.qid, method)
    if method is MethodId.NeighbCharSwap:
        return neighb_char_swap(q, rng)
    if method is MethodId.RandomCharSub:
        return random_char_sub(q, rng, res.full_ascii)
    if method is MethodId.QWERTYCharSub:
        return qwerty_char_sub(q, rng)
    if method is MethodId.RemoveStopWords:
        return remove_stopwords(q)
    if method is MethodId.RandomOrderSwap:
        return random_order_swap(q, rng)
    if method is MethodId.WordEmbedSynSwap:
        if res.embeddings is None:
            raise NoEligibleTerm("no embedding store configured")
        return word_embed_syn_swap(q, res.embeddings, rng)
    if method is MethodId.WordNetSynSwap:
        if res.lexicon is None:
            raise NoEligibleTerm("no synonym lexicon configured")
        return wordnet_syn_swap(q, res.lexicon, rng)
    raise ValueError(f"{method.value} is adapter-backed")


def generate_all(queries: Sequence[Query], methods: Sequence[MethodId], global_seed: int,
                 resources: Optional[GeneratorResources] = None) -> GenerationResult:
    """One variation per (query, method); failures are recorded instead of raised.

    Output is ordered by query (input order) then method (argument order).
    """
    res = resources or GeneratorResources()
    by_key: Dict[Tuple[str, MethodId], object] = {}
    for method in methods:
        kind = ADAPTER_KIND.get(method)
        if kind is None:
            for q in queries:
                try:
                    by_key[q.qid, method] = _generate_one(q, method, global_seed, res)
                except (GenerationError, EmptyQuery) as exc:
                    by_key[q.qid, method] = GenerationFailure(q.qid, method, f"{type(exc).__name__}: {exc}")
            continue
        adapter = res.adapters.get(kind)
        if adapter is None:
            for q in queries:
                by_key[q.qid, method] = GenerationFailure(q.qid, method, f"AdapterUnavailable: no {kind} adapter")
            continue
        try:
            outputs = adapter.transform([(q.qid, q.text) for q in queries])
        except AdapterError as exc:
            for q in queries:
                by_key[q.qid, method] = GenerationFailure(q.qid, method, f"{type(exc).__name__}: {exc}")
            continue
        for q in queries:
            try:
                by_key[q.qid, method] = _variation(q, method, outputs[q.qid])
            except EmptyQuery as exc:
                by_key[q.qid, method] = GenerationFailure(q.qid, method, f"EmptyQuery: {exc}")
    variations, failures = [], []
    for q in queries:
        for method in methods:
            item = by_key[q.qid, method]
            (variations if isinstance(item, Variation) else failures).append(item)
    return GenerationResult(variations, failures)
