"""Shared domain types, tokenization and seeded randomness."""

from __future__ import annotations

import enum
import hashlib
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Tuple


class QueryVarError(Exception):
    """Base class for toolkit errors."""


class EmptyQuery(QueryVarError):
    pass


class Category(enum.Enum):
    GenSpecialization = "GenSpecialization"
    AspectChange = "AspectChange"
    Misspelling = "Misspelling"
    Naturality = "Naturality"
    Ordering = "Ordering"
    Paraphrasing = "Paraphrasing"

    @property
    def syntax_only(self) -> bool:
        return self not in (Category.GenSpecialization, Category.AspectChange)


class MethodId(enum.Enum):
    NeighbCharSwap = "NeighbCharSwap"
    RandomCharSub = "RandomCharSub"
    QWERTYCharSub = "QWERTYCharSub"
    RemoveStopWords = "RemoveStopWords"
    T5DescToTitle = "T5DescToTitle"
    RandomOrderSwap = "RandomOrderSwap"
    BackTranslation = "BackTranslation"
    T5QQP = "T5QQP"
    WordEmbedSynSwap = "WordEmbedSynSwap"
    WordNetSynSwap = "WordNetSynSwap"

    @property
    def category(self) -> Category:
        return METHOD_CATEGORY[self]


METHOD_CATEGORY = {
    MethodId.NeighbCharSwap: Category.Misspelling,
    MethodId.RandomCharSub: Category.Misspelling,
    MethodId.QWERTYCharSub: Category.Misspelling,
    MethodId.RemoveStopWords: Category.Naturality,
    MethodId.T5DescToTitle: Category.Naturality,
    MethodId.RandomOrderSwap: Category.Ordering,
    MethodId.BackTranslation: Category.Paraphrasing,
    MethodId.T5QQP: Category.Paraphrasing,
    MethodId.WordEmbedSynSwap: Category.Paraphrasing,
    MethodId.WordNetSynSwap: Category.Paraphrasing,
}

# Table order used for reports: categories in taxonomy order, methods as listed.
ALL_METHODS: Tuple[MethodId, ...] = tuple(MethodId)


class Validity(enum.Enum):
    AutoValid = "AutoValid"
    AutoInvalid = "AutoInvalid"
    NeedsAnnotation = "NeedsAnnotation"
    ManualValid = "ManualValid"
    ManualInvalid = "ManualInvalid"

    @property
    def is_valid(self) -> bool:
        return self in (Validity.AutoValid, Validity.ManualValid)

    @property
    def resolved(self) -> bool:
        return self is not Validity.NeedsAnnotation


@dataclass(frozen=True)
class Query:
    qid: str
    text: str

    def __post_init__(self):
        if not self.text.strip():
            raise EmptyQuery(f"query {self.qid!r} has empty text")


@dataclass(frozen=True)
class Variation:
    qid: str
    method: MethodId
    text: str
    identical: bool
    validity: Validity

    def __post_init__(self):
        if self.identical and self.validity is not Validity.AutoInvalid:
            raise ValueError("identical variations must be AutoInvalid")

    @property
    def category(self) -> Category:
        return self.method.category

    def with_validity(self, validity: Validity) -> "Variation":
        return Variation(self.qid, self.method, self.text, self.identical, validity)


# ---------------------------------------------------------------- stopwords


def read_word_list(path) -> List[str]:
    """Read a one-token-per-line file; blank lines and ``#`` comments are skipped."""
    words = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            words.append(line.lower())
    return words


def _bundled_stopwords() -> FrozenSet[str]:
    with resources.as_file(resources.files("queryvar.data") / "stopwords.txt") as p:
        return frozenset(read_word_list(p))


DEFAULT_STOPWORDS: FrozenSet[str] = _bundled_stopwords()
_stopwords: FrozenSet[str] = DEFAULT_STOPWORDS


def stopwords() -> FrozenSet[str]:
    return _stopwords


def set_stopwords(words: Optional[Iterable[str]] = None) -> None:
    """Replace the configured stopword list; ``None`` restores the bundled one."""
    global _stopwords
    _stopwords = DEFAULT_STOPWORDS if words is None else frozenset(w.lower() for w in words)


def load_stopwords(path) -> None:
    set_stopwords(read_word_list(path))


# ---------------------------------------------------------------- tokens


@dataclass(frozen=True)
class TokenList:
    tokens: Tuple[str, ...]
    is_stopword: Tuple[bool, ...]

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def text(self) -> str:
        return " ".join(self.tokens)


def tokenize(text: str, stop: Optional[FrozenSet[str]] = None) -> TokenList:
    """Lowercase and split on whitespace, flagging stopwords.

    >>> tokenize("what is visceral").is_stopword
    (True, True, False)
    """
    toks = tuple(text.lower().split())
    if not toks:
        raise EmptyQuery("query text is empty or whitespace-only")
    stop = _stopwords if stop is None else stop
    return TokenList(toks, tuple(t in stop for t in toks))


_WS = re.compile(r"\s+")


def normalize(text: str) -> str:
    """Trim, collapse internal whitespace and lowercase."""
    return _WS.sub(" ", text.strip()).lower()


# ---------------------------------------------------------------- rng

MASK64 = (1 << 64) - 1


class SeededRng:
    """SplitMix64 generator.

    State transition: ``state = (state + 0x9E3779B97F4A7C15) mod 2**64``; each
    draw is the state passed through the SplitMix64 finalizer (xor-shift 30,
    multiply 0xBF58476D1CE4E5B9, xor-shift 27, multiply 0x94D049BB133111EB,
    xor-shift 31). Pure integer arithmetic, so sequences match on every
    platform and in any language.
    """

    __slots__ = ("state",)

    def __init__(self, state: int):
        self.state = state & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        return mix64(self.state)

    def below(self, n: int) -> int:
        """Uniform integer in ``[0, n)`` by rejection sampling."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def choice(self, seq):
        return seq[self.below(len(seq))]


def mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_rng(global_seed: int, qid: str, method: MethodId) -> SeededRng:
    # BLAKE2b over a length-prefixed encoding, so ("a", "bc") and ("ab", "c") differ
    h = hashlib.blake2b(digest_size=8)
    for part in (str(global_seed & MASK64), qid, method.value):
        raw = part.encode("utf-8")
        h.update(len(raw).to_bytes(4, "little"))
        h.update(raw)
    return SeededRng(int.from_bytes(h.digest(), "little"))
