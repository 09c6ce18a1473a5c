"""Title cleaning, vocabulary building and fixed-length integer encoding."""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

SEQ_LEN = 15
PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
STOPWORDS_VERSION = "en_v1"

_EDGE_PUNCT = re.compile(r"^[\W_]+|[\W_]+$")
# digits with optional internal separators: 100, 1,000, 3.5, 24/7
_NUMBER = re.compile(r"\d+(?:[.,:/\-]\d+)*")


def load_stopwords(version: str = STOPWORDS_VERSION) -> frozenset[str]:
    text = resources.files("ffn.resources").joinpath(f"stopwords_{version}.txt").read_text("utf-8")
    return frozenset(
        line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")
    )


def identity_lemmatizer(token: str) -> str:
    return token


def wordnet_lemmatizer() -> Callable[[str], str]:
    """NLTK WordNet lemmatizer; needs ``nltk`` and its ``wordnet`` corpus installed."""
    try:
        from nltk.stem import WordNetLemmatizer
    except ImportError as exc:
        raise ImportError("the wordnet lemmatizer requires the nltk package") from exc
    lemmatizer = WordNetLemmatizer()
    lemmatizer.lemmatize("warmup")  # fail early if the corpus is missing
    return lemmatizer.lemmatize


@dataclass(frozen=True)
class CleaningConfig:
    stopwords: frozenset[str] = field(default_factory=load_stopwords)
    lemmatizer: Callable[[str], str] = identity_lemmatizer
    lemmatizer_name: str = "identity"
    lowercase: bool = True
    stopwords_version: str = STOPWORDS_VERSION

    def fingerprint(self) -> dict:
        return {
            "stopwords_version": self.stopwords_version,
            "stopwords_sha256": hashlib.sha256("\n".join(sorted(self.stopwords)).encode()).hexdigest(),
            "lemmatizer": self.lemmatizer_name,
            "lowercase": self.lowercase,
        }


def raw_tokens(raw: str) -> list[str]:
    """Whitespace tokens before any cleaning (used for the length analysis)."""
    return raw.split()


def clean_text(raw: str, config: CleaningConfig | None = None) -> list[str]:
    """Lowercase, strip punctuation, drop numbers and stopwords, then lemmatize.

    Punctuation is stripped from token boundaries only, so "don't" and
    "covid-19" survive as single tokens.
    """
    config = config or DEFAULT_CLEANING
    text = raw.lower() if config.lowercase else raw
    out = []
    for tok in text.split():
        tok = _EDGE_PUNCT.sub("", tok)
        if not tok or _NUMBER.fullmatch(tok):
            continue
        if tok.lower() in config.stopwords:
            continue
        out.append(config.lemmatizer(tok))
    return out


class Vocabulary:
    """Immutable word -> id map with 0 reserved for padding and 1 for unknown words."""

    def __init__(self, words: Sequence[str]):
        self._words = [PAD_TOKEN, UNK_TOKEN, *words]
        self._index = {w: i for i, w in enumerate(self._words)}
        if len(self._index) != len(self._words):
            raise ValueError("duplicate word in vocabulary")
        self._sha256: Optional[str] = None

    def __len__(self) -> int:
        return len(self._words)

    def __contains__(self, word: str) -> bool:
        return word in self._index and self._index[word] >= 2

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._words == other._words

    def id_of(self, word: str) -> int:
        idx = self._index.get(word, UNK_ID)
        return idx if idx >= 2 else UNK_ID

    def word_of(self, idx: int) -> str:
        return self._words[idx]

    @property
    def words(self) -> list[str]:
        """Real words in id order (ids 2, 3, ...)."""
        return self._words[2:]

    def items(self):
        return ((w, i) for i, w in enumerate(self._words) if i >= 2)

    def serialize(self) -> str:
        lines = [f"{PAD_TOKEN}\t{PAD_ID}", f"{UNK_TOKEN}\t{UNK_ID}"]
        lines += [f"{w}\t{i}" for w, i in self.items()]
        return "\n".join(lines) + "\n"

    def sha256(self) -> str:
        if self._sha256 is None:
            self._sha256 = hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()
        return self._sha256

    def save(self, path):
        Path(path).write_text(self.serialize(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if len(lines) < 2 or lines[0] != f"{PAD_TOKEN}\t{PAD_ID}" or lines[1] != f"{UNK_TOKEN}\t{UNK_ID}":
            raise ValueError(f"{path}: not a vocabulary file (bad reserved-id header)")
        words = []
        for expected, line in enumerate(lines[2:], start=2):
            word, _, idx = line.rpartition("\t")
            if int(idx) != expected:
                raise ValueError(f"{path}: ids must be contiguous, got {idx} at position {expected}")
            words.append(word)
        return cls(words)


def build_vocabulary(corpus: Iterable[Sequence[str]]) -> Vocabulary:
    """Ids by descending frequency, ties broken lexicographically."""
    counts = Counter(tok for doc in corpus for tok in doc)
    ordered = sorted(counts, key=lambda w: (-counts[w], w))
    return Vocabulary(ordered)


@dataclass(frozen=True)
class TokenSequence:
    ids: np.ndarray

    @property
    def effective_length(self) -> int:
        return int(np.count_nonzero(self.ids))

    def __len__(self) -> int:
        return len(self.ids)


def encode(tokens: Sequence[str], vocab: Vocabulary, length: int = SEQ_LEN) -> TokenSequence:
    """Keep the first ``length`` tokens, map unknown words to 1 and pad the tail with 0."""
    if length < 1:
        raise ValueError("length must be >= 1")
    ids = np.zeros(length, dtype=np.int64)
    head = tokens[:length]
    ids[: len(head)] = [vocab.id_of(t) for t in head]
    return TokenSequence(ids)


def decode(seq: TokenSequence, vocab: Vocabulary) -> list[str]:
    return [vocab.word_of(int(i)) for i in seq.ids if i != PAD_ID]


def encode_corpus(corpus: Iterable[Sequence[str]], vocab: Vocabulary, length: int = SEQ_LEN) -> np.ndarray:
    rows = [encode(doc, vocab, length).ids for doc in corpus]
    if not rows:
        return np.zeros((0, length), dtype=np.int64)
    return np.stack(rows)


def length_percentiles(
    corpus: Sequence[Sequence[str]], thresholds: Sequence[int] = (10, 15, 20, 25)
) -> dict[int, float]:
    """Percentage of texts strictly shorter than each threshold."""
    if len(corpus) == 0:
        raise ValueError("length_percentiles needs a non-empty corpus")
    lengths = np.array([len(doc) for doc in corpus])
    return {int(t): float(100.0 * np.mean(lengths < t)) for t in thresholds}


@dataclass
class TextPipeline:
    """Cleaning config + vocabulary + sequence length, i.e. everything needed to
    turn raw titles into model input for the embedding-based models."""

    vocab: Vocabulary
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)
    length: int = SEQ_LEN

    @classmethod
    def fit(cls, titles: Iterable[str], cleaning: CleaningConfig | None = None,
            length: int = SEQ_LEN) -> "TextPipeline":
        cleaning = cleaning or DEFAULT_CLEANING
        vocab = build_vocabulary(clean_text(t, cleaning) for t in titles)
        return cls(vocab, cleaning, length)

    def transform(self, titles: Iterable[str]) -> np.ndarray:
        return encode_corpus((clean_text(t, self.cleaning) for t in titles), self.vocab, self.length)

    def fingerprint(self) -> dict:
        return {
            "kind": "word",
            "vocab_sha256": self.vocab.sha256(),
            "vocab_size": len(self.vocab),
            "seq_len": self.length,
            "cleaning": self.cleaning.fingerprint(),
        }


DEFAULT_CLEANING = CleaningConfig()
