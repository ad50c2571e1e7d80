"""Sliding-window and co-document count statistics.

Window counts use boolean presence per window: a length-l window stepped by
one token within each document counts each distinct word and each distinct
unordered pair at most once. A document shorter than l contributes a single
window spanning all of it. Document counts use boolean presence per document.
"""

from __future__ import annotations

import json
from collections import Counter
from itertools import combinations
from pathlib import Path
from typing import Iterable

from .corpus import Corpus
from .errors import CorruptTree, ValidationError

Pair = tuple[str, str]


def _pair_key(a: str, b: str) -> Pair:
    return (a, b) if a <= b else (b, a)


class CooccurrenceIndex:
    """Immutable count store backing the probability-based coherence scores."""

    def __init__(self, window_length: int, total_windows: int, total_docs: int,
                 word_window_count: dict[str, int], pair_window_count: dict[Pair, int],
                 word_doc_count: dict[str, int], pair_doc_count: dict[Pair, int],
                 tokenizer_hash: str = ""):
        self.window_length = window_length
        self.total_windows = total_windows
        self.total_docs = total_docs
        self.word_window_count = word_window_count
        self.pair_window_count = pair_window_count
        self.word_doc_count = word_doc_count
        self.pair_doc_count = pair_doc_count
        self.tokenizer_hash = tokenizer_hash

    def p_word(self, word: str) -> float:
        """Window probability of a single word; unknown words give 0."""
        if self.total_windows == 0:
            return 0.0
        return self.word_window_count.get(word, 0) / self.total_windows

    def p_pair(self, a: str, b: str) -> float:
        """Window probability of an unordered pair; p_pair(a, a) = p_word(a)."""
        if a == b:
            return self.p_word(a)
        if self.total_windows == 0:
            return 0.0
        return self.pair_window_count.get(_pair_key(a, b), 0) / self.total_windows

    def doc_count(self, word: str) -> int:
        return self.word_doc_count.get(word, 0)

    def pair_doc(self, a: str, b: str) -> int:
        if a == b:
            return self.doc_count(a)
        return self.pair_doc_count.get(_pair_key(a, b), 0)

    def to_dict(self) -> dict:
        return {
            "window_length": self.window_length,
            "total_windows": self.total_windows,
            "total_docs": self.total_docs,
            "tokenizer_hash": self.tokenizer_hash,
            "word_window_count": dict(sorted(self.word_window_count.items())),
            "pair_window_count": [
                [a, b, c] for (a, b), c in sorted(self.pair_window_count.items())
            ],
            "word_doc_count": dict(sorted(self.word_doc_count.items())),
            "pair_doc_count": [
                [a, b, c] for (a, b), c in sorted(self.pair_doc_count.items())
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CooccurrenceIndex":
        return cls(
            window_length=d["window_length"],
            total_windows=d["total_windows"],
            total_docs=d["total_docs"],
            tokenizer_hash=d.get("tokenizer_hash", ""),
            word_window_count=dict(d["word_window_count"]),
            pair_window_count={(a, b): c for a, b, c in d["pair_window_count"]},
            word_doc_count=dict(d["word_doc_count"]),
            pair_doc_count={(a, b): c for a, b, c in d["pair_doc_count"]},
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "CooccurrenceIndex":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (json.JSONDecodeError, KeyError) as exc:
            raise CorruptTree(f"cannot parse co-occurrence index {path}: {exc}") from exc


def iter_windows(tokens: tuple[str, ...] | list[str], window_length: int) -> Iterable[tuple[str, ...]]:
    """All sliding windows of a document, stepped by one token.

    A document shorter than the window length yields itself as one window;
    an empty document yields nothing.
    """
    n = len(tokens)
    if n == 0:
        return
    if n <= window_length:
        yield tuple(tokens)
        return
    for start in range(n - window_length + 1):
        yield tuple(tokens[start:start + window_length])


def build_index(corpus: Corpus, window_length: int = 10,
                vocabulary_filter: set[str] | None = None) -> CooccurrenceIndex:
    """Count word and pair presence over sliding windows and documents.

    With ``vocabulary_filter``, only those words (and pairs of them) are
    counted; totals still cover every window and document.
    """
    if window_length < 2:
        raise ValidationError("window_length must be >= 2")
    keep = vocabulary_filter
    word_window: Counter[str] = Counter()
    pair_window: Counter[Pair] = Counter()
    word_doc: Counter[str] = Counter()
    pair_doc: Counter[Pair] = Counter()
    total_windows = 0

    for doc in corpus:
        for window in iter_windows(doc.tokens, window_length):
            total_windows += 1
            present = set(window)
            if keep is not None:
                present &= keep
            for w in present:
                word_window[w] += 1
            for a, b in combinations(sorted(present), 2):
                pair_window[(a, b)] += 1
        present_doc = set(doc.tokens)
        if keep is not None:
            present_doc &= keep
        for w in present_doc:
            word_doc[w] += 1
        for a, b in combinations(sorted(present_doc), 2):
            pair_doc[(a, b)] += 1

    return CooccurrenceIndex(
        window_length=window_length,
        total_windows=total_windows,
        total_docs=len(corpus),
        word_window_count=dict(word_window),
        pair_window_count=dict(pair_window),
        word_doc_count=dict(word_doc),
        pair_doc_count=dict(pair_doc),
        tokenizer_hash=corpus.tokenizer_config.config_hash(),
    )
