"""Corpus ingestion, tokenization, and topic-set loading.

A corpus is an ordered list of tokenized documents plus the vocabulary
derived from them. Tokens are plain strings; the tokenizer guarantees they
are non-empty and whitespace-free.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import re
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, TextIO

from .errors import (
    DuplicateTopicWord,
    EmptyCorpus,
    MalformedRow,
    MissingColumn,
    TopicFileError,
    ValidationError,
)

Token = str

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


@dataclass(frozen=True)
class TokenizerConfig:
    """Normalization rules applied to every ingested text and topic word."""

    lowercase: bool = True
    strip_punctuation: bool = True
    min_token_length: int = 2
    token_pattern: str = r"\S+"
    stopwords: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.min_token_length < 1:
            raise ValidationError("min_token_length must be >= 1")
        try:
            re.compile(self.token_pattern)
        except re.error as exc:
            raise ValidationError(f"invalid token_pattern: {exc}") from exc

    def tokenize(self, text: str) -> list[Token]:
        """Normalize raw text into a token list. Deterministic by construction."""
        if self.lowercase:
            text = text.lower()
        if self.strip_punctuation:
            text = text.translate(_PUNCT_TABLE)
        pattern = re.compile(self.token_pattern)
        tokens = []
        for tok in text.split():
            if len(tok) < self.min_token_length:
                continue
            if not pattern.fullmatch(tok):
                continue
            if tok in self.stopwords:
                continue
            tokens.append(tok)
        return tokens

    def normalize_word(self, word: str) -> Token | None:
        """Normalize a single word (topic files share the corpus rules)."""
        tokens = self.tokenize(word)
        if len(tokens) != 1:
            return None
        return tokens[0]

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "strip_punctuation": self.strip_punctuation,
            "min_token_length": self.min_token_length,
            "token_pattern": self.token_pattern,
            "stopwords": sorted(self.stopwords),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TokenizerConfig":
        return cls(
            lowercase=d["lowercase"],
            strip_punctuation=d["strip_punctuation"],
            min_token_length=d["min_token_length"],
            token_pattern=d["token_pattern"],
            stopwords=frozenset(d.get("stopwords", ())),
        )

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class Document:
    id: str
    raw_text: str
    tokens: tuple[Token, ...]

    def __len__(self) -> int:
        return len(self.tokens)


class Vocabulary:
    """Bijective word/id mapping plus per-word document frequency."""

    def __init__(self):
        self._word_to_id: dict[str, int] = {}
        self._id_to_word: list[str] = []
        self.doc_frequency: dict[str, int] = {}

    def _add_document(self, tokens: Iterable[Token]) -> None:
        for word in tokens:
            if word not in self._word_to_id:
                self._word_to_id[word] = len(self._id_to_word)
                self._id_to_word.append(word)
        for word in set(tokens):
            self.doc_frequency[word] = self.doc_frequency.get(word, 0) + 1

    def id(self, word: str) -> int:
        return self._word_to_id[word]

    def word(self, idx: int) -> str:
        return self._id_to_word[idx]

    def __contains__(self, word: str) -> bool:
        return word in self._word_to_id

    def __len__(self) -> int:
        return len(self._id_to_word)

    def words(self) -> list[str]:
        return list(self._id_to_word)


@dataclass
class IngestSummary:
    documents: int
    tokens: int
    vocabulary_size: int
    skipped_rows: int

    def to_dict(self) -> dict:
        return {
            "documents": self.documents,
            "tokens": self.tokens,
            "vocabulary_size": self.vocabulary_size,
            "skipped_rows": self.skipped_rows,
        }


class Corpus:
    """Immutable ordered document collection with its derived vocabulary."""

    def __init__(self, documents: list[Document], tokenizer_config: TokenizerConfig,
                 skipped_rows: int = 0):
        if not documents:
            raise EmptyCorpus("corpus has no documents after filtering")
        ids = [d.id for d in documents]
        if len(set(ids)) != len(ids):
            raise ValidationError("document ids are not unique")
        self.documents = documents
        self.tokenizer_config = tokenizer_config
        self.vocabulary = Vocabulary()
        for doc in documents:
            self.vocabulary._add_document(doc.tokens)
        self._skipped_rows = skipped_rows

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    @property
    def num_documents(self) -> int:
        return len(self.documents)

    def summary(self) -> IngestSummary:
        return IngestSummary(
            documents=len(self.documents),
            tokens=sum(len(d) for d in self.documents),
            vocabulary_size=len(self.vocabulary),
            skipped_rows=self._skipped_rows,
        )

    def corpus_hash(self) -> str:
        """Stable digest of document ids and token sequences."""
        h = hashlib.sha256()
        for doc in self.documents:
            h.update(doc.id.encode())
            h.update(b"\x00")
            for tok in doc.tokens:
                h.update(tok.encode())
                h.update(b"\x01")
            h.update(b"\x02")
        return h.hexdigest()

    def to_dict(self, keep_raw: bool = True) -> dict:
        return {
            "tokenizer_config": self.tokenizer_config.to_dict(),
            "skipped_rows": self._skipped_rows,
            "documents": [
                {
                    "id": d.id,
                    "raw_text": d.raw_text if keep_raw else "",
                    "tokens": list(d.tokens),
                }
                for d in self.documents
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Corpus":
        config = TokenizerConfig.from_dict(d["tokenizer_config"])
        docs = [
            Document(id=rec["id"], raw_text=rec["raw_text"], tokens=tuple(rec["tokens"]))
            for rec in d["documents"]
        ]
        return cls(docs, config, skipped_rows=d.get("skipped_rows", 0))

    def save(self, path: str | Path, keep_raw: bool = True) -> None:
        Path(path).write_text(json.dumps(self.to_dict(keep_raw=keep_raw), sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "Corpus":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _open_source(source: str | Path | TextIO) -> TextIO:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline="")
    return source


def ingest_lines(source: str | Path | TextIO, config: TokenizerConfig | None = None) -> Corpus:
    """Build a corpus from line-oriented text: one document per non-empty line.

    Lines that tokenize to nothing are skipped and counted in the ingest
    summary. Raises EmptyCorpus when nothing survives.
    """
    config = config or TokenizerConfig()
    documents: list[Document] = []
    skipped = 0
    stream = _open_source(source)
    try:
        for line_number, line in enumerate(stream, start=1):
            text = line.rstrip("\n")
            if not text.strip():
                continue
            tokens = config.tokenize(text)
            if not tokens:
                skipped += 1
                continue
            documents.append(Document(id=str(line_number), raw_text=text, tokens=tuple(tokens)))
    finally:
        if isinstance(source, (str, Path)):
            stream.close()
    if not documents:
        raise EmptyCorpus("no non-empty documents in source")
    return Corpus(documents, config, skipped_rows=skipped)


def ingest_delimited(source: str | Path | TextIO, text_column: str,
                     config: TokenizerConfig | None = None,
                     delimiter: str = ",") -> Corpus:
    """Build a corpus from a delimited table, keeping only ``text_column``.

    Rows with an empty text cell (or nothing left after tokenization) are
    skipped and counted. Rows too short to contain the column raise
    MalformedRow with their row number.
    """
    config = config or TokenizerConfig()
    stream = _open_source(source)
    documents: list[Document] = []
    skipped = 0
    try:
        reader = csv.reader(stream, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyCorpus("delimited source has no header row")
        if text_column not in header:
            raise MissingColumn(text_column)
        col = header.index(text_column)
        for row_number, row in enumerate(reader, start=1):
            if not row:
                continue
            if col >= len(row):
                raise MalformedRow(row_number, f"expected >= {col + 1} fields, got {len(row)}")
            text = row[col]
            tokens = config.tokenize(text)
            if not text.strip() or not tokens:
                skipped += 1
                continue
            documents.append(Document(id=str(row_number), raw_text=text, tokens=tuple(tokens)))
    finally:
        if isinstance(source, (str, Path)):
            stream.close()
    if not documents:
        raise EmptyCorpus("no usable rows in delimited source")
    return Corpus(documents, config, skipped_rows=skipped)


@dataclass(frozen=True)
class Topic:
    """Ordered list of distinct topic words (at least two)."""

    words: tuple[Token, ...]

    def __post_init__(self):
        if len(self.words) < 2:
            raise TopicFileError(f"topic needs >= 2 words, got {list(self.words)}")
        seen = set()
        for w in self.words:
            if w in seen:
                raise DuplicateTopicWord(w)
            seen.add(w)

    def __len__(self) -> int:
        return len(self.words)

    def missing_from(self, vocabulary: Vocabulary) -> list[Token]:
        """Topic words absent from a corpus vocabulary (kept, but flagged)."""
        return [w for w in self.words if w not in vocabulary]


@dataclass
class TopicSet:
    model_name: str
    topics: list[Topic]

    def __post_init__(self):
        if not self.topics:
            raise TopicFileError("topic set has no topics")

    @property
    def num_topics(self) -> int:
        return len(self.topics)

    def all_words(self) -> set[Token]:
        out: set[Token] = set()
        for t in self.topics:
            out.update(t.words)
        return out


def _normalize_topic_words(words: list[str], config: TokenizerConfig,
                           line_number: int | None = None) -> Topic:
    normalized: list[Token] = []
    for w in words:
        norm = config.normalize_word(w)
        if norm is None:
            raise TopicFileError(
                f"word {w!r} does not normalize to a single token"
                + (f" (line {line_number})" if line_number is not None else "")
            )
        if norm in normalized:
            raise DuplicateTopicWord(norm, line_number)
        normalized.append(norm)
    if len(normalized) < 2:
        raise TopicFileError(
            "topic has fewer than 2 words"
            + (f" (line {line_number})" if line_number is not None else "")
        )
    return Topic(tuple(normalized))


def load_topics(source: str | Path | TextIO, config: TokenizerConfig | None = None,
                model_name: str | None = None) -> TopicSet:
    """Load a topic set from either supported format.

    Plain text: one topic per line, whitespace-separated words, '#' comments.
    Structured: a JSON object {"model_name": ..., "topics": [[word, ...], ...]}.
    Both parse to identical TopicSet values; words are normalized with the
    same tokenizer rules as the corpus under evaluation.
    """
    config = config or TokenizerConfig()
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
        default_name = Path(source).stem
    else:
        text = source.read()
        default_name = "topics"
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise TopicFileError(f"invalid JSON topic file: {exc}") from exc
        if "topics" not in payload:
            raise TopicFileError("JSON topic file lacks a 'topics' field")
        topics = [
            _normalize_topic_words(list(words), config) for words in payload["topics"]
        ]
        name = model_name or payload.get("model_name") or default_name
        return TopicSet(model_name=name, topics=topics)

    topics = []
    for line_number, line in enumerate(io.StringIO(text), start=1):
        body = line.strip()
        if not body or body.startswith("#"):
            continue
        topics.append(_normalize_topic_words(body.split(), config, line_number))
    if not topics:
        raise TopicFileError("topic file contains no topics")
    return TopicSet(model_name=model_name or default_name, topics=topics)
