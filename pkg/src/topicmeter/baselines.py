"""Probability- and embedding-based coherence scores.

All five scorers share the same aggregation shape: a topic's score is the
mean of its pairwise values over the m*(m-1)/2 ordered pairs (r > s), and a
model's score is the mean over topics. Pairs that cannot be evaluated
(out-of-vocabulary word, zero marginal, degenerate normalizer) are skipped:
they reduce the pair denominator and are recorded in the score's skip report
instead of contributing a sentinel.

Log bases follow the defining formulas literally: base 2 for the mutual
information family, natural log for the co-document ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .cooccurrence import CooccurrenceIndex
from .corpus import TopicSet
from .errors import (
    DegenerateDenominator,
    MissingEmbedding,
    PairSkip,
    TopicUnscorable,
    ValidationError,
    ZeroMarginal,
    ZeroNormVector,
)

# The additive smoothing constant defaults to 1 as in the original ratio
# definitions; a much smaller value (1e-12) is known to behave better and is
# the default for the normalized variant, whose normalizer degenerates for
# epsilon >= 1 - p.
DEFAULT_EPSILON = 1.0
RECOMMENDED_SMALL_EPSILON = 1e-12
DEFAULT_GAMMA = 1.0


@dataclass(frozen=True)
class SkippedPair:
    topic_index: int
    word_a: str
    word_b: str
    reason: str

    def to_dict(self) -> dict:
        return {
            "topic_index": self.topic_index,
            "word_a": self.word_a,
            "word_b": self.word_b,
            "reason": self.reason,
        }


@dataclass
class MetricScore:
    """Per-model and per-topic result of one coherence metric.

    ``model_score`` is the mean of the scored entries of ``per_topic``;
    entries may be None when a judgement-based metric left a topic unscored.
    """

    metric_name: str
    model_score: float
    per_topic: list[float | None]
    skipped_pairs: list[SkippedPair] = field(default_factory=list)
    per_pair: dict | None = None

    @property
    def num_topics(self) -> int:
        return len(self.per_topic)

    def to_dict(self, model_name: str = "") -> dict:
        rec = {
            "metric": self.metric_name,
            "model": model_name,
            "n": self.num_topics,
            "per_topic": self.per_topic,
            "model_score": self.model_score,
            "skipped_pairs": [s.to_dict() for s in self.skipped_pairs],
        }
        if self.per_pair is not None:
            rec["per_pair"] = {f"{a}|{b}": v for (a, b), v in sorted(self.per_pair.items())}
        return rec

    @classmethod
    def from_dict(cls, d: dict) -> "MetricScore":
        per_pair = None
        if "per_pair" in d:
            per_pair = {tuple(k.split("|", 1)): v for k, v in d["per_pair"].items()}
        return cls(
            metric_name=d["metric"],
            model_score=d["model_score"],
            per_topic=list(d["per_topic"]),
            skipped_pairs=[SkippedPair(**s) for s in d["skipped_pairs"]],
            per_pair=per_pair,
        )


def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values)


def _aggregate(metric_name: str, topics: TopicSet,
               pair_fn: Callable[[str, str], float],
               in_vocab: Callable[[str], bool],
               keep_pair_detail: bool = False) -> MetricScore:
    """Shared pair-then-topic averaging with skip accounting."""
    per_topic: list[float] = []
    skipped: list[SkippedPair] = []
    detail: dict[tuple[str, str], float] = {}
    for t_idx, topic in enumerate(topics.topics):
        words = topic.words
        if sum(1 for w in words if in_vocab(w)) < 2:
            raise TopicUnscorable(t_idx, "fewer than 2 in-vocabulary words")
        values: list[float] = []
        for r in range(1, len(words)):
            for s in range(r):
                try:
                    v = pair_fn(words[r], words[s])
                except PairSkip as exc:
                    skipped.append(SkippedPair(t_idx, words[r], words[s],
                                               type(exc).__name__))
                    continue
                values.append(v)
                if keep_pair_detail:
                    detail[(words[r], words[s])] = v
        if not values:
            raise TopicUnscorable(t_idx, "all pairs were skipped")
        per_topic.append(_mean(values))
    return MetricScore(
        metric_name=metric_name,
        model_score=_mean(per_topic),
        per_topic=list(per_topic),
        skipped_pairs=skipped,
        per_pair=detail if keep_pair_detail else None,
    )


def pmi(index: CooccurrenceIndex, a: str, b: str,
        epsilon: float = DEFAULT_EPSILON) -> float:
    """log2 of the smoothed joint over the product of marginals."""
    p_a = index.p_word(a)
    p_b = index.p_word(b)
    if p_a == 0.0:
        raise ZeroMarginal(a)
    if p_b == 0.0:
        raise ZeroMarginal(b)
    return math.log2((index.p_pair(a, b) + epsilon) / (p_a * p_b))


def tc_uci(topics: TopicSet, index: CooccurrenceIndex,
           epsilon: float = DEFAULT_EPSILON) -> MetricScore:
    return _aggregate("uci", topics,
                      lambda r, s: pmi(index, r, s, epsilon),
                      lambda w: index.p_word(w) > 0.0)


def umass_pair(index: CooccurrenceIndex, r_word: str, s_word: str,
               epsilon: float = DEFAULT_EPSILON) -> float:
    """Natural log of smoothed co-document count over the document count of
    the second word. Asymmetric: the (r, s) roles matter."""
    d_s = index.doc_count(s_word)
    if d_s == 0:
        raise ZeroMarginal(s_word)
    return math.log((index.pair_doc(r_word, s_word) + epsilon) / d_s)


def tc_umass(topics: TopicSet, index: CooccurrenceIndex,
             epsilon: float = DEFAULT_EPSILON) -> MetricScore:
    return _aggregate("umass", topics,
                      lambda r, s: umass_pair(index, r, s, epsilon),
                      lambda w: index.doc_count(w) > 0)


def npmi_pair(index: CooccurrenceIndex, a: str, b: str,
              epsilon: float = RECOMMENDED_SMALL_EPSILON) -> float:
    """PMI normalized by -log2 of the smoothed joint, into [-1, 1]."""
    p_ab = index.p_pair(a, b)
    if p_ab + epsilon >= 1.0:
        raise DegenerateDenominator(
            f"p_pair({a!r},{b!r}) + epsilon = {p_ab + epsilon} >= 1"
        )
    return pmi(index, a, b, epsilon) / (-math.log2(p_ab + epsilon))


def tc_npmi(topics: TopicSet, index: CooccurrenceIndex,
            epsilon: float = RECOMMENDED_SMALL_EPSILON) -> MetricScore:
    return _aggregate("npmi", topics,
                      lambda r, s: npmi_pair(index, r, s, epsilon),
                      lambda w: index.p_word(w) > 0.0)


def cv_pair(index: CooccurrenceIndex, a: str, b: str,
            epsilon: float = RECOMMENDED_SMALL_EPSILON,
            gamma: float = DEFAULT_GAMMA) -> float:
    """Sign-preserving gamma power of the normalized score."""
    if gamma <= 0:
        raise ValidationError("gamma must be > 0")
    v = npmi_pair(index, a, b, epsilon)
    if gamma == 1.0:
        return v
    return math.copysign(abs(v) ** gamma, v)


def tc_cv(topics: TopicSet, index: CooccurrenceIndex,
          epsilon: float = RECOMMENDED_SMALL_EPSILON,
          gamma: float = DEFAULT_GAMMA) -> MetricScore:
    if gamma <= 0:
        raise ValidationError("gamma must be > 0")
    return _aggregate("cv", topics,
                      lambda r, s: cv_pair(index, r, s, epsilon, gamma),
                      lambda w: index.p_word(w) > 0.0)


class EmbeddingTable:
    """Word -> dense vector map used by the embedding-similarity score."""

    def __init__(self, dimension: int, vectors: dict[str, np.ndarray]):
        if dimension < 1:
            raise ValidationError("embedding dimension must be >= 1")
        for w, v in vectors.items():
            if v.shape != (dimension,):
                raise ValidationError(
                    f"vector for {w!r} has shape {v.shape}, expected ({dimension},)"
                )
        if vectors and not any(float(np.linalg.norm(v)) > 0 for v in vectors.values()):
            raise ValidationError("every embedding vector has zero norm")
        self.dimension = dimension
        self._vectors = vectors

    def __contains__(self, word: str) -> bool:
        return word in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def vector(self, word: str) -> np.ndarray:
        if word not in self._vectors:
            raise MissingEmbedding(word)
        return self._vectors[word]

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingTable":
        """Read whitespace-delimited vectors, with an optional
        "vocab_size dimension" header line."""
        vectors: dict[str, np.ndarray] = {}
        dimension: int | None = None
        with open(path, "r", encoding="utf-8") as fh:
            first = fh.readline()
            parts = first.split()
            header_like = len(parts) == 2
            if header_like:
                try:
                    int(parts[0]), int(parts[1])
                except ValueError:
                    header_like = False
            if header_like:
                dimension = int(parts[1])
            else:
                word, vec = parts[0], np.array([float(x) for x in parts[1:]])
                dimension = vec.shape[0]
                vectors[word] = vec
            for line in fh:
                parts = line.split()
                if not parts:
                    continue
                word, vec = parts[0], np.array([float(x) for x in parts[1:]])
                if vec.shape[0] != dimension:
                    raise ValidationError(
                        f"vector for {word!r} has {vec.shape[0]} dims, expected {dimension}"
                    )
                vectors[word] = vec
        if not vectors:
            raise ValidationError(f"embedding file {path} has no vectors")
        return cls(dimension, vectors)


def dwr_pair(emb: EmbeddingTable, a: str, b: str) -> float:
    """Cosine similarity of the two word vectors, in [-1, 1]."""
    va = emb.vector(a)
    vb = emb.vector(b)
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0:
        raise ZeroNormVector(a)
    if nb == 0.0:
        raise ZeroNormVector(b)
    return float(np.dot(va, vb) / (na * nb))


def tc_dwr(topics: TopicSet, emb: EmbeddingTable) -> MetricScore:
    def usable(w: str) -> bool:
        return w in emb and float(np.linalg.norm(emb.vector(w))) > 0.0

    return _aggregate("dwr", topics,
                      lambda r, s: dwr_pair(emb, r, s),
                      usable)
