"""Fixed-length window segmentation of documents.

Windows of ``segment_length`` tokens start at offsets 0, step, 2*step, ...
with step = segment_length - overlap. They never cross document boundaries;
a trailing window shorter than ``min_segment_length`` is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import Corpus, Token
from .errors import ValidationError


@dataclass(frozen=True)
class SegmenterConfig:
    segment_length: int = 15
    overlap: int = 0
    min_segment_length: int = 5

    def __post_init__(self):
        if self.segment_length < 2:
            raise ValidationError("segment_length must be >= 2")
        if not 0 <= self.overlap < self.segment_length:
            raise ValidationError("overlap must satisfy 0 <= overlap < segment_length")
        if not 1 <= self.min_segment_length <= self.segment_length:
            raise ValidationError(
                "min_segment_length must satisfy 1 <= min <= segment_length"
            )

    @property
    def step(self) -> int:
        return self.segment_length - self.overlap

    def to_dict(self) -> dict:
        return {
            "segment_length": self.segment_length,
            "overlap": self.overlap,
            "min_segment_length": self.min_segment_length,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SegmenterConfig":
        return cls(
            segment_length=d["segment_length"],
            overlap=d["overlap"],
            min_segment_length=d["min_segment_length"],
        )


@dataclass(frozen=True)
class Segment:
    doc_id: str
    start: int
    tokens: tuple[Token, ...]

    def __len__(self) -> int:
        return len(self.tokens)


def segment_document(doc_id: str, tokens: tuple[Token, ...],
                     config: SegmenterConfig) -> list[Segment]:
    segments = []
    n = len(tokens)
    for start in range(0, n, config.step):
        window = tokens[start:start + config.segment_length]
        if len(window) < config.min_segment_length:
            continue
        segments.append(Segment(doc_id=doc_id, start=start, tokens=window))
    return segments


def segment_corpus(corpus: Corpus, config: SegmenterConfig) -> list[Segment]:
    """Deterministic segment list: document order, then start offset."""
    out: list[Segment] = []
    for doc in corpus:
        out.extend(segment_document(doc.id, doc.tokens, config))
    return out


def segment_records(segments: list[Segment]) -> list[dict]:
    """Audit dump: one record per segment."""
    return [
        {"doc_id": s.doc_id, "start": s.start, "length": len(s.tokens)}
        for s in segments
    ]
