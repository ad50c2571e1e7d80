"""Contextualized PMI scoring through a masked-LM probability backend.

For two words at positions i, j of a segment, the contextualized PMI is

    ln p(w_i | segment with w_i masked)
  - ln p(w_i | segment with w_i and w_j masked)

in natural-log units. A context-insensitive backend makes the two terms
equal, so every score collapses to zero; that cancellation is the master
sanity property of this module.

Pair scores are accumulated over all segments into a persistent tree keyed
by unordered word pair. Because the tree key is unordered, the build picks
a canonical direction: the lexicographically smaller word is the masked
target. A ``symmetrize`` flag averages both directions instead.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .backends import LmBackend, MaskedProbabilityQuery, TargetSpec, masked_logprob
from .baselines import MetricScore, SkippedPair, _mean
from .corpus import Corpus, TopicSet
from .errors import (
    BackendUnavailable,
    CorruptTree,
    InvalidQuery,
    TopicUnscorable,
    ValidationError,
    VersionMismatch,
)
from .segmenter import Segment, SegmenterConfig

logger = logging.getLogger(__name__)

TREE_FORMAT_VERSION = 1
_BINARY_MAGIC = b"TMCT\x01"

Pair = tuple[str, str]


def _pair_key(a: str, b: str) -> Pair:
    return (a, b) if a <= b else (b, a)


def cpmi_pair(backend: LmBackend, segment: Segment, pos_i: int, pos_j: int) -> float:
    """Contextualized PMI of the word at pos_i given the word at pos_j."""
    if pos_i == pos_j:
        raise InvalidQuery("pos_i and pos_j must differ")
    numerator = masked_logprob(backend, MaskedProbabilityQuery(
        tokens=segment.tokens, target_position=pos_i,
        masked_positions=frozenset({pos_i})))
    denominator = masked_logprob(backend, MaskedProbabilityQuery(
        tokens=segment.tokens, target_position=pos_i,
        masked_positions=frozenset({pos_i, pos_j})))
    return numerator - denominator


class CpmiAggregationMode(enum.Enum):
    """How a pair's accumulated score is turned into an average."""

    PER_TOTAL_SEGMENTS = "per_total_segments"
    PER_COOCCURRING_SEGMENTS = "per_cooccurring_segments"


@dataclass
class CpmiTreeHeader:
    total_segments: int
    segmenter: SegmenterConfig
    backend_fingerprint: str
    corpus_hash: str
    log_base: str = "e"
    direction: str = "lexical_min_target"
    format_version: int = TREE_FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "total_segments": self.total_segments,
            "segment_length": self.segmenter.segment_length,
            "overlap": self.segmenter.overlap,
            "min_segment_length": self.segmenter.min_segment_length,
            "log_base": self.log_base,
            "direction": self.direction,
            "backend_fingerprint": self.backend_fingerprint,
            "corpus_hash": self.corpus_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CpmiTreeHeader":
        return cls(
            total_segments=d["total_segments"],
            segmenter=SegmenterConfig(
                segment_length=d["segment_length"],
                overlap=d["overlap"],
                min_segment_length=d["min_segment_length"],
            ),
            backend_fingerprint=d["backend_fingerprint"],
            corpus_hash=d["corpus_hash"],
            log_base=d.get("log_base", "e"),
            direction=d.get("direction", "lexical_min_target"),
            format_version=d.get("format_version", TREE_FORMAT_VERSION),
        )


@dataclass
class CpmiTree:
    """Pairwise CPMI aggregates: unordered pair -> (sum, co-occurring segments)."""

    header: CpmiTreeHeader
    entries: dict[Pair, tuple[float, int]] = field(default_factory=dict)

    def __post_init__(self):
        for pair, (_, count) in self.entries.items():
            if count < 1:
                raise ValidationError(f"entry {pair} has cooccur_segments < 1")
            if count > self.header.total_segments:
                raise ValidationError(
                    f"entry {pair} co-occurs in more segments than exist"
                )

    @property
    def total_segments(self) -> int:
        return self.header.total_segments

    def lookup(self, a: str, b: str) -> tuple[float, int] | None:
        return self.entries.get(_pair_key(a, b))


class _KahanAccumulator:
    """Compensated pair sums so segment order barely perturbs totals."""

    __slots__ = ("sum", "compensation", "count")

    def __init__(self, total: float = 0.0, compensation: float = 0.0, count: int = 0):
        self.sum = total
        self.compensation = compensation
        self.count = count

    def add(self, value: float) -> None:
        y = value - self.compensation
        t = self.sum + y
        self.compensation = (t - self.sum) - y
        self.sum = t
        self.count += 1


def _first_positions(tokens: Sequence[str], targets: set[str]) -> dict[str, int]:
    positions: dict[str, int] = {}
    for pos, tok in enumerate(tokens):
        if tok in targets and tok not in positions:
            positions[tok] = pos
    return positions


def _segments_digest(segments: Sequence[Segment], target_words: Iterable[str],
                     symmetrize: bool) -> str:
    h = hashlib.sha256()
    for s in segments:
        h.update(f"{s.doc_id}\x00{s.start}\x00{len(s.tokens)}\x01".encode())
    for w in sorted(set(target_words)):
        h.update(w.encode() + b"\x02")
    h.update(b"sym" if symmetrize else b"dir")
    return h.hexdigest()


def build_cpmi_tree(segments: Sequence[Segment], target_words: set[str],
                    backend: LmBackend, segmenter_config: SegmenterConfig,
                    corpus_hash: str = "", symmetrize: bool = False,
                    checkpoint_path: str | Path | None = None,
                    checkpoint_every: int = 200,
                    progress: Callable[[int, int], None] | None = None) -> CpmiTree:
    """Accumulate pair scores over every segment where two targets co-occur.

    Each word's first occurrence in a segment is its mask position. Queries
    for one segment go to the backend as a single batch: one single-masked
    query per present target word, one double-masked query per pair (two
    with ``symmetrize``). On backend failure a resumable checkpoint is
    written to ``checkpoint_path`` before the error propagates.
    """
    if not target_words:
        raise ValidationError("target_words must be nonempty")
    segments = list(segments)
    digest = _segments_digest(segments, target_words, symmetrize)
    accumulators: dict[Pair, _KahanAccumulator] = {}
    start_index = 0

    if checkpoint_path is not None and Path(checkpoint_path).exists():
        state = json.loads(Path(checkpoint_path).read_text())
        if state["digest"] != digest:
            raise ValidationError(
                "checkpoint does not match these segments/targets; delete it to rebuild"
            )
        start_index = state["next_segment"]
        for a, b, total, comp, count in state["entries"]:
            accumulators[(a, b)] = _KahanAccumulator(total, comp, count)
        logger.info("resuming tree build at segment %d/%d", start_index, len(segments))

    def save_checkpoint(next_segment: int) -> None:
        if checkpoint_path is None:
            return
        state = {
            "digest": digest,
            "next_segment": next_segment,
            "entries": [
                [a, b, acc.sum, acc.compensation, acc.count]
                for (a, b), acc in sorted(accumulators.items())
            ],
        }
        Path(checkpoint_path).write_text(json.dumps(state))

    for index in range(start_index, len(segments)):
        segment = segments[index]
        try:
            _accumulate_segment(segment, target_words, backend, symmetrize, accumulators)
        except BackendUnavailable:
            save_checkpoint(index)
            raise
        if progress is not None:
            progress(index + 1, len(segments))
        if checkpoint_path is not None and (index + 1) % checkpoint_every == 0:
            save_checkpoint(index + 1)

    if checkpoint_path is not None and Path(checkpoint_path).exists():
        Path(checkpoint_path).unlink()

    header = CpmiTreeHeader(
        total_segments=len(segments),
        segmenter=segmenter_config,
        backend_fingerprint=backend.fingerprint,
        corpus_hash=corpus_hash,
        direction="symmetric" if symmetrize else "lexical_min_target",
    )
    entries = {
        pair: (acc.sum, acc.count) for pair, acc in accumulators.items()
    }
    return CpmiTree(header=header, entries=entries)


def _accumulate_segment(segment: Segment, target_words: set[str], backend: LmBackend,
                        symmetrize: bool, accumulators: dict[Pair, _KahanAccumulator]) -> None:
    positions = _first_positions(segment.tokens, target_words)
    present = sorted(positions)
    if len(present) < 2:
        return
    queries: list[TargetSpec] = []
    numerator_slot: dict[str, int] = {}
    for w in present:
        numerator_slot[w] = len(queries)
        queries.append(TargetSpec(positions[w], frozenset({positions[w]})))
    pair_slots: dict[Pair, list[int]] = {}
    pairs: list[Pair] = []
    for i in range(len(present)):
        for j in range(i + 1, len(present)):
            a, b = present[i], present[j]
            slots = [len(queries)]
            queries.append(TargetSpec(positions[a], frozenset({positions[a], positions[b]})))
            if symmetrize:
                slots.append(len(queries))
                queries.append(TargetSpec(positions[b], frozenset({positions[a], positions[b]})))
            pair_slots[(a, b)] = slots
            pairs.append((a, b))
    values = backend.score(segment.tokens, queries)
    if len(values) != len(queries):
        raise BackendUnavailable("backend returned a short batch")
    for a, b in pairs:
        slots = pair_slots[(a, b)]
        forward = values[numerator_slot[a]] - values[slots[0]]
        if symmetrize:
            backward = values[numerator_slot[b]] - values[slots[1]]
            contribution = 0.5 * (forward + backward)
        else:
            contribution = forward
        acc = accumulators.get((a, b))
        if acc is None:
            acc = accumulators[(a, b)] = _KahanAccumulator()
        acc.add(contribution)


def ctc_cpmi(topics: TopicSet, tree: CpmiTree,
             mode: CpmiAggregationMode = CpmiAggregationMode.PER_TOTAL_SEGMENTS) -> MetricScore:
    """Average stored pair scores over pairs and topics.

    PER_TOTAL_SEGMENTS divides each pair's sum by the total segment count;
    pairs absent from the tree contribute 0 and stay in the denominator.
    PER_COOCCURRING_SEGMENTS divides by the pair's own co-occurrence count;
    absent pairs are skipped and reported.
    """
    per_topic: list[float] = []
    skipped: list[SkippedPair] = []
    total = tree.total_segments
    for t_idx, topic in enumerate(topics.topics):
        words = topic.words
        values: list[float] = []
        for r in range(1, len(words)):
            for s in range(r):
                entry = tree.lookup(words[r], words[s])
                if mode is CpmiAggregationMode.PER_TOTAL_SEGMENTS:
                    if entry is None:
                        values.append(0.0)
                    else:
                        values.append(entry[0] / total if total > 0 else 0.0)
                else:
                    if entry is None:
                        skipped.append(SkippedPair(t_idx, words[r], words[s],
                                                   "NeverCooccurring"))
                        continue
                    values.append(entry[0] / entry[1])
        if not values:
            raise TopicUnscorable(t_idx, "no pair of this topic co-occurs in any segment")
        per_topic.append(_mean(values))
    return MetricScore(
        metric_name="cpmi",
        model_score=_mean(per_topic),
        per_topic=per_topic,
        skipped_pairs=skipped,
    )


def save_tree(tree: CpmiTree, path: str | Path, binary: bool | None = None) -> None:
    """Persist a tree; format from ``binary`` or the path suffix (.bin)."""
    path = Path(path)
    if binary is None:
        binary = path.suffix == ".bin"
    entries = sorted(tree.entries.items())
    if binary:
        blob = bytearray(_BINARY_MAGIC)
        header_bytes = json.dumps(tree.header.to_dict(), sort_keys=True).encode()
        blob += struct.pack("<I", len(header_bytes))
        blob += header_bytes
        blob += struct.pack("<Q", len(entries))
        for (a, b), (total, count) in entries:
            ab, bb = a.encode(), b.encode()
            blob += struct.pack("<H", len(ab)) + ab
            blob += struct.pack("<H", len(bb)) + bb
            blob += struct.pack("<dQ", total, count)
        path.write_bytes(bytes(blob))
    else:
        doc = {
            "header": tree.header.to_dict(),
            "entries": [[a, b, total, count] for (a, b), (total, count) in entries],
        }
        path.write_text(json.dumps(doc, sort_keys=True))


def load_tree(path: str | Path, expected_corpus_hash: str | None = None,
              expected_fingerprint: str | None = None) -> CpmiTree:
    """Reload a persisted tree, sniffing the format from the file content.

    Mismatched corpus hash or backend fingerprint produces a warning record,
    not an error: scoring against a different corpus build is legal but
    worth flagging.
    """
    path = Path(path)
    raw = path.read_bytes()
    try:
        if raw.startswith(_BINARY_MAGIC):
            tree = _load_binary(raw)
        elif raw[:1] == b"{":
            doc = json.loads(raw.decode())
            header = CpmiTreeHeader.from_dict(doc["header"])
            entries = {(a, b): (float(total), int(count))
                       for a, b, total, count in doc["entries"]}
            tree = CpmiTree(header=header, entries=entries)
        else:
            raise CorruptTree(f"{path}: unrecognized tree format")
    except (json.JSONDecodeError, KeyError, struct.error, UnicodeDecodeError,
            IndexError, ValueError) as exc:
        raise CorruptTree(f"{path}: {exc}") from exc
    if tree.header.format_version != TREE_FORMAT_VERSION:
        raise VersionMismatch(tree.header.format_version, TREE_FORMAT_VERSION)
    if expected_corpus_hash is not None and tree.header.corpus_hash != expected_corpus_hash:
        logger.warning("tree %s was built from a different corpus (hash %s != %s)",
                       path, tree.header.corpus_hash, expected_corpus_hash)
    if expected_fingerprint is not None and tree.header.backend_fingerprint != expected_fingerprint:
        logger.warning("tree %s was built with a different backend (%s != %s)",
                       path, tree.header.backend_fingerprint, expected_fingerprint)
    return tree


def _load_binary(raw: bytes) -> CpmiTree:
    offset = len(_BINARY_MAGIC)
    (header_len,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    header = CpmiTreeHeader.from_dict(json.loads(raw[offset:offset + header_len].decode()))
    offset += header_len
    (n_entries,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    entries: dict[Pair, tuple[float, int]] = {}
    for _ in range(n_entries):
        (len_a,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        a = raw[offset:offset + len_a].decode()
        offset += len_a
        (len_b,) = struct.unpack_from("<H", raw, offset)
        offset += 2
        b = raw[offset:offset + len_b].decode()
        offset += len_b
        total, count = struct.unpack_from("<dQ", raw, offset)
        offset += 16
        entries[(a, b)] = (total, count)
    if offset != len(raw):
        raise CorruptTree("trailing bytes after final entry")
    return CpmiTree(header=header, entries=entries)


def ctc_ncpmi(topics: TopicSet, corpus: Corpus, backend: LmBackend) -> MetricScore:
    """Normalized contextualized score over whole-document contexts.

    For document d, topic t, and topic word w present in d (first occurrence
    masked), with M the first occurrences of every topic word present in d:

        numerator  = ln p(w | d, {w} masked) - ln p(w | d, M masked)
        normalizer = -( ln p(w | d, {w} masked) + sum over v in t of
                        ln p(v | d, M masked) )

    Contributions average over words (1/m), topics (1/n), and documents
    (1/e); absent words contribute 0, as do degenerate normalizers.
    """
    n = topics.num_topics
    e = corpus.num_documents
    per_topic_sums = [0.0] * n
    degenerate = 0
    for doc in corpus:
        token_set = set(doc.tokens)
        for t_idx, topic in enumerate(topics.topics):
            present = [w for w in topic.words if w in token_set]
            if not present:
                continue
            positions = _first_positions(doc.tokens, set(present))
            mask_all = frozenset(positions.values())
            queries: list[TargetSpec] = []
            for w in present:
                queries.append(TargetSpec(positions[w], frozenset({positions[w]})))
            for w in present:
                queries.append(TargetSpec(positions[w], mask_all))
            values = backend.score(doc.tokens, queries)
            single = dict(zip(present, values[:len(present)]))
            joint = dict(zip(present, values[len(present):]))
            ln_topic = math.fsum(joint.values())
            m = len(topic.words)
            contribution = 0.0
            for w in present:
                numerator = single[w] - joint[w]
                normalizer = -(single[w] + ln_topic)
                if normalizer <= 0.0:
                    degenerate += 1
                    continue
                contribution += (numerator / normalizer) / m
            per_topic_sums[t_idx] += contribution
    per_topic = [s / e for s in per_topic_sums]
    if degenerate:
        logger.warning("normalized scoring skipped %d degenerate terms", degenerate)
    return MetricScore(
        metric_name="ncpmi",
        model_score=_mean(per_topic),
        per_topic=per_topic,
    )
