"""Chat-judged coherence: intruder detection and interpretability rating.

Prompt builders are pure string templating and byte-deterministic; golden
tests pin the exact template text. Parsers are forgiving about case and
bracketing but never invent data: a response that does not match the
expected format raises ParseFailure so the caller can retry.
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .backends import ChatClient, ChatConfig
from .baselines import MetricScore, _mean
from .corpus import Topic, TopicSet
from .errors import EmptyJudgementSet, ParseFailure, ValidationError

logger = logging.getLogger(__name__)

INTRUSION_TEMPLATE = (
    "I have a topic that is described by the following keywords:[topic_words]. "
    "Provide a one-word topic based on this list of words and identify all "
    "intruder words in the list with respect to the topic you provided. "
    "Results be in the following format: topic: <one-word>, intruders: <words in a list>"
)

RATING_TEMPLATE = (
    "I have a topic that is described by the following keywords: [topic_words]. "
    "Evaluate the interpretability of the topic words on a 3-point scale where "
    "3=“meaningful and highly coherent” and 0=“useless” "
    "as topic words are usable to search and retrieve documents about a single "
    "particular subject. Results be in the following format: score: <score>"
)

JUDGEMENT_KINDS = ("intrusion", "rating")


def build_intrusion_prompt(topic: Topic) -> str:
    return INTRUSION_TEMPLATE.replace("[topic_words]", ", ".join(topic.words))


def build_rating_prompt(topic: Topic) -> str:
    return RATING_TEMPLATE.replace("[topic_words]", ", ".join(topic.words))


@dataclass(frozen=True)
class ParsedIntrusion:
    label: str
    intruders: tuple[str, ...]
    dropped: tuple[str, ...] = ()


_TOPIC_RE = re.compile(r"topic\s*:\s*([^\s,]+)", re.IGNORECASE)
_INTRUDERS_RE = re.compile(r"intruders\s*:\s*(\[[^\]]*\]|[^\n]*)", re.IGNORECASE)
_SCORE_RE = re.compile(r"score\s*:\s*(-?\d+)", re.IGNORECASE)


def parse_intrusion_response(text: str, topic: Topic) -> ParsedIntrusion:
    """Extract the one-word label and the intruder list from a response.

    Intruder words outside the topic are dropped with a warning; duplicates
    are deduplicated. Matching is case-insensitive and the returned words
    use the topic's own casing.
    """
    topic_match = _TOPIC_RE.search(text)
    intruders_match = _INTRUDERS_RE.search(text)
    if topic_match is None or intruders_match is None:
        raise ParseFailure("response lacks 'topic:' or 'intruders:' fields", text)
    label = topic_match.group(1).strip().strip(".")
    body = intruders_match.group(1).strip()
    if body.startswith("[") and body.endswith("]"):
        body = body[1:-1]
    by_lower = {w.lower(): w for w in topic.words}
    intruders: list[str] = []
    dropped: list[str] = []
    for raw in body.split(","):
        word = raw.strip().strip("'\".")
        if not word:
            continue
        canonical = by_lower.get(word.lower())
        if canonical is None:
            dropped.append(word)
            logger.warning("intruder %r is not a word of the topic; dropped", word)
        elif canonical not in intruders:
            intruders.append(canonical)
    return ParsedIntrusion(label=label, intruders=tuple(intruders), dropped=tuple(dropped))


def parse_rating_response(text: str) -> int:
    """First integer after 'score:'; values outside 0..3 are a ParseFailure."""
    match = _SCORE_RE.search(text)
    if match is None:
        raise ParseFailure("response lacks a 'score:' field", text)
    rating = int(match.group(1))
    if rating not in (0, 1, 2, 3):
        raise ParseFailure(f"rating {rating} outside the 0..3 scale", text)
    return rating


@dataclass
class ChatJudgement:
    topic_index: int
    kind: str
    label: str | None = None
    intruders: tuple[str, ...] | None = None
    rating: int | None = None
    raw_response: str = ""
    attempts: int = 0

    def __post_init__(self):
        if self.kind not in JUDGEMENT_KINDS:
            raise ValidationError(f"unknown judgement kind {self.kind!r}")
        if self.rating is not None and self.rating not in (0, 1, 2, 3):
            raise ValidationError(f"rating {self.rating} outside 0..3")

    @property
    def is_scored(self) -> bool:
        if self.kind == "intrusion":
            return self.intruders is not None
        return self.rating is not None

    def to_dict(self) -> dict:
        return {
            "topic_index": self.topic_index,
            "kind": self.kind,
            "label": self.label,
            "intruders": list(self.intruders) if self.intruders is not None else None,
            "rating": self.rating,
            "raw_response": self.raw_response,
            "attempts": self.attempts,
        }


def judge_topics(topics: TopicSet, kind: str, config: ChatConfig, client: ChatClient,
                 audit: list[dict] | None = None) -> list[ChatJudgement]:
    """One judgement per topic, in topic order.

    Each parse failure is retried up to ``config.max_retries`` times; after
    that the topic is recorded as unscored. Every request attempt lands in
    the audit list with its raw response.
    """
    if kind not in JUDGEMENT_KINDS:
        raise ValidationError(f"unknown judgement kind {kind!r}")
    judgements: list[ChatJudgement] = []
    for topic_index, topic in enumerate(topics.topics):
        prompt = (build_intrusion_prompt(topic) if kind == "intrusion"
                  else build_rating_prompt(topic))
        judgement = ChatJudgement(topic_index=topic_index, kind=kind)
        for attempt in range(1, config.max_retries + 2):
            judgement.attempts = attempt
            raw = client.complete(prompt)
            judgement.raw_response = raw
            parsed_repr: str | None = None
            try:
                if kind == "intrusion":
                    parsed = parse_intrusion_response(raw, topic)
                    judgement.label = parsed.label
                    judgement.intruders = parsed.intruders
                    parsed_repr = json.dumps(
                        {"label": parsed.label, "intruders": list(parsed.intruders)})
                else:
                    judgement.rating = parse_rating_response(raw)
                    parsed_repr = json.dumps({"rating": judgement.rating})
            except ParseFailure as exc:
                logger.warning("topic %d attempt %d: %s", topic_index, attempt, exc)
            if audit is not None:
                audit.append({
                    "topic_index": topic_index,
                    "prompt": prompt,
                    "raw_response": raw,
                    "parsed": parsed_repr,
                    "attempts": attempt,
                    "timestamp": time.time(),
                })
            if judgement.is_scored:
                break
        if not judgement.is_scored:
            logger.warning("topic %d unscored after %d attempts", topic_index,
                           judgement.attempts)
        judgements.append(judgement)
    return judgements


def write_audit_log(audit: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in audit:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _scored(judgements: Sequence[ChatJudgement], kind: str) -> list[ChatJudgement]:
    out = [j for j in judgements if j.kind == kind]
    if not out:
        raise EmptyJudgementSet(f"no {kind} judgements given")
    if not any(j.is_scored for j in out):
        raise EmptyJudgementSet(f"every {kind} judgement is unscored")
    return out


def ctc_intrusion(judgements: Sequence[ChatJudgement], m: int | Sequence[int],
                  n: int | None = None) -> MetricScore:
    """Mean over topics of 1 - |intruders| / m.

    ``m`` is the common topic size, or a per-topic size sequence when topics
    differ in length. Unscored topics are excluded from the mean and left as
    gaps in the per-topic list.
    """
    judgements = _scored(judgements, "intrusion")
    if n is not None and n != len(judgements):
        raise ValidationError(f"expected {n} judgements, got {len(judgements)}")
    sizes = list(m) if not isinstance(m, int) else [m] * len(judgements)
    if len(sizes) != len(judgements):
        raise ValidationError("per-topic sizes do not match judgement count")
    per_topic: list[float | None] = []
    for judgement, size in zip(judgements, sizes):
        if not judgement.is_scored:
            per_topic.append(None)
        else:
            per_topic.append(1.0 - len(judgement.intruders) / size)
    scored = [v for v in per_topic if v is not None]
    return MetricScore(metric_name="intrusion", model_score=_mean(scored),
                       per_topic=per_topic)


def ctc_rating(judgements: Sequence[ChatJudgement]) -> MetricScore:
    """Arithmetic mean of the 0..3 ratings over scored topics."""
    judgements = _scored(judgements, "rating")
    per_topic: list[float | None] = [
        float(j.rating) if j.is_scored else None for j in judgements
    ]
    scored = [v for v in per_topic if v is not None]
    return MetricScore(metric_name="rating", model_score=_mean(scored),
                       per_topic=per_topic)
