"""Meta-analysis over metric results: correlations, rankings, and reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

from .baselines import MetricScore
from .corpus import TopicSet
from .errors import (
    DegenerateVariance,
    InsufficientTopics,
    MissingMetric,
    ValidationError,
)


@dataclass
class MetricReport:
    """All metric scores for one (model, topic count) configuration."""

    model_name: str
    num_topics: int
    scores: dict[str, MetricScore]
    provenance: dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        for name, score in self.scores.items():
            if score.num_topics != self.num_topics:
                raise ValidationError(
                    f"metric {name!r} has {score.num_topics} per-topic entries, "
                    f"expected {self.num_topics}"
                )

    def to_dict(self) -> dict:
        return {
            "model": self.model_name,
            "num_topics": self.num_topics,
            "scores": {
                name: score.to_dict(self.model_name)
                for name, score in sorted(self.scores.items())
            },
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(
            model_name=d["model"],
            num_topics=d["num_topics"],
            scores={name: MetricScore.from_dict(rec) for name, rec in d["scores"].items()},
            provenance=d.get("provenance", {}),
        )


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    if len(xs) != len(ys):
        raise ValidationError("input lengths differ")
    if len(xs) < 2:
        raise ValidationError("need at least 2 observations")
    n = len(xs)
    mean_x = math.fsum(xs) / n
    mean_y = math.fsum(ys) / n
    dx = [x - mean_x for x in xs]
    dy = [y - mean_y for y in ys]
    var_x = math.fsum(d * d for d in dx)
    var_y = math.fsum(d * d for d in dy)
    if var_x == 0.0 or var_y == 0.0:
        raise DegenerateVariance("an input vector has zero variance")
    return math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(var_x * var_y)


@dataclass
class CorrelationMatrix:
    """Symmetric Pearson matrix with unit diagonal; degenerate pairs are None."""

    metrics: list[str]
    values: list[list[float | None]]

    def entry(self, a: str, b: str) -> float | None:
        return self.values[self.metrics.index(a)][self.metrics.index(b)]

    def to_dict(self) -> dict:
        return {"metrics": self.metrics, "values": self.values}


def correlation_matrix(reports: Sequence[MetricReport],
                       metrics: Sequence[str]) -> CorrelationMatrix:
    """Pearson correlation of model-level scores across report rows.

    Each report is one observation; entry (i, j) correlates metric i's and
    metric j's model scores over all reports. Degenerate pairs (zero
    variance) are marked absent rather than given a fake value.
    """
    if len(reports) < 2:
        raise ValidationError("need at least 2 reports to correlate")
    columns: dict[str, list[float]] = {}
    for metric in metrics:
        col = []
        for report in reports:
            if metric not in report.scores:
                raise MissingMetric(metric, report.model_name)
            col.append(report.scores[metric].model_score)
        columns[metric] = col
    size = len(metrics)
    values: list[list[float | None]] = [[None] * size for _ in range(size)]
    for i in range(size):
        values[i][i] = 1.0
        for j in range(i + 1, size):
            try:
                r = pearson(columns[metrics[i]], columns[metrics[j]])
            except DegenerateVariance:
                r = None
            values[i][j] = r
            values[j][i] = r
    return CorrelationMatrix(metrics=list(metrics), values=values)


@dataclass
class TopicRanking:
    top: list[tuple[int, float]]      # (topic index, score), best first
    bottom: list[tuple[int, float]]   # worst first

    def to_dict(self, topics: TopicSet | None = None) -> dict:
        def rec(idx: int, value: float) -> dict:
            out = {"topic_index": idx, "score": value}
            if topics is not None:
                out["words"] = list(topics.topics[idx].words)
            return out
        return {
            "top": [rec(i, v) for i, v in self.top],
            "bottom": [rec(i, v) for i, v in self.bottom],
        }


def rank_topics(topics: TopicSet, score: MetricScore, k: int) -> TopicRanking:
    """Top-k and bottom-k topics by per-topic score.

    Sort is descending by value with ties broken by topic index ascending;
    unscored topics are excluded. The bottom list is reported worst first.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if score.num_topics != topics.num_topics:
        raise ValidationError("score and topic set disagree on topic count")
    scored = [(i, v) for i, v in enumerate(score.per_topic) if v is not None]
    if 2 * k > len(scored):
        raise InsufficientTopics(
            f"need at least {2 * k} scored topics for k={k}, have {len(scored)}"
        )
    order = sorted(scored, key=lambda item: (-item[1], item[0]))
    return TopicRanking(top=order[:k], bottom=list(reversed(order[-k:])))


REPORT_FORMATS = ("structured", "delimited", "table")


def emit_report(reports: Sequence[MetricReport], format: str = "structured") -> bytes:
    """Serialize reports deterministically.

    structured: JSON that parses back to equal reports.
    delimited:  CSV with one row per (model, topic count, metric, score).
    table:      text table; per-model maxima per metric are marked *value*
                and the global maximum per metric **value**.
    """
    if not reports:
        raise ValidationError("no reports to emit")
    if format == "structured":
        doc = [r.to_dict() for r in reports]
        return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode()
    if format == "delimited":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["model", "num_topics", "metric", "score"])
        for report in reports:
            for metric in sorted(report.scores):
                writer.writerow([report.model_name, report.num_topics, metric,
                                 repr(report.scores[metric].model_score)])
        return buf.getvalue().encode()
    if format == "table":
        return _render_table(reports).encode()
    raise ValidationError(f"unknown report format {format!r}")


def parse_report(blob: bytes) -> list[MetricReport]:
    """Inverse of emit_report(structured)."""
    return [MetricReport.from_dict(d) for d in json.loads(blob.decode())]


def _render_table(reports: Sequence[MetricReport]) -> str:
    metrics = sorted({m for r in reports for m in r.scores})
    global_max = {
        m: max(r.scores[m].model_score for r in reports if m in r.scores)
        for m in metrics
    }
    per_model_max: dict[tuple[str, str], float] = {}
    for report in reports:
        for m, score in report.scores.items():
            key = (report.model_name, m)
            if key not in per_model_max or score.model_score > per_model_max[key]:
                per_model_max[key] = score.model_score

    def cell(report: MetricReport, metric: str) -> str:
        if metric not in report.scores:
            return "-"
        v = report.scores[metric].model_score
        text = f"{v:.6g}"
        if v == global_max[metric]:
            return f"**{text}**"
        if v == per_model_max[(report.model_name, metric)]:
            return f"*{text}*"
        return text

    rows = [["model", "#T"] + metrics]
    for report in reports:
        rows.append([report.model_name, str(report.num_topics)]
                    + [cell(report, m) for m in metrics])
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for idx, row in enumerate(rows):
        lines.append("  ".join(col.ljust(width) for col, width in zip(row, widths)).rstrip())
        if idx == 0:
            lines.append("  ".join("-" * width for width in widths))
    return "\n".join(lines) + "\n"
