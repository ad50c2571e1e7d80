"""Exception types shared across the toolkit."""


class TopicMeterError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(TopicMeterError):
    """Invalid configuration or input that fails precondition checks."""


class EmptyCorpus(ValidationError):
    """No documents survived ingestion."""


class MissingColumn(ValidationError):
    def __init__(self, column: str):
        super().__init__(f"column {column!r} not found in header")
        self.column = column


class MalformedRow(ValidationError):
    def __init__(self, row_number: int, reason: str):
        super().__init__(f"row {row_number}: {reason}")
        self.row_number = row_number


class TopicFileError(ValidationError):
    """Topic file could not be parsed into a valid TopicSet."""


class DuplicateTopicWord(TopicFileError):
    def __init__(self, word: str, line_number: int | None = None):
        where = f" (line {line_number})" if line_number is not None else ""
        super().__init__(f"duplicate word {word!r} within a topic{where}")
        self.word = word


class PairSkip(TopicMeterError):
    """Base for per-pair conditions that callers skip and report."""


class ZeroMarginal(PairSkip):
    def __init__(self, word: str):
        super().__init__(f"word {word!r} has zero marginal count")
        self.word = word


class DegenerateDenominator(PairSkip):
    """Smoothed joint probability reached 1, so the normalizer vanishes."""


class MissingEmbedding(PairSkip):
    def __init__(self, word: str):
        super().__init__(f"word {word!r} has no embedding vector")
        self.word = word


class ZeroNormVector(PairSkip):
    def __init__(self, word: str):
        super().__init__(f"embedding vector for {word!r} has zero norm")
        self.word = word


class TopicUnscorable(TopicMeterError):
    def __init__(self, topic_index: int, reason: str):
        super().__init__(f"topic {topic_index} unscorable: {reason}")
        self.topic_index = topic_index


class EmptyJudgementSet(TopicMeterError):
    """Every topic ended up unscored, so no mean exists."""


class ParseFailure(TopicMeterError):
    """Chat response did not match the expected answer format."""

    def __init__(self, reason: str, raw_response: str):
        super().__init__(reason)
        self.raw_response = raw_response


class BackendUnavailable(TopicMeterError):
    """Probability or chat backend unreachable after retries (retryable)."""


class InvalidQuery(ValidationError):
    """Masked-probability query violates its own invariants."""


class ProtocolError(TopicMeterError):
    """Backend answered, but the response violates the wire contract."""


class CorruptTree(TopicMeterError):
    """Persisted pair-score tree failed to parse or verify."""


class VersionMismatch(CorruptTree):
    def __init__(self, found: object, expected: object):
        super().__init__(f"tree format version {found!r}, expected {expected!r}")


class DegenerateVariance(TopicMeterError):
    """Correlation undefined because an input vector has zero variance."""


class MissingMetric(ValidationError):
    def __init__(self, metric: str, model: str):
        super().__init__(f"report for {model!r} lacks metric {metric!r}")


class InsufficientTopics(ValidationError):
    """Fewer scored topics than the ranking window requires."""


class MissingArtifact(TopicMeterError):
    """A pipeline stage requires an output another command has not produced."""

    def __init__(self, what: str, produced_by: str):
        super().__init__(f"missing {what}; run {produced_by!r} first")
        self.produced_by = produced_by
