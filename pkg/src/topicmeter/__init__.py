"""Coherence scoring for topic-model outputs.

Corpus-side metrics (window PMI family, co-document ratio, embedding
similarity), contextualized metrics driven by a masked-LM probability
backend, chat-judged intruder/rating protocols, and meta-analysis over the
resulting reports.
"""

from .analysis import (
    CorrelationMatrix,
    MetricReport,
    correlation_matrix,
    emit_report,
    parse_report,
    pearson,
    rank_topics,
)
from .backends import (
    ChatConfig,
    HttpChatClient,
    HttpLmBackend,
    MaskedProbabilityQuery,
    TargetSpec,
    masked_logprob,
)
from .baselines import (
    EmbeddingTable,
    MetricScore,
    cv_pair,
    dwr_pair,
    npmi_pair,
    pmi,
    tc_cv,
    tc_dwr,
    tc_npmi,
    tc_uci,
    tc_umass,
    umass_pair,
)
from .chat_eval import (
    ChatJudgement,
    build_intrusion_prompt,
    build_rating_prompt,
    ctc_intrusion,
    ctc_rating,
    judge_topics,
    parse_intrusion_response,
    parse_rating_response,
)
from .cooccurrence import CooccurrenceIndex, build_index
from .corpus import (
    Corpus,
    Document,
    Topic,
    TopicSet,
    TokenizerConfig,
    Vocabulary,
    ingest_delimited,
    ingest_lines,
    load_topics,
)
from .cpmi import (
    CpmiAggregationMode,
    CpmiTree,
    build_cpmi_tree,
    cpmi_pair,
    ctc_cpmi,
    ctc_ncpmi,
    load_tree,
    save_tree,
)
from .segmenter import Segment, SegmenterConfig, segment_corpus

__version__ = "0.1.0"
