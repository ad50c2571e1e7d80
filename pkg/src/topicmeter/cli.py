"""Command-line pipeline: ingest -> index -> build-tree -> eval -> judge -> analyze.

Every command reads an optional JSON config file plus flag overrides (flags
win), validates the merged configuration in full before acting, and embeds
the hash of the effective configuration in each output it writes. Outputs
are write-once per config hash: rerunning an identical command leaves
byte-identical artifacts in place.

Exit codes: 0 success, 1 validation error, 2 missing upstream artifact,
3 backend failure, 4 parse-failure budget exceeded.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import analysis, baselines, chat_eval, cpmi
from .backends import ChatConfig, HttpChatClient, HttpLmBackend, RetryPolicy
from .cooccurrence import CooccurrenceIndex, build_index
from .corpus import Corpus, TokenizerConfig, ingest_delimited, ingest_lines, load_topics
from .errors import (
    BackendUnavailable,
    EmptyJudgementSet,
    MissingArtifact,
    ParseFailure,
    TopicMeterError,
    ValidationError,
)
from .mocks import MockLmBackend, MockLmSpec
from .segmenter import SegmenterConfig, segment_corpus, segment_records

logger = logging.getLogger("topicmeter")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_MISSING_ARTIFACT = 2
EXIT_BACKEND = 3
EXIT_PARSE_BUDGET = 4

CORPUS_METRICS = ("uci", "umass", "npmi", "cv", "dwr", "cpmi", "ncpmi")


_OUTPUT_KEYS = ("output_dir", "report")


def _config_hash(payload: dict) -> str:
    """Hash of the semantic configuration: output locations are excluded so
    identical runs into different directories stay byte-identical."""
    semantic = {k: v for k, v in payload.items() if k not in _OUTPUT_KEYS}
    return hashlib.sha256(json.dumps(semantic, sort_keys=True).encode()).hexdigest()


def _write_once(path: Path, text: str, config_hash: str) -> None:
    """Skip the write when the target already carries this config hash."""
    if path.exists():
        try:
            existing = json.loads(path.read_text())
            if isinstance(existing, dict) and existing.get("config_hash") == config_hash:
                logger.info("%s is up to date (config %s)", path, config_hash[:12])
                return
        except (json.JSONDecodeError, UnicodeDecodeError):
            pass
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    logger.info("wrote %s", path)


def _dump(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        payload = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"config file {path} does not exist")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(payload, dict):
        raise ValidationError(f"config file {path} must hold a JSON object")
    return payload


def _merged(args: argparse.Namespace, keys: Sequence[str]) -> dict:
    """File values overlaid by any explicitly set flags."""
    file_config = _load_config_file(getattr(args, "config", None))
    merged = {k: file_config[k] for k in keys if k in file_config}
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def _validate(merged: dict, required: Sequence[str]) -> None:
    problems = [f"missing required option --{k.replace('_', '-')}"
                for k in required if merged.get(k) in (None, "")]
    if problems:
        raise ValidationError("; ".join(problems))


def _tokenizer_from(merged: dict) -> TokenizerConfig:
    stopwords: frozenset[str] = frozenset()
    if merged.get("stopword_file"):
        stopwords = frozenset(
            w.strip() for w in Path(merged["stopword_file"]).read_text().split()
            if w.strip()
        )
    return TokenizerConfig(
        lowercase=merged.get("lowercase", True),
        strip_punctuation=merged.get("strip_punctuation", True),
        min_token_length=merged.get("min_token_length", 2),
        token_pattern=merged.get("token_pattern", r"\S+"),
        stopwords=stopwords,
    )


def _need(path_value: str | None, what: str, produced_by: str) -> Path:
    if not path_value:
        raise MissingArtifact(what, produced_by)
    path = Path(path_value)
    if not path.exists():
        raise MissingArtifact(f"{what} at {path}", produced_by)
    return path


def _backend_from(merged: dict):
    """A backend URL, or mock:<spec.json> for an in-process mock."""
    url = merged.get("backend_url")
    if not url:
        raise MissingArtifact("a probability backend (--backend-url)", "mlm service or mock")
    if url.startswith("mock:"):
        spec = MockLmSpec.from_dict(json.loads(Path(url[len("mock:"):]).read_text()))
        return MockLmBackend(spec)
    return HttpLmBackend(
        url,
        timeout=merged.get("backend_timeout", 30.0),
        max_batch=merged.get("backend_max_batch", 64),
        retry=RetryPolicy(
            max_attempts=merged.get("backend_retries", 5),
            base_delay=merged.get("backend_retry_delay", 0.25),
        ),
    )


TOKENIZER_KEYS = ("lowercase", "strip_punctuation", "min_token_length",
                  "token_pattern", "stopword_file")


def cmd_ingest(args: argparse.Namespace) -> int:
    keys = ("input", "format", "text_column", "delimiter", "keep_raw",
            "output_dir") + TOKENIZER_KEYS
    merged = _merged(args, keys)
    _validate(merged, ("input", "output_dir"))
    config = _tokenizer_from(merged)
    source = merged["input"]
    if not Path(source).exists():
        raise ValidationError(f"input {source} does not exist")
    if merged.get("format", "lines") == "csv":
        _validate(merged, ("text_column",))
        corpus = ingest_delimited(source, merged["text_column"], config,
                                  delimiter=merged.get("delimiter", ","))
    else:
        corpus = ingest_lines(source, config)
    out = Path(merged["output_dir"])
    chash = _config_hash(merged)
    corpus_doc = corpus.to_dict(keep_raw=merged.get("keep_raw", True))
    corpus_doc["config_hash"] = chash
    _write_once(out / "corpus.json", _dump(corpus_doc), chash)
    summary = corpus.summary().to_dict()
    summary["config_hash"] = chash
    _write_once(out / "ingest_summary.json", _dump(summary), chash)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_index(args: argparse.Namespace) -> int:
    keys = ("corpus", "window_length", "topics", "output_dir")
    merged = _merged(args, keys)
    _validate(merged, ("corpus", "output_dir"))
    corpus = Corpus.load(_need(merged["corpus"], "corpus", "ingest"))
    vocab_filter = None
    if merged.get("topics"):
        words: set[str] = set()
        for topic_file in merged["topics"]:
            words |= load_topics(topic_file, corpus.tokenizer_config).all_words()
        vocab_filter = words
    index = build_index(corpus, merged.get("window_length", 10), vocab_filter)
    chash = _config_hash(merged)
    doc = index.to_dict()
    doc["config_hash"] = chash
    _write_once(Path(merged["output_dir"]) / "cooccurrence.json", _dump(doc), chash)
    print(json.dumps({"total_windows": index.total_windows,
                      "total_docs": index.total_docs}, sort_keys=True))
    return EXIT_OK


def cmd_build_tree(args: argparse.Namespace) -> int:
    keys = ("corpus", "segment_length", "overlap", "min_segment_length",
            "targets", "topics", "backend_url", "backend_timeout",
            "backend_max_batch", "backend_retries", "backend_retry_delay",
            "symmetrize", "tree_format", "dump_segments", "output_dir")
    merged = _merged(args, keys)
    _validate(merged, ("corpus", "output_dir"))
    corpus = Corpus.load(_need(merged["corpus"], "corpus", "ingest"))
    seg_config = SegmenterConfig(
        segment_length=merged.get("segment_length", 15),
        overlap=merged.get("overlap", 0),
        min_segment_length=merged.get("min_segment_length", 5),
    )
    segments = segment_corpus(corpus, seg_config)
    out = Path(merged["output_dir"])
    chash = _config_hash(merged)
    if merged.get("dump_segments"):
        dump = {"segments": segment_records(segments), "config_hash": chash}
        _write_once(out / "segments.json", _dump(dump), chash)
    if merged.get("targets", "topics") == "vocab" or not merged.get("topics"):
        target_words = set(corpus.vocabulary.words())
    else:
        target_words = set()
        for topic_file in merged["topics"]:
            target_words |= load_topics(topic_file, corpus.tokenizer_config).all_words()
    backend = _backend_from(merged)
    out.mkdir(parents=True, exist_ok=True)
    tree = cpmi.build_cpmi_tree(
        segments, target_words, backend, seg_config,
        corpus_hash=corpus.corpus_hash(),
        symmetrize=merged.get("symmetrize", False),
        checkpoint_path=out / "cpmi_tree.checkpoint",
        progress=lambda done, total: print(f"segments {done}/{total}", file=sys.stderr)
        if done % 500 == 0 or done == total else None,
    )
    suffix = ".bin" if merged.get("tree_format", "json") == "binary" else ".json"
    tree_path = out / f"cpmi_tree{suffix}"
    cpmi.save_tree(tree, tree_path)
    logger.info("wrote %s", tree_path)
    print(json.dumps({"segments": tree.total_segments,
                      "pairs": len(tree.entries)}, sort_keys=True))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    keys = ("corpus", "topics", "metrics", "index", "tree", "embeddings",
            "backend_url", "backend_timeout", "backend_max_batch",
            "backend_retries", "backend_retry_delay",
            "epsilon", "gamma", "aggregation", "output_dir")
    merged = _merged(args, keys)
    _validate(merged, ("corpus", "topics", "output_dir"))
    requested = merged.get("metrics") or ["uci", "umass", "npmi", "cv", "dwr", "cpmi"]
    unknown = [m for m in requested if m not in CORPUS_METRICS]
    if unknown:
        raise ValidationError(f"unknown metrics: {', '.join(unknown)}")
    corpus = Corpus.load(_need(merged["corpus"], "corpus", "ingest"))
    topics = load_topics(_need(merged["topics"], "topic file", "your topic model"),
                         corpus.tokenizer_config)
    epsilon = merged.get("epsilon")
    gamma = merged.get("gamma", baselines.DEFAULT_GAMMA)
    scores: dict[str, baselines.MetricScore] = {}

    window_metrics = {"uci", "umass", "npmi", "cv"} & set(requested)
    if window_metrics:
        index = CooccurrenceIndex.load(_need(merged.get("index"), "co-occurrence index", "index"))
        if "uci" in requested:
            scores["uci"] = baselines.tc_uci(
                topics, index, baselines.DEFAULT_EPSILON if epsilon is None else epsilon)
        if "umass" in requested:
            scores["umass"] = baselines.tc_umass(
                topics, index, baselines.DEFAULT_EPSILON if epsilon is None else epsilon)
        small = baselines.RECOMMENDED_SMALL_EPSILON if epsilon is None else epsilon
        if "npmi" in requested:
            scores["npmi"] = baselines.tc_npmi(topics, index, small)
        if "cv" in requested:
            scores["cv"] = baselines.tc_cv(topics, index, small, gamma)
    if "dwr" in requested:
        table = baselines.EmbeddingTable.load(
            _need(merged.get("embeddings"), "embedding file", "an embedding export"))
        scores["dwr"] = baselines.tc_dwr(topics, table)
    aggregation = cpmi.CpmiAggregationMode(
        merged.get("aggregation", "per_total_segments"))
    if "cpmi" in requested:
        tree_path = merged.get("tree")
        if not tree_path or not Path(tree_path).exists():
            raise MissingArtifact("a pair-score tree (--tree)", "build-tree")
        tree = cpmi.load_tree(tree_path, expected_corpus_hash=corpus.corpus_hash())
        scores["cpmi"] = cpmi.ctc_cpmi(topics, tree, aggregation)
    if "ncpmi" in requested:
        scores["ncpmi"] = cpmi.ctc_ncpmi(topics, corpus, _backend_from(merged))

    chash = _config_hash(merged)
    report = analysis.MetricReport(
        model_name=topics.model_name,
        num_topics=topics.num_topics,
        scores=scores,
        provenance={
            "config_hash": chash,
            "aggregation": aggregation.value,
            "skipped_pairs": {m: len(s.skipped_pairs) for m, s in sorted(scores.items())},
        },
    )
    doc = report.to_dict()
    doc["config_hash"] = chash
    out = Path(merged["output_dir"])
    _write_once(out / f"report_{topics.model_name}.json", _dump(doc), chash)
    print(json.dumps({m: s.model_score for m, s in sorted(scores.items())}, sort_keys=True))
    return EXIT_OK


def cmd_judge(args: argparse.Namespace) -> int:
    keys = ("topics", "kinds", "chat_url", "chat_model", "temperature",
            "max_retries", "rate_limit", "api_key_env", "report", "output_dir")
    merged = _merged(args, keys)
    _validate(merged, ("topics", "chat_url", "output_dir"))
    topics = load_topics(_need(merged["topics"], "topic file", "your topic model"))
    config = ChatConfig(
        base_url=merged["chat_url"],
        model=merged.get("chat_model", "gpt-3.5-turbo"),
        temperature=merged.get("temperature", 0.0),
        max_retries=merged.get("max_retries", 2),
        rate_limit_per_minute=merged.get("rate_limit", 60.0),
        api_key_env=merged.get("api_key_env", "TOPICMETER_CHAT_API_KEY"),
    )
    client = HttpChatClient(config)
    kinds = merged.get("kinds") or ["intrusion", "rating"]
    out = Path(merged["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    chash = _config_hash(merged)
    scores: dict[str, baselines.MetricScore] = {}
    for kind in kinds:
        audit: list[dict] = []
        judgements = chat_eval.judge_topics(topics, kind, config, client, audit)
        chat_eval.write_audit_log(audit, out / f"judge_{kind}_audit.jsonl")
        unscored = sum(1 for j in judgements if not j.is_scored)
        if unscored == len(judgements):
            raise EmptyJudgementSet(f"all {kind} judgements failed to parse")
        if kind == "intrusion":
            scores["intrusion"] = chat_eval.ctc_intrusion(
                judgements, [len(t.words) for t in topics.topics])
        else:
            scores["rating"] = chat_eval.ctc_rating(judgements)
        judgement_doc = {
            "config_hash": chash,
            "kind": kind,
            "judgements": [j.to_dict() for j in judgements],
        }
        _write_once(out / f"judgements_{kind}.json", _dump(judgement_doc), chash)

    report_path = Path(merged.get("report") or out / f"report_{topics.model_name}.json")
    if report_path.exists():
        existing = json.loads(report_path.read_text())
        existing.pop("config_hash", None)
        report = analysis.MetricReport.from_dict(existing)
        report.scores.update(scores)
        report.provenance = dict(report.provenance)
        report.provenance["judge_config_hash"] = chash
    else:
        report = analysis.MetricReport(
            model_name=topics.model_name, num_topics=topics.num_topics,
            scores=scores, provenance={"judge_config_hash": chash},
        )
    doc = report.to_dict()
    doc["config_hash"] = _config_hash({"eval": doc.get("provenance", {}), "judge": chash})
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(_dump(doc))
    print(json.dumps({m: s.model_score for m, s in sorted(scores.items())}, sort_keys=True))
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    keys = ("reports", "metrics", "top_k", "rank_metric", "topics", "output_dir")
    merged = _merged(args, keys)
    _validate(merged, ("reports", "output_dir"))
    reports = []
    for path in merged["reports"]:
        payload = json.loads(_need(path, f"report {path}", "eval").read_text())
        payload.pop("config_hash", None)
        reports.append(analysis.MetricReport.from_dict(payload))
    reports.sort(key=lambda r: (r.model_name, r.num_topics))
    out = Path(merged["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    chash = _config_hash(merged)

    metrics = merged.get("metrics") or sorted(
        set.intersection(*(set(r.scores) for r in reports)))
    if len(reports) >= 2 and metrics:
        matrix = analysis.correlation_matrix(reports, metrics)
        doc = matrix.to_dict()
        doc["config_hash"] = chash
        _write_once(out / "correlation_matrix.json", _dump(doc), chash)

    if merged.get("topics") and merged.get("rank_metric"):
        topics = load_topics(merged["topics"])
        k = merged.get("top_k", 2)
        rankings = {}
        for report in reports:
            if report.model_name != topics.model_name:
                continue
            score = report.scores.get(merged["rank_metric"])
            if score is None:
                raise ValidationError(
                    f"report {report.model_name} lacks metric {merged['rank_metric']}")
            rankings[report.model_name] = analysis.rank_topics(topics, score, k).to_dict(topics)
        doc = {"rankings": rankings, "config_hash": chash}
        _write_once(out / "rankings.json", _dump(doc), chash)

    (out / "scores.csv").write_bytes(analysis.emit_report(reports, "delimited"))
    (out / "scores_table.txt").write_bytes(analysis.emit_report(reports, "table"))
    (out / "reports.json").write_bytes(analysis.emit_report(reports, "structured"))
    print((out / "scores_table.txt").read_text())
    return EXIT_OK


def _add_tokenizer_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lowercase", action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--strip-punctuation", dest="strip_punctuation",
                        action=argparse.BooleanOptionalAction, default=None)
    parser.add_argument("--min-token-length", dest="min_token_length", type=int)
    parser.add_argument("--token-pattern", dest="token_pattern")
    parser.add_argument("--stopword-file", dest="stopword_file")


def _add_backend_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend-url", dest="backend_url",
                        help="masked-logprob service URL, or mock:<spec.json>")
    parser.add_argument("--backend-timeout", dest="backend_timeout", type=float)
    parser.add_argument("--backend-max-batch", dest="backend_max_batch", type=int)
    parser.add_argument("--backend-retries", dest="backend_retries", type=int,
                        help="max request attempts (default 5)")
    parser.add_argument("--backend-retry-delay", dest="backend_retry_delay", type=float,
                        help="base backoff delay in seconds (default 0.25)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topicmeter",
        description="Score topic-model outputs against a corpus with "
                    "co-occurrence, contextualized, and chat-judged coherence metrics.",
    )
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="tokenize a text collection into a corpus artifact")
    p.add_argument("--config")
    p.add_argument("--input", help="text file (one document per line) or CSV table")
    p.add_argument("--format", choices=("lines", "csv"), default=None,
                   help="input layout (default lines)")
    p.add_argument("--text-column", dest="text_column")
    p.add_argument("--delimiter")
    p.add_argument("--keep-raw", dest="keep_raw",
                   action=argparse.BooleanOptionalAction, default=None)
    _add_tokenizer_flags(p)
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="build sliding-window co-occurrence counts")
    p.add_argument("--config")
    p.add_argument("--corpus", help="corpus.json from ingest")
    p.add_argument("--window-length", dest="window_length", type=int,
                   help="sliding window length (default 10)")
    p.add_argument("--topics", nargs="*", help="optional topic files to restrict counting")
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("build-tree", help="precompute pairwise contextualized PMI")
    p.add_argument("--config")
    p.add_argument("--corpus")
    p.add_argument("--segment-length", dest="segment_length", type=int,
                   help="window segment length (default 15)")
    p.add_argument("--overlap", type=int, help="words shared by adjacent segments (default 0)")
    p.add_argument("--min-segment-length", dest="min_segment_length", type=int,
                   help="drop trailing segments shorter than this (default 5)")
    p.add_argument("--targets", choices=("topics", "vocab"),
                   help="score pairs of topic words only, or the whole vocabulary")
    p.add_argument("--topics", nargs="*")
    _add_backend_flags(p)
    p.add_argument("--symmetrize", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--tree-format", dest="tree_format", choices=("json", "binary"))
    p.add_argument("--dump-segments", dest="dump_segments",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_build_tree)

    p = sub.add_parser("eval", help="score a topic file with the corpus-side metrics")
    p.add_argument("--config")
    p.add_argument("--corpus")
    p.add_argument("--topics")
    p.add_argument("--metrics", nargs="*", choices=CORPUS_METRICS,
                   help="subset to compute (default uci umass npmi cv dwr cpmi)")
    p.add_argument("--index", help="cooccurrence.json from index")
    p.add_argument("--tree", help="cpmi_tree.json/.bin from build-tree")
    p.add_argument("--embeddings", help="word-vector text file for the embedding metric")
    _add_backend_flags(p)
    p.add_argument("--epsilon", type=float,
                   help="override smoothing (defaults: 1.0 ratio metrics, 1e-12 normalized)")
    p.add_argument("--gamma", type=float, help="normalized-score exponent (default 1)")
    p.add_argument("--aggregation",
                   choices=[m.value for m in cpmi.CpmiAggregationMode])
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("judge", help="chat-judge topics: intruder detection and rating")
    p.add_argument("--config")
    p.add_argument("--topics")
    p.add_argument("--kinds", nargs="*", choices=("intrusion", "rating"))
    p.add_argument("--chat-url", dest="chat_url")
    p.add_argument("--chat-model", dest="chat_model")
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-retries", dest="max_retries", type=int)
    p.add_argument("--rate-limit", dest="rate_limit", type=float,
                   help="requests per minute")
    p.add_argument("--api-key-env", dest="api_key_env",
                   help="environment variable holding the API key")
    p.add_argument("--report", help="existing report to merge chat scores into")
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("analyze", help="correlate metrics and rank topics across reports")
    p.add_argument("--config")
    p.add_argument("--reports", nargs="*")
    p.add_argument("--metrics", nargs="*")
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--rank-metric", dest="rank_metric")
    p.add_argument("--topics", help="topic file for ranked word lists")
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except MissingArtifact as exc:
        logger.error("%s", exc)
        return EXIT_MISSING_ARTIFACT
    except (ParseFailure, EmptyJudgementSet) as exc:
        logger.error("%s", exc)
        return EXIT_PARSE_BUDGET
    except BackendUnavailable as exc:
        logger.error("%s", exc)
        return EXIT_BACKEND
    except TopicMeterError as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
