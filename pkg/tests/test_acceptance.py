"""Acceptance criteria, one test per criterion at its stated tolerance.

Each test prints its own PASS/FAIL line (bypassing capture) so a plain
pytest run shows one line per criterion.
"""

import json
import math
import random
import shutil
import struct
import subprocess
import sys
import time
from pathlib import Path

import pytest

from topicmeter.baselines import (
    cv_pair,
    npmi_pair,
    tc_cv,
    tc_npmi,
    tc_uci,
    tc_umass,
    umass_pair,
)
from topicmeter.chat_eval import ctc_intrusion, ChatJudgement
from topicmeter.cooccurrence import CooccurrenceIndex, build_index
from topicmeter.cpmi import (
    CpmiTree,
    CpmiTreeHeader,
    build_cpmi_tree,
    cpmi_pair,
    ctc_cpmi,
    ctc_ncpmi,
    load_tree,
    save_tree,
)
from topicmeter.errors import DegenerateDenominator
from topicmeter.mocks import (
    MockChatScript,
    MockLmBackend,
    MockLmSpec,
    serve_mock_chat_http,
    serve_mock_lm_http,
)
from topicmeter.analysis import correlation_matrix, rank_topics, MetricReport
from topicmeter.baselines import MetricScore
from topicmeter.segmenter import Segment, SegmenterConfig

from conftest import DATA, corpus_from_tokens, random_corpus, topic_set
from oracles import (
    NaiveStats,
    naive_cv,
    naive_doc_counts,
    naive_metric,
    naive_npmi,
    naive_pearson,
    naive_pmi,
    naive_umass,
    naive_window_counts,
)

_results: list[str] = []


@pytest.fixture(autouse=True)
def announce(request):
    start = time.monotonic()
    failed_before = request.session.testsfailed
    yield
    verdict = "PASS" if request.session.testsfailed == failed_before else "FAIL"
    name = request.node.name.replace("test_", "", 1)
    line = f"ACCEPTANCE {verdict} [{time.monotonic() - start:6.2f}s] {name}"
    _results.append(line)
    sys.__stdout__.write(line + "\n")
    sys.__stdout__.flush()


def seg(tokens, doc_id="1", start=0):
    return Segment(doc_id=doc_id, start=start, tokens=tuple(tokens))


def test_counting_oracle():
    """Counts exact, all five baseline metrics within 1e-9 relative, < 5 s."""
    start = time.monotonic()
    rng = random.Random(20240501)
    corpora_checked = 0
    while corpora_checked < 20:
        docs = random_corpus(rng, max_tokens=50)
        window_length = rng.randint(2, 8)
        index = build_index(corpus_from_tokens(docs), window_length)
        total, word_window, pair_window = naive_window_counts(docs, window_length)
        assert index.total_windows == total
        assert index.word_window_count == word_window
        assert index.pair_window_count == pair_window
        e, word_doc, pair_doc = naive_doc_counts(docs)
        assert (index.total_docs, index.word_doc_count, index.pair_doc_count) == \
            (e, word_doc, pair_doc)

        words = sorted(index.word_window_count)
        if len(words) < 4:
            continue
        topics = [words[:3], words[3:6] if len(words) >= 6 else words[-3:]]
        topics = [t for t in topics if len(t) >= 2]
        if any(len(set(t)) != len(t) for t in topics):
            continue
        ts = topic_set([list(t) for t in topics])
        stats = NaiveStats(docs, window_length)
        pairs = [
            (tc_uci(ts, index, 1.0).model_score,
             naive_metric(topics, lambda r, s: naive_pmi(stats, r, s, 1.0))),
            (tc_umass(ts, index, 1.0).model_score,
             naive_metric(topics, lambda r, s: naive_umass(stats, r, s, 1.0))),
            (tc_npmi(ts, index, 1e-12).model_score,
             naive_metric(topics, lambda r, s: naive_npmi(stats, r, s, 1e-12))),
            (tc_cv(ts, index, 1e-12, 2.0).model_score,
             naive_metric(topics, lambda r, s: naive_cv(stats, r, s, 1e-12, 2.0))),
        ]
        for mine, oracle in pairs:
            assert mine == pytest.approx(oracle, rel=1e-9)

        # fifth scorer: embedding cosine over this corpus's vocabulary
        import numpy as np
        from topicmeter.baselines import EmbeddingTable, tc_dwr
        from oracles import naive_dwr
        vectors = {w: [rng.uniform(-1, 1) for _ in range(5)] for w in words}
        table = EmbeddingTable(5, {w: np.array(v) for w, v in vectors.items()})
        mine = tc_dwr(ts, table).model_score
        oracle = naive_dwr(topics, vectors)
        assert mine == pytest.approx(oracle, rel=1e-9)
        corpora_checked += 1
    assert time.monotonic() - start < 5.0


def test_formula_goldens():
    """Frozen formula values at their stated tolerances."""
    # co-document ratio: counts (2, 4), eps=1 -> ln 0.75
    index = CooccurrenceIndex(
        window_length=10, total_windows=1, total_docs=5,
        word_window_count={}, pair_window_count={},
        word_doc_count={"r": 2, "s": 4}, pair_doc_count={("r", "s"): 2})
    assert umass_pair(index, "r", "s", 1.0) == pytest.approx(math.log(0.75), abs=1e-12)

    # normalized score reaches 1 at perfect co-occurrence as eps -> 0
    perfect = corpus_from_tokens([["a", "b"], ["c", "d"]])
    idx = build_index(perfect, 2)
    assert npmi_pair(idx, "a", "b", 1e-300) == 1.0

    # gamma=1 power is the identity on 1000 random inputs
    rng = random.Random(7)
    checked = 0
    while checked < 1000:
        docs = random_corpus(rng, max_tokens=30)
        index = build_index(corpus_from_tokens(docs), 3)
        words = sorted(index.word_window_count)
        if len(words) < 2:
            continue
        a, b = rng.sample(words, 2)
        eps = rng.choice([1e-12, 1e-6, 1e-2])
        try:
            expected = npmi_pair(index, a, b, eps)
        except DegenerateDenominator:
            continue
        assert cv_pair(index, a, b, eps, 1.0) == expected
        checked += 1

    # intrusion-count fixtures, exact
    def judgements(counts, m=5):
        words = tuple(f"w{i}" for i in range(m))
        return [ChatJudgement(topic_index=i, kind="intrusion", label="t",
                              intruders=words[:c], raw_response="", attempts=1)
                for i, c in enumerate(counts)]

    assert ctc_intrusion(judgements([1, 0]), 5).model_score == (0.8 + 1.0) / 2 == 0.9
    mixed = ctc_intrusion(judgements([0, 1, 2, 3, 5]), 5)
    assert mixed.per_topic == [1.0, 0.8, 0.6, 0.4, 0.0]
    # exactly the float64 evaluation of the defining expression; the decimal
    # display value 0.56 is one ulp away
    assert mixed.model_score == (1.0 + 0.8 + 0.6 + 0.4 + 0.0) / 5
    assert abs(mixed.model_score - 0.56) < 1e-15


def test_cpmi_collapse():
    """Context-free backends collapse all contextualized scores to zero."""
    vocab = tuple(f"w{i}" for i in range(12))
    rng = random.Random(3)
    docs = [rng.sample(vocab, k=rng.randint(4, 8)) for _ in range(15)]
    corpus = corpus_from_tokens(docs)
    segments = [seg(d.tokens, d.id) for d in corpus]
    topics = topic_set([["w0", "w1", "w2"], ["w3", "w4"], ["w5", "w9", "w11"]])
    config = SegmenterConfig(segment_length=8, overlap=0, min_segment_length=2)

    for spec in (MockLmSpec.uniform(vocab),
                 MockLmSpec.unigram({w: i + 1 for i, w in enumerate(vocab)})):
        backend = MockLmBackend(spec)
        tree = build_cpmi_tree(segments, set(vocab), backend, config)
        assert abs(ctc_cpmi(topics, tree).model_score) < 1e-12
        assert abs(ctc_ncpmi(topics, corpus, backend).model_score) < 1e-12

    boosted = MockLmBackend(MockLmSpec.pair_boost(vocab, {("w0", "w1"): 2.0}))
    value = cpmi_pair(boosted, seg(["w0", "w1", "w2", "w3"]), 0, 1)
    assert value == pytest.approx(math.log(2), abs=1e-9)


def make_communities(seed: int):
    """200 documents over 5 planted word communities plus background noise."""
    rng = random.Random(seed)
    communities = [[f"c{c}w{j}" for j in range(6)] for c in range(5)]
    background = [f"bg{j}" for j in range(30)]
    docs = []
    for _ in range(200):
        community = rng.choice(communities)
        doc = [
            rng.choice(community) if rng.random() < 0.7 else rng.choice(background)
            for _ in range(12)
        ]
        docs.append(doc)
    planted = [c[:5] for c in communities]
    flat = [w for topic in planted for w in topic]
    while True:
        shuffled_flat = flat[:]
        rng.shuffle(shuffled_flat)
        shuffled = [shuffled_flat[i * 5:(i + 1) * 5] for i in range(5)]
        if all(len({w[:2] for w in t}) >= 3 for t in shuffled):
            return docs, communities, planted, shuffled


def test_discrimination_property():
    """Planted topics outscore shuffled ones; zero inversions over 10 seeds."""
    start = time.monotonic()
    config = SegmenterConfig(segment_length=12, overlap=0, min_segment_length=3)
    for seed in range(10):
        docs, communities, planted, shuffled = make_communities(1000 + seed)
        corpus = corpus_from_tokens(docs)
        planted_set = topic_set(planted, "planted")
        shuffled_set = topic_set(shuffled, "shuffled")

        index = build_index(corpus, 10)
        for metric in (tc_uci, tc_npmi):
            eps = 1e-12
            good = metric(planted_set, index, eps).model_score
            bad = metric(shuffled_set, index, eps).model_score
            assert good > bad, f"seed {seed}: {metric.__name__} inverted"

        rules = {}
        for community in communities:
            for i, a in enumerate(community):
                for b in community[i + 1:]:
                    rules[(a, b)] = 1.5
        vocab = tuple(sorted(corpus.vocabulary.words()))
        backend = MockLmBackend(MockLmSpec.pair_boost(vocab, rules, symmetric=True))
        segments = [seg(d.tokens, d.id) for d in corpus]
        targets = set(w for t in planted for w in t)
        tree = build_cpmi_tree(segments, targets, backend, config)
        good = ctc_cpmi(planted_set, tree).model_score
        bad = ctc_cpmi(shuffled_set, tree).model_score
        assert good > bad, f"seed {seed}: contextualized metric inverted"
    assert time.monotonic() - start < 60.0


def test_tree_roundtrip():
    """>= 10^4 pairs bit-exact through both formats; build order-independent."""
    rng = random.Random(99)
    words = [f"word{i:03d}" for i in range(150)]
    entries = {}
    for i in range(len(words)):
        for j in range(i + 1, len(words)):
            value = struct.unpack("<d", struct.pack("<Q", rng.getrandbits(62)))[0]
            entries[(words[i], words[j])] = (value, rng.randint(1, 40))
    assert len(entries) >= 10_000
    header = CpmiTreeHeader(
        total_segments=40, segmenter=SegmenterConfig(),
        backend_fingerprint="fp", corpus_hash="hash")
    tree = CpmiTree(header=header, entries=entries)
    import tempfile
    with tempfile.TemporaryDirectory() as tmp:
        for name in ("tree.json", "tree.bin"):
            path = Path(tmp) / name
            save_tree(tree, path)
            again = load_tree(path)
            assert again.entries == tree.entries          # bit-exact floats
            assert again.header.to_dict() == header.to_dict()

    vocab = tuple(f"w{i}" for i in range(16))
    backend = MockLmBackend(MockLmSpec.pair_boost(
        vocab, {("w0", "w1"): 2.0, ("w2", "w3"): 1.5}, symmetric=True))
    rng = random.Random(5)
    segments = [seg(rng.sample(vocab, 7), doc_id=str(i)) for i in range(40)]
    forward = build_cpmi_tree(segments, set(vocab), backend, SegmenterConfig())
    permuted_order = segments[:]
    rng.shuffle(permuted_order)
    permuted = build_cpmi_tree(permuted_order, set(vocab), backend, SegmenterConfig())
    assert set(forward.entries) == set(permuted.entries)
    for pair, (total, count) in forward.entries.items():
        p_total, p_count = permuted.entries[pair]
        assert count == p_count
        assert abs(total - p_total) <= 1e-12


def test_prompt_goldens_and_parsers():
    """Templates byte-for-byte; parsers survive the malformed fixture suite."""
    from topicmeter.chat_eval import (
        INTRUSION_TEMPLATE,
        RATING_TEMPLATE,
        parse_intrusion_response,
        parse_rating_response,
    )
    from topicmeter.corpus import Topic
    from topicmeter.errors import ParseFailure

    intrusion_golden = (DATA / "intrusion_prompt.golden").read_text(
        encoding="utf-8").rstrip("\n")
    rating_golden = (DATA / "rating_prompt.golden").read_text(
        encoding="utf-8").rstrip("\n")
    assert INTRUSION_TEMPLATE == intrusion_golden
    assert RATING_TEMPLATE == rating_golden

    topic = Topic(("game", "play", "team"))
    parsed = parse_intrusion_response("topic: sports, intruders: [team]", topic)
    assert parsed.intruders == ("team",)
    parsed = parse_intrusion_response("TOPIC: Sports, INTRUDERS: team, game", topic)
    assert parsed.intruders == ("team", "game")
    parsed = parse_intrusion_response("topic: sports, intruders: []", topic)
    assert parsed.intruders == ()
    parsed = parse_intrusion_response("topic: sports, intruders: [window]", topic)
    assert parsed.intruders == () and parsed.dropped == ("window",)
    for malformed in ("I cannot help with that", "", "intruders everywhere",
                      "topic only: sports"):
        with pytest.raises(ParseFailure):
            parse_intrusion_response(malformed, topic)

    assert parse_rating_response("score: 3") == 3
    assert parse_rating_response("Score: 2 — fairly coherent") == 2
    assert parse_rating_response("the score:1.") == 1
    for malformed in ("score: 5", "score: -2", "no rating", "score: high"):
        with pytest.raises(ParseFailure):
            parse_rating_response(malformed)


def test_analysis_oracles():
    """Correlation against the closed-form oracle; matrix shape; tie rule."""
    from topicmeter.analysis import pearson
    rng = random.Random(314)
    for _ in range(100):
        n = rng.randint(2, 40)
        xs = [rng.uniform(-10, 10) for _ in range(n)]
        ys = [rng.uniform(-10, 10) for _ in range(n)]
        if len(set(xs)) < 2 or len(set(ys)) < 2:
            continue
        assert pearson(xs, ys) == pytest.approx(naive_pearson(xs, ys), abs=1e-12)

    def report(name, values):
        return MetricReport(name, 2, {
            m: MetricScore(metric_name=m, model_score=v, per_topic=[v, v])
            for m, v in values.items()})

    reports = [report(f"m{i}", {"a": rng.uniform(0, 1), "b": rng.uniform(0, 1)})
               for i in range(5)]
    matrix = correlation_matrix(reports, ["a", "b"])
    assert matrix.values[0][0] == 1.0 and matrix.values[1][1] == 1.0
    assert matrix.values[0][1] == matrix.values[1][0]

    topics = topic_set([["a", "b"], ["c", "d"], ["e", "f"]])
    flat = MetricScore(metric_name="x", model_score=0.5, per_topic=[0.5, 0.5, 0.5])
    ranking = rank_topics(topics, flat, 1)
    assert ranking.top == [(0, 0.5)]
    assert ranking.bottom == [(2, 0.5)]


def cli(*argv, env=None):
    import os
    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    proc = subprocess.run(
        [sys.executable, "-m", "topicmeter.cli"] + [str(a) for a in argv],
        capture_output=True, text=True, env=full_env, timeout=120,
    )
    assert proc.returncode == 0, f"CLI failed: {proc.stderr[-2000:]}"
    return proc


def run_toy_pipeline(workdir: Path, lm_url: str, chat_url: str) -> bytes:
    out = workdir / "out"
    cli("ingest", "--input", workdir / "corpus.txt", "--output-dir", out)
    cli("index", "--corpus", out / "corpus.json", "--output-dir", out)
    cli("build-tree", "--corpus", out / "corpus.json",
        "--segment-length", "8", "--min-segment-length", "2",
        "--topics", workdir / "toy_topics.txt",
        "--backend-url", lm_url, "--output-dir", out)
    cli("eval", "--corpus", out / "corpus.json",
        "--topics", workdir / "toy_topics.txt",
        "--metrics", "uci", "umass", "npmi", "cv", "dwr", "cpmi", "ncpmi",
        "--index", out / "cooccurrence.json",
        "--tree", out / "cpmi_tree.json",
        "--embeddings", workdir / "embeddings.txt",
        "--backend-url", lm_url,
        "--output-dir", out)
    cli("judge", "--topics", workdir / "toy_topics.txt",
        "--chat-url", chat_url, "--rate-limit", "0", "--output-dir", out)
    return (out / "report_toy_topics.json").read_bytes()


def test_end_to_end_cli(tmp_path):
    """Full pipeline over loopback mocks: 8 metrics, byte-identical, < 30 s."""
    start = time.monotonic()
    shutil.copy(DATA / "toy_corpus.txt", tmp_path / "corpus.txt")
    shutil.copy(DATA / "toy_topics.txt", tmp_path / "toy_topics.txt")
    shutil.copy(DATA / "toy_embeddings.txt", tmp_path / "embeddings.txt")

    from topicmeter.corpus import ingest_lines, load_topics
    corpus = ingest_lines(tmp_path / "corpus.txt")
    topics = load_topics(tmp_path / "toy_topics.txt")
    rules = {}
    for topic in topics.topics:
        for i, a in enumerate(topic.words):
            for b in topic.words[i + 1:]:
                rules[(a, b)] = 2.0
    lm_spec = MockLmSpec.pair_boost(tuple(sorted(corpus.vocabulary.words())),
                                    rules, symmetric=True)
    script = MockChatScript(
        topics=[list(t.words) for t in topics.topics],
        responses={
            (0, "intrusion"): ["topic: space, intruders: []"],
            (1, "intrusion"): ["topic: sports, intruders: [coach]"],
            (2, "intrusion"): ["topic: baking, intruders: []"],
            (0, "rating"): ["score: 3"],
            (1, "rating"): ["score: 2"],
            (2, "rating"): ["score: 3"],
        },
    )
    with serve_mock_lm_http(lm_spec) as lm, serve_mock_chat_http(script) as chat:
        first = run_toy_pipeline(tmp_path, lm.url, chat.url)
        second = run_toy_pipeline(tmp_path, lm.url, chat.url)

    assert first == second, "reruns are not byte-identical"
    report = json.loads(first)
    required = {"uci", "umass", "npmi", "cv", "dwr", "cpmi", "intrusion", "rating"}
    assert required <= set(report["scores"]), (
        f"missing metrics: {required - set(report['scores'])}")
    assert report["scores"]["cpmi"]["model_score"] > 0
    assert time.monotonic() - start < 30.0
