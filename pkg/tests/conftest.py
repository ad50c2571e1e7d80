import io
import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from topicmeter.corpus import Corpus, Document, TokenizerConfig, Topic, TopicSet

DATA = Path(__file__).parent / "data"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion, printed after the run."""
    try:
        import test_acceptance
    except ImportError:
        return
    lines = getattr(test_acceptance, "_results", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def loose_config():
    """Single-character tokens allowed, for tiny synthetic corpora."""
    return TokenizerConfig(min_token_length=1)


@pytest.fixture
def toy_corpus():
    from topicmeter.corpus import ingest_lines
    return ingest_lines(DATA / "toy_corpus.txt")


@pytest.fixture
def toy_topics(toy_corpus):
    from topicmeter.corpus import load_topics
    return load_topics(DATA / "toy_topics.txt", toy_corpus.tokenizer_config)


def make_corpus(docs: list[str], config: TokenizerConfig | None = None) -> Corpus:
    from topicmeter.corpus import ingest_lines
    config = config or TokenizerConfig(min_token_length=1)
    return ingest_lines(io.StringIO("\n".join(docs) + "\n"), config)


def random_corpus(rng: random.Random, max_tokens: int = 50,
                  vocab: str = "abcdefgh") -> list[list[str]]:
    """Random token lists totalling at most ``max_tokens`` tokens."""
    total = rng.randint(10, max_tokens)
    docs: list[list[str]] = []
    while total > 0:
        length = min(total, rng.randint(1, 12))
        docs.append([rng.choice(vocab) for _ in range(length)])
        total -= length
    return docs


def corpus_from_tokens(docs: list[list[str]]) -> Corpus:
    config = TokenizerConfig(min_token_length=1)
    documents = [
        Document(id=str(i + 1), raw_text=" ".join(toks), tokens=tuple(toks))
        for i, toks in enumerate(docs)
    ]
    return Corpus(documents, config)


def topic_set(word_lists: list[list[str]], name: str = "test") -> TopicSet:
    return TopicSet(model_name=name, topics=[Topic(tuple(w)) for w in word_lists])
