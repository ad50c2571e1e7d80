import io
import json

import pytest

from topicmeter.corpus import (
    Corpus,
    TokenizerConfig,
    Topic,
    ingest_delimited,
    ingest_lines,
    load_topics,
)
from topicmeter.errors import (
    DuplicateTopicWord,
    EmptyCorpus,
    MalformedRow,
    MissingColumn,
    TopicFileError,
    ValidationError,
)

from conftest import DATA, make_corpus


class TestTokenizer:
    def test_normalization(self):
        config = TokenizerConfig()
        assert config.tokenize("The CAR, the car.") == ["the", "car", "the", "car"]

    def test_min_token_length(self):
        config = TokenizerConfig(min_token_length=3)
        assert config.tokenize("a an the word") == ["the", "word"]

    def test_no_lowercase(self):
        config = TokenizerConfig(lowercase=False, min_token_length=1)
        assert config.tokenize("The CAR") == ["The", "CAR"]

    def test_stopwords_not_removed_by_default(self):
        assert "the" in TokenizerConfig().tokenize("the game")

    def test_stopword_option(self):
        config = TokenizerConfig(stopwords=frozenset({"the"}))
        assert config.tokenize("the game") == ["game"]

    def test_token_pattern_filter(self):
        config = TokenizerConfig(token_pattern=r"[a-z]+", strip_punctuation=False,
                                 min_token_length=1)
        assert config.tokenize("abc de3f ghi") == ["abc", "ghi"]

    def test_deterministic(self):
        config = TokenizerConfig()
        text = "Some, TEXT; with punctuation... and MiXeD case!"
        assert config.tokenize(text) == config.tokenize(text)

    def test_invalid_config(self):
        with pytest.raises(ValidationError):
            TokenizerConfig(min_token_length=0)
        with pytest.raises(ValidationError):
            TokenizerConfig(token_pattern="[unclosed")

    def test_config_roundtrip(self):
        config = TokenizerConfig(min_token_length=3, stopwords=frozenset({"x"}))
        assert TokenizerConfig.from_dict(config.to_dict()) == config


class TestIngestLines:
    def test_hand_counted_example(self, loose_config):
        corpus = ingest_lines(io.StringIO("a b\nb c\nc a\n"), loose_config)
        assert corpus.num_documents == 3
        assert sorted(corpus.vocabulary.words()) == ["a", "b", "c"]
        assert corpus.vocabulary.doc_frequency["b"] == 2

    def test_empty_stream(self, loose_config):
        with pytest.raises(EmptyCorpus):
            ingest_lines(io.StringIO(""), loose_config)

    def test_all_filtered(self):
        with pytest.raises(EmptyCorpus):
            ingest_lines(io.StringIO("... !!! ???\n"), TokenizerConfig())

    def test_untokenizable_line_counts_as_skip(self, loose_config):
        corpus = ingest_lines(io.StringIO("a b\n...\nc d\n"), loose_config)
        assert corpus.num_documents == 2
        assert corpus.summary().skipped_rows == 1

    def test_summary(self, loose_config):
        corpus = ingest_lines(io.StringIO("a b\nb c a\n"), loose_config)
        summary = corpus.summary()
        assert summary.documents == 2
        assert summary.tokens == 5
        assert summary.vocabulary_size == 3
        assert summary.skipped_rows == 0

    def test_determinism(self, loose_config):
        text = "a b c\nd e f\n"
        c1 = ingest_lines(io.StringIO(text), loose_config)
        c2 = ingest_lines(io.StringIO(text), loose_config)
        assert [d.tokens for d in c1] == [d.tokens for d in c2]

    def test_doc_frequency_totals(self, loose_config):
        corpus = ingest_lines(io.StringIO("a b a\nb c\nc c a\n"), loose_config)
        total_df = sum(corpus.vocabulary.doc_frequency.values())
        recount = sum(len(set(d.tokens)) for d in corpus)
        assert total_df == recount

    def test_vocabulary_roundtrip(self, loose_config):
        corpus = ingest_lines(io.StringIO("e d c\nb a\n"), loose_config)
        vocab = corpus.vocabulary
        for i in range(len(vocab)):
            assert vocab.id(vocab.word(i)) == i

    def test_corpus_save_load(self, tmp_path, loose_config):
        corpus = ingest_lines(io.StringIO("a b c\nd e\n"), loose_config)
        path = tmp_path / "corpus.json"
        corpus.save(path)
        again = Corpus.load(path)
        assert [d.tokens for d in again] == [d.tokens for d in corpus]
        assert again.corpus_hash() == corpus.corpus_hash()


class TestIngestDelimited:
    def test_column_projection(self, loose_config):
        table = "date,text\n2020,a b\n2021,c d\n"
        corpus = ingest_delimited(io.StringIO(table), "text", loose_config)
        assert corpus.num_documents == 2
        assert corpus.documents[0].tokens == ("a", "b")

    def test_missing_column(self, loose_config):
        with pytest.raises(MissingColumn) as exc:
            ingest_delimited(io.StringIO("date,text\n2020,a\n"), "body", loose_config)
        assert exc.value.column == "body"

    def test_empty_cell_skipped_and_counted(self, loose_config):
        table = "date,text\n2020,a b\n2021,\n2022,c d\n"
        corpus = ingest_delimited(io.StringIO(table), "text", loose_config)
        assert corpus.num_documents == 2
        assert corpus.summary().skipped_rows == 1

    def test_malformed_row_reports_number(self, loose_config):
        table = "date,place,text\n2020,paris,a b\n2021\n"
        with pytest.raises(MalformedRow) as exc:
            ingest_delimited(io.StringIO(table), "text", loose_config)
        assert exc.value.row_number == 2

    def test_quoted_cells(self, loose_config):
        table = 'id,text\n1,"a, b c"\n'
        corpus = ingest_delimited(io.StringIO(table), "text", loose_config)
        assert corpus.documents[0].tokens == ("a", "b", "c")


class TestTopics:
    def test_plain_single_line(self):
        topics = load_topics(io.StringIO("game play team\n"))
        assert topics.num_topics == 1
        assert len(topics.topics[0]) == 3

    def test_duplicate_word(self):
        with pytest.raises(DuplicateTopicWord):
            load_topics(io.StringIO("god god jesus\n"))

    def test_too_few_words(self):
        with pytest.raises(TopicFileError):
            load_topics(io.StringIO("solo\n"))

    def test_comments_and_blanks(self):
        topics = load_topics(io.StringIO("# header\n\ngame play\n# more\nman devil\n"))
        assert topics.num_topics == 2

    def test_five_by_ten_fixture(self, tmp_path):
        words = [f"w{i:02d}" for i in range(50)]
        lines = [" ".join(words[i * 10:(i + 1) * 10]) for i in range(5)]
        path = tmp_path / "topics.txt"
        path.write_text("\n".join(lines) + "\n")
        topics = load_topics(path)
        assert topics.num_topics == 5
        assert all(len(t) == 10 for t in topics.topics)

    def test_words_share_corpus_normalization(self):
        topics = load_topics(io.StringIO("Game PLAY, team\n"))
        assert topics.topics[0].words == ("game", "play", "team")

    def test_json_and_plain_parse_identically(self):
        plain = load_topics(DATA / "toy_topics.txt")
        structured = load_topics(DATA / "toy_topics.json")
        assert plain.model_name == structured.model_name
        assert [t.words for t in plain.topics] == [t.words for t in structured.topics]

    def test_missing_from_vocabulary(self, loose_config):
        corpus = make_corpus(["a b c"], loose_config)
        topic = Topic(("a", "z"))
        assert topic.missing_from(corpus.vocabulary) == ["z"]

    def test_bad_json(self):
        with pytest.raises(TopicFileError):
            load_topics(io.StringIO('{"topics": '))
        with pytest.raises(TopicFileError):
            load_topics(io.StringIO(json.dumps({"model_name": "m"})))
