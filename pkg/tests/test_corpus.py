import json

import pytest

from raglab.corpus import Passage, get_passage, ingest_passages, persist, restore
from raglab.errors import IngestError, NotFoundError, PersistenceError, VersionError


def write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n")


@pytest.fixture
def two_line_file(tmp_path):
    path = tmp_path / "passages.jsonl"
    write_jsonl(path, [
        {"wiki_id": "A", "title": "Cat", "text": "cats purr"},
        {"wiki_id": "B", "title": "Dog", "text": "dogs bark"},
    ])
    return path


class TestIngest:
    def test_sequential_ids(self, two_line_file):
        corpus = ingest_passages(two_line_file, "toy")
        assert len(corpus) == 2
        assert [p.passage_id for p in corpus] == [0, 1]
        assert corpus[0].wiki_id == "A"
        assert corpus[1].title == "Dog"

    def test_missing_title_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        write_jsonl(path, [{"wiki_id": "A", "text": "no title"}])
        with pytest.raises(IngestError, match="line 1: missing field title"):
            ingest_passages(path, "x")

    def test_malformed_json_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"wiki_id": "A", "title": "T", "text": "ok"}\n{broken\n')
        with pytest.raises(IngestError, match="line 2"):
            ingest_passages(path, "x")

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        with pytest.raises(IngestError):
            ingest_passages(path, "x")

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(IngestError):
            ingest_passages(tmp_path / "nope.jsonl", "x")

    def test_field_name_shim(self, tmp_path):
        path = tmp_path / "kilt.jsonl"
        write_jsonl(path, [
            {"wikipedia_id": 123, "wikipedia_title": "Cat", "contents": "cats purr"},
        ])
        corpus = ingest_passages(path, "kilt")
        p = corpus[0]
        assert (p.wiki_id, p.title, p.text) == ("123", "Cat", "cats purr")

    def test_tsv_with_header(self, tmp_path):
        path = tmp_path / "dump.tsv"
        path.write_text("id\ttext\ttitle\n1\tcats purr\tCat\n2\tdogs bark\tDog\n")
        corpus = ingest_passages(path, "tsv")
        assert len(corpus) == 2
        assert corpus[0].title == "Cat"
        assert corpus[1].text == "dogs bark"

    def test_streaming_ingest_to_file(self, two_line_file, tmp_path):
        out = tmp_path / "toy.corpus"
        corpus = ingest_passages(two_line_file, "toy", out_path=out)
        assert out.exists()
        assert len(corpus) == 2
        assert corpus[1].text == "dogs bark"

    def test_duplicates_kept(self, tmp_path):
        path = tmp_path / "dup.jsonl"
        rec = {"wiki_id": "A", "title": "Cat", "text": "same"}
        write_jsonl(path, [rec, rec])
        assert len(ingest_passages(path, "dup")) == 2


class TestGetPassage:
    def test_lookup(self, two_line_file):
        corpus = ingest_passages(two_line_file, "toy")
        p = get_passage(corpus, 0)
        assert (p.wiki_id, p.title, p.text) == ("A", "Cat", "cats purr")

    def test_out_of_range(self, two_line_file):
        corpus = ingest_passages(two_line_file, "toy")
        with pytest.raises(NotFoundError):
            get_passage(corpus, 5)
        with pytest.raises(NotFoundError):
            get_passage(corpus, -1)

    def test_id_equals_position(self, two_line_file):
        corpus = ingest_passages(two_line_file, "toy")
        for i in range(len(corpus)):
            assert get_passage(corpus, i).passage_id == i

    def test_index_text_prepends_title(self):
        p = Passage(0, "A", "Cat", "cats purr")
        assert p.index_text() == "Cat cats purr"


class TestPersistence:
    def test_round_trip_identical(self, two_line_file, tmp_path):
        corpus = ingest_passages(two_line_file, "toy")
        path = tmp_path / "toy.corpus"
        persist(corpus, path)
        loaded = restore(path)
        assert loaded.corpus_id == corpus.corpus_id
        assert loaded.source_path == corpus.source_path
        assert loaded.created_at == corpus.created_at
        assert [p for p in loaded] == [p for p in corpus]

    def test_truncated_file(self, two_line_file, tmp_path):
        corpus = ingest_passages(two_line_file, "toy")
        path = tmp_path / "toy.corpus"
        persist(corpus, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) // 2])
        with pytest.raises(PersistenceError):
            restore(path)

    def test_newer_version_rejected(self, two_line_file, tmp_path):
        corpus = ingest_passages(two_line_file, "toy")
        path = tmp_path / "toy.corpus"
        persist(corpus, path)
        raw = bytearray(path.read_bytes())
        raw[4] = 99  # bump the little-endian version field
        path.write_bytes(bytes(raw))
        with pytest.raises(VersionError):
            restore(path)

    def test_not_a_corpus_file(self, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"whatever")
        with pytest.raises(PersistenceError):
            restore(path)

    def test_unicode_round_trip(self, tmp_path):
        src = tmp_path / "uni.jsonl"
        write_jsonl(src, [{"wiki_id": "Ω", "title": "Café", "text": "naïve 漢字 text"}])
        corpus = ingest_passages(src, "uni")
        path = tmp_path / "uni.corpus"
        persist(corpus, path)
        assert restore(path)[0].text == "naïve 漢字 text"
