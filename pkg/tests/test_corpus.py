import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maqa.corpus import PassageStore, chunk_document, content_hash, ingest
from maqa.errors import InvalidInputError, NotFoundError

from conftest import write_docs


def words(n, prefix="w"):
    return " ".join(f"{prefix}{i}" for i in range(n))


def test_chunk_250_words_into_three():
    chunks = chunk_document("d1", "T", words(250), 100)
    assert [len(c.text.split()) for c in chunks] == [100, 100, 50]
    assert [c.id for c in chunks] == ["d1:0", "d1:1", "d1:2"]


def test_chunk_short_body():
    (p,) = chunk_document("d1", "T", "hello world", 100)
    assert p.text == "hello world" and p.chunk_index == 0 and p.title == "T"


def test_chunk_exact_multiple_has_no_empty_tail():
    assert len(chunk_document("d1", "T", words(100), 100)) == 1


def test_chunk_rejects_empty_body_and_bad_size():
    with pytest.raises(InvalidInputError):
        chunk_document("d1", "T", "   \n ", 100)
    with pytest.raises(InvalidInputError):
        chunk_document("d1", "T", "x", 0)


@settings(max_examples=150, deadline=None)
@given(st.lists(st.text(alphabet="abcxyzé", min_size=1, max_size=6), min_size=1, max_size=60),
       st.sampled_from([" ", "  ", "\n", "\t "]),
       st.integers(min_value=1, max_value=17))
def test_chunking_is_a_partition(tokens, sep, size):
    chunks = chunk_document("d", "T", sep.join(tokens), size)
    rejoined = [w for c in chunks for w in c.text.split(" ")]
    assert rejoined == tokens
    assert [c.chunk_index for c in chunks] == list(range(len(chunks)))
    assert all(0 < len(c.text.split()) <= size for c in chunks)
    assert all(len(c.text.split()) == size for c in chunks[:-1])


def test_ingest_counts_and_hash_determinism(tmp_path):
    src = write_docs(tmp_path / "d.jsonl", [{"id": "a", "title": "A", "text": words(120)},
                                           {"id": "b", "title": "B", "text": words(80)}])
    m1 = ingest(src, tmp_path / "s1")
    m2 = ingest(src, tmp_path / "s2")
    assert m1.passage_count == 3
    assert m1.content_hash == m2.content_hash


def test_ingest_missing_body_names_line(tmp_path):
    src = write_docs(tmp_path / "d.jsonl", [{"id": "a", "title": "A"}])
    with pytest.raises(InvalidInputError, match="line 1"):
        ingest(src, tmp_path / "s")


def test_ingest_rejects_bad_json_and_duplicates(tmp_path):
    src = tmp_path / "d.jsonl"
    src.write_text('{"id": "a", "title": "A", "text": "x"}\nnot json\n')
    with pytest.raises(InvalidInputError, match="line 2"):
        ingest(src, tmp_path / "s")
    write_docs(src, [{"id": "a", "title": "A", "text": "x"}, {"id": "a", "title": "A", "text": "y"}])
    with pytest.raises(InvalidInputError, match="duplicate"):
        ingest(src, tmp_path / "s")


def test_get_passage(store_from):
    store = store_from([("a", "A", words(250)), ("b", "B", "short text")])
    assert store.get_passage("a:1").text.split()[0] == "w100"
    with pytest.raises(NotFoundError):
        store.get_passage("zzz:0")
    last = list(store)[-1]
    assert last.id == "b:0"
    a_last = store.get_passage("a:2")
    assert a_last.chunk_index == max(p.chunk_index for p in store if p.doc_id == "a")
    assert len(store) == store.manifest.passage_count == 4


def test_content_hash_covers_title(store_from):
    from dataclasses import replace

    store = store_from([("a", "A", "some text")])
    (p,) = list(store)
    assert content_hash([p]) != content_hash([replace(p, title="B")])
    assert content_hash([p]) == content_hash([replace(p)])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.text(alphabet="abc", min_size=1, max_size=4),
                          st.lists(st.text(alphabet="xyz", min_size=1, max_size=3), min_size=1, max_size=30)),
                min_size=1, max_size=6, unique_by=lambda d: d[0]))
def test_ingest_roundtrip_and_idempotence(tmp_path_factory, docs):
    tmp = tmp_path_factory.mktemp("c")
    src = write_docs(tmp / "d.jsonl", [{"id": i, "title": i.upper(), "text": " ".join(ws)} for i, ws in docs])
    m1 = ingest(src, tmp / "s1", chunk_size_words=7)
    m2 = ingest(src, tmp / "s2", chunk_size_words=7)
    assert m1.content_hash == m2.content_hash
    store = PassageStore.load(tmp / "s1")
    for p in store:
        assert store.get_passage(p.id) == p
    assert len(set(store.ids)) == len(store)
    with open(tmp / "s1" / "manifest.json") as fh:
        assert json.load(fh)["passage_count"] == len(store)
