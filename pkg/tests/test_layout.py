import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rorokit.layout import (
    BBox,
    Corpus,
    CorpusParseError,
    Document,
    Segment,
    ValidationError,
    Word,
    collapse_word_relation,
    corpus_stats,
    derive_word_level,
    document_from_dict,
    document_to_dict,
    gsdr,
    load_corpus,
    nonlinear_stats,
    save_corpus,
    validate_annotation,
)
from rorokit.relations import Relation, is_acyclic


def seg(i, x0, y0, x1, y1, texts=("w",)):
    # One word row per segment, words side by side.
    words = []
    step = max(1, (x1 - x0) // max(1, len(texts)))
    for k, t in enumerate(texts):
        wx0 = x0 + k * step
        words.append(Word(t, BBox(wx0, y0, min(wx0 + step, x1), y1)))
    return Segment(i, tuple(words), BBox(x0, y0, x1, y1))


def chain_doc(doc_id="d0", n=3, texts_per_seg=1):
    segments = tuple(
        seg(i, 0, 100 * i, 500, 100 * i + 80, texts=tuple(f"w{i}{k}" for k in range(texts_per_seg)))
        for i in range(n)
    )
    isdr = Relation.from_pairs(n, [(i, i + 1) for i in range(n - 1)])
    return Document(doc_id, 1000, 1000, segments, isdr)


# --- BBox ---


def test_bbox_bounds():
    box = BBox(0, 0, 1000, 1000)
    assert box.as_list() == [0, 0, 1000, 1000]
    with pytest.raises(ValidationError):
        BBox(10, 0, 5, 5)
    with pytest.raises(ValidationError):
        BBox(0, 0, 1001, 5)
    with pytest.raises(ValidationError):
        BBox(-1, 0, 5, 5)


def test_bbox_contains_and_overlaps():
    outer = BBox(0, 0, 100, 100)
    inner = BBox(10, 10, 50, 50)
    assert outer.contains(inner) and not inner.contains(outer)
    assert outer.overlaps(inner)
    assert not BBox(0, 0, 10, 10).overlaps(BBox(10, 0, 20, 10))  # edge touch


def test_bbox_center_and_height():
    box = BBox(0, 100, 50, 200)
    assert box.center() == (25.0, 150.0)
    assert box.height == 100


# --- structural invariants ---


def test_word_requires_text():
    with pytest.raises(ValidationError):
        Word("", BBox(0, 0, 1, 1))


def test_segment_requires_contained_words():
    w = Word("x", BBox(0, 0, 60, 10))
    with pytest.raises(ValidationError):
        Segment(0, (w,), BBox(0, 0, 50, 50))
    with pytest.raises(ValidationError):
        Segment(0, (), BBox(0, 0, 50, 50))


def test_document_requires_dense_ids():
    s0 = seg(0, 0, 0, 100, 50)
    s2 = seg(2, 0, 60, 100, 110)
    with pytest.raises(ValidationError):
        Document("d", 1000, 1000, (s0, s2))


def test_document_relation_size_checked():
    doc = chain_doc(n=3)
    with pytest.raises(ValidationError):
        Document("d", 1000, 1000, doc.segments, Relation.empty(5))


def test_document_word_bookkeeping():
    doc = chain_doc(n=3, texts_per_seg=2)
    assert doc.n_segments == 3
    assert doc.n_words == 6
    assert doc.word_spans() == [(0, 2), (2, 4), (4, 6)]
    assert doc.word_segment_index() == [0, 0, 1, 1, 2, 2]


def test_corpus_split_validation():
    doc = chain_doc()
    corpus = Corpus((doc,))
    assert corpus.split == {"d0": "train"}
    with pytest.raises(ValidationError):
        Corpus((doc,), {"d0": "holdout"})
    with pytest.raises(ValidationError):
        Corpus((doc,), {"other": "train"})
    assert Corpus((doc,), {"d0": "test"}).subset("test") == [doc]


# --- serialization ---


def test_document_dict_field_order():
    doc = chain_doc(n=2)
    obj = document_to_dict(doc)
    assert list(obj.keys()) == ["id", "page", "segments", "isdr"]
    assert list(obj["segments"][0].keys()) == ["id", "box", "words"]
    assert obj["isdr"] == [[0, 1]]
    assert document_from_dict(json.loads(json.dumps(obj))) == doc


def test_round_trip_corpus(tmp_path):
    docs = tuple(chain_doc(f"d{i}", n=3 + i) for i in range(3))
    corpus = Corpus(docs, {"d0": "train", "d1": "validation", "d2": "test"})
    path = tmp_path / "corpus.jsonl"
    save_corpus(corpus, path)
    loaded = load_corpus(path)
    assert loaded.documents == corpus.documents
    assert loaded.split == corpus.split


def test_load_reports_line_numbers(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = json.dumps(document_to_dict(chain_doc()))
    path.write_text(good + "\n{not json\n")
    with pytest.raises(CorpusParseError) as excinfo:
        load_corpus(path)
    assert excinfo.value.line_number == 2


def test_load_rejects_inverted_box(tmp_path):
    obj = document_to_dict(chain_doc("dbad"))
    obj["segments"][0]["box"] = [400, 0, 0, 80]
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps(obj) + "\n")
    with pytest.raises(ValidationError, match="dbad"):
        load_corpus(path)


def test_load_rejects_cyclic_isdr_unless_allowed(tmp_path):
    obj = document_to_dict(chain_doc("dcyc", n=2))
    obj["isdr"] = [[0, 1], [1, 0]]
    path = tmp_path / "cyc.jsonl"
    path.write_text(json.dumps(obj) + "\n")
    with pytest.raises(ValidationError, match="dcyc"):
        load_corpus(path)
    loaded = load_corpus(path, allow_cyclic=True)
    assert loaded.documents[0].isdr.pairs == {(0, 1), (1, 0)}


# --- word-level derivation ---


def test_derive_word_level_cross_segment_rule():
    # A = [a1, a2], B = [b1]; the bridge pair is last-of-A -> first-of-B.
    a = seg(0, 0, 0, 400, 80, texts=("a1", "a2"))
    b = seg(1, 0, 100, 400, 180, texts=("b1",))
    doc = Document("d", 1000, 1000, (a, b), Relation.from_pairs(2, [(0, 1)]))
    assert derive_word_level(doc).pairs == {(0, 1), (1, 2)}


def test_derive_word_level_single_segment():
    a = seg(0, 0, 0, 600, 80, texts=("a1", "a2", "a3"))
    doc = Document("d", 1000, 1000, (a,), Relation.empty(1))
    assert derive_word_level(doc).pairs == {(0, 1), (1, 2)}


def test_derive_word_level_preserves_branching():
    a = seg(0, 0, 0, 200, 80, texts=("a1",))
    b = seg(1, 0, 100, 200, 180, texts=("b1",))
    c = seg(2, 300, 100, 500, 180, texts=("c1",))
    doc = Document(
        "d", 1000, 1000, (a, b, c), Relation.from_pairs(3, [(0, 1), (0, 2)])
    )
    assert derive_word_level(doc).pairs == {(0, 1), (0, 2)}


def test_derive_word_level_requires_isdr():
    doc = Document("d", 1000, 1000, chain_doc().segments, None)
    with pytest.raises(ValidationError):
        derive_word_level(doc)


@given(st.integers(2, 6), st.integers(1, 3))
def test_derived_relation_is_acyclic_and_collapses_back(n, words_per):
    doc = chain_doc("d", n=n, texts_per_seg=words_per)
    word_rel = derive_word_level(doc)
    assert is_acyclic(word_rel)[0]
    assert collapse_word_relation(doc, word_rel) == doc.isdr


# --- statistics ---


def test_nonlinear_chain_is_zero():
    corpus = Corpus((chain_doc(n=3),))
    stats = nonlinear_stats(corpus)
    assert stats.fraction == 0.0


def test_nonlinear_star_is_one_third():
    a = seg(0, 0, 0, 200, 80)
    b = seg(1, 0, 100, 200, 180)
    c = seg(2, 300, 100, 500, 180)
    doc = Document(
        "d", 1000, 1000, (a, b, c), Relation.from_pairs(3, [(0, 1), (0, 2)])
    )
    stats = nonlinear_stats(Corpus((doc,)))
    assert stats.fraction == pytest.approx(1 / 3)
    assert stats.per_document[0].nonlinear == 1


def test_nonlinear_literal_reading_marks_interior_chain_segments():
    corpus = Corpus((chain_doc(n=4),))
    # Interior segments have exactly one predecessor and one successor.
    assert nonlinear_stats(corpus, literal=True).fraction == pytest.approx(0.5)
    assert nonlinear_stats(corpus, literal=False).fraction == 0.0


def test_nonlinear_requires_isdr():
    doc = Document("d", 1000, 1000, chain_doc().segments, None)
    with pytest.raises(ValidationError, match="d"):
        nonlinear_stats(Corpus((doc,)))


def test_corpus_stats_counts():
    corpus = Corpus((chain_doc("a", n=3, texts_per_seg=2), chain_doc("b", n=2)))
    stats = corpus_stats(corpus)
    assert (stats.documents, stats.segments, stats.words, stats.pairs) == (2, 5, 8, 3)
    assert stats.nonlinear_fraction == 0.0
    empty = corpus_stats(Corpus(()))
    assert empty.documents == 0 and empty.nonlinear_fraction is None


# --- annotation validation ---


def test_validate_clean_document():
    report = validate_annotation(chain_doc())
    assert report.ok
    assert report.cycle is None


def test_validate_flags_self_pair():
    raw = document_to_dict(chain_doc("d", n=2))
    raw["isdr"] = [[0, 0], [0, 1]]
    report = validate_annotation(raw)
    assert not report.ok
    assert report.self_pairs == (0,)


def test_validate_flags_cycle_with_witness():
    raw = document_to_dict(chain_doc("d", n=3))
    raw["isdr"] = [[0, 1], [1, 2], [2, 0]]
    report = validate_annotation(raw)
    assert report.cycle == (0, 1, 2, 0)


def test_validate_flags_duplicates_and_ranges():
    raw = document_to_dict(chain_doc("d", n=2))
    raw["isdr"] = [[0, 1], [0, 1], [5, 1], ["x", 1]]
    report = validate_annotation(raw)
    assert report.duplicate_pairs == ((0, 1),)
    assert report.index_errors == ((5, 1),)
    assert report.schema_errors
    assert not report.ok
    as_dict = report.to_dict()
    assert as_dict["ok"] is False and as_dict["id"] == "d"


# --- gsdr ---


def test_gsdr_is_closure_of_isdr():
    doc = chain_doc(n=3)
    assert gsdr(doc).pairs == {(0, 1), (1, 2), (0, 2)}
