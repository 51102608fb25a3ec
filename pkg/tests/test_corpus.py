import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msc import DataError
from msc.corpus import (
    OOV,
    Document,
    RawNote,
    Vocabulary,
    apply_manifest,
    build_vocabulary,
    encode_note,
    load_embeddings,
    preprocess,
    read_corpus_csv,
    read_split_manifest,
    split,
    write_corpus_csv,
    write_split_manifest,
)
from msc.taxonomy import default_taxonomy


def test_preprocess_drops_stopwords_and_numbers():
    assert preprocess("Acute fracture of pelvis 2") == ["acute", "fracture", "pelvis"]


def test_preprocess_punctuation_splits_words():
    assert preprocess("s/p CABG, hx:HTN; pt_id 5mg") == ["p", "cabg", "hx", "htn", "pt", "id"]


def test_preprocess_custom_stopwords():
    assert preprocess("the cat sat", stopwords={"cat"}) == ["the", "sat"]


@given(st.text(max_size=200))
@settings(max_examples=200, deadline=None)
def test_preprocess_output_is_clean(text):
    for tok in preprocess(text):
        assert tok.isalpha() and tok == tok.lower()


def test_vocabulary_bijection_and_oov(tmp_path):
    v = build_vocabulary([["pelvis", "fracture"], ["acute", "pelvis"]])
    assert v.words == ["<oov>", "acute", "fracture", "pelvis"]
    ids = v.encode(["pelvis", "unseen"])
    assert ids.tolist() == [3, OOV]
    assert v.decode(v.encode(["acute", "fracture"])) == ["acute", "fracture"]
    v.save(tmp_path / "v.txt")
    assert Vocabulary.load(tmp_path / "v.txt").digest() == v.digest()


def test_vocabulary_rejects_empty_corpus():
    with pytest.raises(DataError):
        build_vocabulary([])


def test_empty_note_rejected():
    with pytest.raises(DataError):
        RawNote("n1", "Nursing", "   ")


def test_encode_note_never_truncates():
    body = " ".join(["pelvis"] * 500)
    v = build_vocabulary([["pelvis"]])
    doc = encode_note(RawNote("n", "Nursing", body, ["808.0"]), v, default_taxonomy())
    assert len(doc) == 500
    assert doc.labels[3] == 1 and doc.labels.sum() == 1


def test_load_embeddings_copies_rows_and_seeds_rest(tmp_path):
    v = Vocabulary(["acute", "pelvis"])
    f = tmp_path / "vec.txt"
    f.write_text("2 3\nacute 1 2 3\nzebra 9 9 9\n", encoding="utf-8")
    table = load_embeddings(f, v, 3, seed=4)
    assert table.shape == (3, 3)
    assert table[v.index["acute"]].tolist() == [1.0, 2.0, 3.0]
    other = load_embeddings(None, v, 3, seed=4)
    assert np.array_equal(table[v.index["pelvis"]], other[v.index["pelvis"]])
    assert np.all(np.abs(other) <= 0.5 / 3)


def test_load_embeddings_errors_carry_line(tmp_path):
    v = Vocabulary(["acute"])
    f = tmp_path / "vec.txt"
    f.write_text("acute 1 2\n", encoding="utf-8")
    with pytest.raises(DataError, match=":1:"):
        load_embeddings(f, v, 3)
    f.write_text("acute 1 2 3\npelvis 1 x 3\n", encoding="utf-8")
    with pytest.raises(DataError, match=":2:"):
        load_embeddings(f, v, 3)
    f.write_bytes(b"acute \xff 2 3\n")
    with pytest.raises(UnicodeDecodeError):
        load_embeddings(f, v, 3)


def _docs(n, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for j in range(n):
        lab = (rng.random(17) < [0.6, 0.2, 0.05] + [0.0] * 14).astype(np.int8)
        out.append(Document(f"d{j}", np.array([1]), lab))
    return out


def test_split_sizes_and_disjointness():
    docs = _docs(101)
    s = split(docs, seed=3)
    assert (len(s.train), len(s.validation), len(s.test)) == (61, 20, 20)
    ids = [d.note_id for part in (s.train, s.validation, s.test) for d in part]
    assert sorted(ids) == sorted(d.note_id for d in docs)


def test_split_is_deterministic_and_stratified():
    docs = _docs(600, seed=1)
    a, b = split(docs, seed=7), split(docs, seed=7)
    assert a.manifest() == b.manifest()
    total = np.array([d.labels for d in docs]).sum(axis=0)
    for part, ratio in ((a.train, 0.6), (a.validation, 0.2), (a.test, 0.2)):
        got = np.array([d.labels for d in part]).sum(axis=0)
        assert np.all(np.abs(got - ratio * total) <= 2)


def test_split_rejects_bad_ratios():
    with pytest.raises(DataError):
        split(_docs(10), ratios=(0.5, 0.5, 0.5))
    with pytest.raises(DataError):
        split(_docs(2))


def test_corpus_csv_round_trip(tmp_path):
    notes = [RawNote("a", "Nursing", 'he said "ok", then\nleft', ["401.9", "V45.81"]),
             RawNote("b", "Radiology", "clear", [])]
    write_corpus_csv(notes, tmp_path / "c.csv")
    assert read_corpus_csv(tmp_path / "c.csv") == notes


def test_corpus_csv_missing_column(tmp_path):
    (tmp_path / "c.csv").write_text("note_id,text\n1,hi\n", encoding="utf-8")
    with pytest.raises(DataError, match="missing columns"):
        read_corpus_csv(tmp_path / "c.csv")


def test_split_manifest_round_trip(tmp_path):
    docs = _docs(30)
    s = split(docs, seed=0)
    write_split_manifest(s, tmp_path / "m.csv")
    back = apply_manifest(docs, read_split_manifest(tmp_path / "m.csv"))
    for got, want in ((back.train, s.train), (back.validation, s.validation), (back.test, s.test)):
        assert {d.note_id for d in got} == {d.note_id for d in want}
    stray = Document("zz", np.array([1]), docs[0].labels)
    with pytest.raises(DataError):
        apply_manifest(docs + [stray], read_split_manifest(tmp_path / "m.csv"))
