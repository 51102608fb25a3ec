import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msc import DataError
from msc.colorer import (
    NO_TAG,
    Segment,
    TagLexicon,
    build_lexicon,
    covering_phrases,
    flatten,
    render,
    score_lexicon,
    segment,
    tag_words,
    write_intersection_csv,
    write_lexicon_csv,
)
from msc.taxonomy import default_taxonomy
from oracles import tag_bruteforce

LEGEND = default_taxonomy().legend
FIX_TOKENS = "patient chest pain radiating arm troponin elevated started heparin drip fracture pelvis noted".split()
FIX_SEGMENTS = [Segment(1, 5, 0), Segment(10, 11, 3)]


def _confident(n_rows, cls, p=0.9):
    C = np.full((n_rows, 17), 0.1)
    C[:, cls] = p
    return C


def test_covering_sets():
    assert list(covering_phrases(0, 10)) == [0]
    assert list(covering_phrases(4, 10)) == [0, 1, 2, 3, 4]
    assert list(covering_phrases(9, 10)) == [5]
    assert list(covering_phrases(2, 3)) == [0]
    assert list(covering_phrases(2, 10, mode="strict5")) == []
    assert list(covering_phrases(5, 10, mode="strict5")) == [1, 2, 3, 4, 5]
    assert list(covering_phrases(3, 10, mode="literal")) == [3, 4, 5]
    with pytest.raises(ValueError):
        covering_phrases(0, 10, mode="other")


def test_uniform_confident_rows_tag_everything():
    tags = tag_words(_confident(8, 2), 12)
    assert tags.tolist() == [2] * 12
    assert segment(tags) == [Segment(0, 11, 2)]


def test_disagreement_untags_overlap():
    C = _confident(8, 2)
    C[4:, 2], C[4:, 7] = 0.1, 0.9
    tags = tag_words(C, 12)
    assert tags[:4].tolist() == [2] * 4
    assert np.all(tags[4:8] == NO_TAG)
    assert tags[8:].tolist() == [7] * 4


def test_all_subthreshold_gives_no_segments():
    assert segment(tag_words(np.full((6, 17), 0.3), 10)) == []


def test_vote_modes_differ_on_weak_phrase():
    C = _confident(6, 1)
    C[2] = 0.2
    block = tag_words(C, 10)
    abstain = tag_words(C, 10, vote="abstain")
    assert block[4] == NO_TAG and abstain[4] == 1


def test_wrong_row_count_rejected():
    with pytest.raises(DataError):
        tag_words(np.zeros((5, 17)), 10)


def _rows(n, rng):
    rows = max(n - 4, 1)
    kind = rng.integers(3)
    if kind == 0:
        C = rng.random((rows, 17))
    elif kind == 1:
        C = np.full((rows, 17), 0.05)
        C[np.arange(rows), rng.integers(0, 3, rows)] = rng.uniform(0.3, 1.0, rows)
    else:
        C = _confident(rows, int(rng.integers(17)))
        flip = rng.random(rows) < 0.2
        C[flip] = 0.2
    return C


def test_tagger_matches_bruteforce_oracle():
    rng = np.random.default_rng(0)
    for _ in range(300):
        n = int(rng.integers(1, 31))
        C = _rows(n, rng)
        assert tag_words(C, n).tolist() == tag_bruteforce(C, n)


def test_tagger_locality():
    rng = np.random.default_rng(3)
    n = 30
    C = _rows(n, rng)
    base = tag_words(C, n)
    C2 = C.copy()
    C2[20:] = rng.random((len(C) - 20, 17))
    # tokens 0..15 are covered only by phrases 0..15
    assert np.array_equal(tag_words(C2, n)[:16], base[:16])


@given(st.lists(st.integers(-1, 4), max_size=40))
@settings(max_examples=200, deadline=None)
def test_segment_round_trip_and_maximality(tags):
    segs = segment(tags)
    assert flatten(segs, len(tags)).tolist() == tags
    for a, b in zip(segs, segs[1:]):
        assert a.end < b.start
        assert a.category != b.category or b.start > a.end + 1
    for s in segs:
        assert s.category != NO_TAG and len(s) >= 1


def test_segment_examples():
    assert segment([0, 0, 0, 0, 0]) == [Segment(0, 4, 0)]
    assert segment([]) == []
    assert segment([-1, 1, 1, -1, 1]) == [Segment(1, 2, 1), Segment(4, 4, 1)]


def test_lexicon_counts_and_ties():
    lex = build_lexicon([["a", "b", "a", "c"], ["b", "x"]], [[0, 0, 0, -1], [0, 1]])
    assert lex.top(0) == [("a", 2), ("b", 2)]
    assert lex.words(1) == {"x"}
    with pytest.raises(DataError):
        lex.add(["a"], [0, 1])


def test_score_lexicon_against_set_oracle():
    rng = np.random.default_rng(5)
    words = [f"w{i}" for i in range(40)]
    lex = TagLexicon(17)
    ref = []
    for c in range(17):
        tagged = set(rng.choice(words, 10))
        for w in tagged:
            lex.add([w], [c])
        r = set(rng.choice(words, 12))
        ref.append(r)
    for c, (l, r, i) in enumerate(score_lexicon(lex, ref)):
        assert (l, r, i) == (len(lex.words(c)), len(ref[c]), len(lex.words(c) & ref[c]))


def test_score_lexicon_fixture_sizes():
    lex = TagLexicon(1)
    lex.add(list("abcde"), [0] * 5)
    assert score_lexicon(lex, [set("abcfghi")]) == [(5, 7, 3)]
    assert score_lexicon(lex, [set("xyz")])[0][2] == 0


def test_report_csvs(tmp_path):
    lex = build_lexicon([["a", "b", "a"]], [[2, 2, 2]])
    ref = [set() for _ in range(17)]
    ref[2] = {"a"}
    write_lexicon_csv(lex, tmp_path / "lex.csv", ref)
    assert (tmp_path / "lex.csv").read_text().splitlines() == ["category,word,count,in_reference", "2,a,2,1", "2,b,1,0"]
    write_intersection_csv(score_lexicon(lex, ref), tmp_path / "int.csv")
    assert (tmp_path / "int.csv").read_text().splitlines()[3] == "2,1,2,1"


def test_render_goldens(fixtures):
    html = render(FIX_TOKENS, FIX_SEGMENTS, LEGEND, "html", title="fixture note")
    assert html == (fixtures / "note_golden.html").read_text(encoding="utf-8")
    ansi = render(FIX_TOKENS, FIX_SEGMENTS, LEGEND, "ansi")
    assert ansi == (fixtures / "note_golden.ansi").read_text(encoding="utf-8")


def test_html_is_well_formed_with_one_span_per_segment():
    html = render(FIX_TOKENS + ["<b>&"], FIX_SEGMENTS, LEGEND, "html")
    root = ET.fromstring(html.split("\n", 1)[1])
    ns = "{http://www.w3.org/1999/xhtml}"
    note = root.find(f".//{ns}p")
    spans = note.findall(f"{ns}span")
    assert [s.get("class") for s in spans] == ["cat-0", "cat-3"]
    assert spans[0].text == "chest pain radiating arm troponin"
    assert len(root.findall(f".//{ns}div/{ns}span")) == 17


def test_render_edge_cases():
    toks = ["a", "b", "c"]
    assert render(toks, [], LEGEND, "ansi") == "a b c"
    assert '<p class="note">a b c</p>' in render(toks, [], LEGEND, "html")
    assert '<p class="note"><span class="cat-5">a b c</span></p>' in render(toks, [Segment(0, 2, 5)], LEGEND, "html")
    with pytest.raises(DataError):
        render(toks, [Segment(0, 1, 17)], LEGEND)
    with pytest.raises(DataError):
        render(toks, [Segment(1, 3, 0)], LEGEND)
    with pytest.raises(ValueError):
        render(toks, [], LEGEND, "pdf")


@given(st.lists(st.sampled_from(["pain", "chest", "x"]), min_size=1, max_size=20), st.integers(0, 100))
@settings(max_examples=100, deadline=None)
def test_ansi_strips_to_plain_text(tokens, seed):
    rng = np.random.default_rng(seed)
    segs = segment(rng.integers(-1, 3, len(tokens)).tolist())
    out = render(tokens, segs, LEGEND, "ansi")
    assert re.sub(r"\x1b\[[0-9;]*m", "", out) == " ".join(tokens)
