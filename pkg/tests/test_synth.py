import numpy as np
import pytest

from msc import DataError
from msc.corpus import preprocess
from msc.synth import (
    CATEGORY_CODES,
    SynthConfig,
    read_truth_csv,
    synthesize_corpus,
    truth_tags,
    write_truth_csv,
)
from msc.taxonomy import default_taxonomy, rollup_labels


@pytest.fixture(scope="module")
def small():
    cfg = SynthConfig(n_notes=120)
    return cfg, *synthesize_corpus(cfg, seed=5)


def test_same_seed_same_corpus():
    cfg = SynthConfig(n_notes=20)
    assert synthesize_corpus(cfg, seed=1) == synthesize_corpus(cfg, seed=1)
    assert synthesize_corpus(cfg, seed=1) != synthesize_corpus(cfg, seed=2)


def test_representative_codes_roll_up_to_their_category():
    tax = default_taxonomy()
    for idx, code in CATEGORY_CODES.items():
        assert tax.category_of(code) == idx


def test_lengths_labels_and_spans(small):
    cfg, notes, spans = small
    tax = default_taxonomy()
    by_note = {}
    for s in spans:
        by_note.setdefault(s.note_id, []).append(s)
    for note in notes:
        words = preprocess(note.body)
        lo, hi = cfg.length_range
        assert lo <= len(words) <= hi
        labels = rollup_labels(note.fine_codes, tax)
        planted = {s.category for s in by_note[note.note_id]}
        assert set(np.flatnonzero(labels)) == planted
        for s in by_note[note.note_id]:
            # span offsets index preprocessed tokens; every covered word is from the pool
            assert all(w in cfg.keyword_pools[s.category] for w in words[s.start:s.end])


def test_keyword_fraction(small):
    cfg, notes, spans = small
    n_tokens = sum(len(preprocess(n.body)) for n in notes)
    covered = sum(s.end - s.start for s in spans)
    assert abs(covered / n_tokens - cfg.category_fraction) < 0.05


def test_truth_tags_and_csv(tmp_path, small):
    _, notes, spans = small
    write_truth_csv(spans, tmp_path / "t.csv")
    back = read_truth_csv(tmp_path / "t.csv")
    first = [s for s in spans if s.note_id == notes[0].note_id]
    assert back[notes[0].note_id] == first
    tags = truth_tags(len(preprocess(notes[0].body)), first)
    assert np.count_nonzero(tags >= 0) == sum(s.end - s.start for s in first)


@pytest.mark.parametrize("kwargs", [
    {"keyword_pools": {}},
    {"keyword_pools": {0: []}},
    {"keyword_pools": {40: ["heart"]}},
    {"keyword_pools": {0: ["the"]}},
    {"keyword_pools": {0: ["Heart"]}},
])
def test_config_validation(kwargs):
    with pytest.raises(DataError):
        SynthConfig(**kwargs)


def test_config_json_round_trip(tmp_path):
    cfg = SynthConfig(n_notes=7, keyword_pools={1: ["thyroid", "insulin"]}, category_weights={1: 1.0})
    (tmp_path / "c.json").write_text(cfg.to_json(), encoding="utf-8")
    assert SynthConfig.from_json(tmp_path / "c.json") == cfg
