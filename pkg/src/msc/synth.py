"""Synthetic clinical-note corpora with planted category segments.

Each note is a shuffled concatenation of generic filler segments and
category segments drawn from per-category keyword pools. The planted spans
are returned alongside the notes so tagging can be scored against them.
Span offsets index the *preprocessed* token sequence, end-exclusive.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from msc import DataError
from msc.corpus import RawNote, default_stopwords

# one representative code per category index, used to write fine codes
CATEGORY_CODES = {
    0: "401.9", 1: "250.00", 2: "486", 3: "820.8", 4: "584.9", 5: "558.9",
    6: "780.6", 7: "285.9", 8: "11.3", 9: "345.9", 10: "296.2", 11: "765.1",
    12: "682.6", 13: "715.9", 14: "174.9", 15: "745.5", 16: "642.4",
}

DEFAULT_POOLS = {
    0: """hypertension infarction arrhythmia tachycardia bradycardia murmur aortic
    stenosis ischemia angina atrial fibrillation cardiomyopathy ventricular
    coronary thrombosis embolism hypotension valvular systolic diastolic
    pericarditis aneurysm carotid venous varicose claudication endocarditis
    palpitations infarct occlusion""",
    2: """pneumonia bronchitis asthma emphysema wheezing dyspnea effusion
    pleural sputum bronchospasm pneumothorax atelectasis intubation ventilator
    tracheostomy hypoxia crackles rhonchi consolidation infiltrate cough
    bronchiectasis laryngitis pharyngitis sinusitis respiratory inhaler
    nebulizer oxygenation spirometry""",
    3: """fracture laceration contusion dislocation sprain concussion hematoma
    abrasion overdose poisoning burn trauma wound splint cast femur pelvis
    tibia fibula clavicle vertebral avulsion crush puncture sutures toxicity
    ingestion injury fall collision""",
    16: """pregnancy gestation trimester preeclampsia eclampsia postpartum
    antepartum labor delivery cesarean placenta placental fetal uterine
    contractions miscarriage obstetric gravida para amniotic membranes
    prenatal hyperemesis lochia episiotomy breech ectopic cervix dilation
    effacement""",
}

DEFAULT_GENERIC = """patient today noted stable family plan continue follow
morning evening overnight reviewed discussed seen visit chart history
report reports admitted discharged transferred team nurse physician resident
attending bed room floor unit care comfortable resting sleeping awake alert
oriented calm pleasant cooperative meal diet tray ambulating walking chair
assistance mobility dressing toileting shower call light monitor schedule
orders labs results pending consult requested contacted phone daughter son
wife husband friend social worker case manager teaching education questions
answered agrees understands signed documented flowsheet shift handoff
rounds weekend weekday week month appointment clinic outpatient home
transport wheelchair pillow blanket water juice coffee lunch dinner
breakfast snack television reading quiet""".split()

NOISE_TOKENS = ("the", "of", "and", "was", "with", "to", "12", "5mg", "at", "is", "2019", "for")


def _words(spec: str | Sequence[str]) -> list[str]:
    return spec.split() if isinstance(spec, str) else list(spec)


@dataclass
class SynthConfig:
    n_notes: int = 2000
    keyword_pools: dict[int, list[str]] = field(
        default_factory=lambda: {k: _words(v) for k, v in DEFAULT_POOLS.items()})
    generic_pool: list[str] = field(default_factory=lambda: list(DEFAULT_GENERIC))
    category_weights: dict[int, float] | None = None
    length_range: tuple[int, int] = (30, 80)
    labels_per_note: tuple[float, ...] = (0.7, 0.3)
    segment_length: tuple[int, int] = (8, 16)
    filler_length: tuple[int, int] = (2, 5)
    category_fraction: float = 0.75
    noise_rate: float = 0.1
    note_types: tuple[str, ...] = ("Nursing", "Radiology", "Physician", "Discharge summary")

    def __post_init__(self):
        self.keyword_pools = {int(k): _words(v) for k, v in self.keyword_pools.items()}
        if not self.keyword_pools:
            raise DataError("at least one keyword pool is required")
        for k, pool in self.keyword_pools.items():
            if not pool:
                raise DataError(f"keyword pool for category {k} is empty")
            if k not in CATEGORY_CODES:
                raise DataError(f"category index {k} out of range")
        if not self.generic_pool and self.category_fraction < 1.0:
            raise DataError("generic pool is empty but filler is requested")
        self.length_range = tuple(self.length_range)
        self.segment_length = tuple(self.segment_length)
        self.filler_length = tuple(self.filler_length)
        self.labels_per_note = tuple(self.labels_per_note)
        self.note_types = tuple(self.note_types)
        stop = default_stopwords()
        bad = [w for pool in [*self.keyword_pools.values(), self.generic_pool] for w in pool
               if w in stop or not w.isalpha() or w != w.lower()]
        if bad:
            raise DataError(f"pool words must be lowercase alphabetic non-stopwords: {bad[:5]}")

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if "keyword_pools" in data:
            data["keyword_pools"] = {int(k): v for k, v in data["keyword_pools"].items()}
        if data.get("category_weights"):
            data["category_weights"] = {int(k): v for k, v in data["category_weights"].items()}
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)


@dataclass(frozen=True)
class Span:
    note_id: str
    start: int
    end: int
    category: int


def _choose_labels(cfg: SynthConfig, rng: np.random.Generator) -> list[int]:
    cats = sorted(cfg.keyword_pools)
    w = np.array([1.0 if cfg.category_weights is None else cfg.category_weights.get(c, 0.0) for c in cats])
    p_k = np.asarray(cfg.labels_per_note, dtype=float)
    k = int(rng.choice(len(p_k), p=p_k / p_k.sum())) + 1
    k = min(k, int(np.count_nonzero(w)))
    picked = rng.choice(len(cats), size=k, replace=False, p=w / w.sum())
    return sorted(cats[i] for i in picked)


def _note(cfg: SynthConfig, rng: np.random.Generator, note_id: str):
    labels = _choose_labels(cfg, rng)
    lo, hi = cfg.length_range
    length = int(rng.integers(lo, hi + 1))
    seg_lo, seg_hi = cfg.segment_length
    n_cat = max(int(round(cfg.category_fraction * length)), min(length, len(labels) * seg_lo))
    n_cat = min(n_cat, length)

    segments: list[tuple[int | None, int]] = []
    used, i = 0, 0
    while used < n_cat:
        size = min(int(rng.integers(seg_lo, seg_hi + 1)), n_cat - used)
        segments.append((labels[i % len(labels)], size))
        used += size
        i += 1
    f_lo, f_hi = cfg.filler_length
    left = length - n_cat
    while left > 0:
        size = min(int(rng.integers(f_lo, f_hi + 1)), left)
        segments.append((None, size))
        left -= size
    order = rng.permutation(len(segments))

    words: list[str] = []
    spans: list[Span] = []
    for j in order:
        cat, size = segments[j]
        pool = cfg.generic_pool if cat is None else cfg.keyword_pools[cat]
        if cat is not None:
            spans.append(Span(note_id, len(words), len(words) + size, cat))
        words.extend(pool[int(t)] for t in rng.integers(len(pool), size=size))
    present = sorted({s.category for s in spans})

    raw: list[str] = []
    for w in words:
        if cfg.noise_rate > 0 and rng.random() < cfg.noise_rate:
            raw.append(NOISE_TOKENS[int(rng.integers(len(NOISE_TOKENS)))])
        raw.append(w)
    body = " ".join(raw).capitalize() + "."
    note_type = cfg.note_types[int(rng.integers(len(cfg.note_types)))]
    return RawNote(note_id, note_type, body, [CATEGORY_CODES[c] for c in present]), spans


def synthesize_corpus(cfg: SynthConfig, seed: int = 0) -> tuple[list[RawNote], list[Span]]:
    rng = np.random.default_rng(seed)
    width = len(str(cfg.n_notes))
    notes, spans = [], []
    for k in range(cfg.n_notes):
        note, sp = _note(cfg, rng, f"syn{k:0{width}d}")
        notes.append(note)
        spans.extend(sp)
    return notes, spans


def truth_tags(n_tokens: int, spans: Sequence[Span]) -> np.ndarray:
    """Per-token planted category, -1 outside every span."""
    tags = np.full(n_tokens, -1, dtype=np.int64)
    for s in spans:
        tags[s.start:s.end] = s.category
    return tags


def write_truth_csv(spans: Sequence[Span], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("note_id", "start", "end", "category"))
        w.writerows((s.note_id, s.start, s.end, s.category) for s in spans)


def read_truth_csv(path: str | Path) -> dict[str, list[Span]]:
    out: dict[str, list[Span]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            s = Span(row["note_id"], int(row["start"]), int(row["end"]), int(row["category"]))
            out.setdefault(s.note_id, []).append(s)
    return out
