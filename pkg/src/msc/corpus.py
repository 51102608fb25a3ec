"""Note ingestion, text preprocessing, vocabulary, embeddings and splitting."""

from __future__ import annotations

import csv
import hashlib
import logging
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from msc import DataError
from msc.taxonomy import Taxonomy, rollup_labels

log = logging.getLogger(__name__)

OOV = 0
_NON_WORD = re.compile(r"[^\w\s]|_", re.UNICODE)


@lru_cache(maxsize=1)
def default_stopwords() -> frozenset[str]:
    text = resources.files("msc.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def preprocess(body: str, stopwords: Iterable[str] | None = None) -> list[str]:
    """Lowercase word tokens with punctuation, numbers and stopwords removed.

    Punctuation becomes whitespace before splitting; any token containing a
    digit is dropped whole.
    """
    stop = default_stopwords() if stopwords is None else stopwords
    out = []
    for tok in _NON_WORD.sub(" ", body.lower()).split():
        if not tok.isalpha() or tok in stop:
            continue
        out.append(tok)
    return out


@dataclass
class RawNote:
    note_id: str
    note_type: str
    body: str
    fine_codes: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.body.strip():
            raise DataError(f"note {self.note_id!r} has an empty body")


@dataclass
class Document:
    note_id: str
    tokens: np.ndarray  # int64 vocabulary indices, never padded or truncated
    labels: np.ndarray  # 17-dim 0/1

    def __len__(self) -> int:
        return len(self.tokens)


class Vocabulary:
    """Word <-> index bijection. Index 0 is the out-of-vocabulary slot."""

    def __init__(self, words: Iterable[str]):
        self.words: list[str] = ["<oov>"] + sorted(set(words))
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise DataError("vocabulary words must be unique and may not include '<oov>'")

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index and self.index[word] != OOV

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.index.get(t, OOV) for t in tokens], dtype=np.int64)

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.words[i] for i in ids]

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.words).encode("utf-8")).hexdigest()

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.words[1:]) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls(w for w in Path(path).read_text(encoding="utf-8").splitlines() if w)


def build_vocabulary(corpus: Iterable[Sequence[str]]) -> Vocabulary:
    """Every word seen at least once, ordered lexicographically after the OOV slot."""
    seen: set[str] = set()
    n = 0
    for toks in corpus:
        seen.update(toks)
        n += 1
    if n == 0:
        raise DataError("cannot build a vocabulary from an empty corpus")
    return Vocabulary(seen)


def init_embeddings(vocab_size: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    bound = 0.5 / dim
    return rng.uniform(-bound, bound, size=(vocab_size, dim))


def load_embeddings(vector_file: str | Path | None, vocab: Vocabulary, dim: int, seed: int = 0) -> np.ndarray:
    """V x dim table: rows for words in ``vector_file`` copied, the rest seeded uniform.

    The file is the plain-text vector format, ``word f1 ... fdim`` per line
    with an optional leading ``V d`` header.
    """
    table = init_embeddings(len(vocab), dim, np.random.default_rng(seed))
    if vector_file is None:
        return table
    with open(vector_file, encoding="utf-8", errors="strict") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                if int(parts[1]) != dim:
                    raise DataError(f"{vector_file}:1: header dimension {parts[1]} != {dim}")
                continue
            if len(parts) != dim + 1:
                raise DataError(f"{vector_file}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            word = parts[0]
            try:
                vec = np.array([float(p) for p in parts[1:]])
            except ValueError:
                raise DataError(f"{vector_file}:{lineno}: unreadable vector values") from None
            if not np.all(np.isfinite(vec)):
                raise DataError(f"{vector_file}:{lineno}: non-finite vector values")
            if word in vocab:
                table[vocab.index[word]] = vec
    return table


def encode_note(note: RawNote, vocab: Vocabulary, taxonomy: Taxonomy, policy: str = "strict") -> Document:
    tokens = vocab.encode(preprocess(note.body))
    return Document(note.note_id, tokens, rollup_labels(note.fine_codes, taxonomy, policy))


@dataclass
class CorpusSplit:
    train: list
    validation: list
    test: list
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)

    def manifest(self) -> list[tuple[str, str]]:
        rows = []
        for name, part in (("train", self.train), ("validation", self.validation), ("test", self.test)):
            rows.extend((d.note_id, name) for d in part)
        return rows


def _target_sizes(n: int, ratios: Sequence[float]) -> list[int]:
    sizes = [int(np.floor(n * r + 0.5)) for r in ratios[:-1]]
    sizes.append(n - sum(sizes))
    if sizes[-1] < 0:
        sizes[-2] += sizes[-1]
        sizes[-1] = 0
    return sizes


def split(corpus: Sequence, ratios: Sequence[float] = (0.6, 0.2, 0.2), seed: int = 0) -> CorpusSplit:
    """Label-stratified train/validation/test partition with exact target sizes.

    Items need a ``labels`` vector. Documents are placed rarest label first
    into whichever split most lacks that label and still has room.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(corpus)
    if n < 3:
        raise DataError("need at least 3 documents to split")
    rng = np.random.default_rng(seed)
    capacity = np.array(_target_sizes(n, ratios), dtype=float)
    labels = np.array([np.asarray(d.labels) for d in corpus], dtype=float)
    want = np.outer(np.asarray(ratios, dtype=float), labels.sum(axis=0))
    order = rng.permutation(n)
    remaining = set(order.tolist())
    assign = np.full(n, -1)

    def place(j: int, label: int | None) -> None:
        open_ = capacity > 0
        score = np.where(open_, want[:, label] if label is not None else 0.0, -np.inf)
        cand = np.flatnonzero(score == score.max())
        cand = cand[capacity[cand] == capacity[cand].max()]
        s = int(cand[rng.integers(len(cand))]) if len(cand) > 1 else int(cand[0])
        assign[j] = s
        capacity[s] -= 1
        want[s] -= labels[j]
        remaining.discard(j)

    while remaining:
        left = np.array(sorted(remaining))
        counts = labels[left].sum(axis=0)
        if counts.max() <= 0:
            break
        rare = int(np.argmin(np.where(counts > 0, counts, np.inf)))
        for j in order:
            if j in remaining and labels[j, rare] > 0:
                place(int(j), rare)
    for j in order:
        if j in remaining:
            place(int(j), None)
    parts = [[corpus[j] for j in order if assign[j] == s] for s in range(3)]
    return CorpusSplit(parts[0], parts[1], parts[2], tuple(ratios))


# --- CSV interfaces -------------------------------------------------------

CORPUS_FIELDS = ("note_id", "note_type", "text", "codes")


def write_corpus_csv(notes: Iterable[RawNote], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")
        w.writerow(CORPUS_FIELDS)
        for n in notes:
            w.writerow([n.note_id, n.note_type, n.body, ";".join(n.fine_codes)])


def read_corpus_csv(path: str | Path) -> list[RawNote]:
    notes = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CORPUS_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            codes = [c.strip() for c in (row["codes"] or "").split(";") if c.strip()]
            try:
                notes.append(RawNote(row["note_id"], row["note_type"], row["text"], codes))
            except DataError as exc:
                raise DataError(f"{path}:{reader.line_num}: {exc}") from None
    return notes


def write_split_manifest(split_: CorpusSplit, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("note_id", "split"))
        w.writerows(split_.manifest())


def read_split_manifest(path: str | Path) -> dict[str, str]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if set(reader.fieldnames or ()) < {"note_id", "split"}:
            raise DataError(f"{path}: expected columns note_id, split")
        out = {}
        for row in reader:
            if row["split"] not in ("train", "validation", "test"):
                raise DataError(f"{path}:{reader.line_num}: unknown split {row['split']!r}")
            out[row["note_id"]] = row["split"]
    return out


def apply_manifest(docs: Sequence, manifest: dict[str, str]) -> CorpusSplit:
    parts: dict[str, list] = {"train": [], "validation": [], "test": []}
    for d in docs:
        if d.note_id not in manifest:
            raise DataError(f"note {d.note_id!r} missing from split manifest")
        parts[manifest[d.note_id]].append(d)
    return CorpusSplit(parts["train"], parts["validation"], parts["test"])
