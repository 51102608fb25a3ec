"""Word tags from overlapping phrase allocations, maximal segments, lexicons
and rendering of colored notes."""

from __future__ import annotations

import csv
import html
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from msc import DataError

NO_TAG = -1

COVERING_MODES = ("containing", "strict5", "literal")
VOTE_MODES = ("block", "abstain")


def covering_phrases(t: int, n: int, window: int = 5, mode: str = "containing") -> range:
    """Indices of the phrases that vote on token ``t`` of an ``n``-token note.

    Phrase s spans tokens s..s+window-1 and there are n-window+1 of them.
    ``containing``: every phrase whose window holds t (fewer at the edges).
    ``strict5``: the same set, but empty unless it has all ``window`` members.
    ``literal``: phrases t..t+window-1, clipped to the existing rows.
    """
    count = max(n - window + 1, 1)
    if n < window:
        return range(0, 1)
    if mode == "containing" or mode == "strict5":
        lo, hi = max(0, t - window + 1), min(t, count - 1)
        if mode == "strict5" and hi - lo + 1 < window:
            return range(0)
        return range(lo, hi + 1)
    if mode == "literal":
        return range(min(t, count), min(t + window, count))
    raise ValueError(f"unknown covering mode {mode!r}")


def phrase_votes(C_p, threshold: float = 0.5) -> np.ndarray:
    """argmax class of each phrase row, or NO_TAG where its maximum is below threshold."""
    C_p = np.asarray(C_p, dtype=np.float64)
    best = C_p.argmax(axis=1)
    return np.where(C_p.max(axis=1) >= threshold, best, NO_TAG)


def tag_words(C_p, n: int, window: int = 5, threshold: float = 0.5,
              covering: str = "containing", vote: str = "block") -> np.ndarray:
    """R(t) for every token: the shared top class of all covering phrases, else NO_TAG.

    With ``vote="block"`` a sub-threshold phrase spoils agreement; with
    ``vote="abstain"`` it is skipped and the remaining confident phrases
    must agree.
    """
    C_p = np.asarray(C_p, dtype=np.float64)
    expected = max(n - window + 1, 1)
    if C_p.ndim != 2 or len(C_p) != expected:
        raise DataError(f"expected {expected} phrase rows for n={n}, got {C_p.shape[0] if C_p.ndim else 0}")
    if vote not in VOTE_MODES:
        raise ValueError(f"unknown vote mode {vote!r}")
    votes = phrase_votes(C_p, threshold)
    tags = np.full(n, NO_TAG, dtype=np.int64)
    for t in range(n):
        v = votes[list(covering_phrases(t, n, window, covering))]
        if vote == "abstain":
            v = v[v != NO_TAG]
        if len(v) and v[0] != NO_TAG and np.all(v == v[0]):
            tags[t] = v[0]
    return tags


@dataclass(frozen=True)
class Segment:
    start: int
    end: int  # inclusive
    category: int

    def __len__(self) -> int:
        return self.end - self.start + 1


def segment(tags: Sequence[int]) -> list[Segment]:
    """Maximal runs of equal tags, NO_TAG runs dropped."""
    out: list[Segment] = []
    tags = [int(t) for t in tags]
    start = 0
    for i in range(1, len(tags) + 1):
        if i == len(tags) or tags[i] != tags[start]:
            if tags[start] != NO_TAG:
                out.append(Segment(start, i - 1, tags[start]))
            start = i
    return out


def flatten(segments: Iterable[Segment], n: int) -> np.ndarray:
    tags = np.full(n, NO_TAG, dtype=np.int64)
    for s in segments:
        tags[s.start: s.end + 1] = s.category
    return tags


class TagLexicon:
    """Per-category word counts compiled from word tags."""

    def __init__(self, n_categories: int = 17):
        self.counts: list[Counter] = [Counter() for _ in range(n_categories)]

    def add(self, words: Sequence[str], tags: Sequence[int]) -> None:
        if len(words) != len(tags):
            raise DataError("words and tags differ in length")
        for w, t in zip(words, tags):
            if t != NO_TAG:
                self.counts[int(t)][w] += 1

    def words(self, category: int) -> set[str]:
        return set(self.counts[category])

    def top(self, category: int, k: int = 50) -> list[tuple[str, int]]:
        # count desc, then word, so ties are deterministic
        return sorted(self.counts[category].items(), key=lambda kv: (-kv[1], kv[0]))[:k]

    def __len__(self) -> int:
        return len(self.counts)


def build_lexicon(documents: Iterable[Sequence[str]], tag_sequences: Iterable[Sequence[int]],
                  n_categories: int = 17) -> TagLexicon:
    lex = TagLexicon(n_categories)
    for words, tags in zip(documents, tag_sequences):
        lex.add(words, tags)
    return lex


def score_lexicon(lexicon: TagLexicon, reference: Sequence[set[str]]) -> list[tuple[int, int, int]]:
    """(lexicon size, reference size, intersection size) per category."""
    if len(reference) != len(lexicon):
        raise DataError("lexicon and reference cover different category counts")
    out = []
    for i, ref in enumerate(reference):
        words = lexicon.words(i)
        out.append((len(words), len(ref), len(words & set(ref))))
    return out


def write_lexicon_csv(lexicon: TagLexicon, path: str | Path, reference: Sequence[set[str]] | None = None,
                      top_k: int = 50) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("category", "word", "count", "in_reference"))
        for i in range(len(lexicon)):
            for word, n in lexicon.top(i, top_k):
                flag = "" if reference is None else int(word in reference[i])
                w.writerow((i, word, n, flag))


def write_intersection_csv(scores: Sequence[tuple[int, int, int]], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("index", "reference_vocabulary", "tagged_words", "intersection"))
        for i, (lex, ref, inter) in enumerate(scores):
            w.writerow((i, ref, lex, inter))


# --- rendering ----------------------------------------------------------------

# xterm-256 foreground codes, one per category index
ANSI_CODES = (196, 34, 27, 208, 129, 45, 201, 154, 218, 30, 183, 130, 228, 88, 121, 100, 223)
ANSI_RESET = "\x1b[0m"


def _validate(segments: Sequence[Segment], n: int, n_categories: int) -> None:
    last = -1
    for s in segments:
        if not 0 <= s.category < n_categories:
            raise DataError(f"unknown category index {s.category}")
        if s.start <= last or s.end < s.start or s.end >= n:
            raise DataError(f"segment {s} invalid for {n} tokens")
        last = s.end


def render(tokens: Sequence[str], segments: Sequence[Segment], legend: Sequence[tuple[int, str, str, str]],
           fmt: str = "html", title: str = "Colored note") -> str:
    """Text with each segment colored by category.

    ``legend`` rows are (index, color, code, title). HTML output is a
    standalone XHTML-compatible page; ANSI output is the space-joined tokens
    with one escape sequence pair around each segment.
    """
    tokens = list(tokens)
    _validate(segments, len(tokens), len(legend))
    if fmt == "ansi":
        return _render_ansi(tokens, segments)
    if fmt == "html":
        return _render_html(tokens, segments, legend, title)
    raise ValueError(f"unknown format {fmt!r}")


def _render_ansi(tokens, segments) -> str:
    starts = {s.start: s for s in segments}
    ends = {s.end for s in segments}
    parts = []
    for i, tok in enumerate(tokens):
        piece = tok
        if i in starts:
            piece = f"\x1b[38;5;{ANSI_CODES[starts[i].category]}m" + piece
        if i in ends:
            piece = piece + ANSI_RESET
        parts.append(piece)
    return " ".join(parts)


def _render_html(tokens, segments, legend, title) -> str:
    esc = html.escape
    css = ["body{font-family:sans-serif;line-height:1.6;max-width:60em;margin:2em auto}",
           ".legend span{display:inline-block;margin:0.1em 0.4em;padding:0 0.3em}",
           ".note span{padding:0 0.1em;border-radius:0.2em}"]
    css += [f".cat-{i}{{background:{color}}}" for i, color, _, _ in legend]
    lines = ['<!DOCTYPE html>', '<html xmlns="http://www.w3.org/1999/xhtml">', "<head>",
             '<meta charset="utf-8"/>', f"<title>{esc(title)}</title>",
             "<style>", *css, "</style>", "</head>", "<body>", '<div class="legend">']
    for i, _, code, name in legend:
        lines.append(f'<span class="cat-{i}" title="{esc(name)}">{i}: {esc(code)}</span>')
    lines.append("</div>")
    body = []
    pos = 0
    for s in segments:
        if pos < s.start:
            body.append(esc(" ".join(tokens[pos:s.start])))
        words = esc(" ".join(tokens[s.start:s.end + 1]))
        body.append(f'<span class="cat-{s.category}">{words}</span>')
        pos = s.end + 1
    if pos < len(tokens):
        body.append(esc(" ".join(tokens[pos:])))
    lines.append(f'<p class="note">{" ".join(body)}</p>')
    lines += ["</body>", "</html>"]
    return "\n".join(lines) + "\n"
