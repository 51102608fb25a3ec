"""ICD-9 top-level category table, fine-to-coarse code roll-up, and
per-category reference vocabularies built from code descriptions.

Taxonomy file format (tab separated, UTF-8, ``#`` comments allowed)::

    code    level   short   long    parent

one record per tree node. ``level`` is 0 for the seventeen top-level
ranges (``code`` like ``390-459``) and a positive depth for everything
below. E/V supplementary codes may appear; they are recorded as excluded.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from msc import DataError

log = logging.getLogger(__name__)

N_CATEGORIES = 17

_RANGE_RE = re.compile(r"^(\d{3})-(\d{3})$")


@dataclass(frozen=True)
class Category:
    index: int
    code_range: tuple[int, int]
    title: str
    color: str

    @property
    def code(self) -> str:
        lo, hi = self.code_range
        return f"{lo:03d}-{hi:03d}"

    def contains(self, number: int) -> bool:
        return self.code_range[0] <= number <= self.code_range[1]


@dataclass
class Taxonomy:
    categories: list[Category]
    fine_to_coarse: dict[str, int] = field(default_factory=dict)
    descriptions: list[list[str]] = field(default_factory=list)
    excluded: set[str] = field(default_factory=set)

    def __post_init__(self):
        if not self.descriptions:
            self.descriptions = [[c.title] for c in self.categories]
        _validate_categories(self.categories)

    def __len__(self) -> int:
        return len(self.categories)

    def category_of(self, code: str) -> int | None:
        """Category index of a fine code, or None for E/V codes.

        Raises KeyError when the code cannot be placed in any range.
        """
        code = code.strip()
        if code in self.fine_to_coarse:
            return self.fine_to_coarse[code]
        if is_supplementary(code):
            return None
        number = code_number(code)
        if number is None:
            raise KeyError(code)
        for cat in self.categories:
            if cat.contains(number):
                return cat.index
        raise KeyError(code)

    @property
    def legend(self) -> list[tuple[int, str, str, str]]:
        return [(c.index, c.color, c.code, c.title) for c in self.categories]


def _validate_categories(categories: Sequence[Category]) -> None:
    if len(categories) != N_CATEGORIES:
        raise DataError(f"expected {N_CATEGORIES} categories, got {len(categories)}")
    if sorted(c.index for c in categories) != list(range(N_CATEGORIES)):
        raise DataError("category indices must be exactly 0..16")
    spans = sorted(c.code_range for c in categories)
    for (lo, hi), (nlo, _) in zip(spans, spans[1:]):
        if not lo <= hi < nlo:
            raise DataError(f"overlapping or unordered code ranges near {lo:03d}-{hi:03d}")


def is_supplementary(code: str) -> bool:
    return code[:1].upper() in ("E", "V")


def code_number(code: str) -> int | None:
    """Integer category number of a diagnosis code.

    ``"11.3" -> 11``, ``"401.9" -> 401``, ``"001-139" -> 1``. Dotless codes
    longer than three digits (``"4019"``, the MIMIC export form) use their
    first three digits.
    """
    code = code.strip()
    if not code:
        return None
    m = _RANGE_RE.match(code)
    if m:
        return int(m.group(1))
    head = code.split(".", 1)[0]
    if not head.isdigit():
        return None
    if "." not in code and len(head) > 3:
        head = head[:3]
    return int(head)


def default_categories() -> list[Category]:
    text = resources.files("msc.data").joinpath("categories.tsv").read_text("utf-8")
    cats = []
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        idx, rng, color, title = line.split("\t")
        lo, hi = rng.split("-")
        cats.append(Category(int(idx), (int(lo), int(hi)), title, color))
    return sorted(cats, key=lambda c: c.index)


def default_taxonomy() -> Taxonomy:
    """The seventeen categories with their titles as the only descriptions."""
    return Taxonomy(default_categories())


def load_taxonomy(tree_file: str | Path | None = None) -> Taxonomy:
    """Load a taxonomy tree file and roll its nodes up onto the 17 categories.

    Every node's short and long descriptions are accumulated onto the
    category whose range contains the node's code. With no file the
    embedded default table is returned.
    """
    if tree_file is None:
        return default_taxonomy()
    cats = default_categories()
    tax = Taxonomy(cats, descriptions=[[] for _ in cats])
    with open(tree_file, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header_seen = False
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        parts = raw.split("\t")
        if not header_seen and parts[0].strip().lower() == "code":
            header_seen = True
            continue
        if len(parts) != 5:
            raise DataError(f"{tree_file}:{lineno}: expected 5 tab-separated fields, got {len(parts)}")
        code, level, short, long_, _parent = (p.strip() for p in parts)
        if not code:
            raise DataError(f"{tree_file}:{lineno}: empty code")
        try:
            depth = int(level)
        except ValueError:
            raise DataError(f"{tree_file}:{lineno}: level must be an integer, got {level!r}") from None
        if depth < 0:
            raise DataError(f"{tree_file}:{lineno}: negative level")
        if is_supplementary(code):
            tax.excluded.add(code)
            continue
        try:
            idx = tax.category_of(code)
        except KeyError:
            raise DataError(f"{tree_file}:{lineno}: code {code!r} lies outside every category range") from None
        if depth == 0 and _RANGE_RE.match(code) and cats[idx].code != code:
            raise DataError(f"{tree_file}:{lineno}: top-level code {code!r} is not a known range")
        tax.fine_to_coarse[code] = idx
        tax.descriptions[idx].extend(d for d in (short, long_) if d)
    for cat in cats:
        if not tax.descriptions[cat.index]:
            tax.descriptions[cat.index] = [cat.title]
    return tax


def rollup_labels(fine_codes: Iterable[str], taxonomy: Taxonomy, policy: str = "strict") -> np.ndarray:
    """17-dim 0/1 vector with a one for every category hit by ``fine_codes``.

    ``policy`` governs codes that fit no category: ``"strict"`` raises
    DataError, ``"warn"`` logs and skips them. E/V codes are always skipped.
    """
    if policy not in ("strict", "warn"):
        raise ValueError(f"unknown policy {policy!r}")
    vec = np.zeros(len(taxonomy), dtype=np.int8)
    for code in fine_codes:
        code = code.strip()
        if not code:
            continue
        try:
            idx = taxonomy.category_of(code)
        except KeyError:
            if policy == "strict":
                raise DataError(f"unknown diagnosis code {code!r}") from None
            log.warning("skipping unknown diagnosis code %r", code)
            continue
        if idx is not None:
            vec[idx] = 1
    return vec


def category_vocabulary(taxonomy: Taxonomy, preprocessor: Callable[[str], list[str]]) -> list[set[str]]:
    """Per-category word sets from the accumulated descriptions."""
    vocab: list[set[str]] = []
    for descs in taxonomy.descriptions:
        words: set[str] = set()
        for d in descs:
            words.update(preprocessor(d))
        vocab.append(words)
    return vocab
