"""Micro-averaged document metrics and token-level tagging scores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def _prf(tp: int, fp: int, fn: int) -> PRF:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return PRF(p, r, f, tp, fp, fn)


def micro_prf(predicted, actual) -> PRF:
    """Pool every (document, class) decision, then compute P, R and F1."""
    pred = np.asarray(predicted).astype(bool)
    true = np.asarray(actual).astype(bool)
    if pred.shape != true.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {true.shape}")
    if pred.size == 0:
        raise ValueError("no decisions to score")
    tp = int(np.sum(pred & true))
    fp = int(np.sum(pred & ~true))
    fn = int(np.sum(~pred & true))
    return _prf(tp, fp, fn)


def tagging_scores(tag_seqs: Iterable[Sequence[int]], truth_seqs: Iterable[Sequence[int]],
                   no_tag: int = -1) -> PRF:
    """Token-level agreement of predicted tags with planted categories.

    A tagged token counts as correct when its tag equals the planted
    category; precision is over tagged tokens, recall over planted tokens.
    """
    tp = fp = fn = 0
    for tags, truth in zip(tag_seqs, truth_seqs):
        tags, truth = np.asarray(tags), np.asarray(truth)
        if tags.shape != truth.shape:
            raise ValueError("tag and truth sequences differ in length")
        tagged = tags != no_tag
        planted = truth != no_tag
        hit = tagged & (tags == truth)
        tp += int(hit.sum())
        fp += int((tagged & ~hit).sum())
        fn += int((planted & ~hit).sum())
    return _prf(tp, fp, fn)
