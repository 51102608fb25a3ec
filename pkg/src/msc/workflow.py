"""Glue shared by the CLI and the end-to-end tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from msc.colorer import TagLexicon, build_lexicon, segment, tag_words
from msc.corpus import Document, RawNote, Vocabulary, build_vocabulary, preprocess
from msc.pipeline import MscModel, forward_batch
from msc.taxonomy import Taxonomy, rollup_labels


@dataclass
class PreparedCorpus:
    vocab: Vocabulary
    documents: list[Document]
    words: dict[str, list[str]]  # note_id -> preprocessed words


def prepare(notes: Sequence[RawNote], taxonomy: Taxonomy, vocab: Vocabulary | None = None,
            policy: str = "strict") -> PreparedCorpus:
    """Preprocess, build (or reuse) the vocabulary, and encode every note.

    Notes that preprocess to nothing are dropped; a model needs a token.
    """
    words = {n.note_id: preprocess(n.body) for n in notes}
    if vocab is None:
        vocab = build_vocabulary(words.values())
    docs = []
    for n in notes:
        toks = words[n.note_id]
        if not toks:
            continue
        docs.append(Document(n.note_id, vocab.encode(toks), rollup_labels(n.fine_codes, taxonomy, policy)))
    return PreparedCorpus(vocab, docs, words)


@dataclass
class TaggedDocument:
    note_id: str
    C_p: np.ndarray
    C_d: np.ndarray
    tags: np.ndarray


def tag_documents(model: MscModel, docs: Sequence[Document], batch_size: int = 64,
                  covering: str = "containing", vote: str = "block") -> list[TaggedDocument]:
    out = []
    W, thr = model.config.window, model.config.threshold
    for lo in range(0, len(docs), batch_size):
        chunk = docs[lo: lo + batch_size]
        res = forward_batch(model, [d.tokens for d in chunk])
        for b, d in enumerate(chunk):
            C_p = res.phrase_probs(b).copy()
            tags = tag_words(C_p, len(d), W, thr, covering, vote)
            out.append(TaggedDocument(d.note_id, C_p, res.C_d.data[b].copy(), tags))
    return out


def lexicon_from(tagged: Sequence[TaggedDocument], words: dict[str, list[str]],
                 n_categories: int = 17) -> TagLexicon:
    return build_lexicon((words[t.note_id] for t in tagged), (t.tags for t in tagged), n_categories)


def segments_of(tagged: TaggedDocument):
    return segment(tagged.tags)
