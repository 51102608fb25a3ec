import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from msc.corpus import Document  # noqa: E402
from msc.pipeline import ModelConfig, MscModel  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures():
    return FIXTURES


@pytest.fixture
def tiny_model():
    cfg = ModelConfig(vocab_size=50, embed_dim=8, word_hidden=4, phrase_hidden=3)
    return MscModel.init(cfg, seed=3)


def make_docs(label_rows, seed=0, vocab=50, n=(6, 14)):
    rng = np.random.default_rng(seed)
    docs = []
    for j, row in enumerate(label_rows):
        toks = rng.integers(1, vocab, size=int(rng.integers(*n)))
        docs.append(Document(f"d{j:03d}", toks, np.asarray(row, dtype=np.int8)))
    return docs
