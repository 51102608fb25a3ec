"""The three-level model: word classification, phrase allocation, document label.

    tokens --embed--> biGRU --affine--> sigmoid            = C_w  (n, 17)
    C_w --unfold(5)--> biGRU --affine--> sigmoid           = C_p  (n-4, 17)
    C_p --per-class median-->                              = C_d  (17,)

Batches are left-aligned (T, B, ...) arrays. A sequence never sees steps
beyond its own length, so a batch computes exactly what each document would
compute alone.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from msc import DataError
from msc.neuralcore import (
    GruParams,
    Tensor,
    affine,
    bidirectional_scan,
    median_rows,
    sigmoid,
    take,
    unfold_tensor,
)

CHECKPOINT_MAGIC = b"MSCCKPT\x00"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int = 200
    word_hidden: int = 20
    phrase_hidden: int = 10
    n_classes: int = 17
    window: int = 5
    threshold: float = 0.5


class MscModel:
    PARAM_ORDER = (
        "embedding",
        "word_fwd.W", "word_fwd.U", "word_fwd.b",
        "word_bwd.W", "word_bwd.U", "word_bwd.b",
        "word_head.W", "word_head.b",
        "phrase_fwd.W", "phrase_fwd.U", "phrase_fwd.b",
        "phrase_bwd.W", "phrase_bwd.U", "phrase_bwd.b",
        "phrase_head.W", "phrase_head.b",
    )

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray], vocab_words: Sequence[str] | None = None):
        self.config = config
        self.vocab_words = list(vocab_words) if vocab_words is not None else None
        missing = set(self.PARAM_ORDER) - set(params)
        if missing:
            raise DataError(f"missing parameters: {sorted(missing)}")
        self.params = {k: Tensor(np.array(params[k], dtype=np.float64), requires_grad=True, name=k)
                       for k in self.PARAM_ORDER}
        self._check_shapes()

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0, embeddings: np.ndarray | None = None,
             vocab_words: Sequence[str] | None = None) -> "MscModel":
        rng = np.random.default_rng(seed)
        c = config
        params: dict[str, np.ndarray] = {}
        if embeddings is None:
            bound = 0.5 / c.embed_dim
            params["embedding"] = rng.uniform(-bound, bound, (c.vocab_size, c.embed_dim))
        else:
            params["embedding"] = np.array(embeddings, dtype=np.float64)
        for prefix, d_in, hid in (("word_fwd", c.embed_dim, c.word_hidden),
                                  ("word_bwd", c.embed_dim, c.word_hidden),
                                  ("phrase_fwd", c.window * c.n_classes, c.phrase_hidden),
                                  ("phrase_bwd", c.window * c.n_classes, c.phrase_hidden)):
            g = GruParams.init(d_in, hid, rng)
            params[f"{prefix}.W"], params[f"{prefix}.U"], params[f"{prefix}.b"] = g.W.data, g.U.data, g.b.data
        for prefix, d_in in (("word_head", 2 * c.word_hidden), ("phrase_head", 2 * c.phrase_hidden)):
            bound = 1.0 / np.sqrt(d_in)
            params[f"{prefix}.W"] = rng.uniform(-bound, bound, (d_in, c.n_classes))
            params[f"{prefix}.b"] = rng.uniform(-bound, bound, c.n_classes)
        return cls(config, params, vocab_words)

    def _check_shapes(self) -> None:
        c, p = self.config, self.params
        expect = {
            "embedding": (c.vocab_size, c.embed_dim),
            "word_head.W": (2 * c.word_hidden, c.n_classes), "word_head.b": (c.n_classes,),
            "phrase_head.W": (2 * c.phrase_hidden, c.n_classes), "phrase_head.b": (c.n_classes,),
        }
        for d in ("fwd", "bwd"):
            expect[f"word_{d}.W"] = (c.embed_dim, 3 * c.word_hidden)
            expect[f"word_{d}.U"] = (c.word_hidden, 3 * c.word_hidden)
            expect[f"word_{d}.b"] = (3 * c.word_hidden,)
            expect[f"phrase_{d}.W"] = (c.window * c.n_classes, 3 * c.phrase_hidden)
            expect[f"phrase_{d}.U"] = (c.phrase_hidden, 3 * c.phrase_hidden)
            expect[f"phrase_{d}.b"] = (3 * c.phrase_hidden,)
        for k, shape in expect.items():
            if p[k].shape != shape:
                raise DataError(f"parameter {k} has shape {p[k].shape}, expected {shape}")
        if self.vocab_words is not None and len(self.vocab_words) != c.vocab_size:
            raise DataError("vocabulary length does not match the embedding table")

    def gru(self, prefix: str) -> GruParams:
        return GruParams(self.params[f"{prefix}.W"], self.params[f"{prefix}.U"], self.params[f"{prefix}.b"])

    def parameters(self) -> list[Tensor]:
        return [self.params[k] for k in self.PARAM_ORDER]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def state(self) -> dict[str, np.ndarray]:
        return {k: self.params[k].data.copy() for k in self.PARAM_ORDER}

    def copy(self) -> "MscModel":
        return MscModel(self.config, self.state(), self.vocab_words)


# --- batched graph ----------------------------------------------------------

@dataclass
class BatchOutput:
    C_w: Tensor  # (T, B, C)
    C_p: Tensor  # (P, B, C)
    C_d: Tensor  # (B, C)
    lengths: np.ndarray
    phrase_counts: np.ndarray

    def word_probs(self, b: int) -> np.ndarray:
        return self.C_w.data[: self.lengths[b], b, :]

    def phrase_probs(self, b: int) -> np.ndarray:
        return self.C_p.data[: self.phrase_counts[b], b, :]


def pack(token_lists: Sequence[Sequence[int]], vocab_size: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Left-aligned (T, B) index array and lengths; slots past a length hold 0."""
    lengths = np.array([len(t) for t in token_lists], dtype=np.int64)
    if len(lengths) == 0 or np.any(lengths < 1):
        raise DataError("every document needs at least one token")
    T, B = int(lengths.max()), len(lengths)
    idx = np.zeros((T, B), dtype=np.int64)
    for b, toks in enumerate(token_lists):
        idx[: lengths[b], b] = toks
    if vocab_size is not None and (idx.min() < 0 or idx.max() >= vocab_size):
        raise DataError("token index outside the vocabulary")
    return idx, lengths


def word_stage(model: MscModel, idx: np.ndarray, lengths: np.ndarray) -> Tensor:
    emb = take(model.params["embedding"], idx)
    states = bidirectional_scan(emb, model.gru("word_fwd"), model.gru("word_bwd"), lengths)
    return sigmoid(affine(states, model.params["word_head.W"], model.params["word_head.b"]))


def phrase_stage(model: MscModel, C_w: Tensor, lengths: np.ndarray) -> tuple[Tensor, np.ndarray]:
    windows, counts = unfold_tensor(C_w, lengths, model.config.window)
    states = bidirectional_scan(windows, model.gru("phrase_fwd"), model.gru("phrase_bwd"), counts)
    return sigmoid(affine(states, model.params["phrase_head.W"], model.params["phrase_head.b"])), counts


def forward_batch(model: MscModel, token_lists: Sequence[Sequence[int]]) -> BatchOutput:
    idx, lengths = pack(token_lists, model.config.vocab_size)
    C_w = word_stage(model, idx, lengths)
    C_p, counts = phrase_stage(model, C_w, lengths)
    C_d = median_rows(C_p, counts)
    return BatchOutput(C_w, C_p, C_d, lengths, counts)


# --- single-document operations ---------------------------------------------

def word_forward(tokens: Sequence[int], model: MscModel) -> np.ndarray:
    """C_w for one document, shape (n, 17)."""
    idx, lengths = pack([tokens], model.config.vocab_size)
    return word_stage(model, idx, lengths).data[:, 0, :].copy()


def phrase_forward(C_w, model: MscModel) -> np.ndarray:
    """C_p from a document's word classifications; (max(n - W + 1, 1), 17)."""
    C_w = np.asarray(C_w, dtype=np.float64)
    if C_w.ndim != 2 or C_w.shape[1] != model.config.n_classes or len(C_w) < 1:
        raise DataError(f"C_w must be (n>=1, {model.config.n_classes}), got {C_w.shape}")
    C_p, _ = phrase_stage(model, Tensor(C_w[:, None, :]), np.array([len(C_w)]))
    return C_p.data[:, 0, :].copy()


def document_forward(C_p) -> np.ndarray:
    """Per-class median over phrase rows (mean of the middle pair for even counts)."""
    C_p = np.asarray(C_p, dtype=np.float64)
    if C_p.ndim != 2 or len(C_p) == 0:
        raise DataError("document_forward needs at least one phrase row")
    return median_rows(Tensor(C_p[:, None, :]), [len(C_p)]).data[0].copy()


def full_forward(tokens: Sequence[int], model: MscModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    out = forward_batch(model, [tokens])
    return out.word_probs(0).copy(), out.phrase_probs(0).copy(), out.C_d.data[0].copy()


def predict_labels(C_d, threshold: float = 0.5) -> np.ndarray:
    return (np.asarray(C_d) >= threshold).astype(np.int8)


# --- checkpoints --------------------------------------------------------------

def vocab_digest(words: Sequence[str] | None) -> str | None:
    if words is None:
        return None
    return hashlib.sha256("\n".join(words).encode("utf-8")).hexdigest()


def save_checkpoint(model: MscModel, path: str | Path, extra: dict | None = None) -> None:
    """Write magic, version, a JSON header and raw little-endian float64 tensors.

    The byte stream depends only on the model contents, so equal models give
    equal files.
    """
    header = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "vocab_sha256": vocab_digest(model.vocab_words),
        "vocab": model.vocab_words,
        "tensors": [[k, list(model.params[k].shape)] for k in MscModel.PARAM_ORDER],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for k in MscModel.PARAM_ORDER:
            fh.write(np.ascontiguousarray(model.params[k].data, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[MscModel, dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(CHECKPOINT_MAGIC):
        raise DataError(f"{path}: not a model checkpoint")
    off = len(CHECKPOINT_MAGIC)
    version, hlen = struct.unpack_from("<IQ", raw, off)
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    off += struct.calcsize("<IQ")
    header = json.loads(raw[off: off + hlen].decode("utf-8"))
    off += hlen
    params = {}
    for name, shape in header["tensors"]:
        count = int(np.prod(shape))
        params[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape).astype(np.float64)
        off += 8 * count
    if off != len(raw):
        raise DataError(f"{path}: trailing bytes after tensors")
    vocab = header.get("vocab")
    if vocab is not None and vocab_digest(vocab) != header.get("vocab_sha256"):
        raise DataError(f"{path}: vocabulary hash mismatch")
    model = MscModel(ModelConfig(**header["config"]), params, vocab)
    return model, header.get("extra", {})
