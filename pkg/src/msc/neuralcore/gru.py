"""GRU cell, fused sequence scan with backprop-through-time, and window unfold.

Gate layout along the last axis of ``W`` (D x 3H), ``U`` (H x 3H) and ``b``
(3H) is ``[update z | reset r | candidate]``::

    z  = sigmoid(x W_z + h U_z + b_z)
    r  = sigmoid(x W_r + h U_r + b_r)
    hc = tanh(x W_h + (r * h) U_h + b_h)
    h' = (1 - z) * h + z * hc
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from msc.neuralcore.tensor import Tensor, _check, _node, concat, reshape, sigmoid_np, take


@dataclass
class GruParams:
    W: Tensor
    U: Tensor
    b: Tensor

    @property
    def hidden(self) -> int:
        return self.U.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W.shape[0]

    def tensors(self) -> list[Tensor]:
        return [self.W, self.U, self.b]

    def validate(self) -> None:
        H = self.hidden
        if self.U.shape != (H, 3 * H) or self.W.shape[1] != 3 * H or self.b.shape != (3 * H,):
            raise ValueError(f"inconsistent GRU shapes W{self.W.shape} U{self.U.shape} b{self.b.shape}")

    @classmethod
    def init(cls, input_dim: int, hidden: int, rng: np.random.Generator) -> "GruParams":
        bound = 1.0 / np.sqrt(hidden)
        return cls(
            Tensor(rng.uniform(-bound, bound, (input_dim, 3 * hidden)), requires_grad=True),
            Tensor(rng.uniform(-bound, bound, (hidden, 3 * hidden)), requires_grad=True),
            Tensor(rng.uniform(-bound, bound, 3 * hidden), requires_grad=True),
        )


def _step(gx: np.ndarray, h: np.ndarray, U: np.ndarray):
    """One GRU update given the precomputed input projection ``gx = xW + b``."""
    H = h.shape[-1]
    ghzr = h @ U[:, : 2 * H]
    z = sigmoid_np(gx[..., :H] + ghzr[..., :H])
    r = sigmoid_np(gx[..., H:2 * H] + ghzr[..., H:])
    hc = np.tanh(gx[..., 2 * H:] + (r * h) @ U[:, 2 * H:])
    return (1.0 - z) * h + z * hc, z, r, hc


def gru_cell(x, h, p: GruParams) -> np.ndarray:
    """Single GRU step on plain arrays (no graph recorded)."""
    x, h = np.asarray(x, dtype=np.float64), np.asarray(h, dtype=np.float64)
    p.validate()
    if x.shape[-1] != p.input_dim or h.shape[-1] != p.hidden:
        raise ValueError(f"gru_cell: x{x.shape} h{h.shape} do not match W{p.W.shape} U{p.U.shape}")
    return _step(x @ p.W.data + p.b.data, h, p.U.data)[0]


def gru_scan(x: Tensor, p: GruParams) -> Tensor:
    """Run a GRU over ``x`` of shape (T, B, D) from zero state; returns (T, B, H).

    Recorded as a single graph node whose backward pass is hand-written BPTT.
    Sequences shorter than T in a batch must be left-aligned: steps past a
    sequence's end only feed later steps, never earlier ones.
    """
    p.validate()
    T, B, D = x.shape
    if T < 1:
        raise ValueError("gru_scan needs at least one step")
    if D != p.input_dim:
        raise ValueError(f"gru_scan: input dim {D} != {p.input_dim}")
    W, U, b = p.W.data, p.U.data, p.b.data
    H = p.hidden
    gx = x.data @ W + b
    hs = np.zeros((T + 1, B, H))
    zs = np.empty((T, B, H))
    rs = np.empty((T, B, H))
    hcs = np.empty((T, B, H))
    for t in range(T):
        hs[t + 1], zs[t], rs[t], hcs[t] = _step(gx[t], hs[t], U)

    def back(g):
        Uzr, Uh = U[:, : 2 * H], U[:, 2 * H:]
        dgx = np.empty((T, B, 3 * H))
        dU = np.zeros_like(U)
        dh = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            dh = dh + g[t]
            h, z, r, hc = hs[t], zs[t], rs[t], hcs[t]
            dpre_h = dh * z * (1.0 - hc * hc)
            dpre_z = dh * (hc - h) * z * (1.0 - z)
            drh = dpre_h @ Uh.T
            dpre_r = drh * h * r * (1.0 - r)
            dzr = np.concatenate([dpre_z, dpre_r], axis=-1)
            dU[:, : 2 * H] += h.T @ dzr
            dU[:, 2 * H:] += (r * h).T @ dpre_h
            dgx[t, :, : 2 * H] = dzr
            dgx[t, :, 2 * H:] = dpre_h
            dh = dh * (1.0 - z) + drh * r + dzr @ Uzr.T
        if x.requires_grad:
            x._accumulate(dgx @ W.T)
        if p.W.requires_grad:
            p.W._accumulate(x.data.reshape(-1, D).T @ dgx.reshape(-1, 3 * H))
        if p.U.requires_grad:
            p.U._accumulate(dU)
        if p.b.requires_grad:
            p.b._accumulate(dgx.reshape(-1, 3 * H).sum(axis=0))

    return _node(hs[1:].copy(), (x, p.W, p.U, p.b), back, "gru_scan")


def reverse_index(lengths, T: int) -> np.ndarray:
    """(T, B) flat row indices into a (T*B, D) view that reverse each sequence
    within its own length; steps past the end map to themselves."""
    lengths = np.asarray(lengths, dtype=np.int64)
    B = len(lengths)
    t = np.arange(T)[:, None]
    src = np.where(t < lengths[None, :], lengths[None, :] - 1 - t, t)
    return src * B + np.arange(B)[None, :]


def bidirectional_scan(x: Tensor, p_fwd: GruParams, p_bwd: GruParams, lengths=None) -> Tensor:
    """Concatenated forward and backward GRU states, shape (T, B, H_f + H_b).

    The backward direction of sequence b starts at its own last step
    ``lengths[b] - 1``. Both directions start from zero state.
    """
    T, B, D = x.shape
    if T < 1:
        raise ValueError("bidirectional_scan needs a nonempty sequence")
    lengths = np.full(B, T) if lengths is None else np.asarray(lengths, dtype=np.int64)
    fwd = gru_scan(x, p_fwd)
    idx = reverse_index(lengths, T)
    x_rev = take(reshape(x, (T * B, D)), idx)
    bwd_rev = gru_scan(x_rev, p_bwd)
    Hb = p_bwd.hidden
    bwd = take(reshape(bwd_rev, (T * B, Hb)), idx)
    return concat([fwd, bwd], axis=-1)


def unfold_index(lengths, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Gather indices (P, B, window) into a (T*B, D) view, and phrase counts.

    Phrase s of sequence b concatenates steps s..s+window-1. A sequence
    shorter than the window yields one phrase whose tail repeats its last
    step. Padding phrases (s >= count) point at row 0 and must be ignored.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    if np.any(lengths < 1):
        raise ValueError("sequences must be nonempty")
    B = len(lengths)
    counts = np.maximum(lengths - window + 1, 1)
    P = int(counts.max())
    s = np.arange(P)[:, None, None]
    k = np.arange(window)[None, None, :]
    n = lengths[None, :, None]
    pos = np.minimum(s + k, n - 1)
    flat = pos * B + np.arange(B)[None, :, None]
    valid = s < counts[None, :, None]
    return np.where(valid, flat, 0), counts


def unfold(seq, window: int):
    """Sliding windows over a (n, D) sequence: (n - window + 1, window * D).

    Plain arrays in, plain arrays out; ``unfold_tensor`` is the graph version.
    """
    seq = np.asarray(seq, dtype=np.float64)
    n, D = seq.shape
    if n < window:
        raise ValueError(f"sequence of length {n} is shorter than window {window}")
    idx = np.arange(n - window + 1)[:, None] + np.arange(window)[None, :]
    return _check(seq[idx].reshape(n - window + 1, window * D), "unfold")


def unfold_tensor(x: Tensor, lengths, window: int) -> tuple[Tensor, np.ndarray]:
    """Graph version of ``unfold`` over a left-aligned batch (T, B, D)."""
    T, B, D = x.shape
    idx, counts = unfold_index(lengths, window)
    P = idx.shape[0]
    windows = take(reshape(x, (T * B, D)), idx)
    return reshape(windows, (P, B, window * D)), counts
