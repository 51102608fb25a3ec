import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msc import NumericalError
from msc.neuralcore import (
    AMSGrad,
    GruParams,
    OptimizerState,
    Tensor,
    affine,
    amsgrad_step,
    backward,
    bce_loss,
    bidirectional_scan,
    check_gradients,
    concat,
    gru_cell,
    gru_scan,
    median_rows,
    sigmoid,
    take,
    tanh,
    tensor_sum,
    unfold,
    unfold_tensor,
)
from msc.neuralcore.gru import reverse_index
from oracles import bce_scalar, bidir_scalar, gru_cell_scalar, median_scalar, unfold_scalar


def _gru(D, H, seed):
    return GruParams.init(D, H, np.random.default_rng(seed))


def _lists(p):
    return p.W.data.tolist(), p.U.data.tolist(), p.b.data.tolist()


# --- GRU ---------------------------------------------------------------------

def test_gru_zero_params_keep_state():
    p = GruParams(Tensor(np.zeros((3, 6))), Tensor(np.zeros((2, 6))), Tensor(np.zeros(6)))
    h = np.array([0.3, -0.7])
    # z = 1/2, candidate = 0, so the state halves
    assert np.allclose(gru_cell(np.ones(3), h, p), 0.5 * h)


def test_gru_cell_matches_scalar_loop():
    rng = np.random.default_rng(0)
    p = _gru(5, 4, 1)
    for _ in range(20):
        x, h = rng.normal(size=5), rng.normal(size=4)
        assert np.allclose(gru_cell(x, h, p), gru_cell_scalar(x.tolist(), h.tolist(), *_lists(p)), atol=1e-14)


def test_gru_cell_shape_errors():
    p = _gru(5, 4, 1)
    with pytest.raises(ValueError):
        gru_cell(np.ones(4), np.zeros(4), p)
    with pytest.raises(ValueError):
        gru_cell(np.ones(5), np.zeros(3), p)


def test_init_bounds():
    p = _gru(7, 9, 0)
    for t in p.tensors():
        assert np.all(np.abs(t.data) <= 1 / 3)


@given(st.lists(st.integers(1, 9), min_size=1, max_size=4), st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_bidirectional_batch_matches_per_sequence_scalar(lengths, seed):
    rng = np.random.default_rng(seed)
    D, pf, pb = 3, _gru(3, 2, seed), _gru(3, 3, seed + 1)
    T, B = max(lengths), len(lengths)
    x = rng.normal(size=(T, B, D))
    for b, n in enumerate(lengths):
        x[n:, b] = 99.0  # junk past the end must not leak in
    out = bidirectional_scan(Tensor(x), pf, pb, lengths).data
    for b, n in enumerate(lengths):
        ref = bidir_scalar(x[:n, b].tolist(), _lists(pf), _lists(pb))
        assert np.allclose(out[:n, b], ref, atol=1e-13)


def test_reverse_index_flips_within_length():
    idx = reverse_index([3, 1], T=3)
    assert idx[:, 0].tolist() == [4, 2, 0]
    assert idx[:, 1].tolist() == [1, 3, 5]


# --- unfold ------------------------------------------------------------------

def test_unfold_shapes_and_values():
    seq = np.arange(14.0).reshape(7, 2)
    out = unfold(seq, 5)
    assert out.shape == (3, 10)
    assert np.array_equal(out, np.array(unfold_scalar(seq.tolist(), 5)))


def test_unfold_short_sequence_rejected():
    with pytest.raises(ValueError):
        unfold(np.zeros((4, 17)), 5)


@given(st.integers(5, 30), st.integers(1, 4))
@settings(max_examples=40, deadline=None)
def test_unfold_reconstructs_each_row(n, D):
    seq = np.random.default_rng(n).normal(size=(n, D))
    win = unfold(seq, 5)
    for t in range(n):
        for s in range(max(0, t - 4), min(t, n - 5) + 1):
            k = t - s
            assert np.array_equal(win[s, k * D:(k + 1) * D], seq[t])


def test_unfold_tensor_short_policy_repeats_last_row():
    x = np.arange(6.0).reshape(3, 1, 2)
    w, counts = unfold_tensor(Tensor(x), [3], 5)
    assert counts.tolist() == [1]
    assert w.data[0, 0].tolist() == [0, 1, 2, 3, 4, 5, 4, 5, 4, 5]


# --- loss, median, ops -------------------------------------------------------

def test_bce_values():
    assert float(bce_loss(np.full(4, 0.5), np.array([0, 1, 0, 1])).data) == pytest.approx(np.log(2))
    assert float(bce_loss(np.array([1.0, 0.0]), np.array([1, 0])).data) == pytest.approx(0.0, abs=1e-11)
    x, y = np.array([0.2, 0.9, 0.6]), np.array([0, 1, 1])
    w = np.array([1.0, 2.0, 0.5])
    assert float(bce_loss(x, y, w).data) == pytest.approx(bce_scalar(x, y, w))


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20), st.integers(0, 10))
@settings(max_examples=100, deadline=None)
def test_bce_non_negative(xs, seed):
    y = np.random.default_rng(seed).integers(0, 2, len(xs))
    assert float(bce_loss(np.array(xs), y).data) >= 0.0


def test_sigmoid_gradient_at_zero():
    w = Tensor(np.zeros(1), requires_grad=True)
    backward(tensor_sum(sigmoid(w)))
    assert w.grad[0] == pytest.approx(0.25)


def test_median_rows_matches_sort_oracle():
    rng = np.random.default_rng(0)
    x = rng.random((9, 3, 4))
    counts = [9, 4, 1]
    out = median_rows(Tensor(x), counts).data
    for b, k in enumerate(counts):
        for c in range(4):
            assert out[b, c] == median_scalar(x[:k, b, c].tolist())


def test_nonfinite_trips_error():
    with pytest.raises(NumericalError):
        tanh(Tensor(np.array([np.nan]), requires_grad=True))


def test_backward_needs_graph():
    with pytest.raises(RuntimeError):
        backward(Tensor(np.array(1.0)))


def _primitive_cases():
    rng = np.random.default_rng(4)
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True, name="a")
    w = Tensor(rng.normal(size=(4, 2)), requires_grad=True, name="w")
    b = Tensor(rng.normal(size=2), requires_grad=True, name="b")
    tab = Tensor(rng.normal(size=(5, 3)), requires_grad=True, name="tab")
    y = rng.integers(0, 2, (3, 2))
    idx = np.array([[0, 4], [4, 2]])
    seq = Tensor(rng.normal(size=(6, 2, 3)), requires_grad=True, name="seq")
    g = _gru(3, 2, 0)
    for t, n in zip(g.tensors(), "WUb"):
        t.name = n
    return [
        ("affine+bce", lambda: bce_loss(sigmoid(affine(a, w, b)), y), [a, w, b]),
        ("tanh*a", lambda: tensor_sum(tanh(a) * a - a), [a]),
        ("take", lambda: tensor_sum(tanh(take(tab, idx))), [tab]),
        ("concat", lambda: tensor_sum(tanh(concat([a, a @ w], axis=1))), [a, w]),
        ("median", lambda: tensor_sum(median_rows(sigmoid(seq), [6, 3])), [seq]),
        ("gru_scan", lambda: tensor_sum(tanh(gru_scan(seq, g))), [seq, *g.tensors()]),
        ("bidir", lambda: tensor_sum(bidirectional_scan(seq, g, g, [6, 2])), [seq, *g.tensors()]),
        ("unfold", lambda: tensor_sum(tanh(unfold_tensor(seq, [6, 3], 5)[0])), [seq]),
    ]


@pytest.mark.parametrize("name,loss_fn,params", _primitive_cases(), ids=[c[0] for c in _primitive_cases()])
def test_primitive_gradients(name, loss_fn, params):
    worst = check_gradients(loss_fn, params)
    assert max(worst.values()) < 1e-4, worst


# --- AMSGrad -----------------------------------------------------------------

def test_zero_gradient_leaves_params():
    p = [np.array([1.0, -2.0])]
    st_ = OptimizerState.for_params(p)
    for _ in range(10):
        amsgrad_step(p, [np.zeros(2)], st_)
    assert p[0].tolist() == [1.0, -2.0]


def test_first_step_by_hand():
    p = [np.array([0.0])]
    st_ = OptimizerState.for_params(p, lr=0.1)
    amsgrad_step(p, [np.array([2.0])], st_)
    # m = 0.2, v_hat = 0.004
    assert p[0][0] == pytest.approx(-0.1 * 0.2 / (np.sqrt(0.004) + 1e-8))


def test_bias_corrected_first_step_is_lr():
    p = [np.array([0.0])]
    st_ = OptimizerState.for_params(p, lr=0.1, bias_correction=True)
    amsgrad_step(p, [np.array([2.0])], st_)
    assert p[0][0] == pytest.approx(-0.1, rel=1e-6)


def test_vhat_non_decreasing_on_random_stream():
    rng = np.random.default_rng(0)
    p = [np.zeros(5)]
    st_ = OptimizerState.for_params(p)
    prev = st_.v_hat[0].copy()
    for _ in range(2000):
        amsgrad_step(p, [rng.normal(size=5) * rng.exponential()], st_)
        assert np.all(st_.v_hat[0] >= prev)
        prev = st_.v_hat[0].copy()


def test_amsgrad_wrapper_moves_towards_minimum():
    th = Tensor(np.array([0.0]), requires_grad=True)
    opt = AMSGrad([th], lr=0.01)
    for _ in range(300):
        opt.zero_grad()
        d = th - np.array([3.0])
        backward(tensor_sum(d * d))
        opt.step()
    assert abs(th.data[0] - 3.0) < 1.0
