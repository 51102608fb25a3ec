"""AMSGrad: Adam with a running maximum of the second-moment estimate."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from msc.neuralcore.tensor import Tensor


@dataclass
class OptimizerState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    bias_correction: bool = False
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    v_hat: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **hyper) -> "OptimizerState":
        st = cls(**hyper)
        st.m = [np.zeros_like(p) for p in params]
        st.v = [np.zeros_like(p) for p in params]
        st.v_hat = [np.zeros_like(p) for p in params]
        return st


def amsgrad_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray | None], state: OptimizerState) -> None:
    """Update ``params`` in place; a ``None`` gradient counts as zero.

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;  v_hat <- max(v_hat, v);
    theta <- theta - lr m / (sqrt(v_hat) + eps)

    With ``bias_correction`` the moments are divided by 1 - b^t first, as
    common framework implementations do; the plain form takes steps of up
    to several times ``lr`` while m and v warm up.
    """
    if len(state.m) != len(params):
        raise ValueError("optimizer state does not match parameter list")
    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    lr, root = state.lr, 1.0
    if state.bias_correction:
        lr = lr / (1.0 - b1 ** state.step_count)
        root = np.sqrt(1.0 - b2 ** state.step_count)
    for p, g, m, v, vh in zip(params, grads, state.m, state.v, state.v_hat):
        if g is None:
            g = np.zeros_like(p)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        np.maximum(vh, v, out=vh)
        p -= lr * m / (np.sqrt(vh) / root + state.eps)


class AMSGrad:
    def __init__(self, params: Sequence[Tensor], lr: float = 0.001, betas=(0.9, 0.999), eps: float = 1e-8,
                 bias_correction: bool = False):
        self.params = list(params)
        self.state = OptimizerState.for_params([p.data for p in self.params], lr=lr, beta1=betas[0],
                                               beta2=betas[1], eps=eps, bias_correction=bias_correction)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        amsgrad_step([p.data for p in self.params], [p.grad for p in self.params], self.state)
