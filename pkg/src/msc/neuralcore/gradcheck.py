"""Central finite-difference checks for analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from msc.neuralcore.tensor import Tensor, backward


def numeric_grad(f: Callable[[], float], param: Tensor, step: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar ``f()`` with respect to every entry of ``param``."""
    out = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    g = out.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        up = f()
        flat[i] = keep - step
        down = f()
        flat[i] = keep
        g[i] = (up - down) / (2.0 * step)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise."""
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def check_gradients(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5,
                    floor: float = 1e-6) -> dict[str, float]:
    """Worst relative error per parameter between backprop and central differences.

    ``loss_fn`` must rebuild the graph from the current parameter values on
    every call.
    """
    for p in params:
        p.grad = None
    backward(loss_fn())
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = {}
    for k, (p, a) in enumerate(zip(params, analytic)):
        n = numeric_grad(lambda: float(loss_fn().data), p, step)
        worst[p.name or f"param{k}"] = float(relative_error(a, n, floor).max())
    return worst
