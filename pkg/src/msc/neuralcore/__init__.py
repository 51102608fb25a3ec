"""Differentiable primitives: tensors, GRU, unfold, BCE, AMSGrad, gradient checks."""

from msc.neuralcore.gradcheck import check_gradients, numeric_grad, relative_error
from msc.neuralcore.gru import (
    GruParams,
    bidirectional_scan,
    gru_cell,
    gru_scan,
    unfold,
    unfold_tensor,
)
from msc.neuralcore.optim import AMSGrad, OptimizerState, amsgrad_step
from msc.neuralcore.tensor import (
    Tensor,
    affine,
    backward,
    bce_loss,
    concat,
    matmul,
    median_rows,
    reshape,
    sigmoid,
    take,
    tanh,
    tensor_sum,
)

__all__ = [
    "AMSGrad", "GruParams", "OptimizerState", "Tensor", "affine", "amsgrad_step", "backward",
    "bce_loss", "bidirectional_scan", "check_gradients", "concat", "gru_cell", "gru_scan",
    "matmul", "median_rows", "numeric_grad", "relative_error", "reshape", "sigmoid", "take",
    "tanh", "tensor_sum", "unfold", "unfold_tensor",
]
