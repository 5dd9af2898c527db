"""Minimal differentiable-network core."""

from flowvae.nn.functional import (
    activation_backward,
    activation_forward,
    as_tensor,
    conv1d_output_len,
    log_softmax,
    padding_rule,
    receptive_field,
    relu,
    shape_chain,
    sigmoid,
    softmax,
)
from flowvae.nn.gradcheck import GradCheckReport, LayerObjective, grad_check
from flowvae.nn.layers import BatchNorm, Conv1D, Dense, Layer, Reshape, Sequential, TransposedConv1D

__all__ = [
    "BatchNorm", "Conv1D", "Dense", "GradCheckReport", "Layer", "LayerObjective", "Reshape",
    "Sequential", "TransposedConv1D", "activation_backward", "activation_forward", "as_tensor",
    "conv1d_output_len", "grad_check", "log_softmax", "padding_rule", "receptive_field", "relu",
    "shape_chain", "sigmoid", "softmax",
]
