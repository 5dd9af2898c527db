"""Stateless helpers: activations, convolution geometry, receptive fields."""

from __future__ import annotations

import numpy as np

from flowvae.errors import DimensionError

ACTIVATIONS = ("relu", "linear", "softmax", "sigmoid")
PADDINGS = ("half", "valid")


def check_finite(x: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{what} contains NaN or Inf")
    return x


def as_tensor(x, checked: bool = True) -> np.ndarray:
    """Coerce to a C-contiguous float64 array, rejecting non-finite values."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if checked:
        check_finite(arr)
    return arr


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(x):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def activation_forward(x, kind: str) -> np.ndarray:
    if kind == "relu":
        return relu(x)
    if kind == "linear":
        return np.asarray(x, dtype=np.float64)
    if kind == "softmax":
        return softmax(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_backward(grad_out, pre, out, kind: str) -> np.ndarray:
    """Gradient w.r.t. the pre-activation given the output gradient."""
    if kind == "relu":
        return grad_out * (pre > 0)
    if kind == "linear":
        return grad_out
    if kind == "sigmoid":
        return grad_out * out * (1.0 - out)
    if kind == "softmax":
        inner = np.sum(grad_out * out, axis=-1, keepdims=True)
        return out * (grad_out - inner)
    raise ValueError(f"unknown activation {kind!r}")


def conv1d_output_len(in_len: int, k: int, stride: int, padding: str) -> int:
    """Output length of a 1-D convolution.

    ``half`` padding gives ``ceil(in_len / stride)``; ``valid`` gives
    ``floor((in_len - k) / stride) + 1``.
    """
    if in_len < 1 or k < 1 or stride < 1:
        raise DimensionError(f"bad conv geometry in_len={in_len} k={k} stride={stride}")
    if padding == "half":
        return -(-in_len // stride)
    if padding == "valid":
        if in_len < k:
            raise DimensionError(f"valid convolution needs in_len >= k, got {in_len} < {k}")
        return (in_len - k) // stride + 1
    raise ValueError(f"unknown padding {padding!r}")


def half_padding(in_len: int, k: int, stride: int) -> tuple[int, int]:
    """(left, right) zero padding that makes a strided window reach ceil(in_len/stride)."""
    out_len = conv1d_output_len(in_len, k, stride, "half")
    total = max((out_len - 1) * stride + k - in_len, 0)
    return total // 2, total - total // 2


def padding_for(in_len: int, k: int, stride: int, padding: str) -> tuple[int, int]:
    return half_padding(in_len, k, stride) if padding == "half" else (0, 0)


def receptive_field(kernels, strides) -> int:
    """Effective receptive field of a conv stack: 1 + sum (k_i - 1) * prod_{j<i} s_j."""
    kernels, strides = list(kernels), list(strides)
    if not kernels or len(kernels) != len(strides):
        raise ValueError("kernels and strides must be non-empty and equal length")
    if min(kernels) < 1 or min(strides) < 1:
        raise ValueError("kernel sizes and strides must be >= 1")
    rf, jump = 1, 1
    for k, s in zip(kernels, strides):
        rf += (k - 1) * jump
        jump *= s
    return rf


def padding_rule(stride: int) -> str:
    """Padding used by the preset builder: half for strided layers, valid otherwise."""
    return "half" if stride > 1 else "valid"


def shape_chain(in_len: int, kernels, strides) -> list[int]:
    """Lengths after each conv layer using the half/valid padding rule."""
    out = []
    length = in_len
    for k, s in zip(kernels, strides):
        length = conv1d_output_len(length, k, s, padding_rule(s))
        out.append(length)
    return out
