"""Layers with hand-derived backward passes.

Every layer follows the same protocol: ``forward(x, training, cache)``
computes the output and (when ``cache`` is true) stores what ``backward``
needs; ``backward(grad_out)`` fills ``self.grads`` and returns the gradient
with respect to the layer input. Parameter arrays live in ``self.params``
and are updated in place by the optimizer.

Sequence data is laid out as ``[batch, length, channels]``.
"""

from __future__ import annotations

import numpy as np

from flowvae.errors import DimensionError, StateError
from flowvae.nn.functional import (
    ACTIVATIONS,
    PADDINGS,
    activation_backward,
    activation_forward,
    conv1d_output_len,
    padding_for,
)
from flowvae.rng import RngStream


def _init_uniform(rng: RngStream | None, shape, fan_in: int, activation: str) -> np.ndarray:
    # He-style bound for relu, LeCun-style otherwise
    gain = 6.0 if activation == "relu" else 3.0
    bound = np.sqrt(gain / max(fan_in, 1))
    if rng is None:
        return np.zeros(shape)
    return rng.uniform_range(-bound, bound, shape)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x, training=False, cache=True):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def buffers(self) -> dict[str, np.ndarray]:
        """Non-trainable state that still belongs in a checkpoint."""
        return {}

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def _need_cache(self):
        if self._cache is None:
            raise StateError(f"{type(self).__name__}.backward called without a cached forward pass")
        return self._cache

    def __call__(self, x, training=False, cache=True):
        return self.forward(x, training=training, cache=cache)


class Dense(Layer):
    """``activation(x @ W + b)`` on ``[batch, in]`` inputs."""

    kind = "dense"

    def __init__(self, n_in: int, n_out: int, activation: str = "linear", rng: RngStream | None = None):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.n_in, self.n_out, self.activation = int(n_in), int(n_out), activation
        self.params["W"] = _init_uniform(rng, (self.n_in, self.n_out), self.n_in, activation)
        self.params["b"] = np.zeros(self.n_out)

    def forward(self, x, training=False, cache=True):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise DimensionError(f"dense layer expects [B, {self.n_in}], got {list(x.shape)}")
        pre = x @ self.params["W"] + self.params["b"]
        out = activation_forward(pre, self.activation)
        if cache:
            self._cache = (x, pre, out)
        return out

    def backward(self, grad_out):
        x, pre, out = self._need_cache()
        g = activation_backward(grad_out, pre, out, self.activation)
        self.grads["W"] = x.T @ g
        self.grads["b"] = g.sum(axis=0)
        return g @ self.params["W"].T


class Conv1D(Layer):
    """Strided 1-D convolution with kernel ``[k, c_in, c_out]``."""

    kind = "conv1d"

    def __init__(self, k: int, c_in: int, c_out: int, stride: int = 1, padding: str = "valid",
                 activation: str = "linear", rng: RngStream | None = None):
        super().__init__()
        if k < 1 or stride < 1:
            raise ValueError("kernel size and stride must be >= 1")
        if padding not in PADDINGS:
            raise ValueError(f"unknown padding {padding!r}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.k, self.c_in, self.c_out = int(k), int(c_in), int(c_out)
        self.stride, self.padding, self.activation = int(stride), padding, activation
        self.params["kernel"] = _init_uniform(rng, (self.k, self.c_in, self.c_out), self.k * self.c_in, activation)
        self.params["bias"] = np.zeros(self.c_out)

    def output_len(self, in_len: int) -> int:
        return conv1d_output_len(in_len, self.k, self.stride, self.padding)

    def forward(self, x, training=False, cache=True):
        if x.ndim != 3 or x.shape[2] != self.c_in:
            raise DimensionError(f"conv1d expects [B, L, {self.c_in}], got {list(x.shape)}")
        in_len = x.shape[1]
        out_len = self.output_len(in_len)
        left, right = padding_for(in_len, self.k, self.stride, self.padding)
        xp = np.pad(x, ((0, 0), (left, right), (0, 0))) if left or right else x
        span = self.stride * (out_len - 1) + 1
        cols = np.stack([xp[:, j:j + span:self.stride, :] for j in range(self.k)], axis=2)
        pre = np.tensordot(cols, self.params["kernel"], axes=([2, 3], [0, 1])) + self.params["bias"]
        out = activation_forward(pre, self.activation)
        if cache:
            self._cache = (xp.shape, left, in_len, cols, pre, out)
        return out

    def backward(self, grad_out):
        xp_shape, left, in_len, cols, pre, out = self._need_cache()
        g = activation_backward(grad_out, pre, out, self.activation)
        self.grads["kernel"] = np.tensordot(cols, g, axes=([0, 1], [0, 1]))
        self.grads["bias"] = g.sum(axis=(0, 1))
        dcols = np.tensordot(g, self.params["kernel"], axes=([2], [2]))
        dxp = np.zeros(xp_shape)
        span = self.stride * (g.shape[1] - 1) + 1
        for j in range(self.k):
            dxp[:, j:j + span:self.stride, :] += dcols[:, :, j, :]
        return dxp[:, left:left + in_len, :]


class TransposedConv1D(Layer):
    """Adjoint of :class:`Conv1D`; maps a conv output back to its pre-image length.

    ``out_len`` is the input length of the mirrored encoder layer. The
    resulting ``output_padding`` is the slack between the windows' reach and
    the padded target length.
    """

    kind = "tconv1d"

    def __init__(self, k: int, c_in: int, c_out: int, stride: int, padding: str, out_len: int,
                 activation: str = "linear", rng: RngStream | None = None):
        super().__init__()
        if padding not in PADDINGS:
            raise ValueError(f"unknown padding {padding!r}")
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.k, self.c_in, self.c_out = int(k), int(c_in), int(c_out)
        self.stride, self.padding, self.activation = int(stride), padding, activation
        self.out_len = int(out_len)
        self.in_len = conv1d_output_len(self.out_len, self.k, self.stride, self.padding)
        self.left, right = padding_for(self.out_len, self.k, self.stride, self.padding)
        self.padded_len = self.out_len + self.left + right
        self.output_padding = self.padded_len - ((self.in_len - 1) * self.stride + self.k)
        fan_in = max(self.k * self.c_in // self.stride, 1)
        self.params["kernel"] = _init_uniform(rng, (self.k, self.c_in, self.c_out), fan_in, activation)
        self.params["bias"] = np.zeros(self.c_out)

    def forward(self, x, training=False, cache=True):
        if x.ndim != 3 or x.shape[1] != self.in_len or x.shape[2] != self.c_in:
            raise DimensionError(
                f"transposed conv expects [B, {self.in_len}, {self.c_in}], got {list(x.shape)}")
        cols = np.tensordot(x, self.params["kernel"], axes=([2], [1]))  # [B, L_in, k, c_out]
        yp = np.zeros((x.shape[0], self.padded_len, self.c_out))
        span = self.stride * (self.in_len - 1) + 1
        for j in range(self.k):
            yp[:, j:j + span:self.stride, :] += cols[:, :, j, :]
        pre = yp[:, self.left:self.left + self.out_len, :] + self.params["bias"]
        out = activation_forward(pre, self.activation)
        if cache:
            self._cache = (x, pre, out)
        return out

    def backward(self, grad_out):
        x, pre, out = self._need_cache()
        g = activation_backward(grad_out, pre, out, self.activation)
        self.grads["bias"] = g.sum(axis=(0, 1))
        gp = np.zeros((g.shape[0], self.padded_len, self.c_out))
        gp[:, self.left:self.left + self.out_len, :] = g
        span = self.stride * (self.in_len - 1) + 1
        gcols = np.stack([gp[:, j:j + span:self.stride, :] for j in range(self.k)], axis=2)
        self.grads["kernel"] = np.tensordot(x, gcols, axes=([0, 1], [0, 1])).transpose(1, 0, 2)
        return np.tensordot(gcols, self.params["kernel"], axes=([2, 3], [0, 2]))


class BatchNorm(Layer):
    """Batch normalization over every axis except the last (channels)."""

    kind = "batchnorm"

    def __init__(self, channels: int, momentum: float = 0.99, epsilon: float = 1e-5):
        super().__init__()
        if not 0.0 < momentum < 1.0:
            raise ValueError("momentum must be in (0, 1)")
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        self.channels, self.momentum, self.epsilon = int(channels), float(momentum), float(epsilon)
        self.params["gamma"] = np.ones(self.channels)
        self.params["beta"] = np.zeros(self.channels)
        self.running_mean = np.zeros(self.channels)
        self.running_var = np.ones(self.channels)

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, training=False, cache=True):
        if x.shape[-1] != self.channels:
            raise DimensionError(f"batchnorm expects {self.channels} channels, got {x.shape[-1]}")
        axes = tuple(range(x.ndim - 1))
        if training:
            if x.shape[0] < 2:
                raise DimensionError("batch normalization needs at least 2 rows in training mode")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean *= self.momentum
            self.running_mean += (1.0 - self.momentum) * mean
            self.running_var *= self.momentum
            self.running_var += (1.0 - self.momentum) * var
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.epsilon)
        xhat = (x - mean) * inv_std
        out = self.params["gamma"] * xhat + self.params["beta"]
        if cache:
            self._cache = (xhat, inv_std, training, axes)
        return out

    def backward(self, grad_out):
        xhat, inv_std, training, axes = self._need_cache()
        self.grads["gamma"] = np.sum(grad_out * xhat, axis=axes)
        self.grads["beta"] = np.sum(grad_out, axis=axes)
        dxhat = grad_out * self.params["gamma"]
        if not training:
            return dxhat * inv_std
        n = xhat.size // xhat.shape[-1]
        return inv_std / n * (n * dxhat - dxhat.sum(axis=axes) - xhat * np.sum(dxhat * xhat, axis=axes))


class Reshape(Layer):
    """Reshape the non-batch axes; parameter free."""

    kind = "reshape"

    def __init__(self, shape):
        super().__init__()
        self.shape = tuple(int(s) for s in shape)

    def forward(self, x, training=False, cache=True):
        if int(np.prod(x.shape[1:])) != int(np.prod(self.shape)):
            raise DimensionError(f"cannot reshape {list(x.shape[1:])} to {list(self.shape)}")
        if cache:
            self._cache = x.shape
        return x.reshape((x.shape[0],) + self.shape)

    def backward(self, grad_out):
        return grad_out.reshape(self._need_cache())


class Sequential(Layer):
    """Ordered layer stack; parameter ids are ``"<index>.<name>"``."""

    kind = "sequential"

    def __init__(self, layers=()):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x, training=False, cache=True):
        for layer in self.layers:
            x = layer.forward(x, training=training, cache=cache)
        return x

    def backward(self, grad_out):
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out

    def named_parameters(self, prefix: str = ""):
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params.items():
                yield f"{prefix}{i}.{name}", arr

    def named_grads(self, prefix: str = ""):
        for i, layer in enumerate(self.layers):
            for name in layer.params:
                yield f"{prefix}{i}.{name}", layer.grads[name]

    def named_buffers(self, prefix: str = ""):
        for i, layer in enumerate(self.layers):
            for name, arr in layer.buffers().items():
                yield f"{prefix}{i}.{name}", arr

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def __iter__(self):
        return iter(self.layers)

    def __len__(self):
        return len(self.layers)
