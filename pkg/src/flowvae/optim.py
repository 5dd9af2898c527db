"""Adam with bias correction, plus the ridge penalty on convolution kernels."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from flowvae.errors import ConsistencyError


@dataclass(frozen=True)
class OptimHyper:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 1e-5

    def __post_init__(self):
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


@dataclass
class AdamState:
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, hyper: OptimHyper) -> AdamState:
    """One Adam update, applied to ``params`` in place.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps), with m_hat and v_hat
    the bias-corrected first and second moments at step t + 1.
    """
    missing = [name for name in params if name not in grads]
    if missing:
        raise ConsistencyError(f"no gradient for parameters: {', '.join(missing)}")
    state.t += 1
    b1, b2 = hyper.beta1, hyper.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ConsistencyError(f"gradient shape {g.shape} != parameter shape {theta.shape} for {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / corr1
        v_hat = v / corr2
        theta -= hyper.learning_rate * m_hat / (np.sqrt(v_hat) + hyper.epsilon)
    return state


def l2_penalty(kernels: dict[str, np.ndarray], weight_decay: float):
    """Ridge penalty ``wd * sum(w^2)`` and its gradient ``2 * wd * w`` per kernel."""
    if weight_decay < 0:
        raise ValueError("weight_decay must be non-negative")
    penalty = 0.0
    grads = {}
    for name, w in kernels.items():
        penalty += weight_decay * float(np.sum(w * w))
        grads[name] = 2.0 * weight_decay * w
    return penalty, grads
