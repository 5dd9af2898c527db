"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from flowvae.nn.layers import Layer

# absolute floor on the error denominator; central differences at h=1e-5 carry
# roundoff near 1e-11 for O(1) losses, so smaller gradients cannot be resolved
GRAD_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    tol: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def failed(self) -> list[str]:
        return [name for name, err in self.errors.items() if not err < self.tol]

    @property
    def passed(self) -> bool:
        return not self.failed

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def __str__(self):
        lines = [f"{'PASS' if self.passed else 'FAIL'} max rel err {self.max_error:.3e} (tol {self.tol:g})"]
        for name, err in self.errors.items():
            flag = "" if err < self.tol else "  <-- FAIL"
            lines.append(f"  {name:30s} {err:.3e}{flag}")
        return "\n".join(lines)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max-abs difference scaled by the larger gradient's max-abs magnitude."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    if analytic.size == 0:
        return 0.0
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), GRAD_FLOOR)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def numeric_grad(loss_fn, arr: np.ndarray, h: float) -> np.ndarray:
    """Central differences of ``loss_fn()`` with respect to ``arr`` (perturbed in place)."""
    grad = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn()
        flat[i] = orig - h
        down = loss_fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def grad_check(objective, x, labels=None, h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare ``objective``'s analytic gradients with central differences.

    ``objective`` must expose ``parameters() -> dict[name, array]`` (live
    arrays), ``loss(x, labels) -> float`` and ``loss_and_grads(x, labels) ->
    (float, dict)``. Mutable state reported by an optional ``buffers()`` is
    restored afterwards, so the check leaves the objective unchanged.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    buffers = getattr(objective, "buffers", lambda: {})()
    saved = {k: v.copy() for k, v in buffers.items()}

    def restore():
        for k, v in saved.items():
            buffers[k][...] = v

    params = objective.parameters()
    _, analytic = objective.loss_and_grads(x, labels)
    analytic = {k: np.array(v, copy=True) for k, v in analytic.items()}
    restore()
    report = GradCheckReport(tol=tol)
    for name, arr in params.items():
        numeric = numeric_grad(lambda: objective.loss(x, labels), arr, h)
        restore()
        report.errors[name] = relative_error(analytic[name], numeric)
    return report


class LayerObjective:
    """Scalar probe ``sum(layer(input) * weights)`` for checking a single layer.

    The input is exposed as the pseudo-parameter ``"input"`` so its gradient
    is checked alongside the layer's own parameters.
    """

    def __init__(self, layer: Layer, x: np.ndarray, probe: np.ndarray, training: bool = True):
        self.layer, self.x, self.probe, self.training = layer, x, probe, training

    def parameters(self):
        return {"input": self.x, **self.layer.params}

    def buffers(self):
        return self.layer.buffers()

    def loss(self, x=None, labels=None):
        out = self.layer.forward(self.x, training=self.training, cache=False)
        return float(np.sum(out * self.probe))

    def loss_and_grads(self, x=None, labels=None):
        out = self.layer.forward(self.x, training=self.training)
        dx = self.layer.backward(self.probe)
        return float(np.sum(out * self.probe)), {"input": dx, **self.layer.grads}
