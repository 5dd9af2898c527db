"""Variational autoencoder: encoder stack, Gaussian latent layer, mirrored decoder.

The variance branch emits log-variance; a latent sample is
``z = mu + exp(logvar / 2) * eps`` with ``eps ~ N(0, 1)``, which keeps the
sample differentiable in ``mu`` and ``logvar`` for a fixed ``eps``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from flowvae.errors import DimensionError
from flowvae.nn.functional import padding_rule, shape_chain
from flowvae.nn.layers import BatchNorm, Conv1D, Dense, Reshape, Sequential, TransposedConv1D
from flowvae.rng import RngStream


def _as_batch(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a[None, :] if a.ndim == 1 else a


@dataclass
class LatentSample:
    mu: np.ndarray
    logvar: np.ndarray
    eps: np.ndarray
    z: np.ndarray


class VaeModel:
    """Encoder, latent mean/log-variance layers and decoder."""

    def __init__(self, encoder: Sequential, mu_layer: Dense, logvar_layer: Dense,
                 decoder: Sequential | None, n_in: int):
        self.encoder = encoder
        self.mu_layer = mu_layer
        self.logvar_layer = logvar_layer
        self.decoder = decoder
        self.n_in = int(n_in)
        self.latent_dim = mu_layer.n_out

    def parts(self):
        yield "encoder", self.encoder
        yield "mu", self.mu_layer
        yield "logvar", self.logvar_layer
        if self.decoder is not None:
            yield "decoder", self.decoder

    def parameters(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, part in self.parts():
            if isinstance(part, Sequential):
                out.update(part.named_parameters(prefix + "."))
            else:
                out.update((f"{prefix}.{k}", v) for k, v in part.params.items())
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, part in self.parts():
            if isinstance(part, Sequential):
                out.update(part.named_grads(prefix + "."))
            else:
                out.update((f"{prefix}.{k}", part.grads[k]) for k in part.params)
        return out

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, part in self.parts():
            if isinstance(part, Sequential):
                out.update(part.named_buffers(prefix + "."))
        return out

    def conv_kernels(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, part in self.parts():
            if isinstance(part, Sequential):
                for i, layer in enumerate(part):
                    if isinstance(layer, (Conv1D, TransposedConv1D)):
                        out[f"{prefix}.{i}.kernel"] = layer.params["kernel"]
        return out

    def zero_grad(self):
        for _, part in self.parts():
            part.zero_grad()

    def checksum(self) -> str:
        """SHA-256 over every parameter and buffer, in a stable order."""
        h = hashlib.sha256()
        for name, arr in sorted({**self.parameters(), **self.buffers()}.items()):
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()

    def without_decoder(self) -> "VaeModel":
        """Encoder-only view sharing weights; enough for latent-layer classification."""
        return VaeModel(self.encoder, self.mu_layer, self.logvar_layer, None, self.n_in)


def build_vae(n_in: int, layer_type: str, kernel_sizes, strides, filters: int = 8,
              rng: RngStream | None = None, momentum: float = 0.99, epsilon: float = 1e-5) -> VaeModel:
    """Build encoder/decoder following a preset's layer plan.

    Conv plans use half padding on strided layers and valid padding
    otherwise; dense plans use the same width chain so both layer types share
    a latent size. The decoder reverses the encoder exactly.
    """
    widths = shape_chain(n_in, kernel_sizes, strides)
    latent = widths[-1]
    pre_images = [n_in] + widths[:-1]
    bn = dict(momentum=momentum, epsilon=epsilon)
    if layer_type == "dense":
        enc, prev = [], n_in
        for w in widths:
            enc += [Dense(prev, w, "relu", rng), BatchNorm(w, **bn)]
            prev = w
        dec, prev = [], latent
        for w in reversed(pre_images[1:]):
            dec += [Dense(prev, w, "relu", rng), BatchNorm(w, **bn)]
            prev = w
        dec.append(Dense(prev, n_in, "linear", rng))
        enc_out = latent
    elif layer_type == "conv":
        enc, c_in = [Reshape((n_in, 1))], 1
        for k, s in zip(kernel_sizes, strides):
            enc += [Conv1D(k, c_in, filters, s, padding_rule(s), "relu", rng), BatchNorm(filters, **bn)]
            c_in = filters
        enc.append(Reshape((latent * filters,)))
        enc_out = latent * filters
        dec = [Dense(latent, latent * filters, "relu", rng), BatchNorm(latent * filters, **bn),
               Reshape((latent, filters))]
        layers = list(zip(kernel_sizes, strides, pre_images))
        for idx, (k, s, target) in enumerate(reversed(layers)):
            last = idx == len(layers) - 1
            c_out = 1 if last else filters
            dec.append(TransposedConv1D(k, filters, c_out, s, padding_rule(s), target,
                                        "linear" if last else "relu", rng))
            if not last:
                dec.append(BatchNorm(filters, **bn))
        dec.append(Reshape((n_in,)))
    else:
        raise ValueError(f"unknown layer type {layer_type!r}")
    mu_layer = Dense(enc_out, latent, "linear", rng)
    logvar_layer = Dense(enc_out, latent, "linear", rng)
    return VaeModel(Sequential(enc), mu_layer, logvar_layer, Sequential(dec), n_in)


def build_vae_for_preset(n_in: int, preset, rng: RngStream | None = None) -> VaeModel:
    return build_vae(n_in, preset.layer_type, preset.kernel_sizes, preset.strides, preset.filters, rng)


def _check_width(x, width, what):
    if x.ndim != 2 or x.shape[1] != width:
        raise DimensionError(f"{what} expects width {width}, got shape {list(x.shape)}")


def encode(x, model: VaeModel, training: bool = False, cache: bool = False):
    """Return ``(mu, logvar)`` for a batch ``[B, n]``."""
    x = _as_batch(x)
    _check_width(x, model.n_in, "encoder")
    h = model.encoder.forward(x, training=training, cache=cache)
    mu = model.mu_layer.forward(h, training=training, cache=cache)
    logvar = model.logvar_layer.forward(h, training=training, cache=cache)
    return mu, logvar


def sample_latent(mu, logvar, rng: RngStream | None = None, eps=None) -> LatentSample:
    mu, logvar = _as_batch(mu), _as_batch(logvar)
    if eps is None:
        eps = rng.normal(mu.shape)
    eps = np.asarray(eps, dtype=np.float64).reshape(mu.shape)
    return LatentSample(mu, logvar, eps, mu + np.exp(0.5 * logvar) * eps)


def kl_per_row(mu, logvar) -> np.ndarray:
    mu, logvar = _as_batch(mu), _as_batch(logvar)
    return -0.5 * np.sum(1.0 + logvar - mu * mu - np.exp(logvar), axis=1)


def kl_loss(mu, logvar) -> float:
    """KL divergence from N(mu, exp(logvar)) to N(0, 1), batch mean."""
    return float(np.mean(kl_per_row(mu, logvar)))


def decode(z, model: VaeModel, training: bool = False, cache: bool = False) -> np.ndarray:
    if model.decoder is None:
        raise DimensionError("model has no decoder attached")
    z = _as_batch(z)
    _check_width(z, model.latent_dim, "decoder")
    return model.decoder.forward(z, training=training, cache=cache)


def rloss_per_row(x, x_hat) -> np.ndarray:
    x, x_hat = _as_batch(x), _as_batch(x_hat)
    if x.shape != x_hat.shape:
        raise DimensionError(f"reconstruction shape {list(x_hat.shape)} != input shape {list(x.shape)}")
    d = x_hat - x
    return np.mean(d * d, axis=1)


def reconstruction_loss(x, x_hat) -> float:
    """Mean squared error per flow, averaged over the batch."""
    return float(np.mean(rloss_per_row(x, x_hat)))


@dataclass
class VaeOutput:
    sample: LatentSample
    x_hat: np.ndarray
    kl: float
    rloss: float


def vae_forward(x, model: VaeModel, rng: RngStream | None = None, eps=None, training: bool = False) -> VaeOutput:
    x = _as_batch(x)
    mu, logvar = encode(x, model, training=training)
    sample = sample_latent(mu, logvar, rng, eps)
    x_hat = decode(sample.z, model, training=training)
    return VaeOutput(sample, x_hat, kl_loss(mu, logvar), reconstruction_loss(x, x_hat))


def reconstruction_scores(x, model: VaeModel, batch_size: int = 4096) -> np.ndarray:
    """Per-flow reconstruction loss through a frozen model, decoding the mean."""
    x = _as_batch(x)
    out = np.empty(x.shape[0])
    for start in range(0, x.shape[0], batch_size):
        chunk = x[start:start + batch_size]
        mu, _ = encode(chunk, model)
        out[start:start + batch_size] = rloss_per_row(chunk, decode(mu, model))
    return out


@dataclass
class VaePass:
    """Cached training-mode forward pass through the VAE."""

    x: np.ndarray
    sample: LatentSample
    x_hat: np.ndarray | None


def forward_pass(model: VaeModel, x, eps, training: bool = True, with_decoder: bool = True) -> VaePass:
    x = _as_batch(x)
    mu, logvar = encode(x, model, training=training, cache=True)
    sample = sample_latent(mu, logvar, eps=eps)
    x_hat = decode(sample.z, model, training=training, cache=True) if with_decoder else None
    return VaePass(x, sample, x_hat)


def backward_pass(model: VaeModel, vp: VaePass, d_z: np.ndarray | None, r_weight: float,
                  kl_weight: float) -> np.ndarray:
    """Back-propagate ``r_weight * R + kl_weight * KL`` plus an upstream ``d_z``.

    Fills every layer's ``grads``; decoder gradients are zero when no
    reconstruction term is used. Returns the gradient w.r.t. the input batch.
    """
    s = vp.sample
    batch = vp.x.shape[0]
    dz = np.zeros_like(s.z) if d_z is None else d_z.copy()
    if model.decoder is not None:
        if r_weight and vp.x_hat is not None:
            d_xhat = r_weight * 2.0 * (vp.x_hat - vp.x) / (vp.x.shape[1] * batch)
            dz += model.decoder.backward(d_xhat)
        else:
            model.decoder.zero_grad()
    sigma = np.exp(0.5 * s.logvar)
    d_mu = dz.copy()
    d_logvar = dz * s.eps * 0.5 * sigma
    if kl_weight:
        d_mu += kl_weight * s.mu / batch
        d_logvar += kl_weight * 0.5 * (sigma * sigma - 1.0) / batch
    d_h = model.mu_layer.backward(d_mu) + model.logvar_layer.backward(d_logvar)
    return model.encoder.backward(d_h)
