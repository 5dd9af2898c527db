"""Detection heads and their training loops.

LLC: a softmax classifier on the latent sample, trained jointly with the
VAE on ``P + R + KLM * KL`` (terms switched by the preset).

LBD: stage 1 trains a VAE on benign flows only; stage 2 fits a one-feature
logistic detector on each flow's reconstruction loss computed through the
frozen stage-1 model. Nothing from stage 2 flows back into stage 1.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from flowvae.data.dataset import Dataset
from flowvae.data.schema import FeatureSchema
from flowvae.data.transforms import ScalingSpec, apply_scaling, batches, select_features
from flowvae.errors import (
    ContaminationError,
    DataError,
    DimensionError,
    DivergedError,
    IsolationViolationError,
    SchemaError,
)
from flowvae.metrics import TrainLogRow
from flowvae.nn.functional import log_softmax, sigmoid, softmax
from flowvae.nn.layers import Dense
from flowvae.optim import AdamState, OptimHyper, adam_step, l2_penalty
from flowvae.presets import Preset
from flowvae.rng import RngStream
from flowvae.vae import (
    VaeModel,
    backward_pass,
    build_vae_for_preset,
    decode,
    encode,
    forward_pass,
    kl_per_row,
    reconstruction_scores,
    rloss_per_row,
)

log = logging.getLogger(__name__)

BENIGN_LABEL, MALICIOUS_LABEL = 0, 1


# ---------------------------------------------------------------- losses

def softmax_xent(logits, labels) -> float:
    """Mean of ``-log softmax(logits)[label]`` over the batch."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValueError(f"label outside [0, {logits.shape[1]})")
    return float(-np.mean(log_softmax(logits)[np.arange(len(labels)), labels]))


def softmax_xent_grad(logits, labels) -> np.ndarray:
    """Gradient of :func:`softmax_xent` w.r.t. the logits: ``(softmax - one_hot) / B``."""
    g = softmax(logits)
    g[np.arange(len(labels)), labels] -= 1.0
    return g / len(labels)


def sigmoid_xent(scores_logit, targets) -> float:
    """Mean binary cross-entropy on logits, computed without overflow."""
    t = np.asarray(targets, dtype=np.float64)
    a = np.asarray(scores_logit, dtype=np.float64)
    return float(np.mean(np.maximum(a, 0.0) - a * t + np.log1p(np.exp(-np.abs(a)))))


def total_loss(p: float, r: float, kl: float, preset: Preset) -> float:
    on = preset.losses_enabled
    total = 0.0
    if "P" in on:
        total += p
    if "R" in on:
        total += r
    if "KL" in on:
        total += preset.klm * kl
    return total


# ---------------------------------------------------------------- heads

class LlcHead:
    """Dense ``[J -> C]`` logits layer; softmax is applied by the loss / predictor."""

    def __init__(self, latent_dim: int, n_classes: int, rng: RngStream | None = None):
        if n_classes < 2:
            raise ValueError("a classifier head needs at least 2 classes")
        self.layer = Dense(latent_dim, n_classes, "linear", rng)

    @property
    def n_classes(self) -> int:
        return self.layer.n_out

    def logits(self, z, cache=False):
        return self.layer.forward(z, cache=cache)


@dataclass
class LbdDetector:
    """Logistic detector on the scalar reconstruction loss; larger loss means more malicious."""

    w: float = 0.0
    b: float = 0.0

    def score(self, rloss) -> np.ndarray:
        return sigmoid(self.w * np.asarray(rloss, dtype=np.float64) + self.b)

    def decide(self, rloss) -> np.ndarray:
        return (self.score(rloss) >= 0.5).astype(np.int64)


# ---------------------------------------------------------------- trained model

@dataclass
class TrainedModel:
    """A fitted detector plus everything needed to preprocess raw datasets."""

    vae: VaeModel
    head: LlcHead | LbdDetector
    preset: Preset
    schema: FeatureSchema
    scaling: ScalingSpec

    @property
    def kind(self) -> str:
        return "llc" if isinstance(self.head, LlcHead) else "lbd"

    @property
    def class_names(self) -> tuple[str, ...]:
        return self.schema.classes

    def prepare(self, ds: Dataset) -> Dataset:
        """Select this model's features, map labels to its classes, apply its scaling."""
        ds = select_features(ds, self.schema.features)
        if self.schema.classes != ds.schema.classes:
            if len(self.schema.classes) == 2:
                ds = ds.to_binary()
            else:
                raise SchemaError(f"dataset classes {ds.schema.classes} do not match model classes")
        return apply_scaling(ds, self.scaling)

    def infer(self, x) -> np.ndarray:
        """Class probabilities ``[B, C]`` for prepared inputs."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if self.kind == "llc":
            return llc_predict(self, x)[1]
        score = lbd_classify(self.head, self.vae, x)[1]
        return np.stack([1.0 - score, score], axis=1)

    def predict(self, x) -> np.ndarray:
        if self.kind == "lbd":
            return lbd_classify(self.head, self.vae, np.atleast_2d(np.asarray(x, dtype=np.float64)))[0]
        return np.argmax(self.infer(x), axis=1)

    def prob_benign(self, x) -> np.ndarray:
        return self.infer(x)[:, self.schema.benign_index]


def llc_predict(model: TrainedModel, x):
    """``(class indices, probabilities)`` from the latent mean; ties go to the lowest index."""
    mu, _ = encode(x, model.vae)
    probs = softmax(model.head.logits(mu))
    return np.argmax(probs, axis=1), probs


def lbd_classify(detector: LbdDetector, frozen_vae: VaeModel, x):
    """``(labels, scores)`` where label 1 (malicious) iff score >= 0.5."""
    r = reconstruction_scores(x, frozen_vae)
    score = detector.score(r)
    return (score >= 0.5).astype(np.int64), score


# ---------------------------------------------------------------- objectives

@dataclass
class LossParts:
    p: float | None
    r: float | None
    kl: float | None
    total: float
    accuracy: float | None


class LlcObjective:
    """Joint LLC loss for one batch with a fixed noise draw ``eps``."""

    def __init__(self, vae: VaeModel, head: LlcHead, preset: Preset, eps: np.ndarray | None = None):
        self.vae, self.head, self.preset, self.eps = vae, head, preset, eps

    def parameters(self):
        return {**self.vae.parameters(), **{f"head.{k}": v for k, v in self.head.layer.params.items()}}

    def buffers(self):
        return self.vae.buffers()

    def grads(self):
        return {**self.vae.grads(), **{f"head.{k}": v for k, v in self.head.layer.grads.items()}}

    def _eps(self, batch):
        return self.eps if self.eps is not None else np.zeros((batch, self.vae.latent_dim))

    def forward(self, x, labels, cache=True):
        on = self.preset.losses_enabled
        vp = forward_pass(self.vae, x, self._eps(len(x)), training=True, with_decoder="R" in on)
        logits = self.head.layer.forward(vp.sample.z, cache=cache)
        p = softmax_xent(logits, labels)
        r = float(np.mean(rloss_per_row(vp.x, vp.x_hat))) if vp.x_hat is not None else None
        kl = float(np.mean(kl_per_row(vp.sample.mu, vp.sample.logvar))) if "KL" in on else None
        acc = float(np.mean(np.argmax(logits, axis=1) == labels))
        total = total_loss(p, r or 0.0, kl or 0.0, self.preset)
        return vp, logits, LossParts(p if "P" in on else None, r, kl, total, acc)

    def loss(self, x, labels):
        return self.forward(x, labels, cache=False)[2].total

    def loss_and_grads(self, x, labels):
        vp, logits, parts = self.forward(x, labels)
        on = self.preset.losses_enabled
        if "P" in on:
            d_z = self.head.layer.backward(softmax_xent_grad(logits, labels))
        else:
            self.head.layer.zero_grad()
            d_z = None
        backward_pass(self.vae, vp, d_z, 1.0 if "R" in on else 0.0, self.preset.kl_weight)
        self.last_parts = parts
        return parts.total, self.grads()


class VaeObjective:
    """Stage-1 loss ``R + KLM * KL`` for a fixed noise draw."""

    def __init__(self, vae: VaeModel, kl_weight: float, eps: np.ndarray | None = None):
        self.vae, self.kl_weight, self.eps = vae, kl_weight, eps

    def parameters(self):
        return self.vae.parameters()

    def buffers(self):
        return self.vae.buffers()

    def forward(self, x):
        eps = self.eps if self.eps is not None else np.zeros((len(x), self.vae.latent_dim))
        vp = forward_pass(self.vae, x, eps, training=True)
        r = float(np.mean(rloss_per_row(vp.x, vp.x_hat)))
        kl = float(np.mean(kl_per_row(vp.sample.mu, vp.sample.logvar)))
        return vp, LossParts(None, r, kl, r + self.kl_weight * kl, None)

    def loss(self, x, labels=None):
        return self.forward(x)[1].total

    def loss_and_grads(self, x, labels=None):
        vp, parts = self.forward(x)
        backward_pass(self.vae, vp, None, 1.0, self.kl_weight)
        self.last_parts = parts
        return parts.total, self.vae.grads()


class DetectorObjective:
    """Mean sigmoid cross-entropy of ``w * r + b`` against binary targets."""

    def __init__(self):
        self.params = {"w": np.zeros(1), "b": np.zeros(1)}

    def parameters(self):
        return self.params

    def loss(self, r, targets):
        return sigmoid_xent(self.params["w"][0] * r + self.params["b"][0], targets)

    def loss_and_grads(self, r, targets):
        a = self.params["w"][0] * r + self.params["b"][0]
        g = (sigmoid(a) - targets) / len(r)
        return sigmoid_xent(a, targets), {"w": np.array([np.sum(g * r)]), "b": np.array([np.sum(g)])}


# ---------------------------------------------------------------- training

def _train_batches(ds: Dataset, batch_size: int, rng: RngStream):
    """Endless stream of shuffled batches; single-row batches are dropped (batch norm needs 2)."""
    if len(ds) == 0:
        raise DataError("cannot train on an empty dataset")
    if len(ds) < 2:
        raise DataError("training needs at least 2 records")
    epoch = 0
    while True:
        for x, y in batches(ds, batch_size, rng, epoch):
            if len(x) >= 2:
                yield x, y
        epoch += 1


def _add_l2(grads, vae: VaeModel, weight_decay: float):
    _, extra = l2_penalty(vae.conv_kernels(), weight_decay)
    for name, g in extra.items():
        grads[name] = grads[name] + g


def _check_finite(parts: LossParts, step: int):
    if not np.isfinite(parts.total):
        raise DivergedError(step)


def evaluate_llc(vae: VaeModel, head: LlcHead, preset: Preset, ds: Dataset, batch_size: int = 4096) -> LossParts:
    """Full-split inference sweep using the latent mean."""
    on = preset.losses_enabled
    n = len(ds)
    if n == 0:
        return LossParts(None, None, None, float("nan"), None)
    x_all = np.ascontiguousarray(ds.features)
    p_sum = r_sum = kl_sum = correct = 0.0
    for start in range(0, n, batch_size):
        x, y = x_all[start:start + batch_size], ds.labels[start:start + batch_size]
        mu, logvar = encode(x, vae)
        logits = head.logits(mu)
        p_sum += softmax_xent(logits, y) * len(x)
        correct += float(np.sum(np.argmax(logits, axis=1) == y))
        if "R" in on and vae.decoder is not None:
            r_sum += float(np.sum(rloss_per_row(x, decode(mu, vae))))
        kl_sum += float(np.sum(kl_per_row(mu, logvar)))
    p, r, kl = p_sum / n, r_sum / n, kl_sum / n
    return LossParts(p if "P" in on else None, r if "R" in on else None, kl if "KL" in on else None,
                     total_loss(p, r, kl, preset), correct / n)


def _row(step, split, parts: LossParts) -> TrainLogRow:
    return TrainLogRow(step, split, parts.accuracy, parts.p, parts.kl, parts.r, parts.total)


def _mean_parts(window: list[LossParts]) -> LossParts:
    def avg(attr):
        vals = [getattr(p, attr) for p in window]
        return None if vals[0] is None else float(np.mean(vals))
    return LossParts(avg("p"), avg("r"), avg("kl"), avg("total"), avg("accuracy"))


def _fit(objective, params, stream, steps, hyper, noise, latent_dim, l2_vae, log_interval, on_log):
    """Shared Adam loop; ``on_log(step, mean_parts)`` runs every ``log_interval`` steps."""
    state = AdamState()
    window: list[LossParts] = []
    for step in range(1, steps + 1):
        x, y = next(stream)
        objective.eps = noise.normal((len(x), latent_dim))
        _, grads = objective.loss_and_grads(x, y)
        _check_finite(objective.last_parts, step)
        grads = dict(grads)
        if l2_vae is not None:
            _add_l2(grads, l2_vae, hyper.weight_decay)
        adam_step(params, grads, state, hyper)
        window.append(objective.last_parts)
        if step % log_interval == 0:
            on_log(step, _mean_parts(window))
            window = []


def train_llc(train: Dataset, val: Dataset | None, preset: Preset, rng: RngStream, *,
              scaling: ScalingSpec | None = None, test: Dataset | None = None, steps: int | None = None,
              batch_size: int = 1024, log_interval: int = 50, weight_decay: float = 1e-5):
    """Train the LLC model for ``steps`` batches (default: the preset's count).

    Inputs must already be feature-selected and scaled. Every
    ``log_interval`` steps a train row (mean over the interval's batches)
    and full-sweep val/test rows are logged. Returns ``(TrainedModel, rows)``.
    """
    if len(train) == 0:
        raise DataError("training set is empty")
    steps = preset.steps if steps is None else steps
    vae = build_vae_for_preset(train.width, preset, rng.fork(1))
    head = LlcHead(vae.latent_dim, len(train.schema.classes), rng.fork(2))
    model = TrainedModel(vae, head, preset, train.schema, scaling or ScalingSpec("none", train.schema.features))
    rows: list[TrainLogRow] = []
    if not steps:
        return model, rows
    objective = LlcObjective(vae, head, preset)

    def on_log(step, parts):
        rows.append(_row(step, "train", parts))
        for split, ds in (("val", val), ("test", test)):
            if ds is not None and len(ds):
                rows.append(_row(step, split, evaluate_llc(vae, head, preset, ds)))

    _fit(objective, objective.parameters(), _train_batches(train, batch_size, rng.fork(4)), steps,
         OptimHyper(preset.lr, weight_decay=weight_decay), rng.fork(3), vae.latent_dim, vae,
         log_interval, on_log)
    return model, rows


def lbd_stage1_train(benign: Dataset, preset: Preset, rng: RngStream, *, steps: int | None = None,
                     batch_size: int = 1024, log_interval: int = 50, weight_decay: float = 1e-5):
    """Fit the VAE on benign-only flows with ``R + KLM * KL``. Returns ``(vae, rows)``.

    Any non-benign row is a contamination error; the offending row indices
    are attached to the exception.
    """
    if len(benign) == 0:
        raise DataError("stage 1 needs benign flows")
    bad = np.flatnonzero(~benign.is_benign())
    if bad.size:
        raise ContaminationError(f"{bad.size} non-benign row(s) in stage-1 data", rows=bad.tolist())
    steps = preset.steps1 if steps is None else steps
    vae = build_vae_for_preset(benign.width, preset, rng.fork(1))
    rows: list[TrainLogRow] = []
    if steps:
        objective = VaeObjective(vae, preset.kl_weight)
        _fit(objective, vae.parameters(), _train_batches(benign, batch_size, rng.fork(4)), steps,
             OptimHyper(preset.lr, weight_decay=weight_decay), rng.fork(3), vae.latent_dim, vae,
             log_interval, lambda step, parts: rows.append(_row(step, "train", parts)))
    return vae, rows


def fit_detector(r, targets, lr: float, steps: int, rng: RngStream, *, batch_size: int = 1024,
                 log_interval: int = 50):
    """Logistic regression of binary ``targets`` on scalar losses ``r`` with Adam.

    Fits on standardized ``r`` and folds the scaling back into ``(w, b)`` so
    the returned detector takes raw losses. Returns ``(LbdDetector, rows)``.
    """
    r = np.asarray(r, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if r.shape != targets.shape or r.ndim != 1 or r.size == 0:
        raise DimensionError("need equally long, non-empty 1-D losses and targets")
    mu, sd = float(np.mean(r)), float(np.std(r))
    sd = sd if sd > 0 else 1.0
    r_std = (r - mu) / sd
    objective = DetectorObjective()
    params, state = objective.params, AdamState()
    hyper = OptimHyper(lr, weight_decay=0.0)
    n = len(r)
    rows: list[TrainLogRow] = []
    epoch, pos, order = 0, 0, rng.fork(0).permutation(n)
    window = []
    for step in range(1, steps + 1):
        if pos >= n:
            epoch, pos = epoch + 1, 0
            order = rng.fork(epoch).permutation(n)
        idx = order[pos:pos + batch_size]
        pos += batch_size
        loss, grads = objective.loss_and_grads(r_std[idx], targets[idx])
        if not np.isfinite(loss):
            raise DivergedError(step)
        adam_step(params, grads, state, hyper)
        window.append(loss)
        if step % log_interval == 0:
            w, b = params["w"][0], params["b"][0]
            acc = float(np.mean(((w * r_std + b) >= 0) == (targets == 1)))
            rows.append(TrainLogRow(step, "train", acc, float(np.mean(window)), None, None, float(np.mean(window))))
            window = []
    w, b = float(params["w"][0]), float(params["b"][0])
    return LbdDetector(w / sd, b - w * mu / sd), rows


def lbd_stage2_train(vae: VaeModel, train: Dataset, preset: Preset, rng: RngStream, *,
                     steps: int | None = None, lr: float | None = None, batch_size: int = 1024,
                     log_interval: int = 50):
    """Fit the logistic detector on reconstruction losses from the frozen ``vae``.

    Binary targets are 1 for every non-benign flow. Raises
    :class:`IsolationViolationError` if the VAE changed meanwhile.
    Returns ``(LbdDetector, rows)``.
    """
    if len(train) == 0:
        raise DataError("stage 2 needs labelled flows")
    before = vae.checksum()
    r = reconstruction_scores(np.ascontiguousarray(train.features), vae)
    targets = (~train.is_benign()).astype(np.float64)
    steps = preset.steps2 if steps is None else steps
    detector, rows = fit_detector(r, targets, preset.lr if lr is None else lr, steps or 0, rng.fork(5),
                                  batch_size=batch_size, log_interval=log_interval)
    if vae.checksum() != before:
        raise IsolationViolationError("stage-2 training modified the stage-1 model")
    return detector, rows


def train_lbd(benign: Dataset, labelled: Dataset, preset: Preset, rng: RngStream, *,
              scaling: ScalingSpec | None = None, steps1: int | None = None, steps2: int | None = None,
              lr2: float | None = None, batch_size: int = 1024, log_interval: int = 50):
    """Both LBD stages; returns ``(TrainedModel, stage1_rows, stage2_rows)``."""
    vae, rows1 = lbd_stage1_train(benign, preset, rng.fork(10), steps=steps1, batch_size=batch_size,
                                  log_interval=log_interval)
    detector, rows2 = lbd_stage2_train(vae, labelled, preset, rng.fork(20), steps=steps2, lr=lr2,
                                       batch_size=batch_size, log_interval=log_interval)
    schema = labelled.schema
    model = TrainedModel(vae, detector, preset, schema, scaling or ScalingSpec("none", schema.features))
    return model, rows1, rows2
