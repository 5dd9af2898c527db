"""Scaling, feature selection, class balancing, splitting and batching."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from flowvae.data.dataset import Dataset
from flowvae.data.schema import FeatureSchema
from flowvae.errors import DataError, SchemaError
from flowvae.rng import RngStream

SCALING_KINDS = ("none", "minmax", "standard", "log")


@dataclass(frozen=True, eq=False)
class ScalingSpec:
    """Fitted scaling parameters, aligned with ``features``."""

    kind: str
    features: tuple[str, ...] = ()
    low: np.ndarray | None = None
    high: np.ndarray | None = None
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in SCALING_KINDS:
            raise ValueError(f"scaling kind must be one of {SCALING_KINDS}, got {self.kind!r}")
        if self.kind == "minmax":
            if self.low is None or self.high is None:
                raise ValueError("minmax scaling needs low and high bounds")
            if np.any(np.asarray(self.high) < np.asarray(self.low)):
                raise ValueError("minmax bounds need high >= low")
        if self.kind == "standard" and (self.mean is None or self.std is None):
            raise ValueError("standard scaling needs mean and std")

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(getattr(self, k)) for k in ("low", "high", "mean", "std")
                if getattr(self, k) is not None}


def sample_bounds(*datasets: Dataset) -> ScalingSpec:
    """Per-feature min/max sampled over one or more datasets."""
    feats = np.concatenate([d.features for d in datasets if len(d)])
    if feats.size == 0:
        raise DataError("cannot sample bounds from empty data")
    return ScalingSpec("minmax", datasets[0].schema.features, feats.min(axis=0), feats.max(axis=0))


def sample_moments(*datasets: Dataset) -> ScalingSpec:
    feats = np.concatenate([d.features for d in datasets if len(d)])
    if feats.size == 0:
        raise DataError("cannot sample moments from empty data")
    return ScalingSpec("standard", datasets[0].schema.features, mean=feats.mean(axis=0), std=feats.std(axis=0))


def _check_aligned(ds: Dataset, spec: ScalingSpec):
    if spec.features and tuple(spec.features) != ds.schema.features:
        raise SchemaError("scaling parameters were fitted on a different feature list")


def scale_minmax(ds: Dataset, spec: ScalingSpec, clamp: bool = True) -> Dataset:
    """(x - min) / (max - min); constant features map to 0; drifted values are clamped to [0, 1]."""
    _check_aligned(ds, spec)
    low, high = np.asarray(spec.low), np.asarray(spec.high)
    span = high - low
    safe = np.where(span > 0, span, 1.0)
    out = np.where(span > 0, (ds.features - low) / safe, 0.0)
    if clamp:
        out = np.clip(out, 0.0, 1.0)
    return ds.with_features(out)


def scale_standard(ds: Dataset, spec: ScalingSpec, allow_degenerate: bool = False) -> Dataset:
    """(x - mean) / std; a zero std is an error unless ``allow_degenerate`` (then the feature maps to 0)."""
    _check_aligned(ds, spec)
    mean, std = np.asarray(spec.mean), np.asarray(spec.std)
    zero = ~(std > 0)
    if np.any(zero) and not allow_degenerate:
        names = [ds.schema.features[i] for i in np.flatnonzero(zero)]
        raise DataError(f"zero standard deviation for: {', '.join(names)}")
    safe = np.where(zero, 1.0, std)
    return ds.with_features(np.where(zero, 0.0, (ds.features - mean) / safe))


def signed_log(x):
    """sign(x) * ln(1 + |x|): odd, strictly increasing, defined at 0 and negatives."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.log1p(np.abs(x))


def scale_log(ds: Dataset) -> Dataset:
    return ds.with_features(signed_log(ds.features))


def apply_scaling(ds: Dataset, spec: ScalingSpec) -> Dataset:
    if spec.kind == "none":
        return ds
    if spec.kind == "log":
        return scale_log(ds)
    if spec.kind == "minmax":
        return scale_minmax(ds, spec)
    return scale_standard(ds, spec, allow_degenerate=True)


def select_features(ds: Dataset, names) -> Dataset:
    """Keep ``names`` in the given order."""
    names = tuple(names)
    missing = [n for n in names if n not in ds.schema.features]
    if missing:
        raise SchemaError(f"features not in schema: {', '.join(missing)}")
    idx = [ds.schema.features.index(n) for n in names]
    schema = FeatureSchema(names, ds.schema.classes, ds.schema.label_column)
    return ds.with_features(ds.features[:, idx], schema)


def balance_classes(ds: Dataset, rng: RngStream) -> Dataset:
    """Downsample benign flows to the total malicious count; malicious rows are kept."""
    benign = np.flatnonzero(ds.is_benign())
    malicious = np.flatnonzero(~ds.is_benign())
    if benign.size == 0 or malicious.size == 0:
        raise DataError("balancing needs both benign and malicious flows")
    if benign.size < malicious.size:
        warnings.warn(f"fewer benign ({benign.size}) than malicious ({malicious.size}) flows; "
                      "benign kept whole", stacklevel=2)
        return ds
    keep = np.sort(benign[rng.choice(benign.size, malicious.size, replace=False)])
    return ds.subset(np.sort(np.concatenate([keep, malicious])))


def split_train_val(ds: Dataset, fraction: float = 0.6, rng: RngStream | None = None):
    """Stratified seeded split into ``(train, val)``.

    Train gets ``round(fraction * N)`` records in total, allotted to classes
    by largest remainder so each class is within one record of its share.
    Classes with fewer than two records go entirely to train.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie strictly between 0 and 1")
    rng = rng or RngStream(0)
    per_class = {}
    small = []
    for c in range(len(ds.schema.classes)):
        idx = np.flatnonzero(ds.labels == c)
        if idx.size == 0:
            continue
        idx = idx[rng.fork(c).permutation(idx.size)]
        if idx.size < 2:
            warnings.warn(f"class {ds.schema.classes[c]!r} has {idx.size} record(s); kept in train", stacklevel=2)
            small.append(idx)
        else:
            per_class[c] = idx
    n_strat = sum(v.size for v in per_class.values())
    target = math.floor(fraction * n_strat + 0.5)
    shares = {c: fraction * v.size for c, v in per_class.items()}
    alloc = {c: math.floor(s) for c, s in shares.items()}
    leftover = target - sum(alloc.values())
    for c in sorted(shares, key=lambda c: (-(shares[c] - alloc[c]), c))[:max(leftover, 0)]:
        alloc[c] += 1
    train_idx = [v[:alloc[c]] for c, v in per_class.items()] + small
    val_idx = [v[alloc[c]:] for c, v in per_class.items()]
    train = np.sort(np.concatenate(train_idx)) if train_idx else np.array([], np.int64)
    val = np.sort(np.concatenate(val_idx)) if val_idx else np.array([], np.int64)
    return ds.subset(train), ds.subset(val)


def batches(ds: Dataset, batch_size: int = 1024, rng: RngStream | None = None, epoch: int = 0):
    """Yield ``(x, labels)`` mini-batches of one shuffled epoch, short final batch included.

    The shuffle is drawn from ``rng.fork(epoch)``: epochs differ from each
    other, and the same seed reproduces every epoch.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if len(ds) == 0:
        raise DataError("cannot batch an empty dataset")
    order = (rng or RngStream(0)).fork(epoch).permutation(len(ds))
    feats = np.ascontiguousarray(ds.features)

    def gen():
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            yield feats[idx], ds.labels[idx]

    return gen()
