"""Preset-driven data preparation shared by the CLI and the experiments."""

from __future__ import annotations

from dataclasses import dataclass

from flowvae.data.dataset import Dataset
from flowvae.data.schema import FEATURE_SETS
from flowvae.data.transforms import (
    ScalingSpec,
    apply_scaling,
    balance_classes,
    sample_bounds,
    sample_moments,
    select_features,
    split_train_val,
)
from flowvae.errors import ConfigError
from flowvae.presets import Preset
from flowvae.rng import RngStream


@dataclass
class PreparedData:
    train: Dataset
    val: Dataset
    test: Dataset | None
    scaling: ScalingSpec


def fit_scaling(kind: str, source: Dataset, test: Dataset | None = None) -> ScalingSpec:
    """Scaling parameters for a preset's scaling kind.

    ``minmax_train`` samples bounds from the source data only,
    ``minmax_train_test`` from source and test together.
    """
    feats = source.schema.features
    if kind in ("none", "log"):
        return ScalingSpec(kind, feats)
    if kind == "minmax_train":
        return sample_bounds(source)
    if kind == "minmax_train_test":
        return sample_bounds(source, test) if test is not None and len(test) else sample_bounds(source)
    if kind == "standard":
        return sample_moments(source)
    raise ConfigError(f"unknown scaling {kind!r}")


def _shape(ds: Dataset | None, preset: Preset) -> Dataset | None:
    if ds is None:
        return None
    features = FEATURE_SETS.get(preset.feature_set)
    if features is None:
        raise ConfigError(f"unknown feature set {preset.feature_set!r}")
    if ds.schema.features != tuple(features):
        ds = select_features(ds, features)
    if preset.classification == "binary" and len(ds.schema.classes) > 2:
        ds = ds.to_binary()
    return ds


def prepare(source: Dataset, preset: Preset, rng: RngStream, *, val: Dataset | None = None,
            test: Dataset | None = None, fraction: float = 0.6, balance: bool = True) -> PreparedData:
    """Select features, collapse labels, split, balance train, fit and apply scaling.

    Without an explicit ``val`` the source is split ``fraction`` / rest.
    Only the training split is balanced.
    """
    source, val, test = _shape(source, preset), _shape(val, preset), _shape(test, preset)
    if val is None:
        train, val = split_train_val(source, fraction, rng.fork(0))
    else:
        train = source
    if balance and len(train.schema.classes) > 1 and train.is_benign().any() and (~train.is_benign()).any():
        train = balance_classes(train, rng.fork(1))
    scaling = fit_scaling(preset.scaling, source, test)
    return PreparedData(apply_scaling(train, scaling), apply_scaling(val, scaling),
                        None if test is None else apply_scaling(test, scaling), scaling)


def benign_only(ds: Dataset) -> Dataset:
    return ds.subset(ds.is_benign().nonzero()[0])
