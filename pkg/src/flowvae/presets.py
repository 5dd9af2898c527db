"""Named hyperparameter bundles.

LLC presets: ``1``-``6`` plus the refinements ``4a``, ``4b``, ``4c``, ``6a``.
LBD presets: ``lbd1``-``lbd4`` (``steps1`` trains the benign-only VAE,
``steps2`` the reconstruction-loss detector).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from flowvae.errors import ConfigError

SCALINGS = ("none", "minmax_train", "minmax_train_test", "log")
LAYER_TYPES = ("conv", "dense")
FEATURE_SETS = ("all76", "top40", "no_ip")
CLASSIFICATIONS = ("multiclass", "binary")
LOSS_TERMS = ("P", "R", "KL")


@dataclass(frozen=True)
class Preset:
    name: str
    lr: float
    klm: float | None
    steps: int | None
    scaling: str
    layer_type: str
    regularizer: str = "batchnorm"
    kernel_sizes: tuple[int, ...] = (5, 5, 5)
    strides: tuple[int, ...] = (2, 1, 1)
    feature_set: str = "all76"
    classification: str = "multiclass"
    losses_enabled: frozenset = field(default_factory=lambda: frozenset(LOSS_TERMS))
    steps1: int | None = None
    steps2: int | None = None
    base: str | None = None
    kind: str = "llc"
    # conv channels per layer
    filters: int = 8

    def __post_init__(self):
        if self.scaling not in SCALINGS:
            raise ConfigError(f"scaling must be one of {SCALINGS}, got {self.scaling!r}")
        if self.layer_type not in LAYER_TYPES:
            raise ConfigError(f"layer_type must be one of {LAYER_TYPES}, got {self.layer_type!r}")
        if self.feature_set not in FEATURE_SETS:
            raise ConfigError(f"feature_set must be one of {FEATURE_SETS}, got {self.feature_set!r}")
        if self.classification not in CLASSIFICATIONS:
            raise ConfigError(f"classification must be one of {CLASSIFICATIONS}")
        if len(self.kernel_sizes) != len(self.strides) or not self.kernel_sizes:
            raise ConfigError("kernel_sizes and strides must be non-empty and equal length")
        if min(self.kernel_sizes) < 1 or min(self.strides) < 1:
            raise ConfigError("kernel sizes and strides must be >= 1")
        bad = set(self.losses_enabled) - set(LOSS_TERMS)
        if bad:
            raise ConfigError(f"unknown loss terms {sorted(bad)}")
        if "KL" in self.losses_enabled and self.klm is None:
            raise ConfigError("KL loss enabled but no KL multiplier given")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.filters < 1:
            raise ConfigError("filters must be >= 1")

    @property
    def kl_weight(self) -> float:
        return self.klm if (self.klm is not None and "KL" in self.losses_enabled) else 0.0

    def replace(self, **changes) -> "Preset":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["losses_enabled"] = sorted(self.losses_enabled)
        d["kernel_sizes"] = list(self.kernel_sizes)
        d["strides"] = list(self.strides)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Preset":
        d = dict(d)
        d["losses_enabled"] = frozenset(d.get("losses_enabled", LOSS_TERMS))
        d["kernel_sizes"] = tuple(d["kernel_sizes"])
        d["strides"] = tuple(d["strides"])
        return cls(**d)


_P_ONLY = frozenset({"P"})
_VAE_ONLY = frozenset({"R", "KL"})


def _llc_registry() -> dict[str, Preset]:
    p1 = Preset("1", lr=1e-2, klm=1.0, steps=15_000, scaling="none", layer_type="conv")
    p2 = p1.replace(name="2", klm=1e-2, scaling="minmax_train")
    p3 = p2.replace(name="3", lr=1e-4, steps=30_000, scaling="minmax_train_test")
    p4 = p3.replace(name="4", klm=1e-4, scaling="log")
    p5 = p4.replace(name="5", layer_type="dense")
    p6 = p4.replace(name="6", klm=None, losses_enabled=_P_ONLY)
    p4a = p4.replace(name="4a", base="4", classification="binary", feature_set="top40", strides=(1, 1, 1))
    p6a = p6.replace(name="6a", base="6", classification="binary", feature_set="top40", strides=(1, 1, 1))
    p4b = p4a.replace(name="4b", base="4a", klm=1e-6, steps=50_000)
    p4c = p4a.replace(name="4c", base="4a", klm=1e-6, steps=140_000, kernel_sizes=(7, 7, 7), strides=(2, 2, 1))
    return {p.name: p for p in (p1, p2, p3, p4, p5, p6, p4a, p4b, p4c, p6a)}


def _lbd_registry() -> dict[str, Preset]:
    l1 = Preset("lbd1", lr=1e-4, klm=1.0, steps=None, steps1=20_000, steps2=30_000, scaling="log",
                layer_type="conv", classification="binary", losses_enabled=_VAE_ONLY, kind="lbd")
    l2 = l1.replace(name="lbd2", klm=4.0, feature_set="top40", strides=(1, 1, 1))
    l3 = l2.replace(name="lbd3", klm=1e-6, steps1=1_500)
    l4 = l3.replace(name="lbd4", steps1=100_000, kernel_sizes=(7, 7, 7), strides=(2, 2, 1))
    return {p.name: p for p in (l1, l2, l3, l4)}


LLC_PRESETS = _llc_registry()
LBD_PRESETS = _lbd_registry()
PRESETS = {**LLC_PRESETS, **LBD_PRESETS}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; registered: {', '.join(PRESETS)}") from None
