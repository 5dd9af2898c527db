"""Seeded Gaussian flow generator for desk-scale experiments."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from flowvae.data.dataset import Dataset
from flowvae.data.schema import (
    ALL_FEATURES,
    BENIGN,
    BINARY_CLASSES,
    CLASSES,
    MALICIOUS,
    TOP40_FEATURES,
    FeatureSchema,
    ip_to_int,
)
from flowvae.rng import RngStream

_BENIGN_NET = ip_to_int("10.0.0.0")
_ATTACK_NET = ip_to_int("172.16.0.0")
_VICTIM = ip_to_int("192.168.10.50")


@dataclass
class ClassSpec:
    name: str
    mean: list[float]
    spread: list[float]
    count: int
    sources: int = 1

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"class {self.name!r}: count must be >= 1")
        if len(self.mean) != len(self.spread):
            raise ValueError(f"class {self.name!r}: mean and spread lengths differ")
        if min(self.spread, default=1.0) <= 0:
            raise ValueError(f"class {self.name!r}: spreads must be positive")
        if self.sources < 1:
            raise ValueError(f"class {self.name!r}: sources must be >= 1")


@dataclass
class SyntheticSpec:
    features: list[str]
    classes: list[ClassSpec]
    class_names: list[str] = field(default_factory=lambda: list(CLASSES))
    seed: int = 0

    def schema(self) -> FeatureSchema:
        return FeatureSchema(tuple(self.features), tuple(self.class_names))

    def to_json(self) -> str:
        return json.dumps({
            "features": self.features, "class_names": self.class_names, "seed": self.seed,
            "classes": [vars(c) for c in self.classes],
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "SyntheticSpec":
        d = json.loads(text)
        return cls(d["features"], [ClassSpec(**c) for c in d["classes"]],
                   d.get("class_names", list(CLASSES)), d.get("seed", 0))


def gen_synthetic(spec: SyntheticSpec, rng: RngStream | None = None) -> Dataset:
    """Draw ``mean + spread * N(0, 1)`` records per class; IP features follow the class's source pool."""
    rng = rng or RngStream(spec.seed)
    schema = spec.schema()
    parts_x, parts_y, parts_src, parts_dst = [], [], [], []
    for ci, cs in enumerate(spec.classes):
        if len(cs.mean) != schema.width:
            raise ValueError(f"class {cs.name!r}: mean has {len(cs.mean)} entries, schema has {schema.width}")
        label = schema.classes.index(cs.name)
        stream = rng.fork(ci)
        x = np.asarray(cs.mean) + np.asarray(cs.spread) * stream.normal((cs.count, schema.width))
        pick = stream.integers(0, cs.sources, cs.count)
        if cs.name == BENIGN:
            src = _BENIGN_NET + 256 + pick
            dst = _BENIGN_NET + 65536 + stream.integers(0, 64, cs.count)
        else:
            src = _ATTACK_NET + 256 * (ci + 1) + pick
            dst = np.full(cs.count, _VICTIM)
        for name, values in (("Src IP", src), ("Dst IP", dst)):
            if name in schema.features:
                x[:, schema.features.index(name)] = values
        parts_x.append(x)
        parts_y.append(np.full(cs.count, label))
        parts_src.append(src)
        parts_dst.append(dst)
    # interleave classes so a streamed trace mixes traffic
    order = rng.fork(len(spec.classes)).permutation(sum(c.count for c in spec.classes))
    return Dataset(schema, np.concatenate(parts_x)[order], np.concatenate(parts_y)[order],
                   np.concatenate(parts_src)[order], np.concatenate(parts_dst)[order])


def two_cluster_spec(n_features: int = 40, count: int = 2000, separation: float = 6.0,
                     spread: float = 1.0, seed: int = 0) -> SyntheticSpec:
    """Benign vs malicious isotropic clusters whose means are ``separation * spread`` apart."""
    rng = RngStream(seed).fork(99)
    direction = rng.normal(n_features)
    direction /= np.linalg.norm(direction)
    base = rng.uniform_range(-2.0, 2.0, n_features)
    names = list(TOP40_FEATURES[:n_features]) if n_features <= 40 else [f"f{i}" for i in range(n_features)]
    sp = [spread] * n_features
    return SyntheticSpec(
        names,
        [ClassSpec(BENIGN, base.tolist(), sp, count, sources=200),
         ClassSpec(MALICIOUS, (base + separation * spread * direction).tolist(), sp, count, sources=20)],
        list(BINARY_CLASSES), seed)


def shifted_cluster_spec(n_features: int = 40, benign: int = 2000, anomalous: int = 2000,
                         shift: float = 8.0, spread: float = 1.0, seed: int = 0) -> SyntheticSpec:
    """Benign cluster plus an anomaly cluster displaced by ``shift`` spreads along every feature."""
    rng = RngStream(seed).fork(98)
    base = rng.uniform_range(-2.0, 2.0, n_features)
    names = list(TOP40_FEATURES[:n_features]) if n_features <= 40 else [f"f{i}" for i in range(n_features)]
    sp = [spread] * n_features
    return SyntheticSpec(
        names,
        [ClassSpec(BENIGN, base.tolist(), sp, benign, sources=200),
         ClassSpec(MALICIOUS, (base + shift * spread).tolist(), sp, anomalous, sources=20)],
        list(BINARY_CLASSES), seed)


def demo_spec(seed: int = 0, benign: int = 3000, scale: float = 1.0) -> SyntheticSpec:
    """Full 76-feature, 8-class spec with flow-like magnitudes.

    Each attack class rescales a random third of the benign feature means,
    so classes overlap on most features and differ on a few.
    """
    rng = RngStream(seed).fork(97)
    width = len(ALL_FEATURES)
    log_mean = rng.uniform_range(0.0, 9.0, width)
    base = np.exp(log_mean)
    counts = [benign, 120, 300, 600, 200, 500, 60, 600]
    sources = [400, 4, 4, 10, 6, 40, 10, 40]
    classes = []
    for ci, name in enumerate(CLASSES):
        mean = base.copy()
        if name != BENIGN:
            pick = rng.fork(ci).uniform(width) < 1.0 / 3.0
            factor = np.exp(rng.fork(ci, 1).uniform_range(-2.5, 2.5, width))
            mean = np.where(pick, mean * factor, mean)
        spread = 0.25 * mean + 1.0
        n = max(1, int(round(counts[ci] * scale)))
        classes.append(ClassSpec(name, mean.tolist(), spread.tolist(), n, sources=sources[ci]))
    return SyntheticSpec(list(ALL_FEATURES), classes, list(CLASSES), seed)


BUILTIN_SPECS = {
    "demo": demo_spec,
    "two-cluster": two_cluster_spec,
    "shifted": shifted_cluster_spec,
}
