"""Immutable, column-major flow datasets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from flowvae.data.schema import BINARY_CLASSES, FeatureSchema
from flowvae.errors import DimensionError

NO_IP = -1


@dataclass(frozen=True)
class FlowRecord:
    features: np.ndarray
    label: int
    src_ip: int | None = None
    dst_ip: int | None = None


def _frozen(a, dtype, order="C"):
    out = np.array(a, dtype=dtype, order=order, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """Flows stored as a ``[N, n]`` Fortran-ordered matrix plus label/IP vectors.

    Transforms never modify a dataset; they return a new one.
    """

    schema: FeatureSchema
    features: np.ndarray
    labels: np.ndarray
    src_ip: np.ndarray = field(default=None)
    dst_ip: np.ndarray = field(default=None)

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1 and feats.size == 0:
            feats = feats.reshape(0, self.schema.width)
        if feats.ndim != 2 or feats.shape[1] != self.schema.width:
            raise DimensionError(f"features shape {feats.shape} does not match schema width {self.schema.width}")
        n = feats.shape[0]
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != n:
            raise DimensionError("labels length differs from record count")
        if n and (labels.min() < 0 or labels.max() >= len(self.schema.classes)):
            raise DimensionError("label index outside the class list")
        src = np.full(n, NO_IP, np.int64) if self.src_ip is None else np.asarray(self.src_ip, np.int64)
        dst = np.full(n, NO_IP, np.int64) if self.dst_ip is None else np.asarray(self.dst_ip, np.int64)
        if src.shape != (n,) or dst.shape != (n,):
            raise DimensionError("ip vectors must have one entry per record")
        object.__setattr__(self, "features", _frozen(feats, np.float64, order="F"))
        object.__setattr__(self, "labels", _frozen(labels, np.int64))
        object.__setattr__(self, "src_ip", _frozen(src, np.int64))
        object.__setattr__(self, "dst_ip", _frozen(dst, np.int64))

    def __len__(self):
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[1]

    @property
    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(self.schema.classes))

    def counts(self) -> dict[str, int]:
        return dict(zip(self.schema.classes, (int(c) for c in self.class_counts)))

    def is_benign(self) -> np.ndarray:
        return self.labels == self.schema.benign_index

    def record(self, i: int) -> FlowRecord:
        src, dst = int(self.src_ip[i]), int(self.dst_ip[i])
        return FlowRecord(self.features[i].copy(), int(self.labels[i]),
                          None if src == NO_IP else src, None if dst == NO_IP else dst)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        if idx.dtype != bool:
            idx = idx.astype(np.intp)
        return Dataset(self.schema, self.features[idx], self.labels[idx], self.src_ip[idx], self.dst_ip[idx])

    def with_features(self, features, schema: FeatureSchema | None = None) -> "Dataset":
        return Dataset(schema or self.schema, features, self.labels, self.src_ip, self.dst_ip)

    def to_binary(self) -> "Dataset":
        """Collapse every non-benign class into ``Malicious``."""
        if self.schema.classes == BINARY_CLASSES:
            return self
        schema = FeatureSchema(self.schema.features, BINARY_CLASSES, self.schema.label_column)
        labels = (self.labels != self.schema.benign_index).astype(np.int64)
        return Dataset(schema, self.features, labels, self.src_ip, self.dst_ip)

    @staticmethod
    def concat(parts: list["Dataset"]) -> "Dataset":
        if not parts:
            raise ValueError("nothing to concatenate")
        schema = parts[0].schema
        if any(p.schema != schema for p in parts):
            raise DimensionError("cannot concatenate datasets with different schemas")
        return Dataset(schema,
                       np.concatenate([p.features for p in parts]),
                       np.concatenate([p.labels for p in parts]),
                       np.concatenate([p.src_ip for p in parts]),
                       np.concatenate([p.dst_ip for p in parts]))
