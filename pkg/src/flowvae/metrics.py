"""Evaluation artifacts: confusion matrices, training logs, feature importance, throughput."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from flowvae.data.schema import MALICIOUS
from flowvae.rng import RngStream

LOG_FIELDS = ("step", "split", "accuracy", "p_loss", "kl_loss", "r_loss", "total_loss")
SPLITS = ("train", "val", "test")


@dataclass
class ConfusionMatrix:
    """Counts with rows = true class, columns = predicted class."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        c = len(self.class_names)
        if self.counts.shape != (c, c):
            raise ValueError(f"counts must be {c}x{c}")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def rates(self) -> np.ndarray:
        """Row-normalized matrix; rows without samples are NaN."""
        rows = self.counts.sum(axis=1, keepdims=True).astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, self.counts / rows, np.nan)


def confusion_matrix(preds, labels, n_classes: int, class_names=None) -> ConfusionMatrix:
    preds, labels = np.asarray(preds, np.int64), np.asarray(labels, np.int64)
    if preds.shape != labels.shape:
        raise ValueError(f"preds and labels differ in length ({preds.size} vs {labels.size})")
    if preds.size and (min(preds.min(), labels.min()) < 0 or max(preds.max(), labels.max()) >= n_classes):
        raise ValueError(f"class index outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), np.int64)
    np.add.at(counts, (labels, preds), 1)
    names = tuple(class_names) if class_names is not None else tuple(str(i) for i in range(n_classes))
    return ConfusionMatrix(counts, names)


def per_class_accuracy(cm: ConfusionMatrix):
    """Per-class recall (None for classes without samples) and overall accuracy."""
    rows = cm.counts.sum(axis=1)
    per = [None if r == 0 else float(cm.counts[i, i] / r) for i, r in enumerate(rows)]
    overall = float(np.trace(cm.counts) / cm.total) if cm.total else None
    return per, overall


def binary_collapse(cm: ConfusionMatrix, benign_index: int = 0) -> ConfusionMatrix:
    """Merge every non-benign class into a single malicious class."""
    c = len(cm.class_names)
    if not 0 <= benign_index < c:
        raise ValueError("benign_index out of range")
    mal = [i for i in range(c) if i != benign_index]
    b = benign_index
    counts = np.array([
        [cm.counts[b, b], cm.counts[b, mal].sum()],
        [cm.counts[mal, b].sum(), cm.counts[np.ix_(mal, mal)].sum()],
    ], dtype=np.int64)
    return ConfusionMatrix(counts, (cm.class_names[b], MALICIOUS if c > 2 else cm.class_names[mal[0]]))


def balanced_accuracy(cm: ConfusionMatrix) -> float:
    per, _ = per_class_accuracy(cm)
    present = [p for p in per if p is not None]
    return float(np.mean(present)) if present else float("nan")


def write_confusion_csv(cm: ConfusionMatrix, path, rates: bool = False) -> None:
    values = cm.rates() if rates else cm.counts
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\predicted", *cm.class_names])
        for name, row in zip(cm.class_names, values):
            if rates:
                w.writerow([name, *("" if math.isnan(v) else repr(float(v)) for v in row)])
            else:
                w.writerow([name, *(int(v) for v in row)])


def read_confusion_csv(path) -> ConfusionMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    names = tuple(rows[0][1:])
    return ConfusionMatrix([[int(v) for v in r[1:]] for r in rows[1:]], names)


@dataclass
class TrainLogRow:
    step: int
    split: str
    accuracy: float | None = None
    p_loss: float | None = None
    kl_loss: float | None = None
    r_loss: float | None = None
    total_loss: float | None = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}")


def _fmt(v):
    return "" if v is None else repr(float(v))


def write_log(rows, path, interval: int | None = None) -> None:
    """Write training log rows as CSV; empty fields mark absent values."""
    rows = list(rows)
    steps = [r.step for r in rows]
    if steps != sorted(steps):
        raise ValueError("log rows must be sorted by step")
    if interval and any(s % interval for s in steps):
        raise ValueError(f"log steps must be multiples of {interval}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LOG_FIELDS)
        for r in rows:
            w.writerow([r.step, r.split, _fmt(r.accuracy), _fmt(r.p_loss), _fmt(r.kl_loss),
                        _fmt(r.r_loss), _fmt(r.total_loss)])


def read_log(path) -> list[TrainLogRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != LOG_FIELDS:
            raise ValueError(f"unexpected log header {reader.fieldnames}")
        out = []
        for rec in reader:
            vals = {k: (None if rec[k] == "" else float(rec[k])) for k in LOG_FIELDS[2:]}
            out.append(TrainLogRow(int(rec["step"]), rec["split"], **vals))
    return out


@dataclass
class ImportanceReport:
    features: tuple[str, ...]
    scores: np.ndarray
    baseline: float
    ranks: np.ndarray = field(init=False)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        order = np.argsort(-self.scores, kind="stable")
        self.ranks = np.empty(len(order), np.int64)
        self.ranks[order] = np.arange(1, len(order) + 1)

    def ranked(self) -> list[tuple[str, float]]:
        order = np.argsort(self.ranks)
        return [(self.features[i], float(self.scores[i])) for i in order]


def permutation_importance(model, x, labels, rng: RngStream, repeats: int = 5,
                           feature_names=None) -> ImportanceReport:
    """Mean accuracy drop when each column is shuffled (seeded), ranked descending.

    ``model`` is anything with ``predict(x) -> class indices``, or such a
    callable itself.
    """
    predict = model.predict if hasattr(model, "predict") else model
    if repeats < 1:
        raise ValueError("at least 1 repeat required")
    x = np.array(x, dtype=np.float64)
    labels = np.asarray(labels)
    if x.shape[0] == 0:
        raise ValueError("importance needs a non-empty dataset")
    baseline = float(np.mean(predict(x) == labels))
    scores = np.zeros(x.shape[1])
    for j in range(x.shape[1]):
        original = x[:, j].copy()
        drops = []
        for r in range(repeats):
            x[:, j] = original[rng.fork(j, r).permutation(len(original))]
            drops.append(baseline - float(np.mean(predict(x) == labels)))
        x[:, j] = original
        scores[j] = np.mean(drops)
    names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(x.shape[1]))
    return ImportanceReport(names, scores, baseline)


@dataclass
class BenchResult:
    batch_size: int
    width: int
    iterations: int
    ms_mean: float
    ms_std: float

    @property
    def flows_per_sec(self) -> float:
        return self.batch_size * 1000.0 / self.ms_mean

    def report(self) -> str:
        return (f"batch: {self.batch_size} x {self.width}\n"
                f"iterations: {self.iterations}\n"
                f"ms_per_batch: {self.ms_mean:.4f} +/- {self.ms_std:.4f}\n"
                f"flows_per_sec: {self.flows_per_sec:.1f}")


def throughput_bench(model, batch: np.ndarray, iterations: int = 50, warmup: int = 3) -> BenchResult:
    """Wall-clock inference timing; warm-up passes are excluded from the statistics.

    ``model`` is a trained model (its ``infer`` method is timed) or a callable.
    """
    forward = model.infer if hasattr(model, "infer") else model
    if iterations < 10:
        raise ValueError("iterations must be >= 10")
    for _ in range(warmup):
        forward(batch)
    times = []
    for _ in range(iterations):
        t0 = time.perf_counter()
        forward(batch)
        times.append((time.perf_counter() - t0) * 1000.0)
    return BenchResult(batch.shape[0], batch.shape[1], iterations, float(np.mean(times)), float(np.std(times)))
