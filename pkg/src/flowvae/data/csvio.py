"""CSV ingestion and export in the CICFlowMeter dialect (header row, comma separated)."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from flowvae.data.dataset import NO_IP, Dataset
from flowvae.data.schema import (
    ALL_FEATURES,
    BINARY_CLASSES,
    CLASSES,
    IP_FEATURES,
    MALICIOUS,
    FeatureSchema,
    int_to_ip,
    ip_to_int,
)
from flowvae.errors import DataError, SchemaError


@dataclass
class LoadSummary:
    path: str
    rows_read: int = 0
    rows_loaded: int = 0
    skipped: Counter = field(default_factory=Counter)
    skipped_lines: list[int] = field(default_factory=list)

    @property
    def skip_count(self) -> int:
        return sum(self.skipped.values())

    def report(self) -> str:
        lines = [f"file: {self.path}", f"rows read: {self.rows_read}", f"rows loaded: {self.rows_loaded}",
                 f"rows skipped: {self.skip_count}"]
        for reason, n in sorted(self.skipped.items()):
            lines.append(f"  {reason}: {n}")
        if self.skipped_lines:
            shown = ", ".join(map(str, self.skipped_lines[:20]))
            more = " ..." if len(self.skipped_lines) > 20 else ""
            lines.append(f"  first skipped lines: {shown}{more}")
        return "\n".join(lines)


def read_csv(path, schema: FeatureSchema | None = None,
             ip_backfill: dict[str, tuple[str, str]] | None = None) -> tuple[Dataset, LoadSummary]:
    """Load a flow CSV, mapping columns by header name.

    Rows with unparseable or non-finite numbers, or labels outside the
    class registry, are skipped and counted. ``ip_backfill`` maps a class
    name to ``(src, dst)`` addresses used when a row's IP fields are blank.
    """
    schema = schema or FeatureSchema()
    summary = LoadSummary(str(path))
    backfill = {k: (ip_to_int(s), ip_to_int(d)) for k, (s, d) in (ip_backfill or {}).items()}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, no header row") from None
        pos = {name: i for i, name in enumerate(header)}
        required = list(schema.features) + [schema.label_column]
        missing = [name for name in required if name not in pos]
        if missing:
            raise SchemaError(f"{path}: missing required columns: {', '.join(missing)}")
        feat_cols = [pos[f] for f in schema.features]
        ip_slots = {f: schema.features.index(f) for f in schema.ip_features}
        label_col = pos[schema.label_column]
        src_col, dst_col = pos.get("Src IP"), pos.get("Dst IP")

        rows, labels, srcs, dsts = [], [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            summary.rows_read += 1
            reason = None
            if len(row) < len(header):
                reason = "short_row"
            else:
                label = schema.class_index(row[label_col])
                if label is None:
                    reason = "unknown_label"
            if reason is None:
                src, dst, reason = _parse_ips(row, src_col, dst_col, schema.classes[label], backfill)
            if reason is None:
                values, reason = _parse_features(row, feat_cols, ip_slots, src, dst)
            if reason is not None:
                summary.skipped[reason] += 1
                summary.skipped_lines.append(line_no)
                continue
            rows.append(values)
            labels.append(label)
            srcs.append(NO_IP if src is None else src)
            dsts.append(NO_IP if dst is None else dst)
    summary.rows_loaded = len(rows)
    feats = np.array(rows, dtype=np.float64).reshape(len(rows), schema.width)
    return Dataset(schema, feats, np.array(labels, np.int64), np.array(srcs, np.int64),
                   np.array(dsts, np.int64)), summary


def _parse_ips(row, src_col, dst_col, class_name, backfill):
    out = []
    for col, slot in ((src_col, 0), (dst_col, 1)):
        if col is None:
            out.append(None)
            continue
        text = row[col].strip()
        if not text:
            if class_name in backfill:
                out.append(backfill[class_name][slot])
            else:
                out.append(None)
            continue
        try:
            out.append(ip_to_int(text))
        except ValueError:
            return None, None, "bad_ip"
    return out[0], out[1], None


def _parse_features(row, feat_cols, ip_slots, src, dst):
    values = []
    ip_values = {"Src IP": src, "Dst IP": dst}
    ip_at = {slot: name for name, slot in ip_slots.items()}
    for slot, col in enumerate(feat_cols):
        if slot in ip_at:
            ip = ip_values[ip_at[slot]]
            if ip is None:
                return None, "missing_ip"
            values.append(float(ip))
            continue
        try:
            v = float(row[col])
        except ValueError:
            return None, "unparseable"
        if not math.isfinite(v):
            return None, "non_finite"
        values.append(v)
    return values, None


def infer_schema(path, label_column: str = "Label") -> FeatureSchema:
    """Schema for a CSV from its header and label values.

    Files carrying every standard feature get the standard schema; other
    files use their own columns (IP columns kept as metadata). Labels that
    include the collapsed ``Malicious`` class select the binary class list.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, no header row") from None
        if label_column not in header:
            raise SchemaError(f"{path}: missing required columns: {label_column}")
        col = header.index(label_column)
        binary = FeatureSchema(classes=BINARY_CLASSES)
        labels = {row[col].strip() for row in reader if len(row) > col}
    is_binary = bool(labels) and all(binary.class_index(v) is not None for v in labels) and any(
        binary.class_index(v) == BINARY_CLASSES.index(MALICIOUS) for v in labels)
    classes = BINARY_CLASSES if is_binary else CLASSES
    if all(f in header for f in ALL_FEATURES):
        return FeatureSchema(ALL_FEATURES, classes, label_column)
    features = tuple(h for h in header if h != label_column and h not in IP_FEATURES)
    return FeatureSchema(features, classes, label_column)


def load_csv(path, schema: FeatureSchema | None = None, ip_backfill=None) -> Dataset:
    return read_csv(path, schema, ip_backfill)[0]


def save_csv(ds: Dataset, path) -> None:
    """Write ``ds`` in the same dialect ``load_csv`` reads; floats are written losslessly."""
    schema = ds.schema
    extra_ip = [f for f in IP_FEATURES if f not in schema.features
                and np.any((ds.src_ip if f == "Src IP" else ds.dst_ip) != NO_IP)]
    header = list(schema.features) + extra_ip + [schema.label_column]
    ip_cols = {schema.features.index(f): f for f in schema.ip_features}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        feats = np.ascontiguousarray(ds.features)
        for i in range(len(ds)):
            row = []
            for j, v in enumerate(feats[i]):
                row.append(int_to_ip(int(v)) if j in ip_cols else repr(float(v)))
            for f in extra_ip:
                ip = int(ds.src_ip[i] if f == "Src IP" else ds.dst_ip[i])
                row.append("" if ip == NO_IP else int_to_ip(ip))
            row.append(schema.classes[ds.labels[i]])
            writer.writerow(row)
