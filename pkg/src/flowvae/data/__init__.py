"""Flow schema, CSV ingestion, transforms and synthetic data."""

from flowvae.data.csvio import LoadSummary, infer_schema, load_csv, read_csv, save_csv
from flowvae.data.dataset import Dataset, FlowRecord
from flowvae.data.schema import (
    ALL_FEATURES,
    BENIGN,
    BINARY_CLASSES,
    CLASSES,
    FEATURE_SETS,
    MALICIOUS,
    NO_IP_FEATURES,
    TOP40_FEATURES,
    FeatureSchema,
)
from flowvae.data.synthetic import (
    BUILTIN_SPECS,
    ClassSpec,
    SyntheticSpec,
    demo_spec,
    gen_synthetic,
    shifted_cluster_spec,
    two_cluster_spec,
)
from flowvae.data.transforms import (
    ScalingSpec,
    apply_scaling,
    balance_classes,
    batches,
    sample_bounds,
    sample_moments,
    scale_log,
    scale_minmax,
    scale_standard,
    select_features,
    signed_log,
    split_train_val,
)

__all__ = [
    "ALL_FEATURES", "BENIGN", "BINARY_CLASSES", "CLASSES", "ClassSpec", "Dataset", "FEATURE_SETS",
    "FeatureSchema", "FlowRecord", "LoadSummary", "MALICIOUS", "NO_IP_FEATURES", "BUILTIN_SPECS", "demo_spec", "shifted_cluster_spec", "two_cluster_spec", "signed_log", "ScalingSpec", "SyntheticSpec",
    "TOP40_FEATURES", "apply_scaling", "balance_classes", "batches", "gen_synthetic", "infer_schema", "load_csv",
    "read_csv", "sample_bounds", "sample_moments", "save_csv", "scale_log", "scale_minmax",
    "scale_standard", "select_features", "split_train_val",
]
