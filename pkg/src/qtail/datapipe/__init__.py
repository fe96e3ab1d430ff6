from .batching import LabeledBatch, make_batches
from .cache import TensorCache
from .dataset import (
    DiskDataset,
    MemoryDataset,
    load_dataset,
    read_feature_table,
    read_manifest,
    save_dataset,
    write_feature_table,
    write_manifest,
)
from .imaging import (
    AugmentDecision,
    PrepConfig,
    apply_augment,
    augment,
    draw_augment_decision,
    preprocess,
)
from .longtail import LongTailSpec, SyntheticDataset, generate_longtail
from .tensorio import deserialize_tensor, serialize_tensor

__all__ = [
    "AugmentDecision",
    "DiskDataset",
    "LabeledBatch",
    "LongTailSpec",
    "MemoryDataset",
    "PrepConfig",
    "SyntheticDataset",
    "TensorCache",
    "apply_augment",
    "augment",
    "deserialize_tensor",
    "draw_augment_decision",
    "generate_longtail",
    "load_dataset",
    "make_batches",
    "preprocess",
    "read_feature_table",
    "read_manifest",
    "save_dataset",
    "serialize_tensor",
    "write_feature_table",
    "write_manifest",
]
