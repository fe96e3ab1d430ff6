"""Dataset persistence: manifest, preprocessed-tensor cache, feature tables.

A dataset directory contains:

    dataset.json   generation spec + preprocessing config snapshot
    manifest.tsv   one row per sample: sample_id, split, multi-hot bitstring
    cache/         compressed preprocessed tensors + sqlite index
                   (elsewhere if QTAIL_CACHE_ROOT is set at generation time)
"""

from __future__ import annotations

import dataclasses
import json
import os
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .cache import TensorCache
from .imaging import PrepConfig, preprocess
from .longtail import LongTailSpec, SyntheticDataset

CACHE_ROOT_ENV = "QTAIL_CACHE_ROOT"


def write_manifest(path, sample_ids, split_of: dict, labels: np.ndarray) -> None:
    """Columns, in order: sample_id, split, labels (multi-hot bitstring)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sample_id\tsplit\tlabels\n")
        for i, sid in enumerate(sample_ids):
            bits = "".join(str(int(v)) for v in labels[i])
            fh.write(f"{sid}\t{split_of[sid]}\t{bits}\n")


def read_manifest(path):
    sample_ids, split_names, rows = [], [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header != ["sample_id", "split", "labels"]:
            raise ConfigError(f"unexpected manifest header {header}")
        for line in fh:
            sid, split, bits = line.rstrip("\n").split("\t")
            sample_ids.append(sid)
            split_names.append(split)
            rows.append([int(c) for c in bits])
    labels = np.array(rows, dtype=np.uint8)
    splits = {}
    for i, name in enumerate(split_names):
        splits.setdefault(name, []).append(i)
    splits = {k: np.array(v) for k, v in splits.items()}
    return sample_ids, splits, labels


class _LabeledData:
    """Shared split/label plumbing for the two dataset views."""

    sample_ids: list
    labels: np.ndarray
    splits: dict

    @property
    def num_labels(self) -> int:
        return self.labels.shape[1]

    def split_ids(self, split: str) -> list:
        return [self.sample_ids[i] for i in self.splits[split]]

    def labels_for(self, sample_ids) -> np.ndarray:
        if not hasattr(self, "_id_index"):
            self._id_index = {s: i for i, s in enumerate(self.sample_ids)}
        return self.labels[[self._id_index[s] for s in sample_ids]]


class MemoryDataset(_LabeledData):
    """Preprocessed tensors held in memory; used by tests and small runs."""

    def __init__(self, dataset: SyntheticDataset, prep: PrepConfig | None = None):
        self.sample_ids = dataset.sample_ids
        self.labels = dataset.labels
        self.splits = dataset.splits
        self.spec = dataset.spec
        prep = prep or PrepConfig()
        self.prep = prep
        if dataset.spec.payload_kind == "image":
            self._tensors = {
                sid: preprocess(dataset.payloads[i], prep)
                for i, sid in enumerate(dataset.sample_ids)
            }
        else:
            self._tensors = {
                sid: dataset.payloads[i] for i, sid in enumerate(dataset.sample_ids)
            }

    def get_tensor(self, sample_id: str) -> np.ndarray:
        return self._tensors[sample_id]


class DiskDataset(_LabeledData):
    def __init__(self, root):
        self.root = Path(root)
        meta_path = self.root / "dataset.json"
        if not meta_path.exists():
            raise ConfigError(f"{self.root} is not a dataset directory")
        self.meta = json.loads(meta_path.read_text())
        self.sample_ids, self.splits, self.labels = read_manifest(
            self.root / "manifest.tsv"
        )
        cache_dir = Path(self.meta["cache_dir"])
        if not cache_dir.is_absolute():
            cache_dir = self.root / cache_dir
        self.cache = TensorCache(cache_dir)

    @property
    def spec(self) -> LongTailSpec:
        return LongTailSpec(**self.meta["spec"])

    def get_tensor(self, sample_id: str) -> np.ndarray:
        return self.cache.get(sample_id)


def save_dataset(
    dataset: SyntheticDataset,
    outdir,
    prep: PrepConfig | None = None,
    cache_root=None,
) -> Path:
    """Preprocess-and-cache every payload, write manifest + metadata."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    prep = prep or PrepConfig()

    env_root = os.environ.get(CACHE_ROOT_ENV)
    if cache_root is not None:
        cache_dir = Path(cache_root)
    elif env_root:
        cache_dir = Path(env_root) / outdir.name
    else:
        cache_dir = outdir / "cache"
    cache = TensorCache(cache_dir)
    is_image = dataset.spec.payload_kind == "image"
    for i, sid in enumerate(dataset.sample_ids):
        tensor = preprocess(dataset.payloads[i], prep) if is_image else dataset.payloads[i]
        cache.put(sid, tensor)

    write_manifest(outdir / "manifest.tsv", dataset.sample_ids, dataset.split_of(),
                   dataset.labels)
    is_default_cache = cache_dir.resolve() == (outdir / "cache").resolve()
    meta = {
        "spec": dataclasses.asdict(dataset.spec),
        "prep": dataclasses.asdict(prep),
        "cache_dir": "cache" if is_default_cache else str(cache_dir.resolve()),
        "format_version": 1,
    }
    (outdir / "dataset.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return outdir


def load_dataset(root) -> DiskDataset:
    return DiskDataset(root)


# ---------------------------------------------------------------------------
# Precomputed feature tables (import path for externally computed features)
# ---------------------------------------------------------------------------


def write_feature_table(path, sample_ids, features: np.ndarray) -> None:
    """TSV: sample_id followed by the m feature values, one row per sample."""
    features = np.asarray(features)
    with open(path, "w", encoding="utf-8") as fh:
        cols = "\t".join(f"f{i}" for i in range(features.shape[1]))
        fh.write(f"sample_id\t{cols}\n")
        for sid, row in zip(sample_ids, features):
            vals = "\t".join(repr(float(v)) for v in row)
            fh.write(f"{sid}\t{vals}\n")


def read_feature_table(path) -> dict:
    table = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[0] != "sample_id":
            raise ConfigError("feature table must start with a sample_id column")
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            table[parts[0]] = np.array([float(v) for v in parts[1:]])
    return table
