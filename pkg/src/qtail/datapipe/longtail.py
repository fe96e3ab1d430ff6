"""Synthetic long-tailed multi-label dataset generation.

Label r carries target frequency ``head_frequency * decay**r``. Positives
are planted by per-split quota (never fewer than ``MIN_POSITIVES`` per label
per split) so rare labels stay evaluable in every split; labels are assigned
independently of each other, so co-occurrence happens naturally. Every
positive label adds a label-specific random pattern to the sample payload,
scaled by ``signal_strength``, which is what makes the labels learnable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..mlcore import Rng

MIN_POSITIVES = 10

SPLIT_NAMES = ("train", "val", "test")
DEFAULT_FRACTIONS = (0.7, 0.1, 0.2)


@dataclass(frozen=True)
class LongTailSpec:
    num_labels: int = 8
    num_samples: int = 4000
    head_frequency: float = 0.3
    decay: float = 0.8
    signal_strength: float = 30.0
    seed: int = 0
    payload_kind: str = "image"  # "image" or "vector"
    image_size: int = 64
    channels: int = 1
    vector_dim: int = 64
    noise_scale: float = 20.0

    def __post_init__(self):
        if self.num_labels < 1 or self.num_samples < 1:
            raise ConfigError("num_labels and num_samples must be >= 1")
        if not 0 < self.head_frequency <= 1:
            raise ConfigError("head_frequency must be in (0, 1]")
        if not 0 < self.decay <= 1:
            raise ConfigError("decay must be in (0, 1]")
        if self.signal_strength < 0:
            raise ConfigError("signal_strength must be >= 0")
        if self.payload_kind not in ("image", "vector"):
            raise ConfigError(f"unknown payload_kind {self.payload_kind!r}")

    def frequencies(self) -> np.ndarray:
        return self.head_frequency * self.decay ** np.arange(self.num_labels)


@dataclass
class SyntheticDataset:
    spec: LongTailSpec
    sample_ids: list
    labels: np.ndarray  # (N, num_labels) uint8 multi-hot
    splits: dict  # split name -> sorted index array
    payloads: np.ndarray  # (N, H, W, C) uint8 or (N, dim) float64

    @property
    def num_labels(self) -> int:
        return self.labels.shape[1]

    def split_ids(self, split: str) -> list:
        return [self.sample_ids[i] for i in self.splits[split]]

    def split_of(self) -> dict:
        out = {}
        for name, idx in self.splits.items():
            for i in idx:
                out[self.sample_ids[i]] = name
        return out

    def labels_for(self, sample_ids) -> np.ndarray:
        index = {sid: i for i, sid in enumerate(self.sample_ids)}
        return self.labels[[index[s] for s in sample_ids]]

    def label_counts(self, split: str | None = None) -> np.ndarray:
        rows = self.labels if split is None else self.labels[self.splits[split]]
        return rows.sum(axis=0, dtype=np.int64)


def _assign_splits(rng: Rng, n: int, fractions) -> dict:
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions {fractions} do not sum to 1")
    perm = rng.stream("split").permutation(n)
    bounds = np.round(np.cumsum(fractions) * n).astype(int)
    starts = np.concatenate([[0], bounds[:-1]])
    return {
        name: np.sort(perm[a:b])
        for name, a, b in zip(SPLIT_NAMES, starts, bounds)
    }


def generate_longtail(
    spec: LongTailSpec, fractions=DEFAULT_FRACTIONS
) -> SyntheticDataset:
    """Generate the dataset plus its seeded train/val/test assignment."""
    n, N = spec.num_labels, spec.num_samples
    rng = Rng(spec.seed)
    freqs = spec.frequencies()
    if spec.decay == 1.0:
        warnings.warn(
            "decay=1.0 gives equal label frequencies (no long tail)", stacklevel=2
        )

    # Feasibility: the rarest label must support MIN_POSITIVES positives.
    for r in range(n):
        if round(freqs[r] * N) < MIN_POSITIVES:
            raise ConfigError(
                f"label rank {r} is infeasible: expected positives "
                f"{freqs[r] * N:.1f} < {MIN_POSITIVES} at frequency {freqs[r]:.4g}"
            )
    splits = _assign_splits(rng, N, fractions)
    for name, idx in splits.items():
        if len(idx) < MIN_POSITIVES:
            raise ConfigError(
                f"split {name!r} has {len(idx)} samples; cannot host "
                f"{MIN_POSITIVES} positives per label"
            )

    labels = np.zeros((N, n), dtype=np.uint8)
    floored = []
    for r in range(n):
        for name in SPLIT_NAMES:
            idx = splits[name]
            want = int(round(freqs[r] * len(idx)))
            quota = min(len(idx), max(MIN_POSITIVES, want))
            if quota > want:
                floored.append((r, name))
            chosen = rng.stream("labels", r, name).choice(
                len(idx), size=quota, replace=False
            )
            labels[idx[chosen], r] = 1
    if floored:
        warnings.warn(
            f"minimum-positives floor raised {len(floored)} (rank, split) "
            f"quotas above their target frequency",
            stacklevel=2,
        )

    sample_ids = [f"s{i:06d}" for i in range(N)]
    if spec.payload_kind == "image":
        shape = (spec.image_size, spec.image_size, spec.channels)
        patterns = np.stack(
            [rng.stream("pattern", r).normal(0.0, 1.0, size=shape) for r in range(n)]
        )
        payloads = np.empty((N,) + shape, dtype=np.uint8)
        for i, sid in enumerate(sample_ids):
            base = rng.stream("payload", sid).normal(128.0, spec.noise_scale, size=shape)
            signal = np.tensordot(labels[i].astype(np.float64), patterns, axes=1)
            payloads[i] = np.clip(base + spec.signal_strength * signal, 0, 255).astype(
                np.uint8
            )
    else:
        patterns = np.stack(
            [
                rng.stream("pattern", r).normal(0.0, 1.0, size=spec.vector_dim)
                for r in range(n)
            ]
        )
        payloads = np.empty((N, spec.vector_dim))
        for i, sid in enumerate(sample_ids):
            base = rng.stream("payload", sid).normal(0.0, 1.0, size=spec.vector_dim)
            payloads[i] = base + spec.signal_strength * (labels[i] @ patterns)

    return SyntheticDataset(spec, sample_ids, labels, splits, payloads)
