"""Seeded batch production: one permutation per (seed, epoch), partial final
batch kept."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class LabeledBatch:
    sample_ids: list
    labels: np.ndarray  # (B, num_labels)
    payloads: np.ndarray | None = None


def make_batches(
    sample_ids, labels: np.ndarray, batch_size: int, stream: np.random.Generator
) -> list:
    """Shuffle with the given stream and slice into LabeledBatch objects.

    The permutation is a pure function of the stream, which callers derive
    from (seed, epoch) only; batch order therefore never depends on the
    model, worker count, or execution order.
    """
    n = len(sample_ids)
    if n == 0:
        raise ValueError("cannot batch an empty split")
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    labels = np.asarray(labels)
    if labels.shape[0] != n:
        raise ValueError(f"{n} sample ids but {labels.shape[0]} label rows")
    perm = stream.permutation(n)
    batches = []
    for start in range(0, n, batch_size):
        idx = perm[start : start + batch_size]
        batches.append(
            LabeledBatch(
                sample_ids=[sample_ids[i] for i in idx],
                labels=labels[idx],
            )
        )
    return batches
