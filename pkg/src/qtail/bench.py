"""Wall-clock benchmark harness for training steps of either head.

Protocol: stage an all-zero batch in memory, run ``warmup_steps`` untimed
training steps (absorbing JIT compilation and cache effects), then time each
of ``measured_steps`` steps on a monotonic clock. One step is a full
forward + loss + backward + optimizer update; data staging is excluded.
Absolute times are hardware-specific and recorded, never asserted; scaling
shapes across label counts are what the tests check.
"""

from __future__ import annotations

import datetime
import math
import os
import platform
import tempfile
import time
from dataclasses import dataclass, replace

import numba
import numpy as np

from . import model
from .datapipe import LabeledBatch
from .errors import ConfigError, QtailError
from .mlcore import AdamState, Rng, adam_step
from .model import FeatureExtractor, extract_features_batch
from .qsim import MAX_QUBITS, state_bytes


@dataclass(frozen=True)
class BenchProtocol:
    head: str = "dqc"
    num_labels: int = 8
    warmup_steps: int = 10
    measured_steps: int = 30
    batch_size: int = 32
    feature_dim: int = 2048
    depth: int = 3
    payload_shape: tuple = (64, 64, 1)
    lr: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.head not in ("cdl", "dqc"):
            raise ConfigError(f"head must be 'cdl' or 'dqc', got {self.head!r}")
        if self.warmup_steps < 1:
            raise ConfigError("warmup_steps must be >= 1")
        if self.measured_steps < 2:
            raise ConfigError("measured_steps must be >= 2")
        if self.batch_size < 1 or self.num_labels < 1:
            raise ConfigError("batch_size and num_labels must be >= 1")
        if self.head == "dqc" and self.num_labels > MAX_QUBITS:
            raise ConfigError(
                f"dqc head needs one qubit per label; {self.num_labels} exceeds "
                f"the {MAX_QUBITS}-qubit cap"
            )


@dataclass
class BenchResult:
    protocol: BenchProtocol
    samples: list
    warmup_samples: list
    mean: float
    std: float
    final_loss: float
    fingerprint: dict

    @property
    def warmup_dominates_first_step(self) -> bool:
        return self.warmup_samples[0] >= self.mean


def zero_batch(batch_size: int, shape, n: int) -> LabeledBatch:
    """All-zero payloads and all-zero multi-hot labels, staged in memory."""
    if batch_size < 1 or n < 1 or any(int(d) < 1 for d in shape):
        raise ConfigError("zero_batch dimensions must be positive")
    return LabeledBatch(
        sample_ids=[f"zero{i:04d}" for i in range(batch_size)],
        labels=np.zeros((batch_size, n)),
        payloads=np.zeros((batch_size,) + tuple(int(d) for d in shape)),
    )


class BenchLock:
    """Filesystem mutex: only one benchmark may run at a time."""

    def __init__(self, path=None):
        self.path = str(path) if path else os.path.join(
            tempfile.gettempdir(), "qtail-bench.lock"
        )
        self._fd = None

    def __enter__(self):
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise QtailError(
                f"another benchmark holds the lock file {self.path}; "
                f"remove it if that run is dead"
            ) from None
        os.write(self._fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc):
        os.close(self._fd)
        os.unlink(self.path)
        return False


def environment_fingerprint(tag: str = "") -> dict:
    return {
        "host": platform.node(),
        "platform": platform.platform(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "numba": numba.__version__,
        "cpu_count": os.cpu_count(),
        "numba_threads": numba.get_num_threads(),
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "tag": tag,
    }


def _init_state(protocol: BenchProtocol):
    rng = Rng(protocol.seed)
    if protocol.head == "cdl":
        params = model.init_cdl_params(rng, protocol.feature_dim, protocol.num_labels)
    else:
        params = model.init_dqc_params(
            rng, protocol.feature_dim, protocol.num_labels, depth=protocol.depth
        )
    params_dict = model.params_to_dict(params)
    return params_dict, AdamState.init(params_dict, lr=protocol.lr)


def run_bench(protocol: BenchProtocol, lock_path=None, tag: str = "") -> BenchResult:
    """Time ``measured_steps`` training steps after untimed warmup."""
    with BenchLock(lock_path):
        fx = FeatureExtractor(feature_dim=protocol.feature_dim, seed=0)
        params_dict, adam = _init_state(protocol)
        batch = zero_batch(protocol.batch_size, protocol.payload_shape,
                           protocol.num_labels)
        payloads, labels = batch.payloads, batch.labels

        def step():
            nonlocal params_dict, adam
            X = extract_features_batch(fx, payloads)
            params = model.params_from_dict(protocol.head, params_dict)
            loss, grads = model.loss_and_grads(params, X, labels)
            params_dict, adam = adam_step(params_dict, grads, adam)
            return loss

        warmup_samples = []
        for _ in range(protocol.warmup_steps):
            t0 = time.perf_counter()
            loss = step()
            warmup_samples.append(time.perf_counter() - t0)
        samples = []
        for _ in range(protocol.measured_steps):
            t0 = time.perf_counter()
            loss = step()
            samples.append(time.perf_counter() - t0)

    arr = np.array(samples)
    return BenchResult(
        protocol=protocol,
        samples=samples,
        warmup_samples=warmup_samples,
        mean=float(arr.mean()),
        std=float(arr.std(ddof=1)),
        final_loss=float(loss),
        fingerprint=environment_fingerprint(tag),
    )


def scaling_sweep(n_values, protocol: BenchProtocol, heads=("cdl", "dqc"),
                  lock_path=None) -> list:
    """BenchResult rows for each (head, n); emits state_bytes = 2**n * 16."""
    n_values = list(n_values)
    if n_values != sorted(n_values):
        raise ConfigError("n_values must be ascending")
    rows = []
    for head in heads:
        for n in n_values:
            result = run_bench(
                replace(protocol, head=head, num_labels=n), lock_path=lock_path
            )
            rows.append(
                {
                    "n": n,
                    "head": head,
                    "mean": result.mean,
                    "std": result.std,
                    "state_bytes": state_bytes(n),
                }
            )
    return rows


def fit_scaling(rows) -> dict:
    """Least-squares fits of mean step time vs n (linear) and vs 2**n.

    Returns per-head RSS and AIC for both models plus the preferred one;
    the classical head should look linear in n, the circuit head like 2**n
    once n is large enough to dominate.
    """
    out = {}
    for head in sorted({r["head"] for r in rows}):
        ns = np.array([r["n"] for r in rows if r["head"] == head], dtype=float)
        ys = np.array([r["mean"] for r in rows if r["head"] == head])
        fits = {}
        for name, x in (("linear", ns), ("exp", 2.0**ns)):
            design = np.stack([np.ones_like(x), x], axis=1)
            coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
            rss = float(((design @ coef - ys) ** 2).sum())
            k = len(ys)
            aic = k * math.log(max(rss, 1e-300) / k) + 4.0
            fits[name] = {"coef": coef.tolist(), "rss": rss, "aic": aic}
        preferred = "linear" if fits["linear"]["aic"] <= fits["exp"]["aic"] else "exp"
        out[head] = {
            "linear_rss": fits["linear"]["rss"],
            "exp_rss": fits["exp"]["rss"],
            "aic_linear": fits["linear"]["aic"],
            "aic_exp": fits["exp"]["aic"],
            "preferred": preferred,
        }
    return out
