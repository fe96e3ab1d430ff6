"""Seeded end-to-end training of either head with Adam and early stopping.

Reproducibility contract: batch order is a pure function of (seed, epoch)
and augmentation decisions of (seed, epoch, sample_id), never of the head
in training. Each run records a per-epoch hash of its
(epoch, batch, sample_id, augmentation-decision) stream plus a cumulative
hash, so paired runs can prove they consumed identical data.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from . import model
from .datapipe import (
    apply_augment,
    draw_augment_decision,
    load_dataset,
    make_batches,
)
from .errors import (
    CheckpointMismatchError,
    ConfigError,
    TrainingDivergedError,
)
from .mlcore import AdamState, Rng, adam_step, bce_loss_logits
from .model import FeatureExtractor, extract_features_batch
from .qsim import MAX_QUBITS


@dataclass(frozen=True)
class TrainConfig:
    head: str
    num_labels: int = 8
    depth: int = 3
    lr: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    feature_dim: int = 2048
    feature_seed: int = 0
    dataset: str | None = None

    def __post_init__(self):
        if self.head not in ("cdl", "dqc"):
            raise ConfigError(f"head must be 'cdl' or 'dqc', got {self.head!r}")
        for name in ("num_labels", "depth", "lr", "batch_size", "max_epochs",
                     "patience", "feature_dim"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.head == "dqc" and self.num_labels > MAX_QUBITS:
            raise ConfigError(
                f"dqc head needs one qubit per label; {self.num_labels} exceeds "
                f"the {MAX_QUBITS}-qubit cap"
            )


def config_hash(config: TrainConfig) -> str:
    """Identity hash for checkpoint compatibility.

    Covers everything that shapes the parameters and the training stream;
    the stopping-rule fields (max_epochs, patience) are excluded so a run
    can be resumed with a longer budget.
    """
    fields = dataclasses.asdict(config)
    fields.pop("max_epochs")
    fields.pop("patience")
    payload = json.dumps(fields, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class TrainRun:
    config: TrainConfig
    step_losses: list
    val_losses: list
    best_epoch: int  # 1-based
    best_val_loss: float
    best_params: dict
    final_params: dict
    final_adam: AdamState
    stop_reason: str  # "early" | "max-epochs"
    stream_hash: str
    epoch_stream_hashes: list
    epochs_run: int


class EarlyStopper:
    """Stop once validation loss has not strictly improved for ``patience``
    consecutive epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record epoch (1-based) loss; returns True when training should stop."""
        if loss < self.best:
            self.best = loss
            self.best_epoch = epoch
            self.stale = 0
        else:
            self.stale += 1
        return self.stale >= self.patience


def early_stopping_trace(val_losses, patience: int):
    """(best_epoch, stop_epoch) the stopper produces on a fixed loss series."""
    stopper = EarlyStopper(patience)
    for epoch, loss in enumerate(val_losses, start=1):
        if stopper.update(epoch, loss):
            return stopper.best_epoch, epoch
    return stopper.best_epoch, len(val_losses)


def _init_params(config: TrainConfig):
    rng = Rng(config.seed)
    if config.head == "cdl":
        return model.init_cdl_params(rng, config.feature_dim, config.num_labels)
    return model.init_dqc_params(
        rng, config.feature_dim, config.num_labels, depth=config.depth
    )


def _resolve_data(config: TrainConfig, data):
    if data is None:
        if config.dataset is None:
            raise ConfigError("no dataset: config.dataset unset and none passed")
        data = load_dataset(config.dataset)
    if data.num_labels != config.num_labels:
        raise ConfigError(
            f"dataset has {data.num_labels} labels, config expects {config.num_labels}"
        )
    return data


def _load_batch(data, fx, batch, rng, epoch, batch_idx, hasher):
    """Fetch tensors, draw+apply augmentation, extract features."""
    tensors = []
    for sid in batch.sample_ids:
        decision = draw_augment_decision(rng.stream("augment", epoch, sid))
        hasher.update(
            f"{epoch}|{batch_idx}|{sid}|{int(decision.flip)}|"
            f"{decision.rotation_deg!r}\n".encode()
        )
        tensor = data.get_tensor(sid)
        if tensor.ndim == 3:  # augmentation is defined for image tensors only
            tensor = apply_augment(tensor, decision)
        tensors.append(tensor)
    return extract_features_batch(fx, np.stack(tensors))


def evaluate_loss(params, fx: FeatureExtractor, data, split: str,
                  batch_size: int = 32) -> float:
    """Mean BCE over a split, fixed order, no augmentation."""
    ids = data.split_ids(split)
    labels = data.labels_for(ids)
    total, count = 0.0, 0
    for start in range(0, len(ids), batch_size):
        chunk = ids[start : start + batch_size]
        X = extract_features_batch(fx, np.stack([data.get_tensor(s) for s in chunk]))
        y = labels[start : start + batch_size].astype(np.float64)
        logits = model.predict(params, X).logits
        total += bce_loss_logits(logits, y) * y.size
        count += y.size
    return total / count


def score_split(params, fx: FeatureExtractor, data, split: str,
                batch_size: int = 32):
    """(probabilities, truths) over a split, fixed order, no augmentation."""
    ids = data.split_ids(split)
    labels = data.labels_for(ids)
    probs = []
    for start in range(0, len(ids), batch_size):
        chunk = ids[start : start + batch_size]
        X = extract_features_batch(fx, np.stack([data.get_tensor(s) for s in chunk]))
        probs.append(model.predict(params, X).probabilities)
    return np.concatenate(probs), labels.astype(np.float64)


def train(config: TrainConfig, data=None, resume_from=None) -> TrainRun:
    data = _resolve_data(config, data)
    fx = FeatureExtractor(feature_dim=config.feature_dim, seed=config.feature_seed)
    rng = Rng(config.seed)

    stopper = EarlyStopper(config.patience)
    if resume_from is not None:
        params_dict, adam, meta = checkpoint_load(resume_from, config)
        start_epoch = meta["epoch"] + 1
        best_params = {k: v for k, v in meta["best_params"].items()}
        stopper.best = meta["best_val_loss"]
        stopper.best_epoch = meta["best_epoch"]
        stopper.stale = meta["stale"]
    else:
        params_dict = model.params_to_dict(_init_params(config))
        adam = AdamState.init(params_dict, lr=config.lr)
        start_epoch = 1
        best_params = copy.deepcopy(params_dict)

    train_ids = data.split_ids("train")
    train_labels = data.labels_for(train_ids)
    step_losses, val_losses, epoch_hashes = [], [], []
    cumulative = hashlib.sha256()
    stop_reason = "max-epochs"
    step = 0
    epochs_run = start_epoch - 1

    for epoch in range(start_epoch, config.max_epochs + 1):
        batches = make_batches(
            train_ids, train_labels, config.batch_size, rng.stream("shuffle", epoch)
        )
        epoch_hasher = hashlib.sha256()
        for batch_idx, batch in enumerate(batches):
            X = _load_batch(data, fx, batch, rng, epoch, batch_idx, epoch_hasher)
            y = batch.labels.astype(np.float64)
            params = model.params_from_dict(config.head, params_dict)
            loss, grads = model.loss_and_grads(params, X, y)
            step += 1
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite training loss at epoch {epoch}, step {step}"
                )
            params_dict, adam = adam_step(params_dict, grads, adam)
            step_losses.append(float(loss))
        digest = epoch_hasher.hexdigest()
        epoch_hashes.append(digest)
        cumulative.update(digest.encode())

        params = model.params_from_dict(config.head, params_dict)
        val_loss = evaluate_loss(params, fx, data, "val", config.batch_size)
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        val_losses.append(float(val_loss))
        improved = val_loss < stopper.best
        should_stop = stopper.update(epoch, val_loss)
        if improved:
            best_params = copy.deepcopy(params_dict)
        epochs_run = epoch
        if should_stop:
            stop_reason = "early"
            break

    return TrainRun(
        config=config,
        step_losses=step_losses,
        val_losses=val_losses,
        best_epoch=stopper.best_epoch,
        best_val_loss=stopper.best,
        best_params=best_params,
        final_params=params_dict,
        final_adam=adam,
        stop_reason=stop_reason,
        stream_hash=cumulative.hexdigest(),
        epoch_stream_hashes=epoch_hashes,
        epochs_run=epochs_run,
    )


# ---------------------------------------------------------------------------
# Paired-seed protocol
# ---------------------------------------------------------------------------


@dataclass
class PairedRun:
    seed: int
    cdl: TrainRun
    dqc: TrainRun


def paired_seed_protocol(config_cdl: TrainConfig, config_dqc: TrainConfig,
                         seeds, data=None) -> list:
    """Train both heads once per seed on byte-identical batch streams."""
    if config_cdl.head != "cdl" or config_dqc.head != "dqc":
        raise ConfigError("paired protocol needs one cdl config and one dqc config")
    if config_cdl.dataset != config_dqc.dataset:
        raise ConfigError("paired configs must reference the same dataset")
    if config_cdl.num_labels != config_dqc.num_labels:
        raise ConfigError("paired configs must share a label set")
    runs = []
    for seed in seeds:
        run_cdl = train(replace(config_cdl, seed=int(seed)), data=data)
        run_dqc = train(replace(config_dqc, seed=int(seed)), data=data)
        runs.append(PairedRun(seed=int(seed), cdl=run_cdl, dqc=run_dqc))
    return runs


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_CKPT_VERSION = 1


def checkpoint_save(path, run_or_state, config: TrainConfig) -> None:
    """Versioned container: named parameter blobs + Adam state + config hash.

    Accepts a TrainRun (saves its final state for continuation plus the best
    parameters) or a dict with the same fields.
    """
    if isinstance(run_or_state, TrainRun):
        state = {
            "params": run_or_state.final_params,
            "adam": run_or_state.final_adam,
            "epoch": run_or_state.epochs_run,
            "best_params": run_or_state.best_params,
            "best_val_loss": run_or_state.best_val_loss,
            "best_epoch": run_or_state.best_epoch,
            "stale": run_or_state.epochs_run - run_or_state.best_epoch,
        }
    else:
        state = run_or_state
    adam: AdamState = state["adam"]
    meta = {
        "format": "qtail-checkpoint",
        "version": _CKPT_VERSION,
        "config_hash": config_hash(config),
        "head": config.head,
        "epoch": state["epoch"],
        "adam_step": adam.step,
        "lr": adam.lr,
        "beta1": adam.beta1,
        "beta2": adam.beta2,
        "eps": adam.eps,
        "best_val_loss": state["best_val_loss"],
        "best_epoch": state["best_epoch"],
        "stale": state["stale"],
    }
    arrays = {"__meta__": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for name, arr in state["params"].items():
        arrays[f"param__{name}"] = arr
        arrays[f"adam_m__{name}"] = adam.first_moment[name]
        arrays[f"adam_v__{name}"] = adam.second_moment[name]
    for name, arr in state["best_params"].items():
        arrays[f"best__{name}"] = arr
    np.savez(path, **arrays)


def checkpoint_load(path, config: TrainConfig):
    """Restore (params, AdamState, meta); refuses on config-hash mismatch."""
    with np.load(path, allow_pickle=False) as blob:
        meta = json.loads(bytes(blob["__meta__"]).decode())
        if meta.get("format") != "qtail-checkpoint" or meta.get("version") != _CKPT_VERSION:
            raise CheckpointMismatchError(f"{path} is not a supported checkpoint")
        if meta["config_hash"] != config_hash(config):
            raise CheckpointMismatchError(
                "checkpoint was produced by a different configuration "
                "(config hash mismatch)"
            )
        params, m, v, best = {}, {}, {}, {}
        for key in blob.files:
            if key.startswith("param__"):
                params[key[7:]] = blob[key]
            elif key.startswith("adam_m__"):
                m[key[8:]] = blob[key]
            elif key.startswith("adam_v__"):
                v[key[8:]] = blob[key]
            elif key.startswith("best__"):
                best[key[6:]] = blob[key]
    adam = AdamState(
        meta["adam_step"], m, v, lr=meta["lr"], beta1=meta["beta1"],
        beta2=meta["beta2"], eps=meta["eps"],
    )
    meta["best_params"] = best
    return params, adam, meta
