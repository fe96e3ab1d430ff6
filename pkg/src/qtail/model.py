"""The two classification heads behind one interface.

The CDL head is a single linear layer + sigmoid over m-dimensional features.
The DQC head sandwiches the circuit between a preprocessing linear layer
(m -> n, tanh-rescaled into embedding angles), the n-qubit ansatz, and a
postprocessing linear layer (n -> n) + sigmoid.

A pluggable frozen feature extractor stands in for a pretrained backbone:
either a seeded random projection of the flattened input followed by tanh,
or a lookup into a table of externally computed feature rows. It is never
trained.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mlcore, qgrad, qsim
from .mlcore import LinearLayer, Rng, linear_forward, sigmoid, tanh_rescale


# ---------------------------------------------------------------------------
# Feature extraction
# ---------------------------------------------------------------------------


@dataclass
class FeatureExtractor:
    """Deterministic, frozen map from payloads to m-dim feature vectors."""

    kind: str = "frozen-random-projection"
    feature_dim: int = 2048
    seed: int = 0
    input_dim: int | None = None
    table: dict | None = None
    _projection: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("frozen-random-projection", "precomputed-import"):
            raise ValueError(f"unknown extractor kind {self.kind!r}")
        if self.kind == "precomputed-import" and self.table is None:
            raise ValueError("precomputed-import extractor needs a feature table")

    def _proj(self, in_dim: int) -> np.ndarray:
        if self.input_dim is None:
            self.input_dim = in_dim
        if in_dim != self.input_dim:
            raise ValueError(
                f"input dim {in_dim} != extractor input dim {self.input_dim}"
            )
        if self._projection is None:
            gen = Rng(self.seed).stream("feature-projection", in_dim, self.feature_dim)
            self._projection = gen.normal(
                0.0, 1.0 / np.sqrt(in_dim), size=(in_dim, self.feature_dim)
            )
        return self._projection


def extract_features(fx: FeatureExtractor, payload) -> np.ndarray:
    """One m-vector per input; deterministic given the extractor."""
    if fx.kind == "precomputed-import":
        if payload not in fx.table:
            raise KeyError(f"no precomputed features for sample id {payload!r}")
        return np.asarray(fx.table[payload], dtype=np.float64)
    flat = np.asarray(payload, dtype=np.float64).reshape(-1)
    return np.tanh(flat @ fx._proj(flat.size))


def extract_features_batch(fx: FeatureExtractor, payloads) -> np.ndarray:
    """(B, m) features. For the projection kind this is one matmul."""
    if fx.kind == "precomputed-import":
        return np.stack([extract_features(fx, p) for p in payloads])
    arr = np.asarray(payloads, dtype=np.float64)
    flat = arr.reshape(arr.shape[0], -1)
    return np.tanh(flat @ fx._proj(flat.shape[1]))


# ---------------------------------------------------------------------------
# Head parameters
# ---------------------------------------------------------------------------


@dataclass
class CdlParams:
    head: LinearLayer


@dataclass
class DqcParams:
    w_in: LinearLayer  # (m, n)
    theta: np.ndarray  # (n, depth)
    w_out: LinearLayer  # (n, n)

    @property
    def num_labels(self) -> int:
        return self.w_in.out_dim

    @property
    def depth(self) -> int:
        return self.theta.shape[1]


@dataclass
class Prediction:
    logits: np.ndarray
    probabilities: np.ndarray


def init_cdl_params(rng: Rng, feature_dim: int, num_labels: int) -> CdlParams:
    return CdlParams(
        head=mlcore.init_lecun_normal(rng.stream("init", "cdl_head"), feature_dim, num_labels)
    )


def init_dqc_params(rng: Rng, feature_dim: int, num_labels: int, depth: int = 3) -> DqcParams:
    return DqcParams(
        w_in=mlcore.init_lecun_normal(rng.stream("init", "w_in"), feature_dim, num_labels),
        theta=mlcore.init_variational_angles(rng.stream("init", "theta"), num_labels, depth),
        w_out=mlcore.init_lecun_normal(rng.stream("init", "w_out"), num_labels, num_labels),
    )


def params_to_dict(params) -> dict:
    if isinstance(params, CdlParams):
        return {"head.weights": params.head.weights, "head.bias": params.head.bias}
    return {
        "w_in.weights": params.w_in.weights,
        "w_in.bias": params.w_in.bias,
        "theta": params.theta,
        "w_out.weights": params.w_out.weights,
        "w_out.bias": params.w_out.bias,
    }


def params_from_dict(kind: str, d: dict):
    if kind == "cdl":
        return CdlParams(head=LinearLayer(d["head.weights"], d["head.bias"]))
    return DqcParams(
        w_in=LinearLayer(d["w_in.weights"], d["w_in.bias"]),
        theta=d["theta"],
        w_out=LinearLayer(d["w_out.weights"], d["w_out.bias"]),
    )


def count_parameters(params) -> dict:
    """Named trainable-parameter counts per component."""
    if isinstance(params, CdlParams):
        counts = {"preprocess": params.head.parameter_count}
    else:
        counts = {
            "preprocess": params.w_in.parameter_count,
            "quantum": params.theta.size,
            "postprocess": params.w_out.parameter_count,
        }
    counts["total"] = sum(counts.values())
    return counts


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


def cdl_forward(params: CdlParams, features: np.ndarray) -> Prediction:
    logits = linear_forward(params.head, features)
    return Prediction(logits=logits, probabilities=sigmoid(logits))


def _dqc_parts(params: DqcParams, features: np.ndarray):
    """Forward intermediates for a (B, m) batch; states kept for the vjp."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    z_in = linear_forward(params.w_in, x)
    embed = tanh_rescale(z_in)
    states = qsim._ansatz_states(embed, params.theta)
    expvals = qsim._expvals_batch(states)
    logits = linear_forward(params.w_out, expvals)
    return x, z_in, embed, states, expvals, logits


def dqc_forward(params: DqcParams, features: np.ndarray) -> Prediction:
    squeeze = np.asarray(features).ndim == 1
    *_, logits = _dqc_parts(params, features)
    if squeeze:
        logits = logits[0]
    return Prediction(logits=logits, probabilities=sigmoid(logits))


def cdl_backward(params: CdlParams, features: np.ndarray, upstream: np.ndarray):
    """Gradients w.r.t. head parameters and features; upstream is dL/dlogits."""
    dw, db, dx = mlcore.linear_backward(params.head, features, upstream)
    return {"head.weights": dw, "head.bias": db}, dx


def dqc_backward(params: DqcParams, features: np.ndarray, upstream: np.ndarray,
                 _parts=None):
    """Chain the layer backwards through the circuit vjp.

    ``upstream`` is dL/dlogits, shaped like the forward logits. Returns the
    parameter-gradient dict and the feature gradient.
    """
    single = np.asarray(features).ndim == 1
    up = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    if _parts is None:
        _parts = _dqc_parts(params, features)
    x, z_in, embed, states, expvals, _ = _parts
    if up.shape != (x.shape[0], params.num_labels):
        raise ValueError(f"upstream shape {up.shape} incompatible with batch")

    dw_out = expvals.T @ up
    db_out = up.sum(axis=0)
    d_expvals = up @ params.w_out.weights.T
    d_embed, d_theta = qgrad.circuit_vjp_batch(
        embed, params.theta, d_expvals, states=states
    )
    dz_in = mlcore.tanh_rescale_backward(z_in, d_embed)
    dw_in = x.T @ dz_in
    db_in = dz_in.sum(axis=0)
    dx = dz_in @ params.w_in.weights.T
    grads = {
        "w_in.weights": dw_in,
        "w_in.bias": db_in,
        "theta": d_theta,
        "w_out.weights": dw_out,
        "w_out.bias": db_out,
    }
    return grads, (dx[0] if single else dx)


def loss_and_grads(params, features: np.ndarray, targets: np.ndarray):
    """Mean-BCE loss and parameter gradients for either head (batched)."""
    y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if isinstance(params, CdlParams):
        logits = linear_forward(params.head, features)
        loss = mlcore.bce_loss_logits(logits, y)
        up = mlcore.bce_grad_logits(logits, y)
        grads, _ = cdl_backward(params, features, up)
        return loss, grads
    parts = _dqc_parts(params, features)
    logits = parts[-1]
    loss = mlcore.bce_loss_logits(logits, y)
    up = mlcore.bce_grad_logits(logits, y)
    grads, _ = dqc_backward(params, features, up, _parts=parts)
    return loss, grads


def predict(params, features: np.ndarray) -> Prediction:
    if isinstance(params, CdlParams):
        return cdl_forward(params, features)
    return dqc_forward(params, features)
