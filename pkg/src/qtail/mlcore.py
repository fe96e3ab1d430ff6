"""Minimal classical neural-network kernel: linear layers, activations,
binary cross-entropy, Adam, and the initializers used by both heads.

Randomness goes through :class:`Rng`, a thin wrapper over numpy's Philox
counter-based bit generator. Sub-streams are derived from (seed, *tags) so
that every concern (init, shuffle, augmentation) draws from its own stream
and the same seed reproduces the same bytes everywhere.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_TINY = float(np.finfo(np.float64).tiny)
_ONE_MINUS = float(np.nextafter(1.0, 0.0))
_PROB_CLAMP = 1e-7


def _tag_word(tag) -> int:
    digest = hashlib.sha256(str(tag).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class Rng:
    """Seeded, portable random source with named sub-stream derivation."""

    seed: int
    algorithm: str = "philox4x64"

    def stream(self, *tags) -> np.random.Generator:
        """Independent generator for (seed, *tags); same inputs, same bytes."""
        entropy = [self.seed & _MASK64] + [_tag_word(t) for t in tags]
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _as_generator(rng) -> np.random.Generator:
    return rng.stream() if isinstance(rng, Rng) else rng


# ---------------------------------------------------------------------------
# Linear layer
# ---------------------------------------------------------------------------


@dataclass
class LinearLayer:
    weights: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray  # (out_dim,)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def parameter_count(self) -> int:
        return self.weights.size + self.bias.size

    def copy(self) -> "LinearLayer":
        return LinearLayer(self.weights.copy(), self.bias.copy())


def linear_forward(layer: LinearLayer, x: np.ndarray) -> np.ndarray:
    """y = W^T x + b. Accepts a single (m,) vector or a (B, m) batch."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.in_dim:
        raise ValueError(f"input dim {x.shape[-1]} != layer in_dim {layer.in_dim}")
    return x @ layer.weights + layer.bias


def linear_backward(layer: LinearLayer, x: np.ndarray, upstream: np.ndarray):
    """Gradients (dW, db, dx) of a scalar loss given dloss/dy in ``upstream``."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    up = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    if up.shape != (x.shape[0], layer.out_dim):
        raise ValueError(f"upstream shape {up.shape} incompatible with layer")
    dw = x.T @ up
    db = up.sum(axis=0)
    dx = up @ layer.weights.T
    if np.asarray(upstream).ndim == 1:
        dx = dx[0]
    return dw, db, dx


# ---------------------------------------------------------------------------
# Activations and loss
# ---------------------------------------------------------------------------


def tanh_rescale(x: np.ndarray) -> np.ndarray:
    """(pi/2) * tanh(x): squashes into [-pi/2, +pi/2]."""
    return (np.pi / 2) * np.tanh(np.asarray(x, dtype=np.float64))


def tanh_rescale_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    t = np.tanh(np.asarray(x, dtype=np.float64))
    return upstream * (np.pi / 2) * (1.0 - t * t)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic; output clamped into the open (0, 1)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return np.clip(out, _TINY, _ONE_MINUS)


def sigmoid_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    p = sigmoid(x)
    return upstream * p * (1.0 - p)


def bce_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean binary cross-entropy from probabilities (clamped away from 0/1)."""
    p = np.asarray(pred, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"pred shape {p.shape} != target shape {y.shape}")
    p = np.clip(p, _PROB_CLAMP, 1.0 - _PROB_CLAMP)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def bce_loss_logits(logits: np.ndarray, target: np.ndarray) -> float:
    """Mean BCE evaluated from logits (log-sum-exp form, no clamping needed)."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"logits shape {z.shape} != target shape {y.shape}")
    return float(np.mean(np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))))


def bce_grad_logits(logits: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d(mean BCE)/d(logits) = (sigmoid(z) - y) / count."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"logits shape {z.shape} != target shape {y.shape}")
    return (sigmoid(z) - y) / z.size


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """Optimizer state for a named parameter dict; moments zero-initialized."""

    step: int
    first_moment: dict
    second_moment: dict
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, params: dict, lr: float = 1e-4, beta1: float = 0.9,
             beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        zeros = {k: np.zeros_like(v) for k, v in params.items()}
        zeros2 = {k: np.zeros_like(v) for k, v in params.items()}
        return cls(0, zeros, zeros2, lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(params: dict, grads: dict, state: AdamState):
    """One bias-corrected Adam update; returns (new_params, new_state)."""
    if set(params) != set(grads) or set(params) != set(state.first_moment):
        raise ValueError("params/grads/state key sets differ")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_params, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"grad shape {g.shape} != param shape {p.shape} for {k!r}")
        m = b1 * state.first_moment[k] + (1.0 - b1) * g
        v = b2 * state.second_moment[k] + (1.0 - b2) * (g * g)
        new_params[k] = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[k] = m
        new_v[k] = v
    return new_params, AdamState(
        t, new_m, new_v, lr=state.lr, beta1=state.beta1, beta2=state.beta2,
        eps=state.eps,
    )


# ---------------------------------------------------------------------------
# Initializers
# ---------------------------------------------------------------------------


def init_lecun_normal(rng, in_dim: int, out_dim: int) -> LinearLayer:
    """Weights ~ Normal(0, 1/in_dim), bias zeros."""
    if in_dim < 1 or out_dim < 1:
        raise ValueError("layer dims must be >= 1")
    gen = _as_generator(rng)
    w = gen.normal(0.0, 1.0 / np.sqrt(in_dim), size=(in_dim, out_dim))
    return LinearLayer(w, np.zeros(out_dim))


def init_variational_angles(rng, n: int, depth: int) -> np.ndarray:
    """Circuit angles ~ Normal(0, (2*pi)**2), shaped (n, depth)."""
    if n < 1 or depth < 1:
        raise ValueError("n and depth must be >= 1")
    gen = _as_generator(rng)
    return gen.normal(0.0, 2 * np.pi, size=(n, depth))
