"""Analytic gradients of circuit expectations with respect to all angles.

``circuit_vjp`` runs a reverse (adjoint) sweep over the state vector: one
forward execution, then one backward pass that walks the gate tape in
reverse, undoing each gate on a ket and a bra copy and accumulating
``2 Re <bra| dU |ket>`` per parameterized gate. Total cost is a constant
number of full-state passes, independent of the parameter count.

``parameter_shift_grad`` is the exact-shift oracle for RY generators:
``0.5 * (L(phi + pi/2) - L(phi - pi/2))`` per angle, evaluated by fresh
forward executions. Both differentiate the scalar
``L = sum_q upstream[q] * <Z_q>``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qsim
from .qsim import (
    CircuitSpec,
    _ansatz_states,
    _expvals_batch,
    _fview,
    _k_cnot_pair,
    _k_reverse_2x2,
    _ring_pairs,
    _variant,
)

_SQRT1_2 = 1.0 / math.sqrt(2.0)


@dataclass
class CircuitGradients:
    """dL/d(embedding angle) per qubit and dL/d(theta) per (qubit, layer)."""

    grad_embedding: np.ndarray
    grad_variational: np.ndarray


# Size-1 memo of the (2**n, n) Pauli-Z sign matrix used to build the
# observable diagonal; rebuilt only when n changes.
_signs_cache: dict[int, np.ndarray] = {}


def _z_signs(n: int) -> np.ndarray:
    if n not in _signs_cache:
        _signs_cache.clear()
        idx = np.arange(1 << n, dtype=np.int64)
        bits = (idx[:, None] >> np.arange(n)) & 1
        _signs_cache[n] = (1.0 - 2.0 * bits).astype(np.float64)
    return _signs_cache[n]


def _coeffs(arr_or_scalar, B: int) -> np.ndarray:
    a = np.asarray(arr_or_scalar, dtype=np.float64)
    return np.full(B, float(a)) if a.ndim == 0 else np.ascontiguousarray(a)


def _embed_transpose_and_deriv(x: np.ndarray, hadamard: bool):
    # Transpose (= inverse, the gate is real orthogonal) and derivative of
    # the fused embedding gate RY(x) @ H, or of plain RY(x).
    c, s = np.cos(x / 2), np.sin(x / 2)
    if hadamard:
        ut = (
            _SQRT1_2 * (c - s),
            _SQRT1_2 * (s + c),
            _SQRT1_2 * (c + s),
            _SQRT1_2 * (s - c),
        )
        k = 0.5 * _SQRT1_2
        du = (-k * (c + s), k * (c - s), k * (c - s), k * (c + s))
    else:
        ut = (c, s, -s, c)
        du = (-0.5 * s, -0.5 * c, 0.5 * c, -0.5 * s)
    return ut, du


def _ry_transpose_and_deriv(theta: float):
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return (c, s, -s, c), (-0.5 * s, -0.5 * c, 0.5 * c, -0.5 * s)


def circuit_vjp_batch(
    embeddings: np.ndarray,
    theta: np.ndarray,
    upstream: np.ndarray,
    states: np.ndarray | None = None,
    hadamard: bool = True,
    entangler: str = "ring",
) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint-sweep gradients for a batch of circuit executions.

    ``upstream`` is (B, n): per-sample weights on the <Z_q> outputs. Returns
    per-sample embedding gradients (B, n) and batch-summed theta gradients
    (n, d). If ``states`` (the forward output of ``_ansatz_states``) is
    passed it is consumed in place; otherwise the forward pass is re-run.
    """
    embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    B, n = embeddings.shape
    theta = np.asarray(theta, dtype=np.float64).reshape(n, -1)
    depth = theta.shape[1]
    upstream = np.atleast_2d(np.asarray(upstream, dtype=np.float64))
    if upstream.shape != (B, n):
        raise ValueError(f"upstream shape {upstream.shape} != ({B}, {n})")
    if not np.all(np.isfinite(upstream)):
        raise ValueError("upstream must be finite")

    if states is None:
        states = _ansatz_states(embeddings, theta, hadamard, entangler)
    ket = states
    # bra = M |psi> with M = diag(sum_q upstream[q] * (1 - 2 bit_q(k)))
    diag = _z_signs(n) @ upstream.T  # (2**n, B)
    bra = ket * diag.T
    ketv, brav = _fview(ket), _fview(bra)

    grad_embed = np.empty((B, n))
    grad_theta = np.empty((n, depth))
    out = np.empty(B)
    k_cnot_pair = _variant(_k_cnot_pair, ketv)
    k_reverse = _variant(_k_reverse_2x2, ketv)
    for layer in range(depth - 1, -1, -1):
        if entangler == "ring":
            for control, target in reversed(_ring_pairs(n)):
                k_cnot_pair(brav, ketv, control, target)
                qsim._count(2 * B)
        for q in range(n - 1, -1, -1):
            ut, du = _ry_transpose_and_deriv(theta[q, layer])
            k_reverse(
                brav, ketv, q,
                *(_coeffs(v, B) for v in ut), *(_coeffs(v, B) for v in du),
                out,
            )
            qsim._count(2 * B)
            grad_theta[q, layer] = out.sum()
    for q in range(n - 1, -1, -1):
        ut, du = _embed_transpose_and_deriv(embeddings[:, q], hadamard)
        k_reverse(
            brav, ketv, q,
            *(_coeffs(v, B) for v in ut), *(_coeffs(v, B) for v in du),
            out,
        )
        qsim._count(2 * B)
        grad_embed[:, q] = out
    return grad_embed, grad_theta


def circuit_vjp(spec: CircuitSpec, upstream: np.ndarray) -> CircuitGradients:
    """Gradients of L = sum_q upstream[q] * <Z_q> w.r.t. every circuit angle."""
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (spec.num_qubits,):
        raise ValueError(
            f"upstream shape {upstream.shape} != ({spec.num_qubits},)"
        )
    grad_embed, grad_theta = circuit_vjp_batch(
        spec.embedding_angles[None, :],
        spec.variational_angles,
        upstream[None, :],
        hadamard=spec.hadamard_prefix,
        entangler=spec.entangler,
    )
    return CircuitGradients(grad_embed[0], grad_theta)


def _loss(embedding, theta, upstream, hadamard, entangler) -> float:
    states = _ansatz_states(embedding[None, :], theta, hadamard, entangler)
    return float(_expvals_batch(states)[0] @ upstream)


def parameter_shift_grad(spec: CircuitSpec, upstream: np.ndarray) -> CircuitGradients:
    """Exact-shift gradients: 0.5 * (L(phi + pi/2) - L(phi - pi/2)) per angle.

    Shifted embedding angles leave the [-pi/2, +pi/2] embedding interval, so
    the shifted executions run on the raw ansatz executor rather than through
    a (validated) CircuitSpec.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (spec.num_qubits,):
        raise ValueError(
            f"upstream shape {upstream.shape} != ({spec.num_qubits},)"
        )
    if not np.all(np.isfinite(upstream)):
        raise ValueError("upstream must be finite")
    x = spec.embedding_angles.copy()
    theta = spec.variational_angles.copy()
    had, ent = spec.hadamard_prefix, spec.entangler
    n, depth = theta.shape

    grad_embed = np.empty(n)
    for q in range(n):
        orig = x[q]
        x[q] = orig + math.pi / 2
        plus = _loss(x, theta, upstream, had, ent)
        x[q] = orig - math.pi / 2
        minus = _loss(x, theta, upstream, had, ent)
        x[q] = orig
        grad_embed[q] = 0.5 * (plus - minus)

    grad_theta = np.empty((n, depth))
    for q in range(n):
        for layer in range(depth):
            orig = theta[q, layer]
            theta[q, layer] = orig + math.pi / 2
            plus = _loss(x, theta, upstream, had, ent)
            theta[q, layer] = orig - math.pi / 2
            minus = _loss(x, theta, upstream, had, ent)
            theta[q, layer] = orig
            grad_theta[q, layer] = 0.5 * (plus - minus)
    return CircuitGradients(grad_embed, grad_theta)
