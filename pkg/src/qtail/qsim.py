"""Noiseless state-vector simulation of the RY/CNOT classifier circuit family.

Index convention (used by every operation in this package, including the
dense oracle): qubit ``q`` is bit ``q`` of the amplitude index, with qubit 0
as the LEAST significant bit. Amplitudes are complex128; a state over ``n``
qubits is a C-contiguous array of ``2**n`` amplitudes (16 bytes each).

The hot path operates on batches of states laid out as a ``(B, 2**n)``
complex array, with numba kernels working on the interleaved float64 view.
All gates in this circuit family are real orthogonal 2x2 matrices plus CNOT,
so a single generic 2x2 kernel covers H, RY, and the fused RY(x)@H embedding
gate used by the ansatz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .errors import CapacityError

# Hard capacity cap: a state needs 2**n * 16 bytes of amplitude storage.
MAX_QUBITS = 24

# Dense Kronecker-product oracle cap (2**n x 2**n matrices).
DENSE_ORACLE_MAX_QUBITS = 6

_SQRT1_2 = 1.0 / math.sqrt(2.0)

# Instrumentation: counts single-state gate applications (a batched kernel
# call over B states counts B per gate). Used by the gradient cost-contract
# tests; cheap enough to leave always on.
_gate_applications = 0

_norm_check_enabled = False


def gate_applications() -> int:
    return _gate_applications


def reset_gate_applications() -> None:
    global _gate_applications
    _gate_applications = 0


class norm_checking:
    """Context manager: verify unit norm after every gate application."""

    def __enter__(self):
        global _norm_check_enabled
        self._prev = _norm_check_enabled
        _norm_check_enabled = True
        return self

    def __exit__(self, *exc):
        global _norm_check_enabled
        _norm_check_enabled = self._prev
        return False


def _count(n_states: int, states: np.ndarray | None = None) -> None:
    global _gate_applications
    _gate_applications += n_states
    if _norm_check_enabled and states is not None:
        norms = np.abs(states) ** 2
        err = np.abs(norms.sum(axis=-1) - 1.0).max()
        if err >= 1e-10:
            raise FloatingPointError(f"state norm drifted by {err:.3e} after gate")


# ---------------------------------------------------------------------------
# numba kernels (interleaved float64 views of complex states)
#
# Each kernel is compiled twice: a parallel variant (prange over the batch)
# for large batch*state sizes and a serial variant for small ones, where the
# thread-pool launch costs more than the arithmetic. `_variant` dispatches
# on the total element count.
# ---------------------------------------------------------------------------

# Below this many view elements the serial compilation wins.
_PARALLEL_THRESHOLD = 1 << 16


def _both_variants(pyfunc):
    return (
        njit(parallel=False, fastmath=True, cache=True)(pyfunc),
        njit(parallel=True, fastmath=True, cache=True)(pyfunc),
    )


def _variant(pair, view):
    return pair[1] if view.size >= _PARALLEL_THRESHOLD else pair[0]


def _apply_2x2_impl(view, q, m00, m01, m10, m11):
    # x' = [[m00, m01], [m10, m11]] x on qubit q, per-sample coefficients.
    B = view.shape[0]
    dim2 = view.shape[1]
    stride2 = 2 << q
    for b in prange(B):
        a = m00[b]
        c = m01[b]
        e = m10[b]
        f = m11[b]
        for base in range(0, dim2, 2 * stride2):
            for off in range(0, stride2, 2):
                i0 = base + off
                i1 = i0 + stride2
                re0 = view[b, i0]
                im0 = view[b, i0 + 1]
                re1 = view[b, i1]
                im1 = view[b, i1 + 1]
                view[b, i0] = a * re0 + c * re1
                view[b, i0 + 1] = a * im0 + c * im1
                view[b, i1] = e * re0 + f * re1
                view[b, i1 + 1] = e * im0 + f * im1


_k_apply_2x2 = _both_variants(_apply_2x2_impl)


def _cnot_impl(view, control, target):
    B = view.shape[0]
    dim = view.shape[1] >> 1
    cmask = 1 << control
    tmask = 1 << target
    for b in prange(B):
        for k in range(dim):
            if (k & cmask) and not (k & tmask):
                j = k | tmask
                tr = view[b, 2 * k]
                ti = view[b, 2 * k + 1]
                view[b, 2 * k] = view[b, 2 * j]
                view[b, 2 * k + 1] = view[b, 2 * j + 1]
                view[b, 2 * j] = tr
                view[b, 2 * j + 1] = ti


_k_cnot = _both_variants(_cnot_impl)


def _cnot_pair_impl(braview, ketview, control, target):
    # CNOT applied to bra and ket in one memory pass (reverse sweep).
    B = ketview.shape[0]
    dim = ketview.shape[1] >> 1
    cmask = 1 << control
    tmask = 1 << target
    for b in prange(B):
        for k in range(dim):
            if (k & cmask) and not (k & tmask):
                j = k | tmask
                tr = ketview[b, 2 * k]
                ti = ketview[b, 2 * k + 1]
                ketview[b, 2 * k] = ketview[b, 2 * j]
                ketview[b, 2 * k + 1] = ketview[b, 2 * j + 1]
                ketview[b, 2 * j] = tr
                ketview[b, 2 * j + 1] = ti
                tr = braview[b, 2 * k]
                ti = braview[b, 2 * k + 1]
                braview[b, 2 * k] = braview[b, 2 * j]
                braview[b, 2 * k + 1] = braview[b, 2 * j + 1]
                braview[b, 2 * j] = tr
                braview[b, 2 * j + 1] = ti


_k_cnot_pair = _both_variants(_cnot_pair_impl)


def _reverse_2x2_impl(braview, ketview, q, u00, u01, u10, u11, d00, d01, d10, d11, out):
    # One reverse-sweep step for a parameterized real 2x2 gate U:
    #   ket <- U^T ket ; out[b] = 2 Re <bra | dU | ket> ; bra <- U^T bra
    # (U^T coefficients are passed in u**, the derivative matrix in d**.)
    # The gradient uses the pre-update bra and the post-update ket, all kept
    # in registers so the pass touches bra and ket exactly once.
    B = ketview.shape[0]
    dim2 = ketview.shape[1]
    stride2 = 2 << q
    for b in prange(B):
        a = u00[b]
        c = u01[b]
        e = u10[b]
        f = u11[b]
        g00 = d00[b]
        g01 = d01[b]
        g10 = d10[b]
        g11 = d11[b]
        acc = 0.0
        for base in range(0, dim2, 2 * stride2):
            for off in range(0, stride2, 2):
                i0 = base + off
                i1 = i0 + stride2
                kr0 = ketview[b, i0]
                ki0 = ketview[b, i0 + 1]
                kr1 = ketview[b, i1]
                ki1 = ketview[b, i1 + 1]
                nr0 = a * kr0 + c * kr1
                ni0 = a * ki0 + c * ki1
                nr1 = e * kr0 + f * kr1
                ni1 = e * ki0 + f * ki1
                ketview[b, i0] = nr0
                ketview[b, i0 + 1] = ni0
                ketview[b, i1] = nr1
                ketview[b, i1 + 1] = ni1
                dr0 = g00 * nr0 + g01 * nr1
                di0 = g00 * ni0 + g01 * ni1
                dr1 = g10 * nr0 + g11 * nr1
                di1 = g10 * ni0 + g11 * ni1
                br0 = braview[b, i0]
                bi0 = braview[b, i0 + 1]
                br1 = braview[b, i1]
                bi1 = braview[b, i1 + 1]
                acc += br0 * dr0 + bi0 * di0 + br1 * dr1 + bi1 * di1
                braview[b, i0] = a * br0 + c * br1
                braview[b, i0 + 1] = a * bi0 + c * bi1
                braview[b, i1] = e * br0 + f * br1
                braview[b, i1 + 1] = e * bi0 + f * bi1
        out[b] = 2.0 * acc


_k_reverse_2x2 = _both_variants(_reverse_2x2_impl)


def _fview(states: np.ndarray) -> np.ndarray:
    return states.view(np.float64).reshape(states.shape[0], -1)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class StateVector:
    """Pure n-qubit state: 2**n complex amplitudes, unit Euclidean norm."""

    num_qubits: int
    amplitudes: np.ndarray

    @property
    def nbytes(self) -> int:
        return self.amplitudes.nbytes

    def norm_error(self) -> float:
        return abs(float(np.sum(np.abs(self.amplitudes) ** 2)) - 1.0)


def state_bytes(n: int) -> int:
    """Amplitude storage for an n-qubit state: 2**n * 16 bytes."""
    return (1 << n) * 16


@dataclass
class CircuitSpec:
    """Ansatz topology plus all circuit angles.

    The circuit is: H on every qubit (when ``hadamard_prefix``), then one
    embedding RY per qubit, then ``depth`` layers of per-qubit variational
    RY gates each followed by the entangler (ring CNOTs q -> (q+1) mod n;
    no CNOTs when n == 1 or entangler == "none").
    """

    num_qubits: int
    embedding_angles: np.ndarray
    variational_angles: np.ndarray
    depth: int = 3
    entangler: str = "ring"
    hadamard_prefix: bool = True

    def __post_init__(self):
        n = self.num_qubits
        if not 1 <= n <= MAX_QUBITS:
            raise CapacityError(
                f"num_qubits={n} outside [1, {MAX_QUBITS}]; an n-qubit state "
                f"requires 2**n * 16 bytes of amplitude storage"
            )
        self.embedding_angles = np.asarray(self.embedding_angles, dtype=np.float64)
        self.variational_angles = np.asarray(self.variational_angles, dtype=np.float64)
        if self.embedding_angles.shape != (n,):
            raise ValueError(
                f"embedding_angles shape {self.embedding_angles.shape} != ({n},)"
            )
        if not np.all(np.isfinite(self.embedding_angles)) or not np.all(
            np.isfinite(self.variational_angles)
        ):
            raise ValueError("circuit angles must be finite")
        lim = math.pi / 2 + 1e-12
        if np.any(np.abs(self.embedding_angles) > lim):
            raise ValueError("embedding_angles must lie in [-pi/2, +pi/2]")
        if self.depth < 0:
            raise ValueError("depth must be >= 0")
        if self.variational_angles.shape != (n, self.depth):
            raise ValueError(
                f"variational_angles shape {self.variational_angles.shape} "
                f"!= ({n}, {self.depth})"
            )
        if self.entangler not in ("ring", "none"):
            raise ValueError(f"unknown entangler {self.entangler!r}")


# ---------------------------------------------------------------------------
# Single-state operations
# ---------------------------------------------------------------------------


def init_zero_state(n: int) -> StateVector:
    """All-qubits-zero state |0...0>: amplitude[0] = 1, rest 0."""
    if not isinstance(n, (int, np.integer)) or not 1 <= n <= MAX_QUBITS:
        raise CapacityError(
            f"cannot allocate a state for n={n}: requires 2**n * 16 bytes "
            f"of amplitude storage; supported range is 1 <= n <= {MAX_QUBITS}"
        )
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(int(n), amps)


def _check_qubit(state: StateVector, q: int) -> None:
    if not 0 <= q < state.num_qubits:
        raise IndexError(f"qubit {q} out of range for {state.num_qubits}-qubit state")


def _single(state: StateVector, q: int, m00, m01, m10, m11) -> StateVector:
    amps = state.amplitudes.copy().reshape(1, -1)
    one = np.ones(1)
    view = _fview(amps)
    _variant(_k_apply_2x2, view)(view, q, m00 * one, m01 * one, m10 * one, m11 * one)
    _count(1, amps)
    return StateVector(state.num_qubits, amps.reshape(-1))


def apply_hadamard(state: StateVector, q: int) -> StateVector:
    """Unitary Hadamard (amplitude factor 1/sqrt(2)) on qubit q."""
    _check_qubit(state, q)
    return _single(state, q, _SQRT1_2, _SQRT1_2, _SQRT1_2, -_SQRT1_2)


def apply_ry(state: StateVector, q: int, angle: float) -> StateVector:
    """RY(angle) = [[cos(a/2), -sin(a/2)], [sin(a/2), cos(a/2)]] on qubit q."""
    _check_qubit(state, q)
    if not math.isfinite(angle):
        raise ValueError(f"RY angle must be finite, got {angle!r}")
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return _single(state, q, c, -s, s, c)


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    """Flip the target qubit where the control qubit is 1."""
    _check_qubit(state, control)
    _check_qubit(state, target)
    if control == target:
        raise ValueError(f"control and target must differ, both are {control}")
    amps = state.amplitudes.copy().reshape(1, -1)
    view = _fview(amps)
    _variant(_k_cnot, view)(view, control, target)
    _count(1, amps)
    return StateVector(state.num_qubits, amps.reshape(-1))


def expval_z(state: StateVector, q: int) -> float:
    """<Z_q> = P(bit q = 0) - P(bit q = 1); always in [-1, +1]."""
    _check_qubit(state, q)
    probs = np.abs(state.amplitudes) ** 2
    folded = probs.reshape(-1, 2, 1 << q)
    return float(folded[:, 0, :].sum() - folded[:, 1, :].sum())


# ---------------------------------------------------------------------------
# Batched ansatz execution (internal hot path)
# ---------------------------------------------------------------------------


def _coeff(value_or_array, B: int) -> np.ndarray:
    arr = np.asarray(value_or_array, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(B, float(arr))
    return np.ascontiguousarray(arr)


def _batch_apply(states, q, m00, m01, m10, m11):
    B = states.shape[0]
    view = _fview(states)
    _variant(_k_apply_2x2, view)(
        view, q, _coeff(m00, B), _coeff(m01, B), _coeff(m10, B), _coeff(m11, B)
    )
    _count(B, states)


def _batch_cnot(states, control, target):
    view = _fview(states)
    _variant(_k_cnot, view)(view, control, target)
    _count(states.shape[0], states)


def _embed_coeffs(x: np.ndarray, hadamard: bool):
    # Fused single-pass embedding gate: RY(x) @ H when the Hadamard prefix is
    # on, plain RY(x) otherwise.
    c, s = np.cos(x / 2), np.sin(x / 2)
    if hadamard:
        return (
            _SQRT1_2 * (c - s),
            _SQRT1_2 * (c + s),
            _SQRT1_2 * (s + c),
            _SQRT1_2 * (s - c),
        )
    return c, -s, s, c


def _ring_pairs(n: int):
    return [(q, (q + 1) % n) for q in range(n)] if n > 1 else []


def _ansatz_states(
    embeddings: np.ndarray,
    theta: np.ndarray,
    hadamard: bool = True,
    entangler: str = "ring",
) -> np.ndarray:
    """Run the ansatz for a batch of embedding rows; returns (B, 2**n) states."""
    embeddings = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    B, n = embeddings.shape
    if n > MAX_QUBITS:
        raise CapacityError(
            f"n={n} qubits exceeds cap {MAX_QUBITS} "
            f"(state needs 2**n * 16 bytes)"
        )
    theta = np.asarray(theta, dtype=np.float64).reshape(n, -1)
    depth = theta.shape[1]
    states = np.zeros((B, 1 << n), dtype=np.complex128)
    states[:, 0] = 1.0
    for q in range(n):
        _batch_apply(states, q, *_embed_coeffs(embeddings[:, q], hadamard))
    for layer in range(depth):
        for q in range(n):
            c, s = math.cos(theta[q, layer] / 2), math.sin(theta[q, layer] / 2)
            _batch_apply(states, q, c, -s, s, c)
        if entangler == "ring":
            for control, target in _ring_pairs(n):
                _batch_cnot(states, control, target)
    return states


def _expvals_batch(states: np.ndarray) -> np.ndarray:
    """Per-qubit <Z> for a batch of states via pairwise marginal folding."""
    B, dim = states.shape
    n = dim.bit_length() - 1
    probs = states.real**2 + states.imag**2
    out = np.empty((B, n))
    for q in range(n - 1, -1, -1):
        half = probs.shape[1] // 2
        lo, hi = probs[:, :half], probs[:, half:]
        out[:, q] = lo.sum(axis=1) - hi.sum(axis=1)
        probs = lo + hi
    return out


def run_ansatz(spec: CircuitSpec) -> np.ndarray:
    """Execute the circuit of ``spec`` on |0..0>; returns the n <Z_q> values."""
    states = _ansatz_states(
        spec.embedding_angles[None, :],
        spec.variational_angles,
        hadamard=spec.hadamard_prefix,
        entangler=spec.entangler,
    )
    return _expvals_batch(states)[0]


# ---------------------------------------------------------------------------
# Dense Kronecker-product oracle (tests only; independent of the kernels)
# ---------------------------------------------------------------------------

_I2 = np.eye(2, dtype=np.complex128)
_H2 = _SQRT1_2 * np.array([[1, 1], [1, -1]], dtype=np.complex128)
_Z2 = np.array([[1, 0], [0, -1]], dtype=np.complex128)


def dense_single_qubit_gate(n: int, q: int, u: np.ndarray) -> np.ndarray:
    """Full 2**n matrix of a one-qubit gate, qubit 0 = least significant bit."""
    m = np.eye(1, dtype=np.complex128)
    for qi in range(n - 1, -1, -1):
        m = np.kron(m, u if qi == q else _I2)
    return m


def dense_cnot_matrix(n: int, control: int, target: int) -> np.ndarray:
    dim = 1 << n
    m = np.zeros((dim, dim), dtype=np.complex128)
    for k in range(dim):
        j = k ^ (1 << target) if (k >> control) & 1 else k
        m[j, k] = 1.0
    return m


def _dense_ry(angle: float) -> np.ndarray:
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


def dense_oracle(spec: CircuitSpec) -> np.ndarray:
    """Brute-force expectations via full-matrix products; n <= 6 only."""
    n = spec.num_qubits
    if n > DENSE_ORACLE_MAX_QUBITS:
        raise CapacityError(
            f"dense oracle limited to n <= {DENSE_ORACLE_MAX_QUBITS} "
            f"(builds 2**n x 2**n matrices), got n={n}"
        )
    state = np.zeros(1 << n, dtype=np.complex128)
    state[0] = 1.0
    if spec.hadamard_prefix:
        for q in range(n):
            state = dense_single_qubit_gate(n, q, _H2) @ state
    for q in range(n):
        state = dense_single_qubit_gate(n, q, _dense_ry(spec.embedding_angles[q])) @ state
    for layer in range(spec.depth):
        for q in range(n):
            gate = dense_single_qubit_gate(n, q, _dense_ry(spec.variational_angles[q, layer]))
            state = gate @ state
        if spec.entangler == "ring":
            for control, target in _ring_pairs(n):
                state = dense_cnot_matrix(n, control, target) @ state
    out = np.empty(n)
    for q in range(n):
        zq = dense_single_qubit_gate(n, q, _Z2)
        out[q] = float(np.real(np.conj(state) @ (zq @ state)))
    return out
