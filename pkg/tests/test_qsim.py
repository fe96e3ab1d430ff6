import math

import numpy as np
import pytest

from qtail import qsim
from qtail.errors import CapacityError
from qtail.qsim import (
    CircuitSpec,
    StateVector,
    apply_cnot,
    apply_hadamard,
    apply_ry,
    dense_cnot_matrix,
    dense_oracle,
    expval_z,
    init_zero_state,
    run_ansatz,
    state_bytes,
)

SQRT1_2 = 1.0 / math.sqrt(2.0)


def random_spec(rng, n=None, depth=None, hadamard=True):
    n = int(rng.integers(1, 5)) if n is None else n
    depth = int(rng.integers(1, 4)) if depth is None else depth
    return CircuitSpec(
        num_qubits=n,
        embedding_angles=rng.uniform(-math.pi / 2, math.pi / 2, size=n),
        variational_angles=rng.normal(0.0, 2 * math.pi, size=(n, depth)),
        depth=depth,
    )


def random_state(rng, n):
    amps = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    amps /= np.linalg.norm(amps)
    return StateVector(n, amps.astype(np.complex128))


class TestInitZeroState:
    def test_single_qubit(self):
        s = init_zero_state(1)
        assert np.array_equal(s.amplitudes, np.array([1, 0], dtype=complex))

    def test_two_qubits(self):
        s = init_zero_state(2)
        assert np.array_equal(s.amplitudes, np.array([1, 0, 0, 0], dtype=complex))

    def test_19_qubit_storage(self):
        s = init_zero_state(19)
        assert len(s.amplitudes) == 524288
        assert s.nbytes == 524288 * 16 == 8 * 2**20

    @pytest.mark.parametrize("n", [0, -1, 25, 100])
    def test_out_of_range(self, n):
        with pytest.raises(CapacityError, match="16 bytes"):
            init_zero_state(n)

    @pytest.mark.parametrize("n", [8, 14, 19])
    def test_memory_scaling(self, n):
        assert init_zero_state(n).nbytes == 2**n * 16 == state_bytes(n)


class TestHadamard:
    def test_zero_state(self):
        s = apply_hadamard(init_zero_state(1), 0)
        assert np.allclose(s.amplitudes, [SQRT1_2, SQRT1_2], atol=1e-15)

    def test_involution_on_random_states(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n = int(rng.integers(1, 5))
            q = int(rng.integers(n))
            s = random_state(rng, n)
            back = apply_hadamard(apply_hadamard(s, q), q)
            assert np.allclose(back.amplitudes, s.amplitudes, atol=1e-12)

    def test_uniform_superposition(self):
        s = init_zero_state(2)
        s = apply_hadamard(apply_hadamard(s, 0), 1)
        assert np.allclose(s.amplitudes, np.full(4, 0.5), atol=1e-15)

    def test_bad_qubit(self):
        with pytest.raises(IndexError):
            apply_hadamard(init_zero_state(2), 2)


class TestRy:
    def test_zero_angle_identity(self):
        rng = np.random.default_rng(3)
        s = random_state(rng, 3)
        out = apply_ry(s, 1, 0.0)
        assert np.allclose(out.amplitudes, s.amplitudes, atol=1e-12)

    def test_pi_flips(self):
        s = apply_ry(init_zero_state(1), 0, math.pi)
        assert np.allclose(s.amplitudes, [0, 1], atol=1e-12)

    def test_half_pi(self):
        s = apply_ry(init_zero_state(1), 0, math.pi / 2)
        assert np.allclose(
            s.amplitudes, [math.cos(math.pi / 4), math.sin(math.pi / 4)], atol=1e-15
        )

    def test_inverse_pair(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = int(rng.integers(1, 5))
            q = int(rng.integers(n))
            theta = rng.normal(0, 4)
            s = random_state(rng, n)
            back = apply_ry(apply_ry(s, q, theta), q, -theta)
            assert np.allclose(back.amplitudes, s.amplitudes, atol=1e-12)

    def test_nonfinite_angle(self):
        with pytest.raises(ValueError):
            apply_ry(init_zero_state(1), 0, float("nan"))


class TestCnot:
    def test_truth_table(self):
        # |10> in the convention: qubit 1 set, qubit 0 clear -> index 2.
        s = init_zero_state(2)
        s.amplitudes[0] = 0
        s.amplitudes[2] = 1
        out = apply_cnot(s, 1, 0)
        expected = np.zeros(4, dtype=complex)
        expected[3] = 1
        assert np.array_equal(out.amplitudes, expected)

    def test_zero_control_identity(self):
        s = apply_cnot(init_zero_state(2), 0, 1)
        assert s.amplitudes[0] == 1

    def test_involution(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(2, 5))
            c = int(rng.integers(n))
            t = int((c + 1 + rng.integers(n - 1)) % n)
            s = random_state(rng, n)
            back = apply_cnot(apply_cnot(s, c, t), c, t)
            assert np.allclose(back.amplitudes, s.amplitudes, atol=1e-15)

    def test_control_equals_target(self):
        with pytest.raises(ValueError):
            apply_cnot(init_zero_state(2), 1, 1)


class TestExpvalZ:
    def test_zero_state(self):
        assert expval_z(init_zero_state(1), 0) == 1.0

    def test_plus_state(self):
        s = apply_hadamard(init_zero_state(1), 0)
        assert abs(expval_z(s, 0)) < 1e-12

    def test_ry_closed_form(self):
        rng = np.random.default_rng(13)
        for theta in rng.uniform(-2 * math.pi, 2 * math.pi, size=100):
            s = apply_ry(init_zero_state(1), 0, theta)
            assert abs(expval_z(s, 0) - math.cos(theta)) < 1e-12

    def test_bounds_random_states(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            n = int(rng.integers(1, 6))
            s = random_state(rng, n)
            for q in range(n):
                v = expval_z(s, q)
                assert -1 - 1e-12 <= v <= 1 + 1e-12

    def test_bad_qubit(self):
        with pytest.raises(IndexError):
            expval_z(init_zero_state(1), 1)


class TestRunAnsatz:
    def test_all_zero_angles_two_qubits(self):
        spec = CircuitSpec(2, np.zeros(2), np.zeros((2, 3)), depth=3)
        assert np.allclose(run_ansatz(spec), [0.0, 0.0], atol=1e-12)

    def test_single_qubit_matrix_product(self):
        # H then RY(pi/2) on one qubit, d=1, embedding 0.
        spec = CircuitSpec(1, np.zeros(1), np.array([[math.pi / 2]]), depth=1)
        h = SQRT1_2 * np.array([[1, 1], [1, -1]])
        ry = np.array(
            [
                [math.cos(math.pi / 4), -math.sin(math.pi / 4)],
                [math.sin(math.pi / 4), math.cos(math.pi / 4)],
            ]
        )
        psi = ry @ (h @ np.array([1.0, 0.0]))
        expected = psi[0] ** 2 - psi[1] ** 2
        got = run_ansatz(spec)[0]
        assert abs(got - expected) < 1e-12
        # RY(pi/2) rotates |+> exactly onto |1>: <Z> = -sin(pi/2) = -1.
        assert abs(got + 1.0) < 1e-12

    def test_matches_dense_oracle_random(self):
        rng = np.random.default_rng(23)
        with qsim.norm_checking():
            for _ in range(50):
                spec = random_spec(rng)
                assert np.allclose(
                    run_ansatz(spec), dense_oracle(spec), atol=1e-10
                )

    def test_expectation_bounds(self):
        rng = np.random.default_rng(29)
        for _ in range(25):
            vals = run_ansatz(random_spec(rng))
            assert np.all(vals >= -1 - 1e-12) and np.all(vals <= 1 + 1e-12)

    def test_no_hadamard_variant_closed_form(self):
        # Without the H prefix: RY(x) then RY(theta) on |0> gives cos(x+theta).
        rng = np.random.default_rng(31)
        for _ in range(20):
            x = rng.uniform(-math.pi / 2, math.pi / 2)
            th = rng.normal(0, 3)
            spec = CircuitSpec(
                1, np.array([x]), np.array([[th]]), depth=1, hadamard_prefix=False
            )
            assert abs(run_ansatz(spec)[0] - math.cos(x + th)) < 1e-12

    def test_depth_zero(self):
        spec = CircuitSpec(2, np.zeros(2), np.zeros((2, 0)), depth=0)
        assert np.allclose(run_ansatz(spec), [0.0, 0.0], atol=1e-12)


class TestDenseOracle:
    def test_hadamard_only(self):
        spec = CircuitSpec(
            1, np.zeros(1), np.zeros((1, 0)), depth=0, hadamard_prefix=True
        )
        h = qsim.dense_single_qubit_gate(1, 0, qsim._H2)
        psi = h @ np.array([1.0, 0.0])
        assert np.allclose(psi, [SQRT1_2, SQRT1_2])
        assert abs(dense_oracle(spec)[0]) < 1e-12

    def test_cnot_matrix_maps_10_to_11(self):
        m = dense_cnot_matrix(2, 1, 0)
        col = m[:, 2]
        assert col[3] == 1.0 and col[[0, 1, 2]].sum() == 0

    def test_capacity_cap(self):
        spec = CircuitSpec(7, np.zeros(7), np.zeros((7, 1)), depth=1)
        with pytest.raises(CapacityError):
            dense_oracle(spec)


class TestInvariants:
    def test_norm_preserved_along_random_sequences(self):
        rng = np.random.default_rng(37)
        for _ in range(10):
            n = int(rng.integers(1, 6))
            s = init_zero_state(n)
            for _ in range(30):
                kind = rng.integers(3)
                q = int(rng.integers(n))
                if kind == 0:
                    s = apply_hadamard(s, q)
                elif kind == 1:
                    s = apply_ry(s, q, float(rng.normal(0, 4)))
                elif n > 1:
                    t = int((q + 1 + rng.integers(n - 1)) % n)
                    s = apply_cnot(s, q, t)
                assert s.norm_error() < 1e-10

    def test_unitarity_spot_checks(self):
        rng = np.random.default_rng(41)
        s = random_state(rng, 3)
        hh = apply_hadamard(apply_hadamard(s, 2), 2)
        assert np.allclose(hh.amplitudes, s.amplitudes, atol=1e-12)
        cc = apply_cnot(apply_cnot(s, 0, 2), 0, 2)
        assert np.allclose(cc.amplitudes, s.amplitudes, atol=1e-12)
        theta = 1.234
        rr = apply_ry(apply_ry(s, 1, theta), 1, -theta)
        assert np.allclose(rr.amplitudes, s.amplitudes, atol=1e-12)

    def test_ring_entangler_no_cnots_single_qubit(self):
        assert qsim._ring_pairs(1) == []
        assert qsim._ring_pairs(3) == [(0, 1), (1, 2), (2, 0)]


class TestCircuitSpecValidation:
    def test_embedding_out_of_range(self):
        with pytest.raises(ValueError, match="pi/2"):
            CircuitSpec(1, np.array([2.0]), np.zeros((1, 1)), depth=1)

    def test_bad_theta_shape(self):
        with pytest.raises(ValueError, match="shape"):
            CircuitSpec(2, np.zeros(2), np.zeros((2, 2)), depth=3)

    def test_capacity(self):
        with pytest.raises(CapacityError):
            CircuitSpec(30, np.zeros(30), np.zeros((30, 1)), depth=1)

    def test_unknown_entangler(self):
        with pytest.raises(ValueError, match="entangler"):
            CircuitSpec(2, np.zeros(2), np.zeros((2, 1)), depth=1, entangler="star")


class TestGateCounter:
    def test_counts_accumulate(self):
        qsim.reset_gate_applications()
        s = init_zero_state(2)
        s = apply_hadamard(s, 0)
        s = apply_ry(s, 1, 0.5)
        s = apply_cnot(s, 0, 1)
        assert qsim.gate_applications() == 3
