import numpy as np
import pytest
from scipy.linalg import expm

from iswaplab import quantum as q


class TestIswapFamily:
    def test_full_iswap_matrix(self):
        u = q.iswap_family(np.pi, 0.0).matrix
        expected = np.eye(4, dtype=complex)
        expected[1, 1] = expected[2, 2] = 0.0
        expected[1, 2] = expected[2, 1] = 1j
        assert np.max(np.abs(u - expected)) < 1e-12

    def test_zero_area_is_identity(self):
        u = q.iswap_family(0.0, 1.234).matrix
        assert np.max(np.abs(u - np.eye(4))) < 1e-12

    def test_half_area_block(self):
        u = q.iswap_family(np.pi / 2, 0.0).matrix
        r = 1.0 / np.sqrt(2.0)
        block = np.array([[r, 1j * r], [1j * r, r]])
        assert np.max(np.abs(u[1:3, 1:3] - block)) < 1e-12

    def test_unitarity_random_angles(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            theta, eta = rng.uniform(-10, 10, 2)
            u = q.iswap_family(theta, eta).matrix
            assert np.max(np.abs(u.conj().T @ u - np.eye(4))) < 1e-12

    def test_echo_identity(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            theta, eta = rng.uniform(-10, 10, 2)
            prod = q.iswap_family(theta, eta).matrix @ q.iswap_family(-theta, eta).matrix
            assert np.max(np.abs(prod - np.eye(4))) < 1e-12

    def test_eta_covariance_via_virtual_z(self):
        # Coupler phase is equivalent to opposite reference-phase offsets on
        # the two qubits: U(theta, eta) = VZ(-d, d) U(theta, 0) VZ(d, -d),
        # d = eta / 2.
        rng = np.random.default_rng(3)
        for _ in range(100):
            theta, eta = rng.uniform(-6, 6, 2)
            d = eta / 2.0
            lhs = q.iswap_family(theta, eta).matrix
            rhs = (q.virtual_z_unitary(-d, d) @ q.iswap_family(theta, 0.0)
                   @ q.virtual_z_unitary(d, -d)).matrix
            assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_populations_independent_of_eta(self):
        rng = np.random.default_rng(4)
        start = q.StateVector.basis("10")
        for _ in range(50):
            theta, eta = rng.uniform(0, 2 * np.pi, 2)
            out = q.apply(q.iswap_family(theta, eta), start)
            pops = np.abs(out.amplitudes) ** 2
            assert pops[2] == pytest.approx(np.cos(theta / 2) ** 2, abs=1e-12)
            assert pops[1] == pytest.approx(np.sin(theta / 2) ** 2, abs=1e-12)


class TestSingleQubitX90:
    def test_action_on_ground(self):
        out = q.apply(q.single_qubit_x90(1), q.StateVector.basis("00"))
        expected = np.array([1, 0, -1j, 0]) / np.sqrt(2)
        assert np.max(np.abs(out.amplitudes - expected)) < 1e-12

    def test_two_x90_is_x(self):
        u = q.single_qubit_x90(2) @ q.single_qubit_x90(2)
        out = q.apply(u, q.StateVector.basis("00"))
        assert np.abs(out.amplitudes[1] - (-1j)) < 1e-12

    def test_matrix_exponential_oracle(self):
        rng = np.random.default_rng(5)
        for qubit in (1, 2):
            for _ in range(20):
                phase = rng.uniform(-np.pi, np.pi)
                axis = np.cos(phase) * q.PAULI_1Q["X"] + np.sin(phase) * q.PAULI_1Q["Y"]
                expected = q.on_qubit(expm(-1j * np.pi / 4 * axis), qubit)
                got = q.single_qubit_x90(qubit, phase).matrix
                assert np.max(np.abs(got - expected)) < 1e-12

    def test_invalid_qubit(self):
        with pytest.raises(ValueError):
            q.single_qubit_x90(3)


class TestVirtualZ:
    def test_identity(self):
        assert np.max(np.abs(q.virtual_z_unitary(0, 0).matrix - np.eye(4))) < 1e-12

    def test_pi_on_qubit1(self):
        u = q.virtual_z_unitary(np.pi, 0.0).matrix
        assert np.max(np.abs(u - np.diag([1, 1, -1, -1]))) < 1e-12

    def test_composition_law(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            a, b, c, d = rng.uniform(-7, 7, 4)
            lhs = (q.virtual_z_unitary(a, b) @ q.virtual_z_unitary(c, d)).matrix
            rhs = q.virtual_z_unitary(a + c, b + d).matrix
            assert np.max(np.abs(lhs - rhs)) < 1e-12


class TestApply:
    def test_iswap_exchanges_basis_states(self):
        out = q.apply(q.ISWAP, q.StateVector.basis("01"))
        assert np.max(np.abs(out.amplitudes - np.array([0, 0, 1j, 0]))) < 1e-12

    def test_identity_keeps_state(self):
        ident = q.Unitary(np.eye(4))
        s = q.StateVector(np.array([0.5, 0.5j, -0.5, 0.5]))
        assert np.array_equal(q.apply(ident, s).amplitudes, s.amplitudes)

    def test_double_iswap_negates(self):
        out = q.apply(q.ISWAP, q.apply(q.ISWAP, q.StateVector.basis("01")))
        assert np.max(np.abs(out.amplitudes - np.array([0, -1, 0, 0]))) < 1e-12

    def test_density_matrix_invariants_preserved(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            psi = rng.normal(size=4) + 1j * rng.normal(size=4)
            rho = q.StateVector(psi / np.linalg.norm(psi)).density()
            u = q.iswap_family(rng.uniform(0, 7), rng.uniform(0, 7))
            out = q.apply(u, rho).matrix
            assert abs(np.trace(out).real - 1) < 1e-12
            assert np.max(np.abs(out - out.conj().T)) < 1e-12


class TestRelaxationChannel:
    def test_zero_duration_is_identity(self):
        ch = q.relaxation_channel(0.0, 30e-6, 30e-6, 1)
        rho = q.DensityMatrix.basis("10")
        assert np.max(np.abs(q.apply_channel(ch, rho).matrix - rho.matrix)) < 1e-12

    def test_full_damping(self):
        ch = q.relaxation_channel(np.inf, 30e-6, 30e-6, 1)
        out = q.apply_channel(ch, q.DensityMatrix.basis("10"))
        assert np.max(np.abs(out.matrix - q.DensityMatrix.basis("00").matrix)) < 1e-10

    def test_one_t1_leaves_inverse_e(self):
        t1 = 25e-6
        ch = q.relaxation_channel(t1, t1, 50e-6, 2)
        out = q.apply_channel(ch, q.DensityMatrix.basis("01"))
        assert out.populations()[1] == pytest.approx(np.exp(-1.0), abs=1e-12)

    def test_t2_decay_of_coherence(self):
        t1, t2 = 30e-6, 20e-6
        t_phi = 1.0 / (1.0 / t2 - 0.5 / t1)
        dt = 5e-6
        plus = q.StateVector(np.array([1, 0, 1, 0]) / np.sqrt(2)).density()
        out = q.apply_channel(q.relaxation_channel(dt, t1, t_phi, 1), plus)
        assert abs(out.matrix[0, 2]) == pytest.approx(0.5 * np.exp(-dt / t2), rel=1e-9)

    def test_invalid_times(self):
        with pytest.raises(ValueError):
            q.relaxation_channel(1e-6, -1.0, 1e-6, 1)
        with pytest.raises(ValueError):
            q.relaxation_channel(-1e-9, 1e-6, 1e-6, 1)

    def test_trace_preservation_and_positivity(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            psi = rng.normal(size=4) + 1j * rng.normal(size=4)
            rho = q.StateVector(psi / np.linalg.norm(psi)).density()
            ch = q.relaxation_channel(rng.uniform(0, 1e-5), 30e-6, 30e-6, rng.integers(1, 3))
            out = q.apply_channel(ch, rho)
            assert abs(np.trace(out.matrix).real - 1) < 1e-10
            assert np.min(np.linalg.eigvalsh(out.matrix)) > -1e-10


class TestDepolarizing:
    def test_maps_toward_mixed(self):
        ch = q.depolarizing_channel(1.0)
        out = q.apply_channel(ch, q.DensityMatrix.basis("11"))
        assert np.max(np.abs(out.matrix - np.eye(4) / 4)) < 1e-10

    def test_traceless_contraction(self):
        p = 0.1
        rho = q.DensityMatrix.basis("10")
        out = q.apply_channel(q.depolarizing_channel(p), rho)
        expected = (1 - p) * rho.matrix + p * np.eye(4) / 4
        assert np.max(np.abs(out.matrix - expected)) < 1e-10


class TestPauliExpectation:
    def test_ground_state_zi(self):
        assert q.pauli_expectation(q.DensityMatrix.basis("00"), "ZI") == pytest.approx(1.0)

    def test_ground_state_xi(self):
        assert q.pauli_expectation(q.DensityMatrix.basis("00"), "XI") == pytest.approx(0.0)

    def test_trace_oracle(self):
        psi = q.StateVector(np.array([1, 1j, 0, 0]) / np.sqrt(2))
        rho = q.apply(q.ISWAP, psi).density()
        y = np.array([[0, -1j], [1j, 0]])
        oracle = np.trace(rho.matrix @ np.kron(np.eye(2), y)).real
        assert q.pauli_expectation(rho, "IY") == pytest.approx(oracle, abs=1e-12)

    def test_malformed_label(self):
        with pytest.raises(ValueError):
            q.pauli_expectation(q.DensityMatrix.basis("00"), "XQ")


class TestStateFidelity:
    def test_self_fidelity(self):
        rho = q.DensityMatrix.maximally_mixed()
        assert q.state_fidelity(rho, rho) == pytest.approx(1.0, abs=1e-12)

    def test_orthogonal_pure_states(self):
        a = q.DensityMatrix.basis("01")
        b = q.DensityMatrix.basis("10")
        assert q.state_fidelity(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_pure_state_overlap_oracle(self):
        rng = np.random.default_rng(9)
        for _ in range(30):
            v1 = rng.normal(size=4) + 1j * rng.normal(size=4)
            v2 = rng.normal(size=4) + 1j * rng.normal(size=4)
            s1 = q.StateVector(v1 / np.linalg.norm(v1))
            s2 = q.StateVector(v2 / np.linalg.norm(v2))
            overlap = abs(np.vdot(s1.amplitudes, s2.amplitudes)) ** 2
            assert q.state_fidelity(s1.density(), s2.density()) == pytest.approx(overlap, abs=1e-7)


class TestTypeInvariants:
    def test_state_vector_norm_enforced(self):
        with pytest.raises(ValueError):
            q.StateVector(np.array([1.0, 1.0, 0.0, 0.0]))

    def test_density_matrix_trace_enforced(self):
        with pytest.raises(ValueError):
            q.DensityMatrix(np.eye(4, dtype=complex))

    def test_unitary_enforced(self):
        with pytest.raises(ValueError):
            q.Unitary(np.diag([1.0, 1.0, 1.0, 0.5]))

    def test_kraus_completeness_enforced(self):
        with pytest.raises(ValueError):
            q.NoiseChannel((np.eye(4) * 0.5,))

    def test_phase_gauge_comparison(self):
        u = q.iswap_family(1.0, 0.3).matrix
        assert q.allclose_up_to_phase(u, np.exp(1j * 0.77) * u)
        assert not q.allclose_up_to_phase(u, q.iswap_family(1.1, 0.3).matrix)
