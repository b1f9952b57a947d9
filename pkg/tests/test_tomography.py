import numpy as np
import pytest

from iswaplab import tomography as tomo
from iswaplab import circuits, quantum as q
from iswaplab.device import measure


def random_density(rng) -> q.DensityMatrix:
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    m = a @ a.conj().T
    return q.DensityMatrix(m / np.trace(m).real)


def exact_setting_probabilities(rho: q.DensityMatrix, settings):
    """Independent oracle: rotate the state with ideal unitaries, read the
    diagonal."""
    out = []
    for s in settings:
        u = np.eye(4, dtype=complex)
        for gate in (tomo.prerotation_gates(s.pre_q1, 1) + tomo.prerotation_gates(s.pre_q2, 2)):
            u = circuits.gate_unitary(gate).matrix @ u
        rotated = u @ rho.matrix @ u.conj().T
        out.append(np.real(np.diag(rotated)))
    return np.array(out)


SETTINGS = tomo.all_settings()


class TestSignConventions:
    def test_x90_reads_plus_y(self):
        # (|0> + i|1>)/sqrt(2) on qubit 1 has <Y> = +1
        psi = q.StateVector(np.array([1, 0, 1j, 0]) / np.sqrt(2))
        probs = exact_setting_probabilities(psi.density(), SETTINGS)
        exps = tomo.expectations_from_probabilities(SETTINGS, probs)
        assert exps["YI"] == pytest.approx(1.0, abs=1e-12)

    def test_y90_reads_minus_x_with_sign_folded(self):
        psi = q.StateVector(np.array([1, 0, 1, 0]) / np.sqrt(2))  # <X>_q1 = +1
        probs = exact_setting_probabilities(psi.density(), SETTINGS)
        exps = tomo.expectations_from_probabilities(SETTINGS, probs)
        assert exps["XI"] == pytest.approx(1.0, abs=1e-12)


class TestReconstruct:
    def test_exact_basis_state(self):
        rho = q.DensityMatrix.basis("01")
        probs = exact_setting_probabilities(rho, SETTINGS)
        est = tomo.reconstruct_from_expectations(
            tomo.expectations_from_probabilities(SETTINGS, probs))
        assert np.max(np.abs(est.matrix - rho.matrix)) < 1e-12

    def test_exact_post_gate_superposition(self):
        prep = q.StateVector(np.array([1, 1j, 0, 0]) / np.sqrt(2))
        target = q.apply(q.iswap_family(np.pi, 0.0), prep).density()
        probs = exact_setting_probabilities(target, SETTINGS)
        est = tomo.reconstruct_from_expectations(
            tomo.expectations_from_probabilities(SETTINGS, probs))
        assert q.state_fidelity(est, target) == pytest.approx(1.0, abs=1e-12)

    def test_round_trip_random_states(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            rho = random_density(rng)
            probs = exact_setting_probabilities(rho, SETTINGS)
            est = tomo.reconstruct_from_expectations(
                tomo.expectations_from_probabilities(SETTINGS, probs))
            assert np.max(np.abs(est.matrix - rho.matrix)) < 1e-12

    def test_missing_setting_rejected(self):
        probs = exact_setting_probabilities(q.DensityMatrix.basis("00"), SETTINGS)
        with pytest.raises(ValueError, match="missing"):
            tomo.expectations_from_probabilities(SETTINGS[:-1], probs[:-1])

    def _sampled_probs(self, device, rho, shots, rng):
        probs = exact_setting_probabilities(rho, SETTINGS)
        out = []
        for p in probs:
            draw = rng.multinomial(shots, np.clip(p, 0, None) / np.clip(p, 0, None).sum())
            out.append(draw / shots)
        return np.array(out)

    def test_sampled_reconstruction_close(self, device):
        rng = np.random.default_rng(22)
        v = rng.normal(size=4) + 1j * rng.normal(size=4)
        rho = q.StateVector(v / np.linalg.norm(v)).density()
        probs = self._sampled_probs(device, rho, 10_000, rng)
        est = tomo.reconstruct_from_expectations(
            tomo.expectations_from_probabilities(SETTINGS, probs))
        diff = est.matrix - rho.matrix
        trace_distance = 0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff)))
        assert trace_distance < 0.03

    def test_psd_projection_does_not_hurt(self, device):
        # statistically, clipping negative eigenvalues moves the estimate no
        # farther from the truth than the raw linear inversion
        rng = np.random.default_rng(23)
        raw_dist, proj_dist = [], []
        for _ in range(100):
            v = rng.normal(size=4) + 1j * rng.normal(size=4)
            rho = q.StateVector(v / np.linalg.norm(v)).density()
            probs = self._sampled_probs(device, rho, 400, rng)
            exps = tomo.expectations_from_probabilities(SETTINGS, probs)
            linear = np.eye(4, dtype=complex)
            for label, val in exps.items():
                linear += val * q.pauli_matrix(label)
            linear /= 4.0
            est = tomo.reconstruct_from_expectations(exps)

            def tdist(m):
                return 0.5 * np.sum(np.abs(np.linalg.eigvalsh(m - rho.matrix)))

            raw_dist.append(tdist(linear))
            proj_dist.append(tdist(est.matrix))
        raw_dist, proj_dist = np.array(raw_dist), np.array(proj_dist)
        assert np.mean(proj_dist) < np.mean(raw_dist)
        # the renormalization step can cost a little on single trials, but
        # only a little, and rarely
        assert np.mean(proj_dist <= raw_dist + 1e-9) >= 0.85
        assert np.max(proj_dist - raw_dist) < 0.01


class TestBlochVector:
    def test_ground(self):
        b = tomo.bloch_vector(q.DensityMatrix.basis("00"), 1)
        assert (b.x, b.y, b.z) == pytest.approx((0, 0, 1), abs=1e-12)

    def test_maximally_mixed(self):
        b = tomo.bloch_vector(q.DensityMatrix.maximally_mixed(), 2)
        assert b.norm == pytest.approx(0.0, abs=1e-12)

    def test_equatorial(self):
        psi = q.StateVector(np.array([1, 1j, 0, 0]) / np.sqrt(2))
        b = tomo.bloch_vector(psi.density(), 2)
        assert (b.x, b.y, b.z) == pytest.approx((0, 1, 0), abs=1e-12)
        assert b.equatorial_angle == pytest.approx(np.pi / 2)

    def test_single_qubit_helper_matches_full(self):
        psi = q.StateVector(np.array([0.6, 0, 0.8j, 0]))
        probs = exact_setting_probabilities(psi.density(), SETTINGS)
        got = tomo.single_qubit_bloch_from_probabilities(
            1, SETTINGS, probs)
        want = tomo.bloch_vector(psi.density(), 1)
        assert (got.x, got.y, got.z) == pytest.approx((want.x, want.y, want.z), abs=1e-12)


class TestRunSettings:
    def test_counts_match_expectation_oracle(self, device, engine, quick_record):
        prep = circuits.PREP_GATES["superpos_a"]
        settings = tomo.all_settings(shots=4096, seed=99)
        counts = tomo.run_settings(device.with_updates(readout_assignment_error=0.0),
                                   engine, quick_record.gate_params(), prep, settings,
                                   noise=False)
        ideal = circuits.prep_state_ideal("superpos_a").density()
        expected = exact_setting_probabilities(ideal, settings)
        for s, c, p in zip(settings, counts, expected):
            assert c.shots == 4096
            for i, outcome in enumerate(("00", "01", "10", "11")):
                sigma = np.sqrt(max(p[i] * (1 - p[i]), 1e-9) / 4096)
                assert abs(c.fraction(outcome) - p[i]) < max(4 * sigma, 0.01)

    def test_identity_setting_on_ground(self, device, engine, quick_record):
        cfg = device.with_updates(readout_assignment_error=0.0)
        settings = (tomo.TomographySetting("I", "I", shots=500, seed=5),)
        counts = tomo.run_settings(cfg, engine, quick_record.gate_params(), (), settings,
                                   noise=False)
        assert counts[0].counts["00"] == 500

    def test_x90_setting_splits_evenly(self, device, engine, quick_record):
        cfg = device.with_updates(readout_assignment_error=0.0)
        settings = (tomo.TomographySetting("X90", "I", shots=4096, seed=6),)
        counts = tomo.run_settings(cfg, engine, quick_record.gate_params(), (), settings,
                                   noise=False)
        assert counts[0].fraction("00") == pytest.approx(0.5, abs=0.05)
        assert counts[0].fraction("10") == pytest.approx(0.5, abs=0.05)
