import json

import numpy as np
import pytest

from iswaplab import calibration as cal
from iswaplab import device as dev
from iswaplab import tomography as tomo
from iswaplab.circuits import GateParams, PREP_GATES, iswap, prep_state_ideal
from iswaplab.quantum import DensityMatrix, apply, iswap_family, state_fidelity


def generalized_rabi_population(device, amplitude, f_drive, tau_ns):
    """Closed-form transferred population for a rectangular resonant-block
    drive with Stark shifts, derived from the two-level problem."""
    omega = device.swap_rate_per_unit * amplitude          # Hz, Omega/2pi
    shift = (device.stark_coeff_q1 - device.stark_coeff_q2) * amplitude**2
    detuning = (f_drive - device.difference_frequency) - shift
    total = np.sqrt(omega**2 + detuning**2)
    if total == 0:
        return 0.0
    envelope = omega**2 / total**2
    return envelope * np.sin(np.pi * total * tau_ns * 1e-9) ** 2


class TestSelectDcBias:
    def test_default_config_anchor(self, device):
        v = cal.select_dc_bias(device, cal.CalibrationParams().v_values())
        assert v == pytest.approx(3.775, abs=1e-9)

    def test_monotone_case_returns_argmax_of_coupler_frequency(self, device):
        # all modes far below the coupler everywhere -> criterion is the
        # coupler frequency itself, maximized at zero flux
        cfg = device.with_updates(w_q1=1.0e9, w_q2=0.9e9, w_r1=1.2e9, w_r2=1.3e9)
        v_values = np.linspace(0.275, 3.0, 40)
        v = cal.select_dc_bias(cfg, v_values)
        w_c = [dev.coupler_frequency(cfg, vv) for vv in v_values]
        assert v == v_values[int(np.argmax(w_c))]

    def test_exhaustive_scan_oracle(self, device):
        v_values = np.linspace(0.3, 5.2, 173)
        v = cal.select_dc_bias(device, v_values)
        crit = cal.dc_bias_criterion(device, v_values)
        assert crit[np.argmin(np.abs(v_values - v))] >= crit.max() - 1e-6

    def test_empty_sweep(self, device):
        with pytest.raises(cal.CalibrationError):
            cal.select_dc_bias(device, [])


@pytest.fixture(scope="module")
def small_amp_sweep(device, engine):
    """Noise-free, error-free sweep on a coarse grid for the population law."""
    cfg = device.with_updates(stark_coeff_q1=0.0, stark_coeff_q2=0.0,
                              readout_assignment_error=0.0)
    amplitudes = np.arange(0.03, 0.31, 0.045)
    frequencies = cfg.difference_frequency + np.array([-1.5e6, -0.6e6, 0.0, 0.8e6, 1.6e6])
    sweep = cal.amp_freq_sweep(cfg, engine, amplitudes, frequencies,
                               tau_ns=2000, noise=False)
    return cfg, sweep


class TestAmpFreqSweep:
    def test_zero_amplitude_column(self, device, engine):
        sweep = cal.amp_freq_sweep(device, engine, [0.0],
                                   [device.difference_frequency], tau_ns=200, noise=False)
        e = device.readout_assignment_error
        assert sweep.pop_q1[0, 0] == pytest.approx(1 - e, abs=1e-6)
        assert sweep.pop_q2[0, 0] == pytest.approx(e, abs=1e-6)

    def test_resonant_population_law(self, small_amp_sweep):
        cfg, sweep = small_amp_sweep
        j = int(np.argmin(np.abs(sweep.axis2 - cfg.difference_frequency)))
        for i, a in enumerate(sweep.axis1):
            theta_half = np.pi * cfg.swap_rate_per_unit * a * 2000e-9
            assert sweep.pop_q1[i, j] == pytest.approx(np.cos(theta_half) ** 2, abs=2e-3)
            assert sweep.pop_q2[i, j] == pytest.approx(np.sin(theta_half) ** 2, abs=2e-3)

    def test_generalized_rabi_oracle_off_resonance(self, small_amp_sweep):
        cfg, sweep = small_amp_sweep
        for i, a in enumerate(sweep.axis1):
            for j, f in enumerate(sweep.axis2):
                expected = generalized_rabi_population(cfg, a, f, 2000)
                assert sweep.pop_q2[i, j] == pytest.approx(expected, abs=5e-3), (a, f)

    def test_shot_sampled_mode(self, device, engine):
        sweep = cal.amp_freq_sweep(device, engine, [0.236],
                                   [device.difference_frequency - 0.5e6],
                                   tau_ns=290, shots=4096, seed=7, noise=False)
        assert 0.8 < sweep.pop_q2[0, 0] <= 1.0


class TestSelectAmplitude:
    def test_default_grid_returns_paper_anchor(self, device, engine):
        p = cal.CalibrationParams()
        sweep = cal.amp_freq_sweep(device, engine, p.amplitudes(), p.amp_frequencies(),
                                   tau_ns=p.amp_sweep_tau_ns, noise=True)
        amp = cal.select_amplitude(sweep, p.min_oscillations, p.min_contrast)
        assert amp == pytest.approx(0.236, abs=1e-9)
        # predicate re-evaluation: the winner satisfies both thresholds and
        # every smaller amplitude fails at least one
        period = cal.oscillation_period(np.asarray(sweep.axis1), sweep.pop_q2.max(axis=1))
        row_contrast = sweep.pop_q2.max(axis=1) - sweep.pop_q2.min(axis=1)
        running = np.maximum.accumulate(row_contrast)
        for i, a in enumerate(sweep.axis1):
            osc_ok = a / period >= p.min_oscillations
            contrast_ok = running[i] >= p.min_contrast
            if a < amp:
                assert not (osc_ok and contrast_ok)
            elif a == pytest.approx(amp):
                assert osc_ok and contrast_ok

    def test_unreachable_contrast_errors(self, device, engine):
        p = cal.CalibrationParams(amp_count=12)
        sweep = cal.amp_freq_sweep(device, engine, p.amplitudes(), p.amp_frequencies(),
                                   tau_ns=500, noise=False)
        with pytest.raises(cal.CalibrationError):
            cal.select_amplitude(sweep, min_oscillations=0.5, min_contrast=1.5)


@pytest.fixture(scope="module")
def default_duration_sweep(device, engine):
    p = cal.CalibrationParams()
    return cal.duration_freq_sweep(device, engine, 0.236, p.durations(),
                                   p.dur_frequencies(), noise=True)


class TestDurationFreqSweep:
    def test_trajectory_matches_pointwise_evolution(self, device, engine):
        durations = np.array([50, 120, 290])
        frequencies = np.array([device.difference_frequency - 0.5e6])
        fast = cal.duration_freq_sweep(device, engine, 0.236, durations, frequencies,
                                       noise=True)
        for i, tau in enumerate(durations):
            single = cal.duration_freq_sweep(device, engine, 0.236,
                                             np.array([tau]), frequencies, noise=True)
            assert fast.pop_q2[i, 0] == pytest.approx(single.pop_q2[0, 0], abs=1e-9)

    def test_default_selects_paper_point(self, default_duration_sweep, device):
        f_sel, tau = cal.select_gate_point(default_duration_sweep)
        assert abs(f_sel - 527.05e6) < 0.05e6
        assert abs(tau - 290) <= 2
        shift = (device.stark_coeff_q1 - device.stark_coeff_q2) * 0.236**2
        assert f_sel - device.difference_frequency == pytest.approx(shift, rel=0.05)

    def test_stark_free_selects_bare_difference(self, device, engine):
        cfg = device.with_updates(stark_coeff_q1=0.0, stark_coeff_q2=0.0)
        p = cal.CalibrationParams()
        sweep = cal.duration_freq_sweep(cfg, engine, 0.236, p.durations(),
                                        np.linspace(527.0e6, 528.1e6, 23), noise=False)
        f_sel, tau = cal.select_gate_point(sweep)
        assert abs(f_sel - cfg.difference_frequency) < 0.05e6
        assert abs(tau - 290) <= 2

    def test_selected_point_is_column_max(self, default_duration_sweep):
        sweep = default_duration_sweep
        f_sel, tau = cal.select_gate_point(sweep)
        j = int(np.argmin(np.abs(sweep.axis2 - f_sel)))
        i = int(np.argmin(np.abs(sweep.axis1 - tau)))
        assert sweep.pop_q2[i, j] >= sweep.pop_q2[:, j].max() - 1e-3

    def test_no_maximum_errors(self, device, engine):
        # sweep far too short for a full swap: population rises monotonically
        cfg = device.with_updates(stark_coeff_q1=0.0, stark_coeff_q2=0.0)
        sweep = cal.duration_freq_sweep(cfg, engine, 0.1,
                                        np.arange(2, 120, 2),
                                        np.array([cfg.difference_frequency]), noise=False)
        with pytest.raises(cal.CalibrationError):
            cal.select_gate_point(sweep)


class TestVirtualZ:
    def test_stark_free_gives_zero(self, device, engine, quick_record):
        cfg = device.with_updates(stark_coeff_q1=0.0, stark_coeff_q2=0.0)
        rec = quick_record.updated(drive_frequency=cfg.difference_frequency,
                                   eta=0.0, vz_q1=0.0, vz_q2=0.0)
        vz1, vz2 = cal.calibrate_virtual_z(cfg, engine, rec, noise=False)
        assert abs(vz1) < np.radians(0.5)
        assert abs(vz2) < np.radians(0.5)

    def test_matches_analytic_stark_prediction(self, device, engine, quick_record):
        vz1, vz2 = cal.calibrate_virtual_z(device, engine, quick_record, noise=True)
        tau = quick_record.duration * 1e-9
        a2 = quick_record.amplitude**2
        pred1 = 2 * np.pi * device.stark_coeff_q1 * a2 * tau
        pred2 = 2 * np.pi * device.stark_coeff_q2 * a2 * tau
        assert abs(vz1 - pred1) < np.radians(2.0)
        assert abs(vz2 - pred2) < np.radians(2.0)

    def test_compensated_echo_is_clean(self, device, engine, quick_record):
        for qubit in (1, 2):
            phase, residual = cal.measure_echo_phase(device, engine, quick_record,
                                                     qubit, noise=True)
            assert abs(phase) < np.radians(1.0)
            assert residual < 0.05 + device.readout_assignment_error

    def test_inconsistent_calibration_rejected(self, device, engine, quick_record):
        # a detuned drive breaks the echo cancellation (the frame-detuning
        # term does not flip sign with the drive phase), leaving population
        # on the partner qubit
        broken = quick_record.updated(drive_frequency=quick_record.drive_frequency + 1.5e6,
                                      vz_q1=0.0, vz_q2=0.0)
        with pytest.raises(cal.CalibrationError, match="swap"):
            cal.calibrate_virtual_z(device, engine, broken, noise=False)


class TestCalibrateEta:
    def test_noise_free_fidelity_after_plugging_in(self, device, engine, quick_record):
        rec = quick_record.updated(eta=0.0)
        eta = cal.calibrate_eta(device, engine, rec, phase_steps=24, noise=False)
        rec = rec.updated(eta=eta)
        settings = tomo.all_settings()
        fids = []
        for prep in ("superpos_a", "superpos_b"):
            probs = tomo.setting_probabilities(device, engine, rec.gate_params(),
                                               PREP_GATES[prep] + (iswap(),), settings,
                                               noise=False)[0]
            est = tomo.reconstruct_from_expectations(
                tomo.expectations_from_probabilities(settings, probs))
            target = apply(iswap_family(np.pi, 0.0), prep_state_ideal(prep)).density()
            fids.append(state_fidelity(est, target))
        assert np.mean(fids) >= 0.995

    def test_port_phase_offset_shifts_eta_oppositely(self, device, engine, quick_record):
        import dataclasses
        from iswaplab.device import PORT_COUPLER
        base = cal.calibrate_eta(device, engine, quick_record, phase_steps=24, noise=False)
        offset = np.radians(30.0)
        ports = dict(engine.ports)
        ports[PORT_COUPLER] = dataclasses.replace(ports[PORT_COUPLER],
                                                  nco_reference_phase=offset)
        engine_shifted = dataclasses.replace(engine, ports=ports)
        shifted = cal.calibrate_eta(device, engine_shifted, quick_record,
                                    phase_steps=24, noise=False)
        delta = cal.wrap_angle(shifted - base)
        assert abs(delta + offset) < np.radians(2.0)

    def test_scores_periodic(self, device, engine, quick_record):
        c1, s1 = cal.eta_scan(device, engine, quick_record, 8, noise=False)
        rec2 = quick_record.updated(eta=cal.wrap_angle(quick_record.eta + 2 * np.pi))
        c2, s2 = cal.eta_scan(device, engine, rec2, 8, noise=False)
        assert np.max(np.abs(s1 - s2)) < 1e-9

    def test_broken_gate_rejected(self, device, engine, quick_record):
        broken = quick_record.updated(amplitude=0.02)
        with pytest.raises(cal.CalibrationError, match="0.9"):
            cal.calibrate_eta(device, engine, broken, phase_steps=8, noise=False)


class TestRecord:
    def test_json_round_trip(self, quick_record, tmp_path):
        path = tmp_path / "record.json"
        quick_record.save(path)
        back = cal.CalibrationRecord.load(path)
        assert back == quick_record
        keys = set(json.loads(path.read_text()))
        assert keys == {"v_dc", "amplitude", "drive_frequency", "duration", "eta",
                        "vz_q1", "vz_q2", "timestamp", "config_hash"}

    def test_validation(self):
        with pytest.raises(ValueError):
            cal.CalibrationRecord(3.775, 1.5, 527e6, 290)
        with pytest.raises(ValueError):
            cal.CalibrationRecord(3.775, 0.2, 527e6, 291)
        with pytest.raises(ValueError):
            cal.CalibrationRecord(3.775, 0.2, 527e6, 290, eta=4.0)

    def test_wrap_angle(self):
        assert cal.wrap_angle(3 * np.pi) == pytest.approx(np.pi)
        assert cal.wrap_angle(-np.pi) == pytest.approx(np.pi)
        assert cal.wrap_angle(0.3) == pytest.approx(0.3)
