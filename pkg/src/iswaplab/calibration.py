"""Gate calibration pipeline: DC bias, amplitude, frequency/duration, phases.

Five stages run in order, each consuming the previous stage's output:

  1. select_dc_bias      - park the coupler where it is farthest from every
                           fixed mode (qubits and readout resonators);
  2. amp_freq_sweep      - drive the swap transition for a fixed 2 us and
                           pick the smallest amplitude whose population
                           oscillations are well developed (deterministic
                           proxy: oscillation count and contrast thresholds);
  3. duration_freq_sweep - at that amplitude, find the drive frequency of
                           maximum swap contrast and the first duration of
                           maximum population exchange (the gate duration);
  4. calibrate_virtual_z - measure the drive-induced phase error per qubit
                           with a +swap/-swap echo and store the per-gate
                           virtual-Z compensation;
  5. calibrate_eta       - step the coupler drive phase, score two-qubit
                           tomography of two superposition inputs against the
                           ideal swap outputs, and keep the best phase.

All sweeps run the full chain (schedule -> render -> master equation ->
readout).  With shots = 0 the readout returns exact outcome probabilities
(assignment errors still applied); with shots > 0 it samples counts with
per-point derived seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace, asdict

import numpy as np

from . import tomography
from .circuits import EngineConfig, GateParams, PREP_GATES, iswap, prep_state_ideal, x90
from .device import DeviceConfig, apply_readout_confusion, coupler_frequency, evolve_batch, excited_populations
from .quantum import DensityMatrix, apply, iswap_family, state_fidelity
from .seeds import derive_seed
from . import circuits

PREP_10 = PREP_GATES["10"]
PULSE_START_NS = circuits.SEQUENCE_START_NS + 2 * circuits.X90_DURATION_NS


class CalibrationError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


def wrap_angle(x: float) -> float:
    """Wrap to (-pi, pi]."""
    out = (x + np.pi) % (2.0 * np.pi) - np.pi
    return np.pi if out == -np.pi else float(out)


@dataclass(frozen=True)
class CalibrationRecord:
    """The calibrated gate; persisted as JSON with these exact field names."""

    v_dc: float
    amplitude: float
    drive_frequency: float
    duration: int               # ns
    eta: float = 0.0
    vz_q1: float = 0.0
    vz_q2: float = 0.0
    timestamp: str = ""
    config_hash: str = ""

    def __post_init__(self):
        if not 0.0 <= self.amplitude <= 1.0:
            raise ValueError("amplitude must lie in [0, 1]")
        if self.duration % 2 or self.duration <= 0:
            raise ValueError("duration must be a positive multiple of 2 ns")
        if not -np.pi < self.eta <= np.pi + 1e-12:
            raise ValueError("eta must lie in (-pi, pi]")

    def gate_params(self) -> GateParams:
        return GateParams(self.amplitude, self.drive_frequency, self.duration,
                          self.eta, self.vz_q1, self.vz_q2)

    def updated(self, **kwargs) -> "CalibrationRecord":
        return replace(self, **kwargs)

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, d: dict) -> "CalibrationRecord":
        return cls(**d)

    def save(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "CalibrationRecord":
        with open(path) as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class SweepResult2D:
    axis1_label: str
    axis1: np.ndarray
    axis2_label: str
    axis2: np.ndarray
    pop_q1: np.ndarray          # shape (len(axis1), len(axis2))
    pop_q2: np.ndarray

    def __post_init__(self):
        expected = (len(self.axis1), len(self.axis2))
        if self.pop_q1.shape != expected or self.pop_q2.shape != expected:
            raise ValueError("population matrices do not match the sweep axes")


@dataclass(frozen=True)
class CalibrationParams:
    """Sweep grids and thresholds; the shipped defaults land the pipeline on
    the documented operating point of the default device."""

    # The bias sweep stops before the coupler dives below the qubits; past
    # that point "far from every mode" is satisfied trivially but uselessly.
    v_min: float = 0.275
    v_max: float = 5.275
    v_steps: int = 101
    amp_start: float = 0.008
    amp_step: float = 0.012
    amp_count: int = 33
    amp_freq_min: float = 526.3e6
    amp_freq_max: float = 527.7e6
    amp_freq_steps: int = 15
    amp_sweep_tau_ns: int = 2000
    min_oscillations: float = 3.36
    min_contrast: float = 0.8
    dur_freq_min: float = 526.55e6
    dur_freq_max: float = 527.55e6
    dur_freq_steps: int = 21
    dur_max_ns: int = 600
    dur_step_ns: int = 2
    phase_steps: int = 36
    shots: int = 0
    noise: bool = True

    def v_values(self):
        return np.linspace(self.v_min, self.v_max, self.v_steps)

    def amplitudes(self):
        return self.amp_start + self.amp_step * np.arange(self.amp_count)

    def amp_frequencies(self):
        return np.linspace(self.amp_freq_min, self.amp_freq_max, self.amp_freq_steps)

    def dur_frequencies(self):
        return np.linspace(self.dur_freq_min, self.dur_freq_max, self.dur_freq_steps)

    def durations(self):
        return np.arange(self.dur_step_ns, self.dur_max_ns + 1, self.dur_step_ns)


# --- stage 1: DC bias ----------------------------------------------------------------

def dc_bias_criterion(device: DeviceConfig, v_values) -> np.ndarray:
    """Minimum detuning between the coupler branch and every fixed mode."""
    modes = np.array([device.w_q1, device.w_q2, device.w_r1, device.w_r2])
    w_c = np.array([coupler_frequency(device, v) for v in np.atleast_1d(v_values)])
    return np.min(np.abs(w_c[:, None] - modes[None, :]), axis=1)


def select_dc_bias(device: DeviceConfig, v_values) -> float:
    """Bias maximizing the coupler-to-modes detuning; ties go to larger |flux|."""
    v_values = np.atleast_1d(np.asarray(v_values, dtype=float))
    if v_values.size == 0:
        raise CalibrationError("select_dc_bias", "empty bias sweep")
    crit = dc_bias_criterion(device, v_values)
    best = np.flatnonzero(crit >= crit.max() - 1e-6)
    flux = np.abs((v_values[best] - device.v_offset) / device.flux_period_V)
    return float(v_values[best[np.argmax(flux)]])


# --- shared sweep execution ----------------------------------------------------------

def _sweep_chunk(device, engine, point_params, noise, substeps):
    sets = []
    for gp in point_params:
        gates = PREP_10 + (iswap(),)
        sets.append(circuits.render_circuit(device, engine, gp, gates))
    finals, _ = evolve_batch(device, sets, DensityMatrix.basis("00"),
                             noise=noise, substeps=substeps)
    return np.real(np.einsum("bii->bi", finals))


def _sweep_populations(device, engine, point_params, noise, substeps=4, jobs=1):
    """Evolve prep |10> + coupler pulse for many (GateParams) points at once.

    With jobs > 1 the point list is split into contiguous chunks executed in
    worker processes; results merge by index so the output is identical to a
    serial run.
    """
    points = list(point_params)
    if jobs <= 1 or len(points) < 2 * jobs:
        return _sweep_chunk(device, engine, points, noise, substeps)
    from concurrent.futures import ProcessPoolExecutor
    bounds = np.linspace(0, len(points), jobs + 1).astype(int)
    chunks = [points[bounds[i]:bounds[i + 1]] for i in range(jobs) if bounds[i] < bounds[i + 1]]
    with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(_sweep_chunk, [device] * len(chunks), [engine] * len(chunks),
                              chunks, [noise] * len(chunks), [substeps] * len(chunks)))
    return np.concatenate(parts, axis=0)


def _readout_fractions(device, pops_raw, shots, seed, tag):
    """Outcome fractions after assignment errors, sampled when shots > 0."""
    probs = np.apply_along_axis(lambda p: apply_readout_confusion(device, p), -1, pops_raw)
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum(axis=-1, keepdims=True)
    if shots <= 0:
        return probs
    flat = probs.reshape(-1, 4)
    out = np.empty_like(flat)
    for i, p in enumerate(flat):
        rng = np.random.default_rng(derive_seed(seed, tag, i))
        out[i] = rng.multinomial(shots, p) / shots
    return out.reshape(probs.shape)


# --- stage 2: amplitude --------------------------------------------------------------

def amp_freq_sweep(device: DeviceConfig, engine: EngineConfig, amplitudes, frequencies,
                   tau_ns: int = 2000, shots: int = 0, seed: int = 0,
                   noise: bool = True, substeps: int = 4, jobs: int = 1) -> SweepResult2D:
    amplitudes = np.asarray(amplitudes, dtype=float)
    frequencies = np.asarray(frequencies, dtype=float)
    points = [GateParams(a, f, int(tau_ns)) for a in amplitudes for f in frequencies]
    pops = _sweep_populations(device, engine, points, noise, substeps, jobs=jobs)
    fracs = _readout_fractions(device, pops, shots, seed, "amp_freq")
    p1, p2 = excited_populations(fracs)
    shape = (len(amplitudes), len(frequencies))
    return SweepResult2D("amplitude", amplitudes, "frequency_hz", frequencies,
                         p1.reshape(shape), p2.reshape(shape))


def _refine_parabolic(x, y, i):
    """Vertex of the parabola through points i-1, i, i+1 (clamped at edges)."""
    if i == 0 or i == len(x) - 1:
        return float(x[i]), float(y[i])
    denom = y[i - 1] - 2.0 * y[i] + y[i + 1]
    if abs(denom) < 1e-15:
        return float(x[i]), float(y[i])
    delta = 0.5 * (y[i - 1] - y[i + 1]) / denom
    step = x[i + 1] - x[i]
    return float(x[i] + delta * step), float(y[i] - 0.25 * (y[i - 1] - y[i + 1]) * delta)


def _find_extrema(x, y, min_swing: float = 0.02):
    """Parabolically-refined positions of interior extrema of y(x)."""
    out = []
    for i in range(1, len(y) - 1):
        if (y[i] - y[i - 1]) * (y[i + 1] - y[i]) <= 0 and (y[i] != y[i - 1] or y[i] != y[i + 1]):
            lo = max(0, i - 2)
            hi = min(len(y), i + 3)
            if np.max(y[lo:hi]) - np.min(y[lo:hi]) < min_swing:
                continue
            pos, _ = _refine_parabolic(x, y, i)
            if out and pos - out[-1] < 0.25 * (x[1] - x[0]):
                continue
            out.append(pos)
    return out


def oscillation_period(amplitudes, best_transfer) -> float:
    """Oscillation period along the amplitude axis of a fixed-duration sweep.

    `best_transfer` is the per-amplitude maximum transferred population over
    the frequency axis.  It dips wherever the drive area completes a full
    swap-and-return cycle, and no drive frequency can rescue the transfer, so
    consecutive dip spacings measure the period per unit amplitude without
    being biased by the drive-induced resonance drift.
    """
    a = np.asarray(amplitudes, dtype=float)
    y = np.asarray(best_transfer, dtype=float)
    level = 0.8 * float(y.max())
    minima = []
    for i in range(1, len(y) - 1):
        if y[i] < y[i - 1] and y[i] <= y[i + 1] and y[i] <= level:
            pos, _ = _refine_parabolic(a, y, i)
            minima.append(pos)
    if len(minima) < 2:
        raise CalibrationError("select_amplitude",
                               "sweep does not resolve the population oscillations")
    return float(np.mean(np.diff(minima)))


def select_amplitude(sweep: SweepResult2D, min_oscillations: float = 3.36,
                     min_contrast: float = 0.8) -> float:
    """Smallest amplitude whose swap oscillations are developed enough.

    Deterministic proxy for the visual criterion: the completed oscillation
    count (amplitude over the measured period) must reach `min_oscillations`,
    and the population swing across the frequency axis must have reached
    `min_contrast` at some amplitude up to the candidate.
    """
    stage = "select_amplitude"
    a = np.asarray(sweep.axis1, dtype=float)
    period = oscillation_period(a, sweep.pop_q2.max(axis=1))
    if a[-1] / period < 3.0:
        raise CalibrationError(stage, "sweep must cover at least 3 oscillation periods at max amplitude")
    row_contrast = sweep.pop_q2.max(axis=1) - sweep.pop_q2.min(axis=1)
    running_contrast = np.maximum.accumulate(row_contrast)
    for i in range(len(a)):
        if a[i] / period >= min_oscillations and running_contrast[i] >= min_contrast:
            return float(a[i])
    raise CalibrationError(stage, "no amplitude satisfies the visibility thresholds")


# --- stage 3: frequency and duration -------------------------------------------------

def duration_freq_sweep(device: DeviceConfig, engine: EngineConfig, amplitude: float,
                        durations, frequencies, shots: int = 0, seed: int = 0,
                        noise: bool = True, substeps: int = 4, jobs: int = 1) -> SweepResult2D:
    """Populations vs (duration, frequency) at fixed amplitude.

    A single maximum-length pulse is integrated per frequency and the
    intermediate durations are read off the state trajectory, which is
    exactly equivalent to truncating the rectangular pulse.
    """
    durations = np.asarray(durations, dtype=int)
    frequencies = np.asarray(frequencies, dtype=float)
    dur_max = int(durations.max())
    traj = _duration_trajectories(device, engine, float(amplitude), frequencies,
                                  dur_max, noise, substeps, jobs)
    pops = traj[PULSE_START_NS + durations]           # (n_dur, n_freq, 4)
    fracs = _readout_fractions(device, pops, shots, seed, "duration_freq")
    p1, p2 = excited_populations(fracs)
    return SweepResult2D("duration_ns", durations.astype(float), "frequency_hz",
                         frequencies, p1, p2)


def _duration_chunk(device, engine, amplitude, frequencies, dur_max, noise, substeps):
    sets = []
    for f in frequencies:
        gp = GateParams(amplitude, float(f), dur_max)
        sets.append(circuits.render_circuit(device, engine, gp, PREP_10 + (iswap(),)))
    _, traj = evolve_batch(device, sets, DensityMatrix.basis("00"), noise=noise,
                           substeps=substeps, record_populations=True)
    return traj


def _duration_trajectories(device, engine, amplitude, frequencies, dur_max, noise, substeps, jobs):
    if jobs <= 1 or len(frequencies) < 2 * jobs:
        return _duration_chunk(device, engine, amplitude, frequencies, dur_max, noise, substeps)
    from concurrent.futures import ProcessPoolExecutor
    bounds = np.linspace(0, len(frequencies), jobs + 1).astype(int)
    chunks = [frequencies[bounds[i]:bounds[i + 1]] for i in range(jobs) if bounds[i] < bounds[i + 1]]
    n = len(chunks)
    with ProcessPoolExecutor(max_workers=n) as pool:
        parts = list(pool.map(_duration_chunk, [device] * n, [engine] * n, [amplitude] * n,
                              chunks, [dur_max] * n, [noise] * n, [substeps] * n))
    return np.concatenate(parts, axis=1)


def select_gate_point(sweep: SweepResult2D) -> tuple:
    """(drive frequency, duration): max swap contrast, first population maximum."""
    stage = "select_gate_point"
    contrast = sweep.pop_q2.max(axis=0) - sweep.pop_q2.min(axis=0)
    j = int(np.argmax(contrast))
    f_refined, _ = _refine_parabolic(sweep.axis2, contrast, j)
    col = sweep.pop_q2[:, j]
    peak_level = 0.8 * float(col.max())
    for i in range(1, len(col) - 1):
        if col[i] >= col[i - 1] and col[i] >= col[i + 1] and col[i] >= peak_level:
            tau_refined, _ = _refine_parabolic(sweep.axis1, col, i)
            tau = 2 * int(round(tau_refined / 2.0))
            tau = int(np.clip(tau, sweep.axis1[0], sweep.axis1[-1]))
            return float(f_refined), tau
    raise CalibrationError(stage, "population swap shows no maximum in the swept duration range")


# --- stage 4: virtual-Z compensation -------------------------------------------------

def _qubit_settings(qubit: int):
    pres = ("I", "X90", "Y90")
    if qubit == 1:
        return tuple(tomography.TomographySetting(p, "I") for p in pres)
    return tuple(tomography.TomographySetting("I", p) for p in pres)


def _echo_probabilities(device, engine, record, qubit, compensated, noise):
    """Outcome probabilities for the echo-phase measurement.

    Rows: (reference prep, swap/unswap echo) x (I, X90, Y90) pre-rotations on
    the target qubit.  The echo is one phase-continuous coupler drive of
    length 2 tau whose amplitude flips sign halfway, so the phase error it
    doubles splits per qubit exactly as the drive-induced frequency shifts.
    """
    from . import sequencer as seq
    from .circuits import (SEQUENCE_START_NS, X90_DURATION_NS, base_sequencer_state,
                           swap_pulse_template, x90_pulse)
    from .device import PORT_COUPLER, PORT_Q1, PORT_Q2

    gp = record.gate_params()
    tau = gp.duration_ns
    port = PORT_Q1 if qubit == 1 else PORT_Q2
    settings = _qubit_settings(qubit)
    # The pre-rotation fires in the same slot for reference and echo rows, so
    # relaxation after it biases both angle estimates identically.
    t_pre = SEQUENCE_START_NS + X90_DURATION_NS + 2 * tau
    window = t_pre + X90_DURATION_NS + SEQUENCE_START_NS
    sets = []
    for include_echo in (False, True):
        for s in settings:
            st = base_sequencer_state(device, engine)
            t = SEQUENCE_START_NS
            tmpl, amp = x90_pulse(device)
            st = seq.schedule_pulse(st, port, t, tmpl, amp)
            t += X90_DURATION_NS
            if include_echo:
                pair = swap_pulse_template(device, gp, 2 * tau, sign_flip_at_ns=tau)
                st = seq.schedule_pulse(st, PORT_COUPLER, t, pair, gp.amplitude)
                if compensated:
                    st = seq.add_virtual_z(st, PORT_Q1, t + 2 * tau, -2.0 * gp.vz_q1)
                    st = seq.add_virtual_z(st, PORT_Q2, t + 2 * tau, -2.0 * gp.vz_q2)
            pre = s.pre_q1 if qubit == 1 else s.pre_q2
            if pre != "I":
                tmpl, amp = x90_pulse(device, 0.0 if pre == "X90" else np.pi / 2.0)
                st = seq.schedule_pulse(st, port, t_pre, tmpl, amp)
            sets.append({p: seq.render_repetition(st, p, 0, window_ns=window)
                         for p in st.ports})
    finals, _ = evolve_batch(device, sets, DensityMatrix.basis("00"), noise=noise)
    return np.real(np.einsum("bii->bi", finals)).reshape(2, len(settings), 4)


def measure_echo_phase(device: DeviceConfig, engine: EngineConfig, record: CalibrationRecord,
                       qubit: int, shots: int = 0, seed: int = 0, noise: bool = True,
                       compensated: bool = False):
    """Equatorial phase picked up by one qubit through a swap/unswap echo,
    relative to an un-echoed reference preparation.  Returns (phase, residual
    population swapped onto the other qubit).  With `compensated` the
    record's virtual-Z pair is applied twice after the echo."""
    settings = _qubit_settings(qubit)
    probs = _echo_probabilities(device, engine, record, qubit, compensated, noise)
    ref_fr = _readout_fractions(device, probs[0], shots,
                                derive_seed(seed, f"echo_ref_q{qubit}"), "ref")
    echo_fr = _readout_fractions(device, probs[1], shots,
                                 derive_seed(seed, f"echo_q{qubit}"), "echo")
    ref = tomography.single_qubit_bloch_from_probabilities(qubit, settings, ref_fr)
    ech = tomography.single_qubit_bloch_from_probabilities(qubit, settings, echo_fr)
    other = 2 if qubit == 1 else 1
    p1, p2 = excited_populations(echo_fr[0])
    residual = float(p1 if other == 1 else p2)
    return wrap_angle(ech.equatorial_angle - ref.equatorial_angle), residual


def calibrate_virtual_z(device: DeviceConfig, engine: EngineConfig, record: CalibrationRecord,
                        shots: int = 0, seed: int = 0, noise: bool = True):
    """Per-qubit virtual-Z angles cancelling the drive-induced phase error.

    The echo doubles the per-gate phase error, so the compensation is minus
    half the measured echo phase.
    """
    bare = record.updated(vz_q1=0.0, vz_q2=0.0)
    vz = {}
    for qubit in (1, 2):
        phase, residual = measure_echo_phase(device, engine, bare, qubit, shots, seed, noise)
        baseline = device.readout_assignment_error
        if residual > 0.05 + baseline:
            raise CalibrationError("calibrate_virtual_z",
                                   f"echo leaves {residual:.1%} population swapped on the partner "
                                   f"of qubit {qubit}; amplitude/duration calibration inconsistent")
        vz[qubit] = wrap_angle(-0.5 * phase)
    return vz[1], vz[2]


# --- stage 5: coupler drive phase ----------------------------------------------------

_ETA_PREPS = ("superpos_a", "superpos_b")


def eta_scan(device: DeviceConfig, engine: EngineConfig, record: CalibrationRecord,
             phase_steps: int, shots: int = 0, seed: int = 0, noise: bool = True):
    """Mean tomography fidelity to the ideal swap outputs vs drive phase."""
    candidates = np.linspace(-np.pi, np.pi, phase_steps, endpoint=False)
    settings = tomography.all_settings()
    targets = [apply(iswap_family(np.pi, 0.0), prep_state_ideal(p)).density()
               for p in _ETA_PREPS]
    all_circuits = [tomography.setting_circuits(PREP_GATES[prep] + (iswap(),), settings)
                    for prep in _ETA_PREPS]
    window = max(circuits.circuit_duration_ns(c, record.gate_params())
                 for group in all_circuits for c in group)
    sets = []
    for phi in candidates:
        gp = record.updated(eta=wrap_angle(phi)).gate_params()
        for group in all_circuits:
            for circuit in group:
                sets.append(circuits.render_circuit(device, engine, gp, circuit, window_ns=window))
    finals, _ = evolve_batch(device, sets, DensityMatrix.basis("00"), noise=noise)
    probs = np.real(np.einsum("bii->bi", finals)).reshape(len(candidates), 2, 9, 4)
    scores = np.empty(len(candidates))
    for i in range(len(candidates)):
        fids = []
        for k, target in enumerate(targets):
            fr = _readout_fractions(device, probs[i, k], shots,
                                    derive_seed(seed, "eta", i * 2 + k), "eta") if shots > 0 else probs[i, k]
            exps = tomography.expectations_from_probabilities(settings, fr)
            rho = tomography.reconstruct_from_expectations(exps)
            fids.append(state_fidelity(rho, target))
        scores[i] = np.mean(fids)
    return candidates, scores


def refine_eta(candidates, scores) -> float:
    """Parabolic refinement of the best phase on the periodic grid."""
    best = int(np.argmax(scores))
    n = len(candidates)
    step = candidates[1] - candidates[0]
    x = np.array([candidates[best] - step, candidates[best], candidates[best] + step])
    y = np.array([scores[(best - 1) % n], scores[best], scores[(best + 1) % n]])
    denom = y[0] - 2.0 * y[1] + y[2]
    if abs(denom) < 1e-15:
        return wrap_angle(float(candidates[best]))
    return wrap_angle(float(x[1] + 0.5 * (y[0] - y[2]) / denom * step))


def calibrate_eta(device: DeviceConfig, engine: EngineConfig, record: CalibrationRecord,
                  phase_steps: int = 36, shots: int = 0, seed: int = 0,
                  noise: bool = True) -> float:
    candidates, scores = eta_scan(device, engine, record, phase_steps, shots, seed, noise)
    if scores.max() < 0.9:
        raise CalibrationError("calibrate_eta",
                               f"best tomography fidelity {scores.max():.3f} < 0.9; "
                               "gate broken upstream of the phase scan")
    return refine_eta(candidates, scores)


# --- phase-control demonstration ------------------------------------------------------

DEMO_PREPS = ("superpos_a", "superpos_b", "10")


def phase_average_demo(device: DeviceConfig, engine: EngineConfig, record: CalibrationRecord,
                       prep_label: str, commensurate: bool, repetitions: int = 200,
                       seed: int = 0, noise: bool = False, nco_offset_hz: float = 12.345e3):
    """Average post-gate tomography over many sequence repetitions.

    With the default engine every NCO is commensurate with the repetition
    rate and each repetition reproduces the same carrier phases, so the
    averaged state equals the single-shot state.  With `commensurate=False`
    the coupler NCO is detuned off the repetition grid and each repetition is
    trigger-jittered, so the gate phase differs per shot and phase-sensitive
    coherences average away.

    Returns (averaged DensityMatrix, per-qubit BlochVectors dict, ideal
    post-gate DensityMatrix).
    """
    from . import tomography

    if prep_label not in PREP_GATES:
        raise ValueError(f"unknown preparation {prep_label!r}")
    eng = engine
    rep_offsets = [(n, 0) for n in range(repetitions)]
    if not commensurate:
        from .device import PORT_COUPLER
        eng = engine.with_nco_offset(PORT_COUPLER, nco_offset_hz)
        rng = np.random.default_rng(derive_seed(seed, "demo_offsets"))
        max_ticks = max(1, (engine.repetition_period_ns // 2) // 2)
        rep_offsets = [(n, 2 * int(rng.integers(0, max_ticks))) for n in range(repetitions)]
    settings = tomography.all_settings()
    gates = PREP_GATES[prep_label] + (iswap(),)
    probs = tomography.setting_probabilities(device, eng, record.gate_params(), gates,
                                             settings, noise=noise, rep_offsets=rep_offsets)
    mean_probs = probs.mean(axis=0)
    exps = tomography.expectations_from_probabilities(settings, mean_probs)
    rho = tomography.reconstruct_from_expectations(exps)
    bloch = {q: tomography.bloch_vector(rho, q) for q in (1, 2)}
    ideal = apply(iswap_family(np.pi, 0.0), prep_state_ideal(prep_label)).density()
    return rho, bloch, ideal


# --- full pipeline -------------------------------------------------------------------

def full_pipeline(device: DeviceConfig, engine: EngineConfig, params: CalibrationParams,
                  seed: int = 0, config_hash: str = "", timestamp: str = "", jobs: int = 1):
    """Run all five stages; returns (record, artifacts for export)."""
    artifacts = {}

    v_values = params.v_values()
    v_dc = select_dc_bias(device, v_values)
    artifacts["dc_bias"] = (v_values, dc_bias_criterion(device, v_values))

    amp_sweep = amp_freq_sweep(device, engine, params.amplitudes(), params.amp_frequencies(),
                               tau_ns=params.amp_sweep_tau_ns, shots=params.shots,
                               seed=derive_seed(seed, "amp_freq"), noise=params.noise, jobs=jobs)
    artifacts["amp_freq"] = amp_sweep
    amplitude = select_amplitude(amp_sweep, params.min_oscillations, params.min_contrast)

    dur_sweep = duration_freq_sweep(device, engine, amplitude, params.durations(),
                                    params.dur_frequencies(), shots=params.shots,
                                    seed=derive_seed(seed, "duration_freq"), noise=params.noise,
                                    jobs=jobs)
    artifacts["duration_freq"] = dur_sweep
    drive_frequency, duration = select_gate_point(dur_sweep)

    record = CalibrationRecord(v_dc=v_dc, amplitude=amplitude,
                               drive_frequency=drive_frequency, duration=duration)

    vz_q1, vz_q2 = calibrate_virtual_z(device, engine, record, shots=params.shots,
                                       seed=derive_seed(seed, "virtual_z"), noise=params.noise)
    record = record.updated(vz_q1=vz_q1, vz_q2=vz_q2)

    candidates, scores = eta_scan(device, engine, record, params.phase_steps,
                                  shots=params.shots, seed=derive_seed(seed, "eta"),
                                  noise=params.noise)
    artifacts["eta_scan"] = (candidates, scores)
    if scores.max() < 0.9:
        raise CalibrationError("calibrate_eta",
                               f"best tomography fidelity {scores.max():.3f} < 0.9")
    record = record.updated(eta=refine_eta(candidates, scores),
                            timestamp=timestamp, config_hash=config_hash)
    return record, artifacts
