"""Native gates and their realization as port schedules or ideal unitaries.

The native set is {X90(q, phase), VZ(q, angle), ISWAP}: 20 ns single-qubit
pulses, zero-duration reference-phase updates, and the calibrated coupler
pulse.  A circuit is a plain list of NativeGate laid out sequentially on the
shared time axis starting at the first grid tick after the repetition
boundary.

Two execution paths exist and are kept deliberately independent:
  * the waveform path builds a three-port schedule, renders it and integrates
    the device master equation (virtual-Z becomes engine reference-phase
    bookkeeping, the coupler pulse uses the calibration record);
  * the unitary path multiplies ideal gate matrices (virtual-Z becomes an
    explicit diagonal unitary, ISWAP the exact swap matrix).
Populations agree between the paths; single-qubit phase conventions differ by
a terminal frame rotation that no Z-basis measurement can see.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import sequencer as seq
from .device import PORT_Q1, PORT_Q2, PORT_COUPLER, DeviceConfig, evolve
from .quantum import DensityMatrix, StateVector, Unitary, iswap_family, single_qubit_x90, virtual_z_unitary

X90_DURATION_NS = 20
ISWAP_DURATION_NS = 290
SEQUENCE_START_NS = 2

_QUBIT_PORT = {1: PORT_Q1, 2: PORT_Q2}


@dataclass(frozen=True)
class NativeGate:
    """One native operation; `angle` is the drive phase for x90, the rotation
    angle for vz, and an extra drive-phase offset for iswap (pi = -iSWAP)."""

    kind: str                   # "x90" | "vz" | "iswap"
    qubit: int | None = None
    angle: float = 0.0

    @property
    def duration_ns(self) -> int:
        if self.kind == "x90":
            return X90_DURATION_NS
        if self.kind == "vz":
            return 0
        return ISWAP_DURATION_NS


def x90(qubit: int, phase: float = 0.0) -> NativeGate:
    return NativeGate("x90", qubit, phase)


def vz(qubit: int, angle: float) -> NativeGate:
    return NativeGate("vz", qubit, angle)


def iswap(minus: bool = False) -> NativeGate:
    return NativeGate("iswap", None, np.pi if minus else 0.0)


PREP_GATES = {
    "00": (),
    "01": (x90(2), x90(2)),
    "10": (x90(1), x90(1)),
    "11": (x90(1), x90(1), x90(2), x90(2)),
    "superpos_a": (x90(2, np.pi),),          # (|00> + i|01>) / sqrt(2)
    "superpos_b": (x90(1, np.pi),),          # (|00> + i|10>) / sqrt(2)
}


def gate_unitary(gate: NativeGate) -> Unitary:
    """Ideal unitary of one native gate (iswap angle folds into eta)."""
    if gate.kind == "x90":
        return single_qubit_x90(gate.qubit, gate.angle)
    if gate.kind == "vz":
        phi1 = gate.angle if gate.qubit == 1 else 0.0
        phi2 = gate.angle if gate.qubit == 2 else 0.0
        return virtual_z_unitary(phi1, phi2)
    if gate.kind == "iswap":
        return iswap_family(np.pi, gate.angle)
    raise ValueError(f"unknown gate kind {gate.kind!r}")


def circuit_unitary(gates) -> np.ndarray:
    """Ideal product of a gate list, first gate applied first."""
    u = np.eye(4, dtype=complex)
    for g in gates:
        u = gate_unitary(g).matrix @ u
    return u


def prep_state_ideal(label: str) -> StateVector:
    if label not in PREP_GATES:
        raise ValueError(f"unknown preparation {label!r}")
    return StateVector(circuit_unitary(PREP_GATES[label]) @ StateVector.basis("00").amplitudes)


# --- engine configuration ------------------------------------------------------------

@dataclass(frozen=True)
class PortSettings:
    nco_frequency: float
    nco_reference_phase: float = 0.0


@dataclass(frozen=True)
class EngineConfig:
    """Sequencer-side settings: repetition period and per-port NCOs.

    The default NCO plan keeps every NCO commensurate with the repetition
    rate (100 kHz at the 10 us default period) and leaves the remainder of
    each carrier to the IF generators, which resynchronize in one grid tick.
    """

    repetition_period_ns: int = 10_000
    ports: dict = field(default_factory=lambda: {
        PORT_Q1: PortSettings(4.8e9),
        PORT_Q2: PortSettings(4.2724e9),
        PORT_COUPLER: PortSettings(0.4e9),
    })

    def with_nco_offset(self, port_id: str, delta_hz: float) -> "EngineConfig":
        ports = dict(self.ports)
        p = ports[port_id]
        ports[port_id] = replace(p, nco_frequency=p.nco_frequency + delta_hz)
        return replace(self, ports=ports)


def x90_amplitude(cfg: DeviceConfig) -> float:
    """Drive amplitude giving a quarter-cycle rotation area over the 20 ns pulse."""
    amp = 1.0 / (4.0 * cfg.rabi_rate_per_unit * X90_DURATION_NS * 1e-9)
    if amp > 1.0:
        raise ValueError("rabi_rate_per_unit too small for a 20 ns X90 at full scale")
    return amp


@dataclass(frozen=True)
class GateParams:
    """Coupler-pulse parameters the schedule builder needs (a thinned-down
    calibration record, so sweeps can drive uncalibrated points)."""

    amplitude: float
    drive_frequency: float
    duration_ns: int
    eta: float = 0.0
    vz_q1: float = 0.0
    vz_q2: float = 0.0


def base_sequencer_state(device: DeviceConfig, engine: EngineConfig) -> seq.SequencerState:
    """Port setup shared by every schedule: qubit IFs at the qubit
    frequencies, coupler IF at their difference (the frame eta lives in)."""
    ports = {}
    for port_id, settings in engine.ports.items():
        target = {
            PORT_Q1: device.w_q1,
            PORT_Q2: device.w_q2,
            PORT_COUPLER: device.difference_frequency,
        }[port_id]
        ports[port_id] = seq.PortSchedule(
            port_id,
            nco=seq.NcoConfig(settings.nco_frequency, settings.nco_reference_phase),
            if_gen=seq.IfGenerator(frequency=target - settings.nco_frequency),
        )
    return seq.SequencerState(ports, engine.repetition_period_ns)


def swap_pulse_template(device: DeviceConfig, gate_params: GateParams, duration_ns: int,
                        extra_phase: float = 0.0, sign_flip_at_ns=None) -> seq.PulseTemplate:
    """Coupler pulse envelope: the drive's Stark detuning from the difference
    frame is synthesized as a sample-level frequency offset; an optional
    amplitude sign flip partway realizes the swap-then-unswap echo pair as
    one phase-continuous drive."""
    detuning = gate_params.drive_frequency - device.difference_frequency
    k = np.arange(int(duration_ns))
    env = np.exp(1j * (2 * np.pi * detuning * 1e-9 * k + gate_params.eta + extra_phase))
    if sign_flip_at_ns is not None:
        env[int(sign_flip_at_ns):] *= -1.0
    return seq.PulseTemplate(env)


def x90_pulse(device: DeviceConfig, phase: float = 0.0):
    """(template, amplitude) pair for the 20 ns quarter-cycle pulse."""
    return seq.PulseTemplate.rectangular(X90_DURATION_NS).rotated(phase), x90_amplitude(device)


def build_schedule(device: DeviceConfig, engine: EngineConfig, gate_params: GateParams,
                   gates, start_ns: int = SEQUENCE_START_NS):
    """Lay a circuit out on the three ports; returns (state, end_ns).

    Qubit ports run their IF at the qubit frequencies.  The coupler IF runs
    at the qubits' difference frequency, the frame the drive phase eta is
    defined against; the calibrated drive's Stark detuning from that frame is
    synthesized inside each pulse envelope as a sample-level frequency
    offset.  The swap phase is therefore the same at every circuit position
    and the coupler's phase accumulator never leaves the difference frame.
    Pulse phases ride on rotated envelopes, virtual-Z on the engine's
    per-port phase bookkeeping, and each coupler pulse is followed by the
    frame swap it causes plus the record's per-qubit virtual-Z pair.
    """
    state = base_sequencer_state(device, engine)
    x90_template = seq.PulseTemplate.rectangular(X90_DURATION_NS)
    x90_amp = x90_amplitude(device)
    t = int(start_ns)
    # Engine-side reference phase emitted so far per qubit port.  The swap
    # gate exchanges the physical contents of the qubits, so the two frames
    # must travel with them: they are swapped through every coupler pulse,
    # and the pulse's own phase is taken relative to the frame difference.
    frame = {1: 0.0, 2: 0.0}

    def emit_frame(st, qubit, angle, at):
        frame[qubit] += angle
        return seq.add_virtual_z(st, _QUBIT_PORT[qubit], at, angle)

    for gate in gates:
        if gate.kind == "x90":
            state = seq.schedule_pulse(state, _QUBIT_PORT[gate.qubit], t,
                                       x90_template.rotated(gate.angle), x90_amp)
            t += X90_DURATION_NS
        elif gate.kind == "vz":
            # Advancing the port reference phase by -angle acts on the state
            # like the +angle virtual-Z unitary of the ideal path.
            state = emit_frame(state, gate.qubit, -gate.angle, t)
        elif gate.kind == "iswap":
            template = swap_pulse_template(device, gate_params, gate_params.duration_ns,
                                           extra_phase=gate.angle)
            state = seq.schedule_pulse(state, PORT_COUPLER, t, template,
                                       gate_params.amplitude)
            t += gate_params.duration_ns
            # The per-gate phase errors split per qubit only for a drive that
            # stays phase-continuous across gates; with per-pulse anchoring
            # the consistent frame constant is the common (mean) part, the
            # differential part having moved into the calibrated eta.
            swap = frame[2] - frame[1]
            vz_mean = 0.5 * (gate_params.vz_q1 + gate_params.vz_q2)
            state = emit_frame(state, 1, swap - vz_mean, t)
            state = emit_frame(state, 2, -swap - vz_mean, t)
        else:
            raise ValueError(f"unknown gate kind {gate.kind!r}")
    return state, t + SEQUENCE_START_NS


def circuit_duration_ns(gates, gate_params: GateParams) -> int:
    total = SEQUENCE_START_NS
    for g in gates:
        total += gate_params.duration_ns if g.kind == "iswap" else g.duration_ns
    return total + SEQUENCE_START_NS


def render_circuit(device: DeviceConfig, engine: EngineConfig, gate_params: GateParams,
                   gates, rep_index: int = 0, start_offset_ns: int = 0, window_ns=None):
    """Schedule a circuit and render all three ports over its window.

    `window_ns` overrides the natural end time, so same-structure circuits of
    slightly different length can be batched (the tail idles).
    """
    state, end_ns = build_schedule(device, engine, gate_params, gates)
    window = end_ns if window_ns is None else int(window_ns)
    return {
        port_id: seq.render_repetition(state, port_id, rep_index, start_offset_ns, window_ns=window)
        for port_id in state.ports
    }


def execute_circuit(device: DeviceConfig, engine: EngineConfig, gate_params: GateParams,
                    gates, initial: DensityMatrix | None = None, noise: bool = False,
                    rep_index: int = 0, start_offset_ns: int = 0, substeps: int = 4):
    """Waveform-path execution of one circuit from |00> (or `initial`)."""
    waveforms = render_circuit(device, engine, gate_params, gates, rep_index, start_offset_ns)
    rho0 = DensityMatrix.basis("00") if initial is None else initial
    return evolve(device, waveforms, rho0, noise=noise, substeps=substeps)
