"""Software model of a multi-port DDS synthesis chain.

Each port owns an NCO (final upconversion, phase established at a sysref
event) and an IF carrier generator whose frequency and phase are updatable on
a 2 ns grid.  Waveforms are represented as a complex analytic baseband signal
at 1 GS/s (one complex sample per ns) carrying the IF phase and virtual-Z
bookkeeping; the NCO enters as carrier metadata (frequency plus phase at the
first sample) instead of being sampled, which preserves every inter-port
phase relationship without modeling the converter-rate stream.

Timing model: a single sysref event pins the NCO phases and starts the
sequence pattern, which then replays every `repetition_period_ns`.  At each
repetition boundary the IF accumulators restart (one 2 ns grid tick of dead
time), while the NCOs run free from the sysref.  The pattern therefore starts
each repetition with an identical IF phase, and with an identical NCO phase
exactly when the NCO frequency is commensurate with the repetition rate.

Phase accumulators are kept in cycles using exact rational arithmetic of
(frequency x integer ns); they are converted to radians only when samples are
produced, so phases do not drift over arbitrarily long sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

GRID_NS = 2
IF_NYQUIST_HZ = 500e6
DEAD_TIME_NS = 2  # IF-domain resync cost at each repetition boundary
_NS = 10**9  # ns per second, as an exact integer

PLAY = "play"
SET_IF_FREQUENCY = "set_if_frequency"
SET_IF_PHASE = "set_if_phase"
ADD_VIRTUAL_Z = "add_virtual_z"


class GridError(ValueError):
    """Raised for timestamps that violate the 2 ns event grid."""


class SyncError(ValueError):
    """Raised when a time precedes the last sysref event."""


def _check_grid(t_ns) -> int:
    t = int(t_ns)
    if t != t_ns or t % GRID_NS != 0 or t < 0:
        raise GridError(
            f"timestamp {t_ns} ns is off the {GRID_NS} ns event grid "
            f"(IF phase/frequency updates are only defined every {GRID_NS} ns)"
        )
    return t


def _cycles_per_ns(f_hz: float) -> Fraction:
    return Fraction(f_hz) / _NS


def _wrap_cycles(c: Fraction) -> float:
    return float(c - (c // 1))


@dataclass(frozen=True, eq=False)
class NcoConfig:
    """Numerically-controlled oscillator: frequency and phase at sync."""

    frequency: float
    reference_phase: float = 0.0

    def __post_init__(self):
        if self.frequency < 0:
            raise ValueError("NCO frequency must be non-negative")


@dataclass(frozen=True, eq=False)
class IfGenerator:
    """Initial IF carrier settings for a port (changeable via grid events)."""

    frequency: float = 0.0
    phase_offset: float = 0.0

    def __post_init__(self):
        if abs(self.frequency) >= IF_NYQUIST_HZ:
            raise ValueError(f"|IF frequency| must stay below {IF_NYQUIST_HZ:.0f} Hz")


@dataclass(frozen=True, eq=False)
class PulseTemplate:
    """Complex envelope sampled at 1 GS/s, |e| <= 1 (DAC full scale = 1.0)."""

    envelope: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.envelope, dtype=complex).reshape(-1)
        if e.size == 0:
            raise ValueError("empty envelope")
        if np.max(np.abs(e)) > 1.0 + 1e-12:
            raise ValueError("envelope modulus exceeds DAC full scale 1.0")
        e = e.copy()
        e.setflags(write=False)
        object.__setattr__(self, "envelope", e)

    @property
    def duration_ns(self) -> int:
        return int(self.envelope.size)

    @classmethod
    def rectangular(cls, duration_ns: int, amplitude: float = 1.0) -> "PulseTemplate":
        return cls(np.full(int(duration_ns), amplitude, dtype=complex))

    @classmethod
    def sin2_edges(cls, duration_ns: int, edge_ns: int, amplitude: float = 1.0) -> "PulseTemplate":
        """Flat-top pulse with sine-squared rise and fall."""
        n, e = int(duration_ns), int(edge_ns)
        if 2 * e > n:
            raise ValueError("edges longer than the pulse")
        env = np.full(n, amplitude, dtype=complex)
        if e:
            ramp = np.sin(0.5 * np.pi * np.arange(e) / e) ** 2
            env[:e] *= ramp
            env[n - e:] *= ramp[::-1]
        return cls(env)

    def rotated(self, phase: float) -> "PulseTemplate":
        return PulseTemplate(self.envelope * np.exp(1j * phase))


@dataclass(frozen=True, eq=False)
class Event:
    """One sequencer action at a pattern-local, grid-aligned time."""

    t_ns: int
    action: str
    params: tuple = ()


@dataclass(frozen=True, eq=False)
class PortSchedule:
    port_id: str
    nco: NcoConfig
    if_gen: IfGenerator = field(default_factory=IfGenerator)
    events: tuple = ()


@dataclass(frozen=True, eq=False)
class SequencerState:
    """Immutable snapshot of all port schedules sharing one time base."""

    ports: dict
    repetition_period_ns: int
    last_sync_ns: int = 0

    def __post_init__(self):
        if self.repetition_period_ns <= 0 or self.repetition_period_ns % GRID_NS:
            raise GridError("repetition period must be a positive multiple of the grid")
        object.__setattr__(self, "ports", dict(self.ports))

    def port(self, port_id: str) -> PortSchedule:
        try:
            return self.ports[port_id]
        except KeyError:
            raise KeyError(f"unknown port {port_id!r}") from None

    def _with_port(self, schedule: PortSchedule) -> "SequencerState":
        ports = dict(self.ports)
        ports[schedule.port_id] = schedule
        return replace(self, ports=ports)


@dataclass(frozen=True, eq=False)
class RenderedWaveform:
    """Analytic baseband samples plus NCO carrier metadata.

    The implied physical signal at sample k is
    samples[k] * exp(i (2 pi carrier_frequency * k ns + carrier_phase)),
    with carrier_phase the NCO phase at the first sample.
    """

    samples: np.ndarray
    t0_ns: int
    carrier_frequency: float
    carrier_phase: float
    clipped: bool = False

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)


def sysref_sync(state: SequencerState, t_ns: int) -> SequencerState:
    """Pin all NCO phases to their reference value at t and start the pattern."""
    t = _check_grid(t_ns)
    return replace(state, last_sync_ns=t)


def nco_commensurate(f_nco: float, repetition_period_ns: int) -> bool:
    """True iff the NCO completes an integer number of cycles per repetition."""
    if repetition_period_ns <= 0:
        raise ValueError("repetition period must be positive")
    cycles = _cycles_per_ns(f_nco) * repetition_period_ns
    return abs(cycles - round(cycles)) < 1e-9


def _append_event(state: SequencerState, port_id: str, event: Event) -> SequencerState:
    sched = state.port(port_id)
    events = sorted(sched.events + (event,), key=lambda e: e.t_ns)
    return state._with_port(replace(sched, events=tuple(events)))


def schedule_pulse(state, port_id, t_ns, template: PulseTemplate, amplitude_scale: float):
    t = _check_grid(t_ns)
    if not 0.0 <= amplitude_scale <= 1.0:
        raise ValueError("amplitude_scale must lie in [0, 1]")
    if t + template.duration_ns > state.repetition_period_ns:
        raise ValueError("pulse extends past the repetition window")
    return _append_event(state, port_id, Event(t, PLAY, (template, float(amplitude_scale))))


def set_if_frequency(state, port_id, t_ns, f_hz: float):
    t = _check_grid(t_ns)
    if abs(f_hz) >= IF_NYQUIST_HZ:
        raise ValueError(f"|IF frequency| must stay below {IF_NYQUIST_HZ:.0f} Hz (IF Nyquist)")
    return _append_event(state, port_id, Event(t, SET_IF_FREQUENCY, (float(f_hz),)))


def set_if_phase(state, port_id, t_ns, phase: float):
    t = _check_grid(t_ns)
    return _append_event(state, port_id, Event(t, SET_IF_PHASE, (float(phase),)))


def add_virtual_z(state, port_id, t_ns, dphi: float):
    t = _check_grid(t_ns)
    return _append_event(state, port_id, Event(t, ADD_VIRTUAL_Z, (float(dphi),)))


# --- pattern-local phase resolution -------------------------------------------------

@dataclass(frozen=True, eq=False)
class _IfSegment:
    start_ns: int
    freq_cyc: Fraction      # cycles per ns
    base_cycles: Fraction   # frequency-accumulated cycles at start_ns
    base_rad: float         # phase offset in radians


def _if_segments(schedule: PortSchedule):
    """Piecewise-constant IF generator state over one pattern repetition."""
    segs = [_IfSegment(0, _cycles_per_ns(schedule.if_gen.frequency),
                       Fraction(0), schedule.if_gen.phase_offset)]
    for ev in schedule.events:
        cur = segs[-1]
        if ev.action == SET_IF_FREQUENCY:
            acc = cur.base_cycles + cur.freq_cyc * (ev.t_ns - cur.start_ns)
            segs.append(_IfSegment(ev.t_ns, _cycles_per_ns(ev.params[0]), acc, cur.base_rad))
        elif ev.action == SET_IF_PHASE:
            segs.append(_IfSegment(ev.t_ns, cur.freq_cyc, Fraction(0), ev.params[0]))
    return segs


def _if_phase_rad(segs, t_local: int) -> float:
    seg = segs[0]
    for s in segs:
        if s.start_ns <= t_local:
            seg = s
        else:
            break
    cycles = seg.base_cycles + seg.freq_cyc * (t_local - seg.start_ns)
    return seg.base_rad + 2.0 * np.pi * _wrap_cycles(cycles)


def _if_phase_array(segs, t_start: int, n: int) -> np.ndarray:
    """IF phase in radians at local samples t_start .. t_start+n-1."""
    out = np.empty(n, dtype=float)
    bounds = [s.start_ns for s in segs] + [t_start + n]
    for i, seg in enumerate(segs):
        lo = max(seg.start_ns, t_start)
        hi = min(bounds[i + 1], t_start + n)
        if lo >= hi:
            continue
        anchor = _wrap_cycles(seg.base_cycles + seg.freq_cyc * (lo - seg.start_ns))
        k = np.arange(hi - lo, dtype=float)
        out[lo - t_start:hi - t_start] = seg.base_rad + 2.0 * np.pi * (anchor + float(seg.freq_cyc) * k)
    return out


def _vz_total(schedule: PortSchedule, t_local: int) -> float:
    """Accumulated virtual-Z phase applying to pulses starting at >= their event time."""
    total = 0.0
    for ev in schedule.events:
        if ev.action == ADD_VIRTUAL_Z and ev.t_ns <= t_local:
            total += ev.params[0]
    return total


def _nco_phase(nco: NcoConfig, dt_ns: int) -> float:
    cycles = _cycles_per_ns(nco.frequency) * dt_ns
    return (nco.reference_phase + 2.0 * np.pi * _wrap_cycles(cycles)) % (2.0 * np.pi)


def phase_at(state: SequencerState, port_id: str, t_ns: int) -> float:
    """Total instantaneous carrier phase (NCO + IF + virtual-Z), modulo 2 pi."""
    if t_ns < state.last_sync_ns:
        raise SyncError(f"t = {t_ns} ns precedes the last sync at {state.last_sync_ns} ns")
    sched = state.port(port_id)
    dt = int(t_ns) - state.last_sync_ns
    local = dt % state.repetition_period_ns
    segs = _if_segments(sched)
    total = _nco_phase(sched.nco, dt) + _if_phase_rad(segs, local) + _vz_total(sched, local)
    return float(total % (2.0 * np.pi))


def _render_pattern(schedule: PortSchedule, window_ns: int, suppress_dead_time: bool):
    """Render one repetition of a port's pattern into a local sample buffer."""
    buf = np.zeros(window_ns, dtype=complex)
    segs = _if_segments(schedule)
    if_phase = None
    for ev in schedule.events:
        if ev.action != PLAY:
            continue
        template, scale = ev.params
        n = template.duration_ns
        if ev.t_ns >= window_ns:
            continue
        if if_phase is None:
            if_phase = _if_phase_array(segs, 0, window_ns)
        hi = min(ev.t_ns + n, window_ns)
        sl = slice(ev.t_ns, hi)
        vz = _vz_total(schedule, ev.t_ns)
        buf[sl] += template.envelope[: hi - ev.t_ns] * scale * np.exp(1j * (if_phase[sl] + vz))
    if suppress_dead_time:
        buf[:DEAD_TIME_NS] = 0.0
    mag = np.abs(buf)
    clipped = bool(np.any(mag > 1.0 + 1e-12))
    if clipped:
        over = mag > 1.0
        buf[over] /= mag[over]
    return buf, clipped


def render_repetition(state: SequencerState, port_id: str, rep_index: int,
                      start_offset_ns: int = 0, window_ns=None) -> RenderedWaveform:
    """Render one repetition of the pattern, optionally trigger-shifted.

    The pattern replays at sync + rep_index * period + start_offset_ns with
    fresh IF accumulators; the NCO phase is evaluated at that absolute time,
    free-running since sysref.
    """
    offset = _check_grid(start_offset_ns)
    sched = state.port(port_id)
    window = state.repetition_period_ns if window_ns is None else int(window_ns)
    t0 = state.last_sync_ns + rep_index * state.repetition_period_ns + offset
    buf, clipped = _render_pattern(sched, window, suppress_dead_time=(rep_index > 0 or offset > 0))
    return RenderedWaveform(
        samples=buf,
        t0_ns=t0,
        carrier_frequency=sched.nco.frequency,
        carrier_phase=_nco_phase(sched.nco, t0 - state.last_sync_ns),
        clipped=clipped,
    )


def render(state: SequencerState, port_id: str, t0_ns: int, t1_ns: int) -> RenderedWaveform:
    """Render the absolute window [t0, t1) across repetition boundaries."""
    if t0_ns >= t1_ns:
        raise ValueError("t0 must precede t1")
    if t0_ns < state.last_sync_ns:
        raise SyncError("window starts before the last sync")
    sched = state.port(port_id)
    period = state.repetition_period_ns
    total = int(t1_ns) - int(t0_ns)
    out = np.zeros(total, dtype=complex)
    clipped = False
    first_rep = (int(t0_ns) - state.last_sync_ns) // period
    last_rep = (int(t1_ns) - 1 - state.last_sync_ns) // period
    for rep in range(first_rep, last_rep + 1):
        rep_start = state.last_sync_ns + rep * period
        buf, c = _render_pattern(sched, period, suppress_dead_time=(rep > 0))
        clipped = clipped or c
        lo = max(rep_start, int(t0_ns))
        hi = min(rep_start + period, int(t1_ns))
        out[lo - int(t0_ns):hi - int(t0_ns)] = buf[lo - rep_start:hi - rep_start]
    return RenderedWaveform(
        samples=out,
        t0_ns=int(t0_ns),
        carrier_frequency=sched.nco.frequency,
        carrier_phase=_nco_phase(sched.nco, int(t0_ns) - state.last_sync_ns),
        clipped=clipped,
    )


def analytic_samples(w: RenderedWaveform) -> np.ndarray:
    """Fold the NCO carrier factor into the samples (exact per-sample phases)."""
    f_cyc = _cycles_per_ns(w.carrier_frequency)
    k = np.arange(w.samples.size, dtype=float)
    return w.samples * np.exp(1j * (w.carrier_phase + 2.0 * np.pi * float(f_cyc) * k))


def waveforms_equal(a: RenderedWaveform, b: RenderedWaveform, atol: float = 0.0) -> bool:
    """Sample-wise and carrier-metadata equality (phase compared mod 2 pi)."""
    if a.samples.shape != b.samples.shape or a.carrier_frequency != b.carrier_frequency:
        return False
    dphi = (a.carrier_phase - b.carrier_phase) % (2.0 * np.pi)
    dphi = min(dphi, 2.0 * np.pi - dphi)
    if atol == 0.0:
        return bool(np.array_equal(a.samples, b.samples) and dphi == 0.0)
    return bool(np.max(np.abs(a.samples - b.samples)) <= atol and dphi <= atol)


# --- serialization -------------------------------------------------------------------

def waveform_to_csv(w: RenderedWaveform, path) -> None:
    """Export samples as `t_ns, re, im, carrier_hz` rows."""
    with open(path, "w", newline="\n") as fh:
        fh.write("t_ns,re,im,carrier_hz\n")
        for k, s in enumerate(w.samples):
            fh.write(f"{w.t0_ns + k},{s.real:.9g},{s.imag:.9g},{w.carrier_frequency:.9g}\n")


def _event_to_json(port_id: str, ev: Event) -> dict:
    if ev.action == PLAY:
        template, scale = ev.params
        params = {
            "envelope_re": [float(x) for x in template.envelope.real],
            "envelope_im": [float(x) for x in template.envelope.imag],
            "amplitude_scale": scale,
        }
    elif ev.action == SET_IF_FREQUENCY:
        params = {"frequency_hz": ev.params[0]}
    elif ev.action == SET_IF_PHASE:
        params = {"phase_rad": ev.params[0]}
    else:
        params = {"dphi_rad": ev.params[0]}
    return {"port": port_id, "t_ns": ev.t_ns, "action": ev.action, "params": params}


def _event_from_json(d: dict) -> Event:
    action, p = d["action"], d["params"]
    if action == PLAY:
        env = np.array(p["envelope_re"]) + 1j * np.array(p["envelope_im"])
        return Event(d["t_ns"], PLAY, (PulseTemplate(env), float(p["amplitude_scale"])))
    if action == SET_IF_FREQUENCY:
        return Event(d["t_ns"], action, (float(p["frequency_hz"]),))
    if action == SET_IF_PHASE:
        return Event(d["t_ns"], action, (float(p["phase_rad"]),))
    if action == ADD_VIRTUAL_Z:
        return Event(d["t_ns"], action, (float(p["dphi_rad"]),))
    raise ValueError(f"unknown action {action!r}")


def schedule_to_json(state: SequencerState) -> dict:
    events = []
    ports = {}
    for port_id in sorted(state.ports):
        sched = state.ports[port_id]
        ports[port_id] = {
            "nco": {"frequency": sched.nco.frequency, "reference_phase": sched.nco.reference_phase},
            "if": {"frequency": sched.if_gen.frequency, "phase_offset": sched.if_gen.phase_offset},
        }
        events.extend(_event_to_json(port_id, ev) for ev in sched.events)
    return {
        "repetition_period_ns": state.repetition_period_ns,
        "last_sync_ns": state.last_sync_ns,
        "ports": ports,
        "events": events,
    }


def schedule_from_json(d: dict) -> SequencerState:
    ports = {}
    for port_id, pd in d["ports"].items():
        ports[port_id] = PortSchedule(
            port_id=port_id,
            nco=NcoConfig(pd["nco"]["frequency"], pd["nco"]["reference_phase"]),
            if_gen=IfGenerator(pd["if"]["frequency"], pd["if"]["phase_offset"]),
        )
    state = SequencerState(ports, d["repetition_period_ns"], d["last_sync_ns"])
    for ed in d["events"]:
        state = _append_event(state, ed["port"], _event_from_json(ed))
    return state
