"""Simulated two-transmon device with a flux-tunable parametric coupler.

The coupler is adiabatically eliminated: its AC drive enters the two-qubit
rotating-frame Hamiltonian as an effective |01> <-> |10> coupling whose
complex amplitude is the demodulated flux-line signal at the qubit difference
frequency, scaled by `swap_rate_per_unit`.  The drive additionally Stark
shifts both qubit frequencies proportionally to its power.  Qubit drive lines
enter as standard X/Y terms after demodulation at each (bare) qubit
frequency.  Decoherence is Lindblad amplitude damping plus pure dephasing
with 1/T2 = 1/(2 T1) + 1/Tphi.

Frames and conventions:
  * reference oscillators are anchored at absolute time 0, so a drive's
    demodulated phase is physical and survives across repetition windows;
  * the effective coupling term is -(g/2) |01><10| + h.c. with
    g(t) = swap_rate_per_unit * demod(coupler), which realizes the
    partial-swap family with Omega/2pi = swap_rate_per_unit * amplitude and
    eta equal to the demodulated drive phase;
  * Stark terms are -(delta_q/2) Z_q with delta_q = stark_coeff_q * |a(t)|^2,
    i.e. delta_q is literally the shift of qubit q's frequency.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, replace
from fractions import Fraction

import numpy as np

from .quantum import DensityMatrix
from .sequencer import RenderedWaveform

PORT_Q1 = "q1_drive"
PORT_Q2 = "q2_drive"
PORT_COUPLER = "coupler_flux"
PORTS = (PORT_Q1, PORT_Q2, PORT_COUPLER)

SPECTROSCOPY_LINEWIDTH_HZ = 5e6
_NS = 10**9


class IntegrationError(RuntimeError):
    """Raised when the master-equation integration produces an invalid state."""


@dataclass(frozen=True)
class DeviceConfig:
    """All physical parameters of the simulated sample."""

    w_q1: float                 # qubit 1 frequency, Hz
    w_q2: float                 # qubit 2 frequency, Hz
    w_c0: float                 # coupler frequency at zero flux, Hz
    flux_period_V: float        # volts per flux quantum
    v_offset: float             # volts at zero flux
    g_qc: float                 # coupler-qubit coupling, Hz
    g_rc: float                 # coupler-resonator coupling, Hz
    w_r1: float                 # readout resonator frequencies, Hz
    w_r2: float
    rabi_rate_per_unit: float   # Hz of qubit Rabi rate per unit drive amplitude
    swap_rate_per_unit: float   # Hz of Omega/2pi per unit coupler amplitude
    stark_coeff_q1: float       # Hz frequency shift per (unit coupler amplitude)^2
    stark_coeff_q2: float
    t1_q1: float                # seconds
    t1_q2: float
    t2_q1: float
    t2_q2: float
    readout_assignment_error: float

    def __post_init__(self):
        for name in ("w_q1", "w_q2", "w_c0", "w_r1", "w_r2"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for q in (1, 2):
            t1, t2 = getattr(self, f"t1_q{q}"), getattr(self, f"t2_q{q}")
            if t1 <= 0 or t2 <= 0:
                raise ValueError("T1/T2 must be positive")
            if t2 > 2 * t1 + 1e-15:
                raise ValueError(f"t2_q{q} exceeds the 2*T1 limit")
        if not 0 <= self.readout_assignment_error < 0.5:
            raise ValueError("readout assignment error must lie in [0, 0.5)")

    @property
    def t_phi_q1(self) -> float:
        return 1.0 / (1.0 / self.t2_q1 - 0.5 / self.t1_q1)

    @property
    def t_phi_q2(self) -> float:
        return 1.0 / (1.0 / self.t2_q2 - 0.5 / self.t1_q2)

    @property
    def difference_frequency(self) -> float:
        return self.w_q1 - self.w_q2

    @classmethod
    def default(cls) -> "DeviceConfig":
        # w_c0 puts the coupler exactly midway between the highest qubit and
        # the lowest resonator at 0.25 flux quanta (3.775 V), while staying
        # above both resonators at zero flux so the bias sweeps cross them.
        return cls(
            w_q1=4.8e9,
            w_q2=4.27245e9,
            w_c0=5.7e9 * 2.0 ** 0.25,
            flux_period_V=14.0,
            v_offset=0.275,
            g_qc=80e6,
            g_rc=40e6,
            w_r1=6.6e9,
            w_r2=6.75e9,
            rabi_rate_per_unit=25e6,
            swap_rate_per_unit=7.306e6,
            stark_coeff_q1=-6.0e6,
            stark_coeff_q2=3.0e6,
            t1_q1=30e-6,
            t1_q2=30e-6,
            t2_q1=20e-6,
            t2_q2=20e-6,
            readout_assignment_error=0.02,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceConfig":
        return cls(**d)

    def with_updates(self, **kwargs) -> "DeviceConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True, eq=False)
class SimResult:
    final_state: DensityMatrix
    time_evolved: float          # seconds
    max_step_norm: float         # max |H| matrix element over steps, Hz
    min_eigenvalue: float        # most negative eigenvalue before sanitizing


@dataclass(frozen=True)
class ReadoutCounts:
    shots: int
    counts: dict

    def __post_init__(self):
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts do not sum to shots")

    def fraction(self, outcome: str) -> float:
        return self.counts.get(outcome, 0) / self.shots

    def marginal_ground(self, qubit: int) -> float:
        """Fraction of shots with the given qubit read out as 0."""
        keep = {1: ("00", "01"), 2: ("00", "10")}[qubit]
        return sum(self.counts.get(o, 0) for o in keep) / self.shots


# --- static responses ----------------------------------------------------------------

def coupler_frequency(cfg: DeviceConfig, v_dc: float) -> float:
    """Flux-tuned coupler frequency w_c0 sqrt(|cos(pi Phi/Phi0)|)."""
    phi = (v_dc - cfg.v_offset) / cfg.flux_period_V
    return cfg.w_c0 * np.sqrt(np.abs(np.cos(np.pi * phi)))


def dressed_pair(w_mode: float, w_c: float, g: float):
    """Eigenfrequencies of one mode hybridized with the coupler."""
    mean = 0.5 * (w_mode + w_c)
    split = np.sqrt(g**2 + (0.5 * (w_mode - w_c)) ** 2)
    return mean - split, mean + split


def _dip_response(f_probe: float, w_c: float, modes, g: float) -> float:
    kappa = SPECTROSCOPY_LINEWIDTH_HZ
    response = 1.0
    for w_m in modes:
        for w_d in dressed_pair(w_m, w_c, g):
            response *= 1.0 - kappa**2 / (kappa**2 + (f_probe - w_d) ** 2)
    return float(response)


def resonator_response(cfg: DeviceConfig, f_probe: float, v_dc: float) -> float:
    """Normalized transmission magnitude near the readout resonators."""
    w_c = coupler_frequency(cfg, v_dc)
    return _dip_response(f_probe, w_c, (cfg.w_r1, cfg.w_r2), cfg.g_rc)


def qubit_response(cfg: DeviceConfig, f_probe: float, v_dc: float) -> float:
    """Normalized two-tone response near the qubits."""
    w_c = coupler_frequency(cfg, v_dc)
    return _dip_response(f_probe, w_c, (cfg.w_q1, cfg.w_q2), cfg.g_qc)


# --- demodulation and evolution ------------------------------------------------------

def demodulate(w: RenderedWaveform, f_ref: float, phase_ref: float = 0.0) -> np.ndarray:
    """Rotating-frame envelope: analytic signal times exp(-i (2 pi f_ref t + phase_ref)).

    The reference oscillator is anchored at absolute time zero.  The cycle
    count at the first sample is computed with exact rational arithmetic so
    windows far from t = 0 keep full phase accuracy.
    """
    f_nco = Fraction(w.carrier_frequency) / _NS
    f_r = Fraction(f_ref) / _NS
    anchor = -f_r * w.t0_ns
    anchor_frac = float(anchor - (anchor // 1))
    slope = float(f_nco - f_r)  # cycles per ns
    k = np.arange(w.samples.size, dtype=float)
    phase = w.carrier_phase - phase_ref + 2.0 * np.pi * (anchor_frac + slope * k)
    return w.samples * np.exp(1j * phase)


_Z1_DIAG = np.array([1.0, 1.0, -1.0, -1.0])
_Z2_DIAG = np.array([1.0, -1.0, 1.0, -1.0])


def _lindblad_ops(cfg: DeviceConfig):
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    z = np.diag([1.0, -1.0]).astype(complex)
    i2 = np.eye(2, dtype=complex)
    ops = [
        (1.0 / cfg.t1_q1, np.kron(sm, i2)),
        (1.0 / cfg.t1_q2, np.kron(i2, sm)),
        (1.0 / cfg.t_phi_q1, np.kron(z, i2) / np.sqrt(2.0)),
        (1.0 / cfg.t_phi_q2, np.kron(i2, z) / np.sqrt(2.0)),
    ]
    return [(rate, L, L.conj().T, L.conj().T @ L) for rate, L in ops]


def _drive_arrays(cfg: DeviceConfig, waveforms: dict):
    """Demodulate the three ports into Hamiltonian coefficient arrays."""
    lengths = {w.samples.size for w in waveforms.values()}
    if len(lengths) != 1:
        raise ValueError("all port waveforms must have the same length")
    (n,) = lengths
    zeros = np.zeros(n, dtype=complex)
    e1 = e2 = g = zeros
    amp2 = np.zeros(n, dtype=float)
    if PORT_Q1 in waveforms:
        e1 = cfg.rabi_rate_per_unit * demodulate(waveforms[PORT_Q1], cfg.w_q1)
    if PORT_Q2 in waveforms:
        e2 = cfg.rabi_rate_per_unit * demodulate(waveforms[PORT_Q2], cfg.w_q2)
    if PORT_COUPLER in waveforms:
        raw = demodulate(waveforms[PORT_COUPLER], cfg.difference_frequency)
        g = cfg.swap_rate_per_unit * raw
        amp2 = np.abs(raw) ** 2
    return e1, e2, g, amp2


def _integrate(cfg, drives, rho0: np.ndarray, noise: bool, substeps: int,
               record_populations: bool = False):
    """Fixed-step RK4 on the vectorized master equation, 1 ns outer steps."""
    e1, e2, g, amp2 = drives
    batch = e1.shape[:-1]
    steps = e1.shape[-1]
    rho = np.broadcast_to(rho0, batch + (4, 4)).astype(complex).copy()
    diss = _lindblad_ops(cfg) if noise else []
    dt = 1e-9 / substeps
    two_pi = 2.0 * np.pi
    h = np.zeros(batch + (4, 4), dtype=complex)
    max_norm = 0.0
    pops = np.empty((steps + 1,) + batch + (4,)) if record_populations else None
    if record_populations:
        pops[0] = np.real(np.einsum("...ii->...i", rho))

    def rhs(r):
        out = -1j * two_pi * (h @ r - r @ h)
        for rate, L, Ld, LdL in diss:
            out += rate * (L @ r @ Ld - 0.5 * (LdL @ r + r @ LdL))
        return out

    for k in range(steps):
        e1k, e2k, gk = e1[..., k], e2[..., k], g[..., k]
        d1 = cfg.stark_coeff_q1 * amp2[..., k]
        d2 = cfg.stark_coeff_q2 * amp2[..., k]
        h[:] = 0.0
        h[..., 2, 0] = 0.5 * e1k
        h[..., 3, 1] = 0.5 * e1k
        h[..., 0, 2] = 0.5 * np.conj(e1k)
        h[..., 1, 3] = 0.5 * np.conj(e1k)
        h[..., 1, 0] = 0.5 * e2k
        h[..., 3, 2] = 0.5 * e2k
        h[..., 0, 1] = 0.5 * np.conj(e2k)
        h[..., 2, 3] = 0.5 * np.conj(e2k)
        h[..., 1, 2] += -0.5 * gk
        h[..., 2, 1] += -0.5 * np.conj(gk)
        diag = -0.5 * (np.multiply.outer(d1, _Z1_DIAG) + np.multiply.outer(d2, _Z2_DIAG))
        idx = np.arange(4)
        h[..., idx, idx] += diag
        max_norm = max(max_norm, float(np.max(np.abs(h))))
        for _ in range(substeps):
            k1 = rhs(rho)
            k2 = rhs(rho + 0.5 * dt * k1)
            k3 = rhs(rho + 0.5 * dt * k2)
            k4 = rhs(rho + dt * k3)
            rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if record_populations:
            pops[k + 1] = np.real(np.einsum("...ii->...i", rho))
    return rho, max_norm, pops


def _sanitize(rho: np.ndarray):
    """Hermitize, clip tiny negative eigenvalues, renormalize the trace."""
    rho = 0.5 * (rho + np.swapaxes(rho.conj(), -1, -2))
    evals, evecs = np.linalg.eigh(rho)
    min_eig = float(np.min(evals))
    if min_eig < -1e-8:
        raise IntegrationError(f"integration lost positivity (min eigenvalue {min_eig:.3e})")
    clipped = np.clip(evals, 0.0, None)
    rho = np.einsum("...ik,...k,...jk->...ij", evecs, clipped, evecs.conj())
    tr = np.real(np.einsum("...ii->...", rho))
    return rho / tr[..., None, None], min_eig


def evolve(cfg: DeviceConfig, waveforms: dict, initial: DensityMatrix,
           noise: bool = False, substeps: int = 4) -> SimResult:
    """Integrate the rotating-frame master equation for one waveform set."""
    drives = _drive_arrays(cfg, waveforms)
    steps = drives[0].shape[-1]
    rho, max_norm, _ = _integrate(cfg, drives, initial.matrix, noise, substeps)
    rho, min_eig = _sanitize(rho)
    return SimResult(DensityMatrix(rho), steps * 1e-9, max_norm, min_eig)


def evolve_batch(cfg: DeviceConfig, waveform_sets, initial: DensityMatrix,
                 noise: bool = False, substeps: int = 4,
                 record_populations: bool = False, chunk: int = 512):
    """Evolve many same-length waveform sets at once.

    Returns (final density matrices as an (B,4,4) array, populations
    trajectory or None).  The trajectory has shape (steps+1, B, 4) with entry
    k holding the raw populations after k ns.
    """
    sets = list(waveform_sets)
    finals = []
    trajs = []
    for lo in range(0, len(sets), chunk):
        part = sets[lo:lo + chunk]
        stacked = [np.stack([_drive_arrays(cfg, ws)[i] for ws in part]) for i in range(4)]
        rho, _, pops = _integrate(cfg, tuple(stacked), initial.matrix, noise, substeps,
                                  record_populations=record_populations)
        rho, _ = _sanitize(rho)
        finals.append(rho)
        if record_populations:
            trajs.append(pops)
    final = np.concatenate(finals, axis=0)
    traj = np.concatenate(trajs, axis=1) if record_populations else None
    return final, traj


# --- readout -------------------------------------------------------------------------

def _confusion_matrix(error: float) -> np.ndarray:
    c1 = np.array([[1 - error, error], [error, 1 - error]])
    return np.kron(c1, c1)


def apply_readout_confusion(cfg: DeviceConfig, probs: np.ndarray) -> np.ndarray:
    """Outcome probabilities after per-qubit symmetric assignment errors."""
    return _confusion_matrix(cfg.readout_assignment_error) @ np.asarray(probs, dtype=float)


def measure(cfg: DeviceConfig, rho: DensityMatrix, shots: int, seed: int) -> ReadoutCounts:
    """Joint multinomial sampling of the populations with assignment errors."""
    if shots <= 0:
        raise ValueError("shots must be positive")
    probs = apply_readout_confusion(cfg, rho.populations())
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    rng = np.random.default_rng(seed)
    draw = rng.multinomial(shots, probs)
    return ReadoutCounts(shots, {"00": int(draw[0]), "01": int(draw[1]),
                                 "10": int(draw[2]), "11": int(draw[3])})


def excited_populations(probs: np.ndarray):
    """Per-qubit excited-state probability from outcome probabilities."""
    p = np.asarray(probs, dtype=float)
    return p[..., 2] + p[..., 3], p[..., 1] + p[..., 3]
