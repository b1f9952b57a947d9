"""State tomography from pre-rotation + Z-basis readout, by linear inversion.

Nine settings enumerate {identity, X90, Y90} per qubit.  With the X90
convention used here (exp(-i pi/4 X), a +pi/2 rotation about X), conjugation
gives X90^dag Z X90 = Y and Y90^dag Z Y90 = -X, so measuring Z after an X90
pre-rotation reads +<Y> of the original state and Z after a Y90 reads -<X>.
Worked example: (|0> + i|1>)/sqrt(2) has <Y> = +1; applying X90 maps it to
|0>, so P(0) = 1 and <Z after X90> = +1 = <Y>.

Reconstruction assembles rho = (1/4) sum <P> P from the 15 estimated Pauli
expectations, then projects to the nearest PSD trace-one matrix by eigenvalue
clipping and renormalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import circuits
from .device import DeviceConfig, apply_readout_confusion, evolve_batch, measure
from .quantum import DensityMatrix, pauli_matrix

PRE_ROTATIONS = ("I", "X90", "Y90")
SETTINGS_ORDER = tuple((a, b) for a in PRE_ROTATIONS for b in PRE_ROTATIONS)

# Pauli measured by each pre-rotation, with estimator sign.
_MEASURES = {"I": ("Z", 1.0), "X90": ("Y", 1.0), "Y90": ("X", -1.0)}
_PRE_FOR = {"Z": ("I", 1.0), "Y": ("X90", 1.0), "X": ("Y90", -1.0)}


@dataclass(frozen=True)
class TomographySetting:
    pre_q1: str
    pre_q2: str
    shots: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.pre_q1 not in PRE_ROTATIONS or self.pre_q2 not in PRE_ROTATIONS:
            raise ValueError("pre-rotations must be one of I, X90, Y90")


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    @property
    def norm(self) -> float:
        return float(np.sqrt(self.x**2 + self.y**2 + self.z**2))

    @property
    def equatorial_angle(self) -> float:
        return float(np.arctan2(self.y, self.x))


def all_settings(shots: int = 0, seed: int = 0) -> tuple:
    return tuple(TomographySetting(a, b, shots, seed + i)
                 for i, (a, b) in enumerate(SETTINGS_ORDER))


def prerotation_gates(pre: str, qubit: int):
    if pre == "I":
        return ()
    if pre == "X90":
        return (circuits.x90(qubit, 0.0),)
    if pre == "Y90":
        return (circuits.x90(qubit, np.pi / 2.0),)
    raise ValueError(f"unknown pre-rotation {pre!r}")


def setting_circuits(prep_gates, settings):
    out = []
    for s in settings:
        out.append(tuple(prep_gates) + prerotation_gates(s.pre_q1, 1) + prerotation_gates(s.pre_q2, 2))
    return out


def run_settings(device: DeviceConfig, engine, gate_params, prep_gates, settings,
                 noise: bool = False, rep_offsets=((0, 0),), substeps: int = 4):
    """Execute prep + pre-rotations for every setting and sample counts.

    `rep_offsets` is a list of (repetition index, trigger offset ns) pairs;
    the returned list has one ReadoutCounts per setting, with shots split
    evenly across the repetitions (phase-sensitive averaging happens at the
    counts level, like hardware does).
    """
    probs = setting_probabilities(device, engine, gate_params, prep_gates, settings,
                                  noise=noise, rep_offsets=rep_offsets, substeps=substeps)
    mean_probs = probs.mean(axis=0)
    out = []
    for i, s in enumerate(settings):
        if s.shots <= 0:
            raise ValueError("run_settings needs positive shots; use setting_probabilities for exact mode")
        rho = DensityMatrix(_probs_to_diag(mean_probs[i]))
        out.append(measure(device, rho, s.shots, s.seed))
    return out


def _probs_to_diag(p):
    return np.diag(np.clip(p, 0, None) / np.sum(np.clip(p, 0, None))).astype(complex)


def setting_probabilities(device: DeviceConfig, engine, gate_params, prep_gates, settings,
                          noise: bool = False, rep_offsets=((0, 0),), substeps: int = 4):
    """Exact outcome probabilities, shape (n_reps, n_settings, 4)."""
    gates_per_setting = setting_circuits(prep_gates, settings)
    window = max(circuits.circuit_duration_ns(g, gate_params) for g in gates_per_setting)
    sets = []
    for rep, offset in rep_offsets:
        for gates in gates_per_setting:
            sets.append(circuits.render_circuit(device, engine, gate_params, gates,
                                                rep_index=rep, start_offset_ns=offset,
                                                window_ns=window))
    finals, _ = evolve_batch(device, sets, DensityMatrix.basis("00"),
                             noise=noise, substeps=substeps)
    pops = np.real(np.einsum("bii->bi", finals))
    return pops.reshape(len(rep_offsets), len(settings), 4)


def expectations_from_probabilities(settings, probabilities) -> dict:
    """Estimate the 15 nontrivial Pauli expectations from per-setting outcome
    probabilities (rows ordered |00>,|01>,|10>,|11>)."""
    probs = {(s.pre_q1, s.pre_q2): np.asarray(p, dtype=float)
             for s, p in zip(settings, probabilities)}
    if set(probs) != set(SETTINGS_ORDER):
        missing = set(SETTINGS_ORDER) - set(probs)
        raise ValueError(f"missing tomography settings: {sorted(missing)}")
    sign1 = np.array([1.0, 1.0, -1.0, -1.0])   # (-1)^bit of qubit 1
    sign2 = np.array([1.0, -1.0, 1.0, -1.0])
    exps = {}
    for p1 in "IXYZ":
        for p2 in "IXYZ":
            if p1 == p2 == "I":
                continue
            vals = []
            for (a, b), p in probs.items():
                meas1, s1 = _MEASURES[a]
                meas2, s2 = _MEASURES[b]
                if p1 != "I" and meas1 != p1:
                    continue
                if p2 != "I" and meas2 != p2:
                    continue
                w = np.ones(4)
                if p1 != "I":
                    w = w * sign1 * s1
                if p2 != "I":
                    w = w * sign2 * s2
                vals.append(float(np.dot(w, p)))
            exps[p1 + p2] = float(np.mean(vals))
    return exps


def expectations_from_counts(settings, counts_list) -> dict:
    probs = []
    for c in counts_list:
        probs.append([c.counts.get(o, 0) / c.shots for o in ("00", "01", "10", "11")])
    return expectations_from_probabilities(settings, probs)


def reconstruct_from_expectations(exps: dict) -> DensityMatrix:
    rho = np.eye(4, dtype=complex)
    for label, val in exps.items():
        rho += val * pauli_matrix(label)
    rho /= 4.0
    rho = 0.5 * (rho + rho.conj().T)
    evals, evecs = np.linalg.eigh(rho)
    evals = np.clip(evals, 0.0, None)
    rho = (evecs * evals) @ evecs.conj().T
    rho /= np.trace(rho).real
    return DensityMatrix(rho)


def reconstruct(settings, counts_list) -> DensityMatrix:
    """Linear-inversion estimate from nine settings of counts, PSD-projected."""
    return reconstruct_from_expectations(expectations_from_counts(settings, counts_list))


def bloch_vector(rho: DensityMatrix, qubit: int) -> BlochVector:
    """(<X>, <Y>, <Z>) of one qubit's reduced state."""
    labels = {1: ("XI", "YI", "ZI"), 2: ("IX", "IY", "IZ")}[qubit]
    vals = [float(np.real(np.trace(rho.matrix @ pauli_matrix(l)))) for l in labels]
    return BlochVector(*vals)


def single_qubit_bloch_from_probabilities(qubit: int, settings, probabilities) -> BlochVector:
    """Bloch vector of one qubit from the three settings that leave the other
    qubit unrotated (enough for the echo-phase measurements)."""
    sign = np.array([1.0, 1.0, -1.0, -1.0]) if qubit == 1 else np.array([1.0, -1.0, 1.0, -1.0])
    comps = {}
    for s, p in zip(settings, probabilities):
        pre = s.pre_q1 if qubit == 1 else s.pre_q2
        other = s.pre_q2 if qubit == 1 else s.pre_q1
        if other != "I":
            continue
        meas, sgn = _MEASURES[pre]
        comps[meas] = sgn * float(np.dot(sign, p))
    if set(comps) != {"X", "Y", "Z"}:
        raise ValueError("need the I/X90/Y90 settings on the target qubit with identity on the other")
    return BlochVector(comps["X"], comps["Y"], comps["Z"])
