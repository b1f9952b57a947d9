"""Two-qubit linear algebra: states, the swap-gate family, channels, fidelities.

Basis ordering is |00>, |01>, |10>, |11> with qubit 1 as the left label, so a
basis label "q1q2" maps to index 2*q1 + q2.  All angles are radians, all
matrices act on this fixed ordering.  Unitaries that differ only by a global
phase are physically identical; use `phase_fixed` / `allclose_up_to_phase`
when comparing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ATOL_STATE = 1e-12
ATOL_CHANNEL = 1e-10
EIG_FLOOR = -1e-10

BASIS_LABELS = ("00", "01", "10", "11")

_I2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)

PAULI_1Q = {"I": _I2, "X": _X, "Y": _Y, "Z": _Z}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def pauli_matrix(label: str) -> np.ndarray:
    """4x4 matrix of a two-qubit Pauli label like "XY" (qubit 1 first)."""
    if len(label) != 2 or any(c not in PAULI_1Q for c in label):
        raise ValueError(f"malformed two-qubit Pauli label: {label!r}")
    return np.kron(PAULI_1Q[label[0]], PAULI_1Q[label[1]])


TWO_QUBIT_PAULIS = tuple(a + b for a in "IXYZ" for b in "IXYZ")


def on_qubit(op: np.ndarray, qubit: int) -> np.ndarray:
    """Embed a single-qubit operator on qubit 1 or 2 of the pair."""
    if qubit == 1:
        return np.kron(op, _I2)
    if qubit == 2:
        return np.kron(_I2, op)
    raise ValueError(f"qubit index must be 1 or 2, got {qubit}")


@dataclass(frozen=True, eq=False)
class StateVector:
    """Pure two-qubit state; amplitudes ordered |00>,|01>,|10>,|11>."""

    amplitudes: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if a.shape != (4,):
            raise ValueError("state vector needs exactly 4 amplitudes")
        if abs(np.vdot(a, a).real - 1.0) > ATOL_STATE:
            raise ValueError(f"state not normalized: |psi|^2 = {np.vdot(a, a).real}")
        object.__setattr__(self, "amplitudes", _frozen(a))

    @classmethod
    def basis(cls, label: str) -> "StateVector":
        if label not in BASIS_LABELS:
            raise ValueError(f"unknown basis label {label!r}")
        a = np.zeros(4, dtype=complex)
        a[BASIS_LABELS.index(label)] = 1.0
        return cls(a)

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Two-qubit density matrix: Hermitian, unit trace, PSD within tolerance."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise ValueError("density matrix must be 4x4")
        if np.max(np.abs(m - m.conj().T)) > ATOL_STATE:
            raise ValueError("density matrix not Hermitian")
        if abs(np.trace(m).real - 1.0) > ATOL_STATE:
            raise ValueError(f"density matrix trace = {np.trace(m).real}, expected 1")
        if np.min(np.linalg.eigvalsh(0.5 * (m + m.conj().T))) < EIG_FLOOR:
            raise ValueError("density matrix has a significantly negative eigenvalue")
        object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def basis(cls, label: str) -> "DensityMatrix":
        return StateVector.basis(label).density()

    @classmethod
    def maximally_mixed(cls) -> "DensityMatrix":
        return cls(np.eye(4, dtype=complex) / 4.0)

    def populations(self) -> np.ndarray:
        return np.real(np.diag(self.matrix)).copy()


@dataclass(frozen=True, eq=False)
class Unitary:
    """4x4 unitary, validated to U^dag U = I at construction."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (4, 4):
            raise ValueError("unitary must be 4x4")
        if np.max(np.abs(m.conj().T @ m - np.eye(4))) > ATOL_STATE:
            raise ValueError("matrix is not unitary within 1e-12")
        object.__setattr__(self, "matrix", _frozen(m))

    def dagger(self) -> "Unitary":
        return Unitary(self.matrix.conj().T)

    def __matmul__(self, other: "Unitary") -> "Unitary":
        return Unitary(self.matrix @ other.matrix)


@dataclass(frozen=True, eq=False)
class NoiseChannel:
    """Completely positive trace-preserving map given by Kraus operators."""

    kraus_operators: tuple

    def __post_init__(self):
        ops = tuple(_frozen(k) for k in self.kraus_operators)
        if not ops:
            raise ValueError("channel needs at least one Kraus operator")
        total = sum(k.conj().T @ k for k in ops)
        if np.max(np.abs(total - np.eye(4))) > ATOL_CHANNEL:
            raise ValueError("Kraus operators do not satisfy completeness")
        object.__setattr__(self, "kraus_operators", ops)


def iswap_family(theta: float, eta: float) -> Unitary:
    """Partial-swap unitary: diag 1, cos(theta/2) block, off-diagonal
    i e^{+/- i eta} sin(theta/2) in the |01>/|10> subspace.

    theta is the accumulated drive area (Omega * tau); the full iSWAP is
    theta = pi, eta = 0.
    """
    c = np.cos(theta / 2.0)
    s = np.sin(theta / 2.0)
    u = np.eye(4, dtype=complex)
    u[1, 1] = c
    u[2, 2] = c
    u[1, 2] = 1j * np.exp(1j * eta) * s
    u[2, 1] = 1j * np.exp(-1j * eta) * s
    return Unitary(u)


ISWAP = iswap_family(np.pi, 0.0)


def single_qubit_x90(qubit: int, phase: float = 0.0) -> Unitary:
    """pi/2 rotation about cos(phase) X + sin(phase) Y on one qubit."""
    axis = np.cos(phase) * _X + np.sin(phase) * _Y
    u2 = np.cos(np.pi / 4) * _I2 - 1j * np.sin(np.pi / 4) * axis
    return Unitary(on_qubit(u2, qubit))


def virtual_z_unitary(phi1: float, phi2: float) -> Unitary:
    """diag(1, e^{i phi2}, e^{i phi1}, e^{i (phi1+phi2)})."""
    return Unitary(np.kron(np.diag([1, np.exp(1j * phi1)]), np.diag([1, np.exp(1j * phi2)])))


def apply(u: Unitary, state):
    """Apply a unitary to a StateVector or DensityMatrix, returning same type."""
    if isinstance(state, StateVector):
        return StateVector(u.matrix @ state.amplitudes)
    if isinstance(state, DensityMatrix):
        return DensityMatrix(u.matrix @ state.matrix @ u.matrix.conj().T)
    raise TypeError(f"cannot apply unitary to {type(state).__name__}")


def apply_channel(channel: NoiseChannel, rho: DensityMatrix) -> DensityMatrix:
    out = np.zeros((4, 4), dtype=complex)
    for k in channel.kraus_operators:
        out += k @ rho.matrix @ k.conj().T
    out = 0.5 * (out + out.conj().T)
    return DensityMatrix(out)


def _amplitude_damping_kraus(p: float):
    return (
        np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=complex),
        np.array([[0, np.sqrt(p)], [0, 0]], dtype=complex),
    )


def _dephasing_kraus(lam: float):
    return (
        np.array([[1, 0], [0, np.sqrt(1 - lam)]], dtype=complex),
        np.array([[0, 0], [0, np.sqrt(lam)]], dtype=complex),
    )


def relaxation_channel(duration: float, t1: float, t_phi: float, qubit: int) -> NoiseChannel:
    """Amplitude damping composed with pure dephasing on one qubit.

    p = 1 - exp(-duration/T1), lambda = 1 - exp(-2 duration/Tphi); together the
    off-diagonal decay is exp(-duration/T2) with 1/T2 = 1/(2 T1) + 1/Tphi.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if t1 <= 0 or t_phi <= 0:
        raise ValueError("time constants must be positive")
    p = 1.0 - np.exp(-duration / t1)
    lam = 1.0 - np.exp(-2.0 * duration / t_phi)
    ops = []
    for a in _dephasing_kraus(lam):
        for b in _amplitude_damping_kraus(p):
            k = a @ b
            if np.max(np.abs(k)) > 1e-14:
                ops.append(on_qubit(k, qubit))
    return NoiseChannel(tuple(ops))


def depolarizing_channel(p: float) -> NoiseChannel:
    """Two-qubit depolarizing map rho -> (1-p) rho + p I/4."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("depolarizing probability must lie in [0, 1]")
    ops = [np.sqrt(1.0 - 15.0 * p / 16.0) * np.eye(4, dtype=complex)]
    for label in TWO_QUBIT_PAULIS:
        if label != "II":
            ops.append(np.sqrt(p / 16.0) * pauli_matrix(label))
    return NoiseChannel(tuple(ops))


def pauli_expectation(rho: DensityMatrix, label: str) -> float:
    """Tr(rho P) for a two-qubit Pauli label."""
    val = np.trace(rho.matrix @ pauli_matrix(label))
    return float(val.real)


def state_fidelity(a: DensityMatrix, b: DensityMatrix) -> float:
    """Uhlmann fidelity; reduces to |<psi|phi>|^2 for pure states."""
    evals, evecs = np.linalg.eigh(a.matrix)
    sqrt_a = (evecs * np.sqrt(np.clip(evals, 0, None))) @ evecs.conj().T
    inner = sqrt_a @ b.matrix @ sqrt_a
    lam = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    lam = np.where(lam > 1e-14, lam, 0.0)  # sqrt amplifies eigensolver noise
    f = np.sum(np.sqrt(lam)) ** 2
    return float(min(max(f.real, 0.0), 1.0))


def average_gate_fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """Average fidelity between two 4x4 unitaries, (|tr(U^dag V)|^2 + d) / (d(d+1))."""
    d = 4
    tr = np.trace(np.asarray(u).conj().T @ np.asarray(v))
    return float((abs(tr) ** 2 + d) / (d * (d + 1)))


def phase_fixed(m: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    """Gauge-fix the global phase: first element with |.| > atol made real positive."""
    m = np.asarray(m, dtype=complex)
    flat = m.reshape(-1)
    for v in flat:
        if abs(v) > atol:
            return m * (abs(v) / v)
    return m


def allclose_up_to_phase(a: np.ndarray, b: np.ndarray, atol: float = 1e-9) -> bool:
    return bool(np.allclose(phase_fixed(a, atol), phase_fixed(b, atol), atol=atol, rtol=0))
