"""Two-qubit Clifford group over the native gate set, as symplectic tableaus.

An element is stored by its conjugation action on the Pauli generators
X1, Z1, X2, Z2: each image is a Pauli (4 bits in the canonical form
i^p X1^x1 Z1^z1 X2^x2 Z2^z2) with a sign bit, 20 bits total.  The group is
built once by breadth-first closure from {X90(1), X90(2), VZ(1, pi/2),
VZ(2, pi/2), ISWAP}, which keeps the first (shortest) native decomposition
found for every element.  The closure has exactly 11520 elements:
|Sp(4,2)| = 720 symplectic matrices times 16 sign assignments.

The table can be cached to disk: a versioned header carrying a sha256 of the
payload, then per element a 16-bit packed tableau, a sign nibble, and a
varint-length list of generator codes.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .circuits import NativeGate, iswap, vz, x90, gate_unitary
from .quantum import pauli_matrix

GENERATOR_GATES = (x90(1), x90(2), vz(1, np.pi / 2), vz(2, np.pi / 2), iswap())
GENERATOR_NAMES = ("x90_1", "x90_2", "vz_1", "vz_2", "iswap")
EXPECTED_GROUP_ORDER = 11520
_SAFETY_BOUND = 20000

_CACHE_MAGIC = b"CLF2"
_CACHE_VERSION = 1


class GroupClosureError(RuntimeError):
    """Raised when the BFS closure exceeds its safety bound."""


class CacheError(RuntimeError):
    """Raised when a group cache file fails validation."""


# --- Pauli algebra on (x1, z1, x2, z2, phase) with phase a power of i mod 4 ----------

def _pauli_mul(a, b):
    """Product of two Paulis in canonical form (X-before-Z per qubit)."""
    ax1, az1, ax2, az2, ap = a
    bx1, bz1, bx2, bz2, bp = b
    # Commuting X^bx past Z^az picks up (-1)^(az*bx) per qubit.
    phase = (ap + bp + 2 * (az1 * bx1 + az2 * bx2)) % 4
    return (ax1 ^ bx1, az1 ^ bz1, ax2 ^ bx2, az2 ^ bz2, phase)


_GENERATOR_BITS = ((1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1))


def _y_count(bits) -> int:
    x1, z1, x2, z2 = bits[:4]
    return x1 * z1 + x2 * z2


def _sign_bit(pauli) -> int:
    """0 for +P, 1 for -P, with P the Hermitian Pauli (phase i^y_count)."""
    return ((pauli[4] - _y_count(pauli)) // 2) % 2


@dataclass(frozen=True)
class Tableau:
    """Images of X1, Z1, X2, Z2 under conjugation; each a Pauli with sign."""

    images: tuple  # 4 tuples (x1, z1, x2, z2, phase) with phase in {0, 2}

    def conjugate(self, pauli):
        """Push an arbitrary Pauli (x1, z1, x2, z2, phase) through the map.

        The input is read in canonical form i^p X1^x1 Z1^z1 X2^x2 Z2^z2, so
        the generator images multiply in exactly that operator order.
        """
        x1, z1, x2, z2, phase = pauli
        out = (0, 0, 0, 0, phase % 4)
        for bit, image in zip((x1, z1, x2, z2), self.images):
            if bit:
                out = _pauli_mul(out, image)
        return out

    def key(self) -> int:
        k = 0
        for x1, z1, x2, z2, phase in self.images:
            k = (k << 5) | (x1 << 4) | (z1 << 3) | (x2 << 2) | (z2 << 1) | _sign_bit((x1, z1, x2, z2, phase))
        return k

    def compose(self, inner: "Tableau") -> "Tableau":
        """Map applying `inner` first, then this tableau."""
        return Tableau(tuple(self.conjugate(img) for img in inner.images))


def identity_tableau() -> Tableau:
    return Tableau(tuple((x, z, x2, z2, 0) for x, z, x2, z2 in _GENERATOR_BITS))


def _pauli_tuple_matrix(p):
    """Matrix of i^phase X1^x1 Z1^z1 X2^x2 Z2^z2."""
    x1, z1, x2, z2, phase = p
    m = np.eye(4, dtype=complex)
    if x1:
        m = m @ pauli_matrix("XI")
    if z1:
        m = m @ pauli_matrix("ZI")
    if x2:
        m = m @ pauli_matrix("IX")
    if z2:
        m = m @ pauli_matrix("IZ")
    return (1j ** phase) * m


def tableau_from_unitary(u: np.ndarray, atol: float = 1e-9) -> Tableau:
    """Extract the tableau of a Clifford unitary by conjugating generators."""
    images = []
    candidates = [(x1, z1, x2, z2) for x1 in (0, 1) for z1 in (0, 1)
                  for x2 in (0, 1) for z2 in (0, 1)]
    for bits in _GENERATOR_BITS:
        target = u @ _pauli_tuple_matrix(bits + (0,)) @ u.conj().T
        found = None
        for cand_bits in candidates:
            y = _y_count(cand_bits) % 4
            cand = _pauli_tuple_matrix(cand_bits + (y,))  # the Hermitian Pauli
            if np.allclose(target, cand, atol=atol):
                found = cand_bits + (y,)
                break
            if np.allclose(target, -cand, atol=atol):
                found = cand_bits + ((y + 2) % 4,)
                break
        if found is None:
            raise ValueError("unitary is not Clifford (generator image is not a signed Pauli)")
        images.append(found)
    return Tableau(tuple(images))


def _gf2_inverse(m: np.ndarray) -> np.ndarray:
    n = m.shape[0]
    aug = np.concatenate([m.astype(np.uint8) % 2, np.eye(n, dtype=np.uint8)], axis=1)
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r, col]), None)
        if pivot is None:
            raise ValueError("matrix is singular over GF(2)")
        if pivot != col:
            aug[[col, pivot]] = aug[[pivot, col]]
        for r in range(n):
            if r != col and aug[r, col]:
                aug[r] ^= aug[col]
    return aug[:, n:]


@dataclass(frozen=True)
class CliffordElement:
    index: int
    tableau: Tableau
    decomposition: tuple      # generator codes, first gate applied first

    @property
    def gates(self) -> tuple:
        return tuple(GENERATOR_GATES[c] for c in self.decomposition)


class CliffordGroup:
    """The full 11520-element group with native decompositions."""

    def __init__(self, elements):
        self.elements = list(elements)
        self._by_key = {el.tableau.key(): el.index for el in self.elements}
        self._generator_tableaus = [tableau_from_unitary(gate_unitary(g).matrix)
                                    for g in GENERATOR_GATES]

    def __len__(self):
        return len(self.elements)

    @classmethod
    def build(cls) -> "CliffordGroup":
        gen_tabs = [tableau_from_unitary(gate_unitary(g).matrix) for g in GENERATOR_GATES]
        start = identity_tableau()
        elements = [CliffordElement(0, start, ())]
        seen = {start.key(): 0}
        frontier = [0]
        while frontier:
            next_frontier = []
            for idx in frontier:
                el = elements[idx]
                for code, gen_tab in enumerate(gen_tabs):
                    tab = gen_tab.compose(el.tableau)
                    k = tab.key()
                    if k in seen:
                        continue
                    if len(elements) >= _SAFETY_BOUND:
                        raise GroupClosureError(
                            f"closure exceeded {_SAFETY_BOUND} elements; composition is broken")
                    new = CliffordElement(len(elements), tab, el.decomposition + (code,))
                    elements.append(new)
                    seen[k] = new.index
                    next_frontier.append(new.index)
            frontier = next_frontier
        return cls(elements)

    def element_for_tableau(self, tab: Tableau) -> CliffordElement:
        try:
            return self.elements[self._by_key[tab.key()]]
        except KeyError:
            raise KeyError("tableau is not in the generated group") from None

    def generator_element(self, code: int) -> CliffordElement:
        return self.element_for_tableau(self._generator_tableaus[code])

    def identity(self) -> CliffordElement:
        return self.element_for_tableau(identity_tableau())

    def sample(self, rng: np.random.Generator) -> CliffordElement:
        return self.elements[int(rng.integers(len(self.elements)))]

    def compose(self, a: CliffordElement, b: CliffordElement) -> CliffordElement:
        """Element equal to applying b first, then a."""
        return self.element_for_tableau(a.tableau.compose(b.tableau))

    def invert(self, a: CliffordElement) -> CliffordElement:
        """Exact inverse, with its decomposition looked up from the table."""
        m = np.zeros((4, 4), dtype=np.uint8)
        for col, img in enumerate(a.tableau.images):
            m[:, col] = img[:4]
        minv = _gf2_inverse(m)
        images = []
        for g, bits in enumerate(_GENERATOR_BITS):
            v = tuple(int(x) for x in minv[:, g])
            y_v = _y_count(v) % 4
            back = a.tableau.conjugate(v + (y_v,))  # = (+/-) the g-th generator
            if back[:4] != bits:
                raise AssertionError("symplectic inverse failed to round-trip")
            images.append(v + (((y_v + back[4]) % 4),))
        return self.element_for_tableau(Tableau(tuple(images)))

    # --- disk cache ------------------------------------------------------------------

    def save(self, path) -> None:
        payload = bytearray()
        for el in self.elements:
            bits = 0
            signs = 0
            for i, img in enumerate(el.tableau.images):
                x1, z1, x2, z2, _ = img
                bits |= ((x1 << 3) | (z1 << 2) | (x2 << 1) | z2) << (4 * i)
                signs |= _sign_bit(img) << i
            payload += struct.pack("<HB", bits, signs)
            payload += _encode_varint(len(el.decomposition))
            payload += bytes(el.decomposition)
        digest = hashlib.sha256(bytes(payload)).digest()
        with open(path, "wb") as fh:
            fh.write(_CACHE_MAGIC)
            fh.write(struct.pack("<HI", _CACHE_VERSION, len(self.elements)))
            fh.write(digest)
            fh.write(bytes(payload))

    @classmethod
    def load(cls, path) -> "CliffordGroup":
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[:4] != _CACHE_MAGIC:
            raise CacheError("not a Clifford group cache file")
        version, count = struct.unpack_from("<HI", raw, 4)
        if version != _CACHE_VERSION:
            raise CacheError(f"unsupported cache version {version}")
        digest = raw[10:42]
        payload = raw[42:]
        if hashlib.sha256(payload).digest() != digest:
            raise CacheError("cache payload hash mismatch")
        elements = []
        off = 0
        for index in range(count):
            bits, signs = struct.unpack_from("<HB", payload, off)
            off += 3
            length, off = _decode_varint(payload, off)
            codes = tuple(payload[off:off + length])
            off += length
            images = []
            for i in range(4):
                nib = (bits >> (4 * i)) & 0xF
                b = ((nib >> 3) & 1, (nib >> 2) & 1, (nib >> 1) & 1, nib & 1)
                phase = (_y_count(b) + 2 * ((signs >> i) & 1)) % 4
                images.append(b + (phase,))
            elements.append(CliffordElement(index, Tableau(tuple(images)), codes))
        if off != len(payload):
            raise CacheError("trailing bytes in cache payload")
        return cls(elements)


def _encode_varint(n: int) -> bytes:
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        out.append(b | (0x80 if n else 0))
        if not n:
            return bytes(out)


def _decode_varint(buf, off):
    out = 0
    shift = 0
    while True:
        b = buf[off]
        off += 1
        out |= (b & 0x7F) << shift
        if not b & 0x80:
            return out, off
        shift += 7


def load_or_build(path=None) -> CliffordGroup:
    """Load the cached table when present and valid, otherwise build and cache."""
    if path is not None:
        try:
            group = CliffordGroup.load(path)
            if len(group) == EXPECTED_GROUP_ORDER:
                return group
        except (OSError, CacheError):
            pass
    group = CliffordGroup.build()
    if path is not None:
        group.save(path)
    return group
