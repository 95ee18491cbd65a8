"""Pauli algebra in symplectic form: operators, sparse check matrices, syndromes.

Conventions used throughout the package:

* Pauli codes are integers ``I=0, X=1, Y=2, Z=3`` (also the column order of
  every quaternary probability distribution).
* The symplectic form of a Pauli is the bit pair ``(x, z)`` with
  ``I=(0,0), X=(1,0), Y=(1,1), Z=(0,1)``.  An n-qubit operator is the binary
  vector ``(x|z)`` of length 2n; products are componentwise XOR and global
  phases are discarded.
* The GF(4) view maps ``I->0, X->w, Z->wbar, Y->1`` where ``w + wbar = 1``.
  GF(4) elements are encoded as ``0=0, 1=1, 2=w, 3=wbar``; addition in this
  encoding coincides with XOR of the symplectic bit pairs.
* Syndrome bits are ``{0, 1}`` with 0 meaning the check is satisfied.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence, TextIO

import numpy as np


class Pauli(IntEnum):
    """Single-qubit Pauli operator, phase-free."""

    I = 0
    X = 1
    Y = 2
    Z = 3


PAULI_NAMES = "IXYZ"

# Symplectic bits per Pauli code: column 0 is x, column 1 is z.
_XZ_BITS = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=np.uint8)

# code = CODE_FROM_XZ[x, z]
CODE_FROM_XZ = np.array([[0, 3], [1, 2]], dtype=np.uint8)

# GF(4) encoding 0=0, 1=1, 2=w, 3=wbar.
PAULI_TO_GF4 = np.array([0, 2, 1, 3], dtype=np.uint8)
GF4_TO_PAULI = np.array([0, 2, 1, 3], dtype=np.uint8)

# ANTICOMMUTES[a, b] = symplectic product of single Paulis a, b (0 or 1).
ANTICOMMUTES = np.array(
    [
        [0, 0, 0, 0],
        [0, 0, 1, 1],
        [0, 1, 0, 1],
        [0, 1, 1, 0],
    ],
    dtype=np.uint8,
)

# COMMUTE_SIGN[a, b] = (-1) ** ANTICOMMUTES[a, b] as a float.
COMMUTE_SIGN = 1.0 - 2.0 * ANTICOMMUTES.astype(np.float64)


def symplectic_product(a: int, b: int) -> int:
    """Symplectic product of two single-qubit Paulis: 0 iff they commute."""
    return int(ANTICOMMUTES[int(a), int(b)])


@dataclass(frozen=True)
class PauliVector:
    """An n-qubit Pauli operator in symplectic (x|z) form, phases discarded.

    Treated as immutable: the arrays must not be written to after
    construction, which makes instances safe to share across workers.
    """

    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.uint8)
        z = np.asarray(self.z, dtype=np.uint8)
        if x.shape != z.shape or x.ndim != 1:
            raise ValueError("x and z must be 1-d arrays of equal length")
        if x.max(initial=0) > 1 or z.max(initial=0) > 1:
            raise ValueError("x and z must be binary")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        x.setflags(write=False)
        z.setflags(write=False)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @staticmethod
    def identity(n: int) -> "PauliVector":
        return PauliVector(np.zeros(n, dtype=np.uint8), np.zeros(n, dtype=np.uint8))

    @staticmethod
    def from_codes(codes: Sequence[int] | np.ndarray) -> "PauliVector":
        codes = np.asarray(codes, dtype=np.uint8)
        bits = _XZ_BITS[codes]
        return PauliVector(bits[:, 0].copy(), bits[:, 1].copy())

    @staticmethod
    def from_string(s: str) -> "PauliVector":
        try:
            codes = [PAULI_NAMES.index(c) for c in s.upper()]
        except ValueError:
            raise ValueError(f"invalid Pauli string {s!r}") from None
        return PauliVector.from_codes(codes)

    @staticmethod
    def single(n: int, qubit: int, pauli: int) -> "PauliVector":
        """Weight-<=1 operator acting as `pauli` on one qubit."""
        codes = np.zeros(n, dtype=np.uint8)
        codes[qubit] = pauli
        return PauliVector.from_codes(codes)

    def codes(self) -> np.ndarray:
        """Per-qubit Pauli codes (I=0, X=1, Y=2, Z=3)."""
        return CODE_FROM_XZ[self.x, self.z]

    def gf4(self) -> np.ndarray:
        """Per-qubit GF(4) codes under I->0, X->w, Z->wbar, Y->1."""
        return PAULI_TO_GF4[self.codes()]

    def weight(self) -> int:
        return int(np.count_nonzero(self.x | self.z))

    def mul(self, other: "PauliVector") -> "PauliVector":
        """Phase-free product: componentwise XOR of symplectic blocks."""
        if self.n != other.n:
            raise ValueError(f"length mismatch: {self.n} != {other.n}")
        return PauliVector(self.x ^ other.x, self.z ^ other.z)

    __mul__ = mul

    def __str__(self) -> str:
        return "".join(PAULI_NAMES[c] for c in self.codes())

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliVector):
            return NotImplemented
        return (
            self.n == other.n
            and bool(np.array_equal(self.x, other.x))
            and bool(np.array_equal(self.z, other.z))
        )

    def __hash__(self):
        return hash((self.x.tobytes(), self.z.tobytes()))


def pauli_mul(a: PauliVector, b: PauliVector) -> PauliVector:
    """Componentwise product of two Pauli vectors (phases discarded)."""
    return a.mul(b)


def pauli_vector_from_gf4(codes: Sequence[int] | np.ndarray) -> PauliVector:
    return PauliVector.from_codes(GF4_TO_PAULI[np.asarray(codes, dtype=np.uint8)])


class SparseCheckMatrix:
    """A quaternary check matrix stored as sparse rows of (qubit, Pauli) pairs.

    Rows keep only non-identity entries, sorted by qubit index with no
    duplicates.  Instances are immutable after construction.
    """

    def __init__(self, m: int, n: int, rows: Iterable[Iterable[tuple[int, int]]]):
        rows = tuple(tuple((int(q), int(p)) for q, p in row) for row in rows)
        if len(rows) != m:
            raise ValueError(f"expected {m} rows, got {len(rows)}")
        for j, row in enumerate(rows):
            qubits = [q for q, _ in row]
            if any(not 0 <= q < n for q in qubits):
                raise ValueError(f"row {j}: qubit index out of range")
            if sorted(set(qubits)) != qubits:
                raise ValueError(f"row {j}: entries must be sorted, duplicate-free")
            if any(p not in (1, 2, 3) for _, p in row):
                raise ValueError(f"row {j}: entries must be non-identity Paulis")
        self.m = m
        self.n = n
        self.rows = rows
        self._arrays = None  # lazy engine view, see _engine.CheckArrays

    def row_weights(self) -> np.ndarray:
        return np.array([len(r) for r in self.rows], dtype=np.int64)

    def row_vector(self, j: int) -> PauliVector:
        codes = np.zeros(self.n, dtype=np.uint8)
        for q, p in self.rows[j]:
            codes[q] = p
        return PauliVector.from_codes(codes)

    def to_dense_symplectic(self) -> np.ndarray:
        """Binary (m, 2n) matrix, columns ordered (x | z)."""
        out = np.zeros((self.m, 2 * self.n), dtype=np.uint8)
        for j, row in enumerate(self.rows):
            for q, p in row:
                out[j, q] = _XZ_BITS[p, 0]
                out[j, self.n + q] = _XZ_BITS[p, 1]
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseCheckMatrix):
            return NotImplemented
        return self.m == other.m and self.n == other.n and self.rows == other.rows

    def __repr__(self) -> str:
        return f"SparseCheckMatrix(m={self.m}, n={self.n})"


def syndrome(H: SparseCheckMatrix, e: PauliVector) -> np.ndarray:
    """Syndrome bits of `e` against `H`: bit j is the parity of anticommuting
    entries of row j with `e`."""
    if H.n != e.n:
        raise ValueError(f"length mismatch: matrix n={H.n}, vector n={e.n}")
    codes = e.codes()
    out = np.zeros(H.m, dtype=np.uint8)
    for j, row in enumerate(H.rows):
        acc = 0
        for q, p in row:
            acc ^= int(ANTICOMMUTES[p, codes[q]])
        out[j] = acc
    return out


def commutes_with_all(v: PauliVector, M: SparseCheckMatrix) -> bool:
    """True iff `v` commutes with every row of `M`."""
    return not syndrome(M, v).any()


def write_check_matrix(H: SparseCheckMatrix, f: TextIO) -> None:
    """Write `H` in the sparse text format: header ``m n``, then one line per
    row of space-separated ``qubit:P`` pairs (P in X, Y, Z)."""
    f.write(f"{H.m} {H.n}\n")
    for row in H.rows:
        f.write(" ".join(f"{q}:{PAULI_NAMES[p]}" for q, p in row) + "\n")


def read_check_matrix(f: TextIO) -> SparseCheckMatrix:
    """Parse the sparse text format produced by :func:`write_check_matrix`."""
    header = f.readline().split()
    if len(header) != 2:
        raise ValueError("check matrix header must be 'm n'")
    m, n = int(header[0]), int(header[1])
    rows = []
    for j in range(m):
        line = f.readline()
        if line == "":
            raise ValueError(f"unexpected end of file at row {j}")
        row = []
        for tok in line.split():
            q_str, _, p_str = tok.partition(":")
            if p_str not in ("X", "Y", "Z"):
                raise ValueError(f"row {j}: bad entry {tok!r}")
            row.append((int(q_str), PAULI_NAMES.index(p_str)))
        rows.append(row)
    return SparseCheckMatrix(m, n, rows)
