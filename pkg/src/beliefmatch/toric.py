"""The d x d toric code: lattice indexing, check matrices, logical operators,
translational edge classes, and the per-sector detection geometry.

Indexing convention (any consistent choice works; this one makes lattice
translations pure index arithmetic):

* Qubits sit on lattice edges.  Qubit id ``orient * d**2 + r * d + c`` with
  ``orient`` 0 for the horizontal edge pointing east from lattice point
  ``(r, c)`` and 1 for the vertical edge pointing south from ``(r, c)``.
  Rows/columns are periodic mod d.
* Vertex check ``(r, c)`` acts X on horizontal edges ``(r, c)``, ``(r, c-1)``
  and vertical edges ``(r-1, c)``, ``(r, c)``.
* Plaquette check ``(r, c)`` (the face south-east of lattice point ``(r, c)``)
  acts Z on horizontal edges ``(r, c)``, ``(r+1, c)`` and vertical edges
  ``(r, c)``, ``(r, c+1)``.

The overcomplete matrix appends, for every vertex (plaquette) check, its
product with the right neighbour and with the down neighbour, giving weight-6
rows and a total of ``3n`` rows.

Only even d is exercised by the evaluation protocol; odd d >= 3 builds fine
and is supported.  d = 2 is accepted but degenerate (adjacent checks overlap
on two qubits, so the "weight-6" rows have weight 4); ``validate`` reports it.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .pauli import PauliVector, SparseCheckMatrix, syndrome

# Family order fixes class-id assignment; do not reorder without bumping
# _CLASS_CONVENTION_VERSION (weight files store the convention hash).
FAMILIES = ("V4", "P4", "V6R", "V6D", "P6R", "P6D")

# Canonical support of one check of each family, as (orient, dr, dc) offsets
# from the check's anchor (r, c).  The position in this list is the class slot.
_SUPPORTS = {
    "V4": ((0, 0, 0), (0, 0, -1), (1, -1, 0), (1, 0, 0)),
    "P4": ((0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 0, 1)),
    "V6R": ((0, 0, -1), (0, 0, 1), (1, -1, 0), (1, -1, 1), (1, 0, 0), (1, 0, 1)),
    "V6D": ((0, 0, -1), (0, 0, 0), (0, 1, -1), (0, 1, 0), (1, -1, 0), (1, 1, 0)),
    "P6R": ((0, 0, 0), (0, 0, 1), (0, 1, 0), (0, 1, 1), (1, 0, 0), (1, 0, 2)),
    "P6D": ((0, 0, 0), (0, 2, 0), (1, 0, 0), (1, 0, 1), (1, 1, 0), (1, 1, 1)),
}

_FAMILY_PAULI = {"V4": 1, "P4": 3, "V6R": 1, "V6D": 1, "P6R": 3, "P6D": 3}

_CLASS_CONVENTION_VERSION = 1


def _class_base(family: str) -> int:
    base = 0
    for f in FAMILIES:
        if f == family:
            return base
        base += len(_SUPPORTS[f])
    raise KeyError(family)


N_EDGE_CLASSES = sum(len(s) for s in _SUPPORTS.values())  # 2*4 + 4*6 = 32


def class_convention_hash() -> str:
    """Hash of the edge-class convention; stored in weight files so that
    convolutional weights are only ever bound to a compatible lattice build."""
    blob = repr((_CLASS_CONVENTION_VERSION, FAMILIES, sorted(_SUPPORTS.items())))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ToricCode:
    """A [[2d^2, 2, d]] toric code with standard and overcomplete checks.

    Immutable after construction; share freely across workers.
    """

    d: int
    n: int
    h_std: SparseCheckMatrix
    h_oc: SparseCheckMatrix
    logicals: tuple  # (X1, X2, Z1, Z2) PauliVectors
    # Parent standard-row ids of each weight-6 row, for deriving redundant
    # syndrome bits from a measured standard syndrome.
    pair_parent_a: np.ndarray
    pair_parent_b: np.ndarray

    # -- lattice indexing helpers ------------------------------------------

    def qubit_index(self, orient: int, r: int, c: int) -> int:
        d = self.d
        return orient * d * d + (r % d) * d + (c % d)

    def qubit_rc(self, q: int) -> tuple[int, int, int]:
        """Return (orient, r, c) of qubit id q."""
        d = self.d
        return q // (d * d), (q % (d * d)) // d, q % d

    def check_coords(self, row: int) -> tuple[str, int, int]:
        """Return (family, r, c) of a row of the overcomplete matrix."""
        d2 = self.d * self.d
        family = FAMILIES[row // d2]
        k = row % d2
        return family, k // self.d, k % self.d

    def translate_qubit(self, q: int, dr: int, dc: int) -> int:
        o, r, c = self.qubit_rc(q)
        return self.qubit_index(o, r + dr, c + dc)

    def translate_row(self, row: int, dr: int, dc: int) -> int:
        family, r, c = self.check_coords(row)
        d, d2 = self.d, self.d * self.d
        base = FAMILIES.index(family) * d2
        return base + ((r + dr) % d) * d + ((c + dc) % d)

    def syndrome_oc_from_std(self, s_std: np.ndarray) -> np.ndarray:
        """Extend standard syndrome bits to the overcomplete rows.

        Redundant rows are products of two standard rows, so their bits are
        the XOR of the parent bits.  Works on batched input (..., 2d^2).
        """
        s_std = np.asarray(s_std, dtype=np.uint8)
        extra = s_std[..., self.pair_parent_a] ^ s_std[..., self.pair_parent_b]
        return np.concatenate([s_std, extra], axis=-1)


def _check_entries(code_d: int, family: str, r: int, c: int):
    """(qubit, pauli, class_id) triples of one check, sorted by qubit."""
    d = code_d
    pauli = _FAMILY_PAULI[family]
    base = _class_base(family)
    entries = []
    for slot, (o, dr, dc) in enumerate(_SUPPORTS[family]):
        q = o * d * d + ((r + dr) % d) * d + ((c + dc) % d)
        entries.append((q, pauli, base + slot))
    entries.sort()
    return entries


def build_toric(d: int) -> ToricCode:
    """Construct the distance-d toric code with its overcomplete check matrix."""
    if d < 2:
        raise ValueError(f"d must be >= 2, got {d}")
    n = 2 * d * d

    rows = []
    for family in FAMILIES:
        for r in range(d):
            for c in range(d):
                entries = _check_entries(d, family, r, c)
                rows.append([(q, p) for q, p, _ in entries])

    h_oc = SparseCheckMatrix(6 * d * d, n, rows)
    h_std = SparseCheckMatrix(2 * d * d, n, rows[: 2 * d * d])

    # Parent standard rows of each product row, in the same (family, r, c)
    # row order used above.
    par_a, par_b = [], []
    d2 = d * d
    for family, neighbour in (("V6R", (0, 1)), ("V6D", (1, 0)),
                              ("P6R", (0, 1)), ("P6D", (1, 0))):
        std_base = 0 if family.startswith("V") else d2
        for r in range(d):
            for c in range(d):
                par_a.append(std_base + r * d + c)
                par_b.append(std_base + ((r + neighbour[0]) % d) * d
                             + (c + neighbour[1]) % d)

    def h_edges(rr):  # horizontal edges at the given (r, c) pairs, as X/Z string
        return [(0, r, c) for r, c in rr]

    def v_edges(rr):
        return [(1, r, c) for r, c in rr]

    def op(edges, pauli):
        codes = np.zeros(n, dtype=np.uint8)
        for o, r, c in edges:
            codes[o * d2 + (r % d) * d + (c % d)] = pauli
        return PauliVector.from_codes(codes)

    logical_x1 = op(h_edges([(r, 0) for r in range(d)]), 1)   # X on column 0 of horizontals
    logical_x2 = op(v_edges([(0, c) for c in range(d)]), 1)   # X on row 0 of verticals
    logical_z1 = op(h_edges([(0, c) for c in range(d)]), 3)   # Z on row 0 of horizontals
    logical_z2 = op(v_edges([(r, 0) for r in range(d)]), 3)   # Z on column 0 of verticals

    return ToricCode(
        d=d,
        n=n,
        h_std=h_std,
        h_oc=h_oc,
        logicals=(logical_x1, logical_x2, logical_z1, logical_z2),
        pair_parent_a=np.array(par_a, dtype=np.int64),
        pair_parent_b=np.array(par_b, dtype=np.int64),
    )


@dataclass(frozen=True)
class EdgeClassMap:
    """Translation-equivalence classes of the overcomplete Tanner edges.

    Two edges share a class iff a lattice translation maps one onto the other;
    the class count (32) is independent of d.  ``per_edge`` is aligned with
    the row-major edge enumeration of ``h_oc`` (rows in order, entries sorted
    by qubit within each row).
    """

    d: int
    n_classes: int
    per_edge: np.ndarray
    per_row: tuple  # per_row[j][k] = class of k-th entry of h_oc row j
    convention_hash: str

    def class_of(self, row: int, qubit: int, code: ToricCode) -> int:
        for (q, _), cls in zip(code.h_oc.rows[row], self.per_row[row]):
            if q == qubit:
                return int(cls)
        raise KeyError(f"({row}, {qubit}) is not a Tanner edge")


def build_edge_classes(code: ToricCode) -> EdgeClassMap:
    """Classify every Tanner edge of the overcomplete matrix by its
    translation class (check family + geometric slot)."""
    d = code.d
    per_row = []
    for row in range(code.h_oc.m):
        family, r, c = code.check_coords(row)
        entries = _check_entries(d, family, r, c)
        expected = [(q, p) for q, p, _ in entries]
        assert expected == list(code.h_oc.rows[row])
        per_row.append(tuple(cls for _, _, cls in entries))
    per_edge = np.array([cls for row in per_row for cls in row], dtype=np.int64)
    return EdgeClassMap(
        d=d,
        n_classes=N_EDGE_CLASSES,
        per_edge=per_edge,
        per_row=tuple(per_row),
        convention_hash=class_convention_hash(),
    )


@dataclass(frozen=True)
class DetectionGeometry:
    """Per-sector lattice graphs used by the matching stage.

    Nodes of a sector are the weight-4 checks of one family; every qubit is
    exactly one edge per sector, joining the two checks its Z (vertex sector)
    or X (plaquette sector) component flips.
    """

    d: int
    # (n, 2) arrays: the two sector checks incident to each qubit.
    vertex_pairs: np.ndarray
    plaquette_pairs: np.ndarray
    # adjacency[sector][node] = tuple of (neighbour node, qubit id)
    adjacency: tuple

    def sector_pairs(self, sector: str) -> np.ndarray:
        if sector == "vertex":
            return self.vertex_pairs
        if sector == "plaquette":
            return self.plaquette_pairs
        raise ValueError(f"unknown sector {sector!r}")


def build_detection_geometry(code: ToricCode) -> DetectionGeometry:
    d, n = code.d, code.n
    d2 = d * d

    def node(r, c):
        return (r % d) * d + (c % d)

    vertex_pairs = np.zeros((n, 2), dtype=np.int64)
    plaq_pairs = np.zeros((n, 2), dtype=np.int64)
    for q in range(n):
        o, r, c = code.qubit_rc(q)
        if o == 0:  # horizontal edge between lattice points (r,c) and (r,c+1)
            vertex_pairs[q] = (node(r, c), node(r, c + 1))
            plaq_pairs[q] = (node(r - 1, c), node(r, c))
        else:  # vertical edge between lattice points (r,c) and (r+1,c)
            vertex_pairs[q] = (node(r, c), node(r + 1, c))
            plaq_pairs[q] = (node(r, c - 1), node(r, c))

    adjacency = []
    for pairs in (vertex_pairs, plaq_pairs):
        adj = [[] for _ in range(d2)]
        for q in range(n):
            a, b = int(pairs[q, 0]), int(pairs[q, 1])
            adj[a].append((b, q))
            adj[b].append((a, q))
        adjacency.append(tuple(tuple(sorted(x)) for x in adj))

    return DetectionGeometry(
        d=d,
        vertex_pairs=vertex_pairs,
        plaquette_pairs=plaq_pairs,
        adjacency=tuple(adjacency),
    )


def gf2_rank(a: np.ndarray) -> int:
    """Rank over GF(2) of a binary matrix, by Gaussian elimination."""
    a = np.array(a, dtype=np.uint8) & 1
    rows, cols = a.shape
    r = 0
    for c in range(cols):
        pivots = np.nonzero(a[r:, c])[0]
        if pivots.size == 0:
            continue
        p = r + int(pivots[0])
        if p != r:
            a[[r, p]] = a[[p, r]]
        mask = a[:, c].astype(bool)
        mask[r] = False
        a[mask] ^= a[r]
        r += 1
        if r == rows:
            break
    return r


@dataclass
class ValidationReport:
    ok: bool
    failures: list[str] = field(default_factory=list)

    def first_violation(self) -> str | None:
        return self.failures[0] if self.failures else None


def validate(code: ToricCode) -> ValidationReport:
    """Check all structural invariants of a built code; collects failures
    rather than raising."""
    failures = []
    d, n = code.d, code.n
    d2 = d * d

    def expect(cond: bool, msg: str):
        if not cond:
            failures.append(msg)

    expect(n == 2 * d2, f"n={n} is not 2d^2")
    expect(code.h_std.m == 2 * d2 and code.h_std.n == n, "h_std shape wrong")
    expect(code.h_oc.m == 6 * d2 and code.h_oc.n == n,
           f"h_oc must be 3n x n rows={code.h_oc.m}")
    expect(code.h_oc.rows[: 2 * d2] == code.h_std.rows,
           "h_oc must start with the standard rows")

    w_std = code.h_std.row_weights()
    expect(bool((w_std == 4).all()), "standard rows must have weight 4")
    w_extra = np.array([len(r) for r in code.h_oc.rows[2 * d2:]])
    expect(bool((w_extra == 6).all()), "product rows must have weight 6")

    # Row vectors of the overcomplete matrix as one (m, n) code array.
    from ._engine import CheckArrays

    row_codes = np.zeros((code.h_oc.m, n), dtype=np.uint8)
    for j, row in enumerate(code.h_oc.rows):
        for q, p in row:
            row_codes[j, q] = p

    # Product rows really are products of their two parent standard rows
    # (XOR of symplectic blocks == XOR of the code lookup, entrywise).
    from .pauli import CODE_FROM_XZ, _XZ_BITS

    bits = _XZ_BITS[row_codes[: 2 * d2]]
    prod_bits = bits[code.pair_parent_a] ^ bits[code.pair_parent_b]
    prod_codes = CODE_FROM_XZ[prod_bits[..., 0], prod_bits[..., 1]]
    bad = np.flatnonzero((prod_codes != row_codes[2 * d2:]).any(axis=1))
    if bad.size:
        failures.append(f"product row {bad[0]} does not match its parents")

    # Abelian group: every overcomplete row commutes with every standard row.
    synd = CheckArrays.of(code.h_std).syndrome_of_codes(row_codes)
    bad = np.flatnonzero(synd.any(axis=1))
    if bad.size:
        failures.append(f"row {bad[0]} does not commute with the stabilizer")

    rank = gf2_rank(code.h_std.to_dense_symplectic())
    expect(rank == n - 2, f"symplectic rank {rank} != n-2 = {n - 2}")

    # One global constraint per family: the product of all rows is identity.
    for name, lo, hi in (("vertex", 0, d2), ("plaquette", d2, 2 * d2)):
        acc = PauliVector.identity(n)
        for j in range(lo, hi):
            acc = acc.mul(code.h_std.row_vector(j))
        expect(acc.weight() == 0, f"product of all {name} rows is not identity")

    names = ("X1", "X2", "Z1", "Z2")
    for name, logical in zip(names, code.logicals):
        expect(logical.weight() == d, f"logical {name} has weight != d")
        if syndrome(code.h_std, logical).any():
            failures.append(f"logical {name} does not commute with stabilizer")
    # Conjugate pairs anticommute, all other pairs commute.
    anti = {("X1", "Z1"), ("X2", "Z2")}
    for i in range(4):
        for j in range(i + 1, 4):
            s = int(np.count_nonzero(
                code.logicals[i].x & code.logicals[j].z)
                + np.count_nonzero(code.logicals[i].z & code.logicals[j].x)) % 2
            want = 1 if (names[i], names[j]) in anti else 0
            expect(s == want, f"logical pair {names[i]},{names[j]} has wrong "
                              f"commutation")

    return ValidationReport(ok=not failures, failures=failures)
