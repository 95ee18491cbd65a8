"""Second-stage decoding: exact minimum-weight perfect matching of syndrome
defects on the per-sector detection graphs.

Edge weights are ``log((1 - p) / p)`` where p is the per-qubit probability of
flipping that sector's checks, taken either from BP posteriors
(belief matching) or from the channel prior (the standalone MWPM baseline).
Probabilities above 1/2 would make weights negative and break the
shortest-path stage, so they are clamped to ``1/2 - 1e-6`` with a logged
warning; the matching itself is exact for arbitrary distance tables.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .pauli import PauliVector
from .toric import DetectionGeometry, ToricCode, build_detection_geometry

logger = logging.getLogger(__name__)

P_MIN = 1e-12
P_HALF_MARGIN = 1e-6

# Exact subset dynamic programming below this defect count, blossom above.
_DP_MAX_DEFECTS = 10


class ParityError(RuntimeError):
    """Odd defect count in a sector: impossible on the torus, so it signals
    an upstream bug rather than bad input."""


def posterior_sector_probs(marginals: np.ndarray, sector: str,
                           p_min: float = P_MIN) -> np.ndarray:
    """Per-qubit probability that the error flips the given sector's checks.

    Vertex checks (X-type) are flipped by Z and Y components; plaquette
    checks (Z-type) by X and Y.  Clamped into [p_min, 1 - p_min].
    """
    Q = np.asarray(marginals, dtype=np.float64)
    if sector == "vertex":
        p = Q[:, 2] + Q[:, 3]
    elif sector == "plaquette":
        p = Q[:, 1] + Q[:, 2]
    else:
        raise ValueError(f"unknown sector {sector!r}")
    return np.clip(p, p_min, 1.0 - p_min)


@dataclass
class WeightedDetectionGraph:
    """One sector's lattice graph with per-qubit edge weights
    ``log((1 - p) / p)``; p is clamped below 1/2 so weights stay positive."""

    geometry: DetectionGeometry
    sector: str
    weights: np.ndarray  # (n,) per-qubit edge weight
    clamped_qubits: int = 0
    _all_pairs: tuple | None = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.geometry.d ** 2

    def adjacency(self):
        return self.geometry.adjacency[0 if self.sector == "vertex" else 1]

    def is_uniform(self) -> bool:
        return bool((self.weights == self.weights[0]).all())

    def all_pairs(self):
        """Cached (dist, pred_node, pred_qubit) tables from every node; worth
        it when the same graph serves many shots (uniform prior weights)."""
        if self._all_pairs is None:
            N = self.n_nodes
            dist = np.empty((N, N))
            pred = np.empty((N, N), dtype=np.int64)
            predq = np.empty((N, N), dtype=np.int64)
            for src in range(N):
                dist[src], pred[src], predq[src] = dijkstra(
                    self.adjacency(), self.weights, src)
            self._all_pairs = (dist, pred, predq)
        return self._all_pairs


def build_weighted_graph(geometry: DetectionGeometry, sector: str,
                         p: np.ndarray) -> WeightedDetectionGraph:
    p = np.asarray(p, dtype=np.float64)
    p = np.clip(p, P_MIN, None)
    over = p > 0.5 - P_HALF_MARGIN
    n_over = int(np.count_nonzero(over))
    if n_over:
        # routine when BP is confident a qubit is flipped; the clamp keeps
        # weights positive for the shortest-path stage and near-free to cross
        logger.debug("%d qubit(s) with sector flip probability > 1/2 "
                     "clamped before shortest paths (%s sector)",
                     n_over, sector)
        p = np.minimum(p, 0.5 - P_HALF_MARGIN)
    w = np.log((1.0 - p) / p)
    return WeightedDetectionGraph(geometry=geometry, sector=sector,
                                  weights=w, clamped_qubits=n_over)


def dijkstra(adjacency, weights: np.ndarray, source: int):
    """Single-source shortest paths with deterministic tie-breaking: on equal
    distance the smaller predecessor node id wins.  Weights must be >= 0."""
    N = len(adjacency)
    dist = np.full(N, np.inf)
    pred = np.full(N, -1, dtype=np.int64)
    predq = np.full(N, -1, dtype=np.int64)
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        dv, v = heapq.heappop(heap)
        if dv > dist[v]:
            continue
        for u, q in adjacency[v]:
            nd = dv + weights[q]
            if nd < dist[u]:
                dist[u] = nd
                pred[u] = v
                predq[u] = q
                heapq.heappush(heap, (nd, u))
            elif nd == dist[u] and v < pred[u]:
                pred[u] = v
                predq[u] = q
    return dist, pred, predq


def _walk_path(pred_row, predq_row, source: int, target: int) -> tuple:
    qubits = []
    v = target
    while v != source:
        qubits.append(int(predq_row[v]))
        v = int(pred_row[v])
    return tuple(reversed(qubits))


@dataclass
class DistanceTable:
    """Pairwise shortest-path weights between defects, with path recovery."""

    defects: np.ndarray          # (k,) node ids
    dist: np.ndarray             # (k, k)
    _pred: np.ndarray            # (k, N) predecessor node per defect source
    _predq: np.ndarray           # (k, N) predecessor qubit per defect source

    def path(self, i: int, j: int) -> tuple:
        """Qubits of the shortest path from defect i to defect j."""
        return _walk_path(self._pred[i], self._predq[i],
                          int(self.defects[i]), int(self.defects[j]))


def defect_distances(g: WeightedDetectionGraph,
                     defects: np.ndarray) -> DistanceTable:
    """Exact pairwise shortest paths between the defects of one sector."""
    defects = np.asarray(defects, dtype=np.int64)
    k = defects.shape[0]
    N = g.n_nodes
    if g.is_uniform() and k > 0:
        ap_dist, ap_pred, ap_predq = g.all_pairs()
        dist = ap_dist[np.ix_(defects, defects)]
        return DistanceTable(defects, dist, ap_pred[defects], ap_predq[defects])
    dist = np.zeros((k, k))
    pred = np.empty((k, N), dtype=np.int64)
    predq = np.empty((k, N), dtype=np.int64)
    for i, src in enumerate(defects):
        d_all, pred[i], predq[i] = dijkstra(g.adjacency(), g.weights, int(src))
        dist[i] = d_all[defects]
    return DistanceTable(defects, dist, pred, predq)


@dataclass
class Matching:
    """A perfect pairing of defects with its realizing qubit paths."""

    pairs: tuple                 # ((i, j), ...) indices into the defect list
    total_weight: float
    paths: tuple = ()            # tuple of qubit tuples, aligned with pairs


def _mwpm_dp(dist: np.ndarray) -> tuple:
    """Exact minimum-weight perfect matching by subset dynamic programming;
    O(2^k k), only used for small k."""
    k = dist.shape[0]
    full = (1 << k) - 1
    best = np.full(1 << k, np.inf)
    best[0] = 0.0
    partner = np.zeros(1 << k, dtype=np.int64)
    for S in range(3, full + 1):
        if bin(S).count("1") % 2:
            continue
        i = (S & -S).bit_length() - 1
        rest = S & ~(1 << i)
        m = rest
        while m:
            j = (m & -m).bit_length() - 1
            m &= m - 1
            v = best[rest & ~(1 << j)] + dist[i, j]
            if v < best[S]:
                best[S] = v
                partner[S] = j
    pairs = []
    S = full
    while S:
        i = (S & -S).bit_length() - 1
        j = int(partner[S])
        pairs.append((i, j))
        S &= ~((1 << i) | (1 << j))
    return tuple(pairs), float(best[full])


def _mwpm_blossom(dist: np.ndarray) -> tuple:
    """Exact minimum-weight perfect matching via the blossom algorithm on the
    complete defect graph (maximum-weight matching of negated weights at
    maximum cardinality)."""
    k = dist.shape[0]
    G = nx.Graph()
    G.add_nodes_from(range(k))
    for i in range(k):
        for j in range(i + 1, k):
            G.add_edge(i, j, weight=-float(dist[i, j]))
    mate = nx.max_weight_matching(G, maxcardinality=True)
    pairs = tuple(sorted((min(a, b), max(a, b)) for a, b in mate))
    total = float(sum(dist[i, j] for i, j in pairs))
    return pairs, total


def mwpm(dist: np.ndarray) -> Matching:
    """Pairing of minimum total weight over all perfect pairings, exactly.

    The defect count must be even (torus parity); an odd count signals an
    upstream bug.
    """
    dist = np.asarray(dist, dtype=np.float64)
    k = dist.shape[0]
    if k % 2:
        raise ParityError(f"odd defect count {k}")
    if k == 0:
        return Matching(pairs=(), total_weight=0.0)
    if k <= _DP_MAX_DEFECTS:
        pairs, total = _mwpm_dp(dist)
    else:
        pairs, total = _mwpm_blossom(dist)
    return Matching(pairs=pairs, total_weight=total)


def _match_sector(g: WeightedDetectionGraph, defects: np.ndarray) -> Matching:
    table = defect_distances(g, defects)
    matching = mwpm(table.dist)
    paths = tuple(table.path(i, j) for i, j in matching.pairs)
    return Matching(matching.pairs, matching.total_weight, paths)


def assemble_correction(vertex_matching: Matching,
                        plaquette_matching: Matching,
                        code: ToricCode) -> PauliVector:
    """Z along vertex-sector paths, X along plaquette-sector paths, composed
    by XOR (overlaps become Y).  The result flips exactly the matched defects."""
    z = np.zeros(code.n, dtype=np.uint8)
    for path in vertex_matching.paths:
        for q in path:
            z[q] ^= 1
    x = np.zeros(code.n, dtype=np.uint8)
    for path in plaquette_matching.paths:
        for q in path:
            x[q] ^= 1
    return PauliVector(x, z)


def split_defects(code: ToricCode, s_std: np.ndarray):
    """Vertex- and plaquette-sector defect node ids of a standard syndrome."""
    d2 = code.d * code.d
    s_std = np.asarray(s_std, dtype=np.uint8)
    vertex = np.flatnonzero(s_std[:d2])
    plaquette = np.flatnonzero(s_std[d2:])
    if vertex.size % 2 or plaquette.size % 2:
        raise ParityError("odd defect count in a sector")
    return vertex, plaquette


def match_syndrome(code: ToricCode, s_std: np.ndarray,
                   p_vertex: np.ndarray, p_plaquette: np.ndarray,
                   geometry: DetectionGeometry | None = None,
                   graphs: tuple | None = None) -> PauliVector:
    """Full second stage: weight both sector graphs, match the defects and
    assemble a correction whose standard syndrome equals ``s_std``."""
    geometry = geometry or build_detection_geometry(code)
    defects_v, defects_p = split_defects(code, s_std)
    if graphs is None:
        g_v = build_weighted_graph(geometry, "vertex", p_vertex)
        g_p = build_weighted_graph(geometry, "plaquette", p_plaquette)
    else:
        g_v, g_p = graphs
    m_v = _match_sector(g_v, defects_v)
    m_p = _match_sector(g_p, defects_p)
    return assemble_correction(m_v, m_p, code)


def belief_match(code: ToricCode, s_std: np.ndarray, marginals: np.ndarray,
                 geometry: DetectionGeometry | None = None) -> PauliVector:
    """Second-stage decode with edge weights from BP posteriors."""
    return match_syndrome(
        code, s_std,
        posterior_sector_probs(marginals, "vertex"),
        posterior_sector_probs(marginals, "plaquette"),
        geometry=geometry,
    )


def mwpm_baseline(code: ToricCode, s_std: np.ndarray, epsilon: float,
                  geometry: DetectionGeometry | None = None,
                  graphs: tuple | None = None) -> PauliVector:
    """Standalone MWPM: uniform weights from the channel prior (each sector
    sees a flip probability of 2 epsilon / 3)."""
    geometry = geometry or build_detection_geometry(code)
    if graphs is None:
        graphs = baseline_graphs(code, epsilon, geometry)
    p = np.full(code.n, np.nan)  # unused when graphs are given
    return match_syndrome(code, s_std, p, p, geometry=geometry, graphs=graphs)


def baseline_graphs(code: ToricCode, epsilon: float,
                    geometry: DetectionGeometry | None = None) -> tuple:
    """Prior-weighted sector graphs, reusable (and cached) across shots."""
    geometry = geometry or build_detection_geometry(code)
    p = np.full(code.n, 2.0 * epsilon / 3.0)
    return (build_weighted_graph(geometry, "vertex", p),
            build_weighted_graph(geometry, "plaquette", p))
