"""The decoder variants as one batched pipeline: a first stage (plain or
weighted BP on the standard or overcomplete matrix) and an optional exact
matching second stage that fires only on shots where BP failed to converge.

Variant names follow the evaluation protocol:

========================  ==========  ============  ============
variant                   matrix      weights       second stage
========================  ==========  ============  ============
``mwpm``                  (none)      (none)        always
``bp`` / ``bp+match``     overcomplete  none        on failure*
``nbp`` / ``+match``      standard    dense         on failure*
``rnbp`` / ``+match``     overcomplete  dense       on failure*
``conv-rnbp`` / ``+match``  overcomplete  conv      on failure*
========================  ==========  ============  ============

(*) only for the ``+match`` form; the bare form returns the BP hard decision
as-is and a non-converged shot counts as a decoding failure.
"""

from __future__ import annotations

import numpy as np

from . import _engine
from ._engine import CheckArrays, clamp_prior
from .channel import DepolarizingChannel
from .matching import baseline_graphs, belief_match, mwpm_baseline
from .toric import ToricCode, build_detection_geometry
from .weights import WeightSet, bind_edges

VARIANTS = ("mwpm", "bp", "bp+match", "nbp", "nbp+match", "rnbp",
            "rnbp+match", "conv-rnbp", "conv-rnbp+match")

_VARIANT_MATRIX = {"bp": "overcomplete", "nbp": "standard",
                   "rnbp": "overcomplete", "conv-rnbp": "overcomplete"}
_VARIANT_KIND = {"bp": None, "nbp": "dense", "rnbp": "dense",
                 "conv-rnbp": "conv"}


def split_variant(variant: str) -> tuple[str, bool]:
    """-> (first-stage name or "mwpm", has matching second stage)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    if variant == "mwpm":
        return "mwpm", True
    base, _, tail = variant.partition("+")
    return base, tail == "match"


class DecoderPipeline:
    """Batched decoder for one (code, epsilon, variant, weights) point.

    Owns mutable scratch; use one instance per worker.  The code, geometry
    and weight arrays it references are immutable and shared.
    """

    def __init__(self, code: ToricCode, epsilon: float, variant: str,
                 weights: WeightSet | None = None,
                 max_iterations: int | None = None, geometry=None,
                 stage2_weights: str = "posterior"):
        self.code = code
        self.epsilon = float(epsilon)
        self.variant = variant
        self.first_stage, self.second_stage = split_variant(variant)
        self.geometry = geometry or build_detection_geometry(code)
        self.prior = DepolarizingChannel(self.epsilon).prior()
        if stage2_weights not in ("posterior", "prior"):
            raise ValueError("stage2_weights must be 'posterior' or 'prior'")
        self.stage2_weights = stage2_weights
        self._graphs = None

        if self.first_stage == "mwpm":
            if weights is not None:
                raise ValueError("the mwpm variant takes no weights")
            self.h = None
            self.max_iterations = 0
            self._prepare_baseline_graphs()
            return

        matrix = _VARIANT_MATRIX[self.first_stage]
        kind = _VARIANT_KIND[self.first_stage]
        if kind is None:
            if weights is not None and not weights.is_unit():
                raise ValueError(f"variant {variant!r} is unweighted BP")
            self.edge_weights = None
        else:
            if weights is None:
                raise ValueError(f"variant {variant!r} needs trained weights")
            if weights.kind != kind or weights.matrix != matrix:
                raise ValueError(
                    f"variant {variant!r} needs {kind} weights for the "
                    f"{matrix} matrix, got {weights.kind}/{weights.matrix}")
            self.edge_weights = bind_edges(weights, code, matrix)

        self.matrix = matrix
        self.h = code.h_oc if matrix == "overcomplete" else code.h_std
        self.arrays = CheckArrays.of(self.h)
        if max_iterations is None:
            max_iterations = (weights.iterations if weights is not None
                              else 2 * code.d)
        if (self.edge_weights is not None
                and self.edge_weights.shape[0] < max_iterations):
            raise ValueError(
                f"weights cover {self.edge_weights.shape[0]} iterations, "
                f"schedule wants {max_iterations}")
        self.max_iterations = int(max_iterations)
        self.log_prior = np.log(clamp_prior(self.prior, code.n))
        self._std_arrays = CheckArrays.of(code.h_std)
        if self.second_stage and self.stage2_weights == "prior":
            self._prepare_baseline_graphs()

    def _prepare_baseline_graphs(self):
        self._graphs = baseline_graphs(self.code, self.epsilon, self.geometry)
        # warm the all-pairs cache once, outside the shot loop
        for g in self._graphs:
            g.all_pairs()

    def decode_batch(self, s_std: np.ndarray):
        """Decode a batch of standard syndromes (B, 2 d^2).

        Returns (corrections (B, n) Pauli codes, converged (B,), iterations
        (B,), stage2 (B,)); for bare first-stage variants the correction of a
        non-converged shot is the (syndrome-inconsistent) hard decision.
        """
        s_std = np.asarray(s_std, dtype=np.uint8)
        B = s_std.shape[0]

        if self.first_stage == "mwpm":
            corrections = np.empty((B, self.code.n), dtype=np.uint8)
            for b in range(B):
                corr = mwpm_baseline(self.code, s_std[b], self.epsilon,
                                     geometry=self.geometry,
                                     graphs=self._graphs)
                corrections[b] = corr.codes()
            return (corrections, np.zeros(B, dtype=bool),
                    np.zeros(B, dtype=np.int64), np.ones(B, dtype=bool))

        s = (self.code.syndrome_oc_from_std(s_std)
             if self.matrix == "overcomplete" else s_std)
        marginals, hard, converged, iters = _engine.bp_run(
            self.arrays, s, self.log_prior, self.max_iterations,
            self.edge_weights)

        corrections = hard.copy()
        stage2 = ~converged
        if self.second_stage:
            for b in np.flatnonzero(stage2):
                if self.stage2_weights == "prior":
                    corr = mwpm_baseline(self.code, s_std[b], self.epsilon,
                                         geometry=self.geometry,
                                         graphs=self._graphs)
                else:
                    corr = belief_match(self.code, s_std[b], marginals[b],
                                        geometry=self.geometry)
                corrections[b] = corr.codes()
        return corrections, converged, iters, stage2

    def decode_one(self, s_std: np.ndarray):
        """Single-shot convenience wrapper around :meth:`decode_batch`."""
        corrections, converged, iters, stage2 = self.decode_batch(
            np.asarray(s_std, dtype=np.uint8)[None, :])
        return corrections[0], bool(converged[0]), int(iters[0]), bool(stage2[0])
