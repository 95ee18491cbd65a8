"""beliefmatch: two-stage toric-code decoding.

Quaternary belief propagation over an overcomplete check matrix (optionally
with trained multiplicative message weights, dense or shared across
translation classes), falling back to exact minimum-weight perfect matching
weighted by the BP posteriors, plus a Monte Carlo harness with
negative-binomial stopping.

The scikit-learn style estimators (:class:`MwpmDecoder`,
:class:`BeliefMatchingDecoder`, :class:`NeuralBeliefMatchingDecoder`) are the
high-level entry points; the per-stage functional API lives in the
submodules.
"""

from .bp import BpConfig, BpResult, decode_bp, decode_bp_batch
from .channel import DepolarizingChannel, ShotSeed, sample_error
from .estimators import (BeliefMatchingDecoder, MwpmDecoder,
                         NeuralBeliefMatchingDecoder)
from .matching import (Matching, belief_match, defect_distances, mwpm,
                       mwpm_baseline, posterior_sector_probs)
from .pauli import (Pauli, PauliVector, SparseCheckMatrix, commutes_with_all,
                    pauli_mul, read_check_matrix, symplectic_product,
                    syndrome, write_check_matrix)
from .simulate import (RunStats, SimConfig, SweepConfig, is_logical_failure,
                       negbin_ci, run_point, sweep)
from .toric import (EdgeClassMap, ToricCode, build_detection_geometry,
                    build_edge_classes, build_toric, validate)
from .training import LossReport, TrainConfig, cross_entropy, gradient, train
from .weights import (WeightSet, init_unit, load_weights, save_weights,
                      transfer)

__version__ = "0.1.0"

__all__ = [
    "BeliefMatchingDecoder", "BpConfig", "BpResult", "DepolarizingChannel",
    "EdgeClassMap", "LossReport", "Matching", "MwpmDecoder",
    "NeuralBeliefMatchingDecoder", "Pauli", "PauliVector", "RunStats",
    "ShotSeed", "SimConfig", "SparseCheckMatrix", "SweepConfig",
    "ToricCode", "TrainConfig", "WeightSet", "belief_match",
    "build_detection_geometry", "build_edge_classes", "build_toric",
    "commutes_with_all", "cross_entropy", "decode_bp", "decode_bp_batch",
    "defect_distances", "gradient", "init_unit", "is_logical_failure",
    "load_weights", "mwpm", "mwpm_baseline", "negbin_ci", "pauli_mul",
    "posterior_sector_probs", "read_check_matrix", "run_point",
    "sample_error", "save_weights", "sweep", "symplectic_product",
    "syndrome", "train", "transfer", "validate", "write_check_matrix",
]
