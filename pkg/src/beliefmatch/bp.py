"""Quaternary belief propagation over a sparse check matrix with syndrome
constraints: the first-stage decoder.

Messages are scalars per Tanner edge (the commute-minus-anticommute
probability mass with respect to the edge's check Pauli), which is the exact
sum-product statistic for stabilizer check constraints; on cycle-free
matrices the marginals coincide with brute-force posteriors.  The flooding
schedule stops early as soon as the hard decision (per-qubit argmax, ties
resolved toward I, X, Y, Z in that order) reproduces the measured syndrome
on every row of the matrix in use, redundant rows included.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _engine
from ._engine import CheckArrays, clamp_prior
from .pauli import PauliVector, SparseCheckMatrix
from .weights import WeightSet, bind_edges


@dataclass(frozen=True)
class BpConfig:
    """Flooding-schedule settings.  ``max_iterations`` defaults to twice the
    code distance at the call sites that know one; here it must be given.
    ``early_stop`` disables the per-iteration hard-decision test (useful when
    the marginals at full depth are wanted, e.g. on cycle-free matrices)."""

    max_iterations: int = 32
    early_stop: bool = True
    prob_floor: float = _engine.PROB_FLOOR
    delta_clip: float = _engine.DELTA_CLIP

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass
class BpResult:
    """Outcome of one decode: per-qubit quaternary marginals (n, 4), the
    argmax hard decision, and whether its syndrome matched the input."""

    marginals: np.ndarray
    hard_decision: PauliVector
    converged: bool
    iterations_used: int


@dataclass
class MessageState:
    """Mutable per-decode scratch for the staged message-passing API."""

    lq: np.ndarray          # (E, 4) log extrinsic distribution per edge
    d: np.ndarray | None = None       # (E,) variable->check scalars
    delta: np.ndarray | None = None   # (E,) check->variable scalars
    beliefs: np.ndarray | None = None  # (n, 4) latest marginals


def _edge_weights(H: SparseCheckMatrix, weights, max_iterations: int,
                  code=None) -> np.ndarray | None:
    """Normalize the `weights` argument to a (T, E) array or None."""
    if weights is None:
        return None
    if isinstance(weights, WeightSet):
        if weights.kind == "conv":
            if code is None:
                raise ValueError(
                    "binding convolutional weights needs the toric code")
            arr = bind_edges(weights, code)
        else:
            arr = weights.values
    else:
        arr = np.asarray(weights, dtype=np.float64)
    E = CheckArrays.of(H).n_edges
    if arr.ndim != 2 or arr.shape[1] != E:
        raise ValueError(f"weights must have shape (T, {E}), got {arr.shape}")
    if arr.shape[0] < max_iterations:
        raise ValueError(
            f"weights cover {arr.shape[0]} iterations but the schedule "
            f"runs {max_iterations}")
    return arr


def decode_bp(H: SparseCheckMatrix, s: np.ndarray, prior: np.ndarray,
              cfg: BpConfig | None = None, weights=None,
              code=None) -> BpResult:
    """Decode one syndrome.  `weights` may be None (plain BP), a (T, E)
    per-edge array, or a WeightSet (conv sets need `code` for binding).
    With all-ones weights the output is bit-identical to plain BP."""
    cfg = cfg or BpConfig()
    s = np.asarray(s, dtype=np.uint8)
    if s.shape != (H.m,):
        raise ValueError(f"syndrome must have shape ({H.m},), got {s.shape}")
    ar = CheckArrays.of(H)
    log_prior = np.log(clamp_prior(prior, H.n))
    w = _edge_weights(H, weights, cfg.max_iterations, code)
    marginals, hard, converged, iters = _engine.bp_run(
        ar, s[None, :], log_prior, cfg.max_iterations, w,
        early_stop=cfg.early_stop)
    return BpResult(
        marginals=marginals[0],
        hard_decision=PauliVector.from_codes(hard[0]),
        converged=bool(converged[0]),
        iterations_used=int(iters[0]),
    )


def decode_bp_batch(H: SparseCheckMatrix, s: np.ndarray, prior: np.ndarray,
                    cfg: BpConfig | None = None, weights=None, code=None):
    """Batched variant: s has shape (B, m).  Returns raw arrays
    (marginals (B, n, 4), hard codes (B, n), converged (B,), iterations (B,))."""
    cfg = cfg or BpConfig()
    s = np.asarray(s, dtype=np.uint8)
    ar = CheckArrays.of(H)
    log_prior = np.log(clamp_prior(prior, H.n))
    w = _edge_weights(H, weights, cfg.max_iterations, code)
    return _engine.bp_run(ar, s, log_prior, cfg.max_iterations, w,
                          early_stop=cfg.early_stop)


# -- staged single-shot API ------------------------------------------------
#
# These operate on a MessageState and expose the three update stages
# individually; decode_bp composes the same engine primitives.

def init_messages(H: SparseCheckMatrix, prior: np.ndarray) -> MessageState:
    ar = CheckArrays.of(H)
    log_prior = np.log(clamp_prior(prior, H.n))
    return MessageState(lq=log_prior[ar.edge_col])


def vn_to_cn_messages(state: MessageState, H: SparseCheckMatrix) -> MessageState:
    """Update the variable->check scalars from the current extrinsic
    distributions (equal to the prior's commute-minus-anticommute mass on
    the first iteration)."""
    ar = CheckArrays.of(H)
    state.d = _engine.vn_stage(ar, state.lq[None])[0]
    return state


def cn_to_vn_messages(state: MessageState, H: SparseCheckMatrix,
                      s: np.ndarray) -> MessageState:
    """Update the check->variable scalars; the sign flips with the syndrome
    bit of the sending check."""
    ar = CheckArrays.of(H)
    sign_row = 1.0 - 2.0 * np.asarray(s, dtype=np.float64)
    _, _, delta = _engine.cn_stage(ar, state.d[None], sign_row[None])
    state.delta = delta[0]
    return state


def update_beliefs(state: MessageState, H: SparseCheckMatrix,
                   prior: np.ndarray, weights_t=None) -> MessageState:
    """Combine prior and check factors into normalized per-qubit marginals,
    and refresh the extrinsic distributions used by the next iteration."""
    ar = CheckArrays.of(H)
    log_prior = np.log(clamp_prior(prior, H.n))
    w_t = None if weights_t is None else np.asarray(weights_t, dtype=np.float64)
    wlr, _ = _engine.edge_log_factors(ar, state.delta[None], w_t)
    logQ, lq_next = _engine.belief_stage(ar, wlr, log_prior)
    state.beliefs = np.exp(logQ[0])
    state.lq = lq_next[0]
    return state
