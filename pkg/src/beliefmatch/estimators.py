"""Scikit-learn style decoder estimators.

A decoder maps measured standard syndromes to Pauli corrections, so it fits
the estimator mould directly: ``predict`` consumes an array of syndrome bit
rows and returns symplectic correction rows, ``score`` is the fraction of
shots decoded without a logical error, and the neural variant learns its
message weights in ``fit``.  All constructor arguments are plain values, so
``get_params`` / ``set_params`` / ``clone`` behave as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._engine import CheckArrays
from .decoders import DecoderPipeline
from .simulate import _MUL4, _batch_logical_failures, _logical_code_table
from .toric import build_toric
from .training import TrainConfig, train
from .weights import WeightSet, load_weights


def check_syndromes(X, m: int) -> np.ndarray:
    """Validate an (n_shots, m) array of syndrome bits."""
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != m:
        raise ValueError(f"expected syndromes of shape (n_shots, {m}), "
                         f"got {X.shape}")
    if not np.isin(X, (0, 1)).all():
        raise ValueError("syndrome entries must be 0 or 1")
    return X.astype(np.uint8)


def check_errors(y, n: int) -> np.ndarray:
    """Validate an (n_shots, 2n) symplectic error array (x | z columns)."""
    y = np.asarray(y)
    if y.ndim != 2 or y.shape[1] != 2 * n:
        raise ValueError(f"expected errors of shape (n_shots, {2 * n}), "
                         f"got {y.shape}")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("error entries must be 0 or 1")
    return y.astype(np.uint8)


def _codes_to_symplectic(codes: np.ndarray) -> np.ndarray:
    x = ((codes == 1) | (codes == 2)).astype(np.uint8)
    z = ((codes == 2) | (codes == 3)).astype(np.uint8)
    return np.concatenate([x, z], axis=1)


def _symplectic_to_codes(sympl: np.ndarray, n: int) -> np.ndarray:
    from .pauli import CODE_FROM_XZ

    return CODE_FROM_XZ[sympl[:, :n], sympl[:, n:]]


class _ToricDecoderBase(BaseEstimator):
    """Shared fit/predict plumbing for the toric-code decoders."""

    def _build_pipeline(self) -> DecoderPipeline:
        raise NotImplementedError

    def fit(self, X=None, y=None):
        """Build (and for neural decoders, train) the decoding pipeline."""
        self.code_ = build_toric(self.d)
        self.pipeline_ = self._build_pipeline()
        self.n_features_in_ = self.code_.h_std.m
        return self

    def _require_fitted(self):
        if not hasattr(self, "pipeline_"):
            raise NotFittedError(
                f"{type(self).__name__} must be fitted before predicting")

    def predict(self, X) -> np.ndarray:
        """Decode standard syndromes (n_shots, 2 d^2) into symplectic
        corrections (n_shots, 2 n) with (x | z) column order."""
        self._require_fitted()
        X = check_syndromes(X, self.code_.h_std.m)
        corrections, _, _, _ = self.pipeline_.decode_batch(X)
        return _codes_to_symplectic(corrections)

    def decode_details(self, X):
        """Like predict, but also return (converged, iterations, stage2)."""
        self._require_fitted()
        X = check_syndromes(X, self.code_.h_std.m)
        corrections, converged, iters, stage2 = self.pipeline_.decode_batch(X)
        return _codes_to_symplectic(corrections), converged, iters, stage2

    def score(self, X, y) -> float:
        """Fraction of shots decoded without a logical failure, given the
        true errors `y` as symplectic rows."""
        self._require_fitted()
        n = self.code_.n
        X = check_syndromes(X, self.code_.h_std.m)
        y = check_errors(y, n)
        std = CheckArrays.of(self.code_.h_std)
        true_codes = _symplectic_to_codes(y, n)
        if not (std.syndrome_of_codes(true_codes) == X).all():
            raise ValueError("y is inconsistent with the given syndromes")
        corrections, converged, _, _ = self.pipeline_.decode_batch(X)
        consistent = (std.syndrome_of_codes(corrections) == X).all(axis=1)
        residual = _MUL4[true_codes, corrections]
        fail = _batch_logical_failures(residual,
                                       _logical_code_table(self.code_))
        ok = consistent & ~fail
        return float(ok.mean())


class MwpmDecoder(_ToricDecoderBase):
    """Standalone exact minimum-weight perfect matching decoder, with edge
    weights from the depolarizing channel prior.

    Parameters
    ----------
    d : lattice size of the toric code.
    epsilon : physical error rate assumed for the edge weights.
    """

    def __init__(self, d=4, epsilon=0.05):
        self.d = d
        self.epsilon = epsilon

    def _build_pipeline(self):
        return DecoderPipeline(self.code_, self.epsilon, "mwpm")


class BeliefMatchingDecoder(_ToricDecoderBase):
    """Two-stage decoder: quaternary BP first, exact matching weighted by the
    BP posteriors when BP fails to converge.

    Parameters
    ----------
    d : lattice size.
    epsilon : physical error rate (sets the BP prior and graph weights).
    variant : one of the pipeline variants ("bp+match", "rnbp+match", ...).
    weights : WeightSet or path to a weight file, for weighted variants.
    max_iterations : BP schedule length; defaults to 2 d (or the weight
        set's iteration count when weights are given).
    """

    def __init__(self, d=4, epsilon=0.05, variant="bp+match", weights=None,
                 max_iterations=None):
        self.d = d
        self.epsilon = epsilon
        self.variant = variant
        self.weights = weights
        self.max_iterations = max_iterations

    def _resolve_weights(self):
        if isinstance(self.weights, (str, bytes)):
            return load_weights(self.weights)
        return self.weights

    def _build_pipeline(self):
        return DecoderPipeline(self.code_, self.epsilon, self.variant,
                               weights=self._resolve_weights(),
                               max_iterations=self.max_iterations)


class NeuralBeliefMatchingDecoder(_ToricDecoderBase):
    """Two-stage decoder whose BP message weights are trained in ``fit``.

    With the default convolutional weight sharing the parameter count is
    independent of d, so a set fitted here can be rebound to larger lattices
    via :func:`beliefmatch.weights.transfer`.

    Parameters mirror :class:`~beliefmatch.training.TrainConfig`; `X` and `y`
    of ``fit`` are ignored (errors are sampled from the depolarizing channel
    on the fly, which is the supervision this self-calibrating task needs).
    """

    def __init__(self, d=4, epsilon=0.05, weight_kind="conv",
                 matrix="overcomplete", iterations=8, epsilon_train=0.1,
                 steps=2000, batch_size=64, learning_rate=0.01,
                 grad_clip=10.0, seed=0, loss_variant="syndrome",
                 syndrome_weight=1.0, second_stage=True):
        self.d = d
        self.epsilon = epsilon
        self.weight_kind = weight_kind
        self.matrix = matrix
        self.iterations = iterations
        self.epsilon_train = epsilon_train
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.grad_clip = grad_clip
        self.seed = seed
        self.loss_variant = loss_variant
        self.syndrome_weight = syndrome_weight
        self.second_stage = second_stage

    def fit(self, X=None, y=None):
        self.code_ = build_toric(self.d)
        cfg = TrainConfig(
            batch_size=self.batch_size, steps=self.steps,
            learning_rate=self.learning_rate, epsilon_train=self.epsilon_train,
            grad_clip=self.grad_clip, seed=self.seed, kind=self.weight_kind,
            iterations=self.iterations, loss_variant=self.loss_variant,
            syndrome_weight=self.syndrome_weight)
        self.weights_, self.loss_report_ = train(self.code_, self.matrix, cfg)
        self.pipeline_ = self._build_pipeline()
        self.n_features_in_ = self.code_.h_std.m
        return self

    def _build_pipeline(self):
        base = {("standard", "dense"): "nbp",
                ("overcomplete", "dense"): "rnbp",
                ("overcomplete", "conv"): "conv-rnbp"}.get(
                    (self.matrix, self.weight_kind))
        if base is None:
            raise ValueError("convolutional weights need the overcomplete "
                             "matrix; use weight_kind='dense' with 'standard'")
        variant = base + ("+match" if self.second_stage else "")
        return DecoderPipeline(self.code_, self.epsilon, variant,
                               weights=self.weights_)
