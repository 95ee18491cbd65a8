"""Training of message weights by gradient descent through the unrolled
flooding schedule.

Loss variants (``TrainConfig.loss_variant``):

* ``syndrome`` (default): multi-iteration soft-syndrome penalty; rewards
  marginals that commit to *some* error pattern reproducing every check
  bit.  This is the objective that actually reduces the second-stage
  invocation rate: cross-entropy's optimum is the Bayes marginal, which
  splits mass between degenerate error patterns and leaves the hard
  decision syndrome-inconsistent exactly where plain BP already fails.
* ``multi_iteration`` / ``final_iteration``: cross-entropy between the
  (per-iteration / final) marginals and the sampled true error.
* ``ce+syndrome``: both, with the penalty scaled by ``syndrome_weight``.

Gradients come from a hand-rolled reverse-mode sweep through the unrolled
message graph and are verified against central finite differences in the
test suite.  Errors are sampled on the fly from the depolarizing channel;
weight updates use adaptive-moment gradient descent with bias correction
and a global gradient-norm clip.  Everything is deterministic given the
config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _engine
from ._engine import CheckArrays, clamp_prior
from .channel import DepolarizingChannel
from .toric import ToricCode, build_edge_classes, class_convention_hash
from .weights import WeightSet, bind_edges, matrix_of, weights_checksum

LOSS_VARIANTS = ("multi_iteration", "final_iteration", "syndrome",
                 "ce+syndrome")


class TrainingDiverged(RuntimeError):
    """Non-finite loss or gradient; carries the partial loss report."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    steps: int = 2000
    learning_rate: float = 0.01
    epsilon_train: float | Sequence[float] = 0.1
    optimizer: str = "adam"
    grad_clip: float = 10.0
    seed: int = 0
    loss_variant: str = "syndrome"
    syndrome_weight: float = 1.0
    kind: str = "conv"
    iterations: int = 8
    share_iterations: bool = False

    def __post_init__(self):
        if self.batch_size < 1 or self.steps < 0 or self.iterations < 1:
            raise ValueError("batch_size, steps, iterations must be positive")
        if self.learning_rate <= 0 or self.grad_clip <= 0:
            raise ValueError("learning_rate and grad_clip must be positive")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ValueError(f"unknown loss variant {self.loss_variant!r}")
        if self.optimizer != "adam":
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        self.epsilons()  # validates the training error rate(s)

    def epsilons(self) -> np.ndarray:
        e = self.epsilon_train
        arr = np.atleast_1d(np.asarray(e, dtype=np.float64))
        if ((arr <= 0) | (arr >= 1)).any():
            raise ValueError("epsilon_train values must be in (0, 1)")
        return arr


@dataclass
class LossReport:
    losses: list[float] = field(default_factory=list)
    final_checksum: str = ""
    config: dict = field(default_factory=dict)


def cross_entropy(marginals: Sequence[np.ndarray], true_codes: np.ndarray) -> float:
    """Loss of one sample: ``sum_t sum_i -log Q_i^(t)(e_i) / (T n)`` over the
    given per-iteration marginals.  Zero iff every marginal is a one-hot on
    the true Pauli."""
    true_codes = np.asarray(true_codes)
    T = len(marginals)
    n = true_codes.shape[0]
    total = 0.0
    idx = np.arange(n)
    for Q in marginals:
        total -= np.log(np.clip(Q[idx, true_codes], _engine.PROB_FLOOR, None)).sum()
    return float(total / (T * n))


def _loss_setup(variant: str, syndrome_weight: float, T: int):
    """-> (loss iteration indices, cross-entropy weight, syndrome weight)."""
    iters = (T - 1,) if variant == "final_iteration" else tuple(range(T))
    ce = 0.0 if variant == "syndrome" else 1.0
    if variant == "syndrome":
        synd = 1.0
    elif variant == "ce+syndrome":
        synd = syndrome_weight
    else:
        synd = 0.0
    return iters, ce, synd


def _loss_value(ar, logQs, trace, true_codes, iters, ce, synd):
    used = [logQs[t] for t in iters]
    total = 0.0
    if ce:
        total += ce * _engine.cross_entropy_loss(used, true_codes)
    if synd:
        total += synd * _engine.syndrome_loss(ar, used, trace["sign_row"])
    return total


def loss_and_gradient(H, syndromes: np.ndarray, prior: np.ndarray,
                      edge_weights: np.ndarray, true_codes: np.ndarray,
                      loss_variant: str = "multi_iteration",
                      syndrome_weight: float = 1.0):
    """Batched loss and per-edge weight gradient, shape (T, E)."""
    ar = CheckArrays.of(H)
    log_prior = np.log(clamp_prior(prior, H.n))
    T = edge_weights.shape[0]
    syndromes = np.atleast_2d(syndromes)
    true_codes = np.atleast_2d(true_codes)
    logQs, trace = _engine.bp_trace(ar, syndromes, log_prior, T, edge_weights)
    iters, ce, synd = _loss_setup(loss_variant, syndrome_weight, T)
    loss = _loss_value(ar, logQs, trace, true_codes, iters, ce, synd)
    grad = _engine.bp_backward_partial(ar, trace, true_codes,
                                       loss_iterations=iters,
                                       ce_weight=ce, synd_weight=synd)
    return loss, grad


def gradient(code: ToricCode, matrix: str, ws: WeightSet,
             syndromes: np.ndarray, true_codes: np.ndarray,
             prior: np.ndarray, loss_variant: str = "multi_iteration",
             syndrome_weight: float = 1.0):
    """Loss and gradient in the shape of the weight set: (T, E) for dense
    sets, (T, 32) for convolutional sets (class gradient = sum of its edges)."""
    H = matrix_of(code, matrix)
    edge_w = bind_edges(ws, code, matrix)
    loss, g_edge = loss_and_gradient(H, syndromes, prior, edge_w, true_codes,
                                     loss_variant, syndrome_weight)
    if ws.kind == "dense":
        return loss, g_edge
    per_edge = build_edge_classes(code).per_edge[: g_edge.shape[1]]
    g = np.zeros((g_edge.shape[0], 32))
    for t in range(g_edge.shape[0]):
        np.add.at(g[t], per_edge, g_edge[t])
    return loss, g


class _Adam:
    """Adaptive-moment gradient descent with bias correction."""

    def __init__(self, shape, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _clip_norm(grad: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.sqrt((grad * grad).sum()))
    if norm > max_norm:
        grad = grad * (max_norm / norm)
    return grad


def sample_training_batch(rng: np.random.Generator, epsilons: np.ndarray,
                          batch: int, n: int) -> np.ndarray:
    """Batch of depolarizing error codes; with several epsilons each sample
    draws its channel uniformly from the list."""
    if epsilons.size == 1:
        eps_col = np.full((batch, 1), epsilons[0])
    else:
        eps_col = rng.choice(epsilons, size=batch)[:, None]
    hit = rng.random((batch, n)) < eps_col
    paulis = rng.integers(1, 4, size=(batch, n), dtype=np.uint8)
    return np.where(hit, paulis, 0).astype(np.uint8)


def train(code: ToricCode, matrix: str, cfg: TrainConfig):
    """Train a weight set on errors sampled on the fly.

    Returns (WeightSet, LossReport); raises TrainingDiverged on non-finite
    loss or gradient (clamping is supposed to make that impossible, so it
    signals a defect rather than bad luck).
    """
    H = matrix_of(code, matrix)
    ar = CheckArrays.of(H)
    epsilons = cfg.epsilons()
    prior = DepolarizingChannel(float(epsilons.mean())).prior()
    log_prior = np.log(clamp_prior(prior, code.n))

    width = 32 if cfg.kind == "conv" else ar.n_edges
    theta = np.ones((cfg.iterations, width))
    per_edge = None
    if cfg.kind == "conv":
        per_edge = build_edge_classes(code).per_edge[: ar.n_edges]

    report = LossReport(config=_config_echo(code, matrix, cfg))
    opt = _Adam(theta.shape, cfg.learning_rate)
    loss_its, ce_w, synd_w = _loss_setup(cfg.loss_variant,
                                         cfg.syndrome_weight, cfg.iterations)

    for step in range(cfg.steps):
        rng = np.random.default_rng(
            np.random.SeedSequence([cfg.seed & _U64, step]))
        codes = sample_training_batch(rng, epsilons, cfg.batch_size, code.n)
        syndromes = ar.syndrome_of_codes(codes)

        edge_w = theta if cfg.kind == "dense" else theta[:, per_edge]
        logQs, trace = _engine.bp_trace(ar, syndromes, log_prior,
                                        cfg.iterations, edge_w)
        loss = _loss_value(ar, logQs, trace, codes, loss_its, ce_w, synd_w)
        g_edge = _engine.bp_backward_partial(ar, trace, codes,
                                             loss_iterations=loss_its,
                                             ce_weight=ce_w,
                                             synd_weight=synd_w)
        if cfg.kind == "conv":
            grad = np.zeros_like(theta)
            for t in range(cfg.iterations):
                np.add.at(grad[t], per_edge, g_edge[t])
        else:
            grad = g_edge

        if not (np.isfinite(loss) and np.isfinite(grad).all()):
            report.losses.append(float(loss))
            raise TrainingDiverged(
                f"non-finite loss/gradient at step {step}", report)

        if cfg.share_iterations:
            grad = np.broadcast_to(grad.mean(axis=0, keepdims=True),
                                   grad.shape).copy()
        grad = _clip_norm(grad, cfg.grad_clip)
        theta = opt.step(theta, grad)
        if cfg.share_iterations:
            theta = np.broadcast_to(theta.mean(axis=0, keepdims=True),
                                    theta.shape).copy()
        report.losses.append(float(loss))

    ws = WeightSet(
        kind=cfg.kind,
        iterations=cfg.iterations,
        values=theta,
        distance=code.d,
        matrix=matrix,
        epsilon_train=float(epsilons.mean()),
        convention_hash=class_convention_hash() if cfg.kind == "conv" else None,
    )
    report.final_checksum = weights_checksum(ws)
    return ws, report


def _config_echo(code: ToricCode, matrix: str, cfg: TrainConfig) -> dict:
    echo = {"d": code.d, "matrix": matrix}
    for name in ("batch_size", "steps", "learning_rate", "epsilon_train",
                 "optimizer", "grad_clip", "seed", "loss_variant",
                 "syndrome_weight", "kind", "iterations", "share_iterations"):
        value = getattr(cfg, name)
        echo[name] = list(value) if isinstance(value, (tuple, list)) else value
    return echo


_U64 = (1 << 64) - 1
