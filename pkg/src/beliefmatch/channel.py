"""Depolarizing noise: the channel prior used by belief propagation and the
counter-based error sampler used by the Monte Carlo harness.

Seeding is counter-based: shot i of a run draws from a stream derived from
(master seed, shot index) alone, so results are identical whether shots are
executed serially or spread over a worker pool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pauli import PauliVector


@dataclass(frozen=True)
class DepolarizingChannel:
    """I.i.d. depolarizing noise: each qubit is hit by X, Y or Z with
    probability epsilon/3 each."""

    epsilon: float

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in [0, 1), got {self.epsilon}")

    def prior(self) -> np.ndarray:
        """Per-qubit error distribution over (I, X, Y, Z)."""
        e = self.epsilon
        return np.array([1.0 - e, e / 3.0, e / 3.0, e / 3.0])


@dataclass(frozen=True)
class ShotSeed:
    """Deterministic per-shot stream id: (master seed, shot index)."""

    master: int
    index: int

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence([self.master & _U64, self.index & _U64]))


_U64 = (1 << 64) - 1


def sample_error_codes(ch: DepolarizingChannel, n: int,
                       seed: ShotSeed) -> np.ndarray:
    """Sample per-qubit Pauli codes (I=0, X=1, Y=2, Z=3) from the channel."""
    rng = seed.generator()
    hit = rng.random(n) < ch.epsilon
    codes = np.zeros(n, dtype=np.uint8)
    k = int(np.count_nonzero(hit))
    if k:
        codes[hit] = rng.integers(1, 4, size=k, dtype=np.uint8)
    return codes


def sample_error(ch: DepolarizingChannel, n: int, seed: ShotSeed) -> PauliVector:
    """Sample an n-qubit error from the channel, deterministically per seed."""
    return PauliVector.from_codes(sample_error_codes(ch, n, seed))
