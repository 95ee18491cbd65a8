"""Monte Carlo evaluation: logical-error-rate estimation with a
negative-binomial stopping rule and exact tail-inversion confidence
intervals, second-stage invocation accounting, and sweep orchestration.

Shots are processed in fixed-size batches indexed from 0; batch b covers
shot indices [b*batch_size, (b+1)*batch_size) and every shot's error is
drawn from a counter-based stream keyed by (master seed, shot index).  The
stop rule (target failure count or shot cap) is evaluated on the aggregate
of complete batches in index order, so totals -- and therefore the emitted
CSV -- are byte-identical for any worker count.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import beta as beta_dist

from ._engine import CheckArrays
from .channel import DepolarizingChannel, ShotSeed, sample_error_codes
from .decoders import VARIANTS, DecoderPipeline, split_variant
from .pauli import ANTICOMMUTES, PauliVector, syndrome
from .toric import ToricCode, build_toric
from .weights import WeightSet, load_weights

# Pauli code of a product: XOR of symplectic pairs, I=0 X=1 Y=2 Z=3.
_MUL4 = np.array(
    [[0, 1, 2, 3], [1, 0, 3, 2], [2, 3, 0, 1], [3, 2, 1, 0]],
    dtype=np.uint8,
)


class InvariantViolation(RuntimeError):
    """A decoder contract was broken during a run (e.g. an accepted
    correction with the wrong syndrome)."""


def is_logical_failure(e: PauliVector, e_hat: PauliVector,
                       code: ToricCode) -> bool:
    """True iff the residual error acts as a nontrivial logical operator.

    Requires the decoder contract: `e_hat` must reproduce the standard
    syndrome of `e` (otherwise the residual is not in the normalizer and the
    question is ill-posed).
    """
    if not np.array_equal(syndrome(code.h_std, e), syndrome(code.h_std, e_hat)):
        raise InvariantViolation("correction does not satisfy the syndrome")
    residual = e.mul(e_hat)
    return any(
        bool((ANTICOMMUTES[logical.codes(), residual.codes()].sum()) % 2)
        for logical in code.logicals
    )


def _logical_code_table(code: ToricCode) -> np.ndarray:
    return np.stack([logical.codes() for logical in code.logicals])


def _batch_logical_failures(residual_codes: np.ndarray,
                            logical_codes: np.ndarray) -> np.ndarray:
    """(B, n) residual Pauli codes -> (B,) failure flags."""
    fail = np.zeros(residual_codes.shape[0], dtype=bool)
    for logical in logical_codes:
        parity = ANTICOMMUTES[logical[None, :], residual_codes].sum(axis=1) & 1
        fail |= parity.astype(bool)
    return fail


def negbin_ci(failures: int, shots: int, level: float = 0.975):
    """Equal-tailed confidence interval for the per-shot failure probability
    under stop-at-fixed-failure-count sampling, by exact tail inversion of
    the negative-binomial likelihood (regularized-beta form).  With zero
    failures the one-sided binomial inversion gives (0, 1 - alpha**(1/N))."""
    if failures < 0 or shots < failures:
        raise ValueError("need 0 <= failures <= shots")
    alpha = 1.0 - level
    if shots == 0:
        return 0.0, 1.0
    if failures == 0:
        return 0.0, 1.0 - alpha ** (1.0 / shots)
    low = float(beta_dist.ppf(alpha / 2.0, failures, shots - failures + 1))
    if failures == shots:
        high = 1.0
    else:
        high = float(beta_dist.ppf(1.0 - alpha / 2.0, failures,
                                   shots - failures))
    return low, high


@dataclass(frozen=True)
class SimConfig:
    """One Monte Carlo point.  `batch_size` is part of the statistical
    contract (the stop rule acts at batch boundaries); `workers` is not."""

    d: int
    epsilon: float
    variant: str
    target_failures: int = 100
    max_shots: int = 10_000_000
    seed: int = 0
    weights: WeightSet | None = None
    weights_file: str = ""
    max_iterations: int | None = None
    batch_size: int = 1000

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.target_failures < 1 or self.max_shots < self.target_failures:
            raise ValueError("need max_shots >= target_failures >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")


@dataclass
class RunStats:
    d: int
    epsilon: float
    variant: str
    shots: int
    failures: int
    ler: float
    ci_low: float
    ci_high: float
    stage2_calls: int
    stage2_fraction: float
    mean_bp_iters: float
    max_bp_iters: int
    seed: int
    weights_file: str = ""
    wall_time: float = 0.0

    CSV_FIELDS = ("d", "epsilon", "variant", "weights_file", "shots",
                  "failures", "ler", "ci_low", "ci_high", "stage2_calls",
                  "stage2_fraction", "mean_bp_iters", "max_bp_iters", "seed")

    def csv_row(self) -> dict:
        # wall_time is deliberately not part of the schema (reproducibility)
        return {k: getattr(self, k) for k in self.CSV_FIELDS}


class _PointState:
    """Per-process decode state for one simulation point."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.code = build_toric(cfg.d)
        self.channel = DepolarizingChannel(cfg.epsilon)
        self.pipeline = DecoderPipeline(
            self.code, cfg.epsilon, cfg.variant, weights=cfg.weights,
            max_iterations=cfg.max_iterations)
        self.std_arrays = CheckArrays.of(self.code.h_std)
        self.logical_codes = _logical_code_table(self.code)
        _, self.has_second = split_variant(cfg.variant)

    def run_batch(self, batch_index: int) -> tuple:
        cfg = self.cfg
        start = batch_index * cfg.batch_size
        count = min(cfg.batch_size, cfg.max_shots - start)
        n = self.code.n
        codes = np.empty((count, n), dtype=np.uint8)
        for i in range(count):
            codes[i] = sample_error_codes(self.channel, n,
                                          ShotSeed(cfg.seed, start + i))
        s_std = self.std_arrays.syndrome_of_codes(codes)
        corrections, converged, iters, stage2 = \
            self.pipeline.decode_batch(s_std)

        # Which corrections are contractually syndrome-consistent: everything
        # except the hard decision of a non-converged bare-BP shot.
        accepted = converged | self.has_second
        synd_hat = self.std_arrays.syndrome_of_codes(corrections)
        consistent = (synd_hat == s_std).all(axis=1)
        violations = int(np.count_nonzero(accepted & ~consistent))

        residual = _MUL4[codes, corrections]
        logical_fail = _batch_logical_failures(residual, self.logical_codes)
        failures = np.where(accepted, logical_fail, True)

        return (count, int(failures.sum()), int(stage2.sum()),
                int(iters.sum()), int(iters.max(initial=0)), violations)


_WORKER_STATE: _PointState | None = None


def _worker_init(cfg: SimConfig):
    global _WORKER_STATE
    _WORKER_STATE = _PointState(cfg)


def _worker_batch(batch_index: int) -> tuple:
    return _WORKER_STATE.run_batch(batch_index)


def run_point(cfg: SimConfig, workers: int = 1) -> RunStats:
    """Estimate the logical error rate of one (d, epsilon, variant) point,
    shooting until the target failure count or the shot cap is reached.

    Deterministic for a given config, independent of `workers`.
    """
    t0 = time.perf_counter()
    n_batches = -(-cfg.max_shots // cfg.batch_size)
    shots = failures = stage2 = iter_sum = 0
    iter_max = violations = 0

    def consume(result) -> bool:
        nonlocal shots, failures, stage2, iter_sum, iter_max, violations
        count, f, s2, isum, imax, viol = result
        shots += count
        failures += f
        stage2 += s2
        iter_sum += isum
        iter_max = max(iter_max, imax)
        violations += viol
        return failures >= cfg.target_failures or shots >= cfg.max_shots

    if workers <= 1:
        state = _PointState(cfg)
        for b in range(n_batches):
            if consume(state.run_batch(b)):
                break
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init,
                                 initargs=(cfg,)) as pool:
            window = 2 * workers
            futures = {b: pool.submit(_worker_batch, b)
                       for b in range(min(window, n_batches))}
            next_submit = len(futures)
            for b in range(n_batches):
                done = consume(futures.pop(b).result())
                if done:
                    for fut in futures.values():
                        fut.cancel()
                    break
                if next_submit < n_batches:
                    futures[next_submit] = pool.submit(_worker_batch,
                                                       next_submit)
                    next_submit += 1

    if violations:
        raise InvariantViolation(
            f"{violations} accepted correction(s) violated the syndrome")

    ci_low, ci_high = negbin_ci(failures, shots)
    stage2_calls = shots if cfg.variant == "mwpm" else stage2
    return RunStats(
        d=cfg.d, epsilon=cfg.epsilon, variant=cfg.variant,
        shots=shots, failures=failures,
        ler=failures / shots if shots else 0.0,
        ci_low=ci_low, ci_high=ci_high,
        stage2_calls=stage2_calls,
        stage2_fraction=stage2_calls / shots if shots else 0.0,
        mean_bp_iters=iter_sum / shots if shots else 0.0,
        max_bp_iters=iter_max,
        seed=cfg.seed,
        weights_file=cfg.weights_file,
        wall_time=time.perf_counter() - t0,
    )


@dataclass(frozen=True)
class SweepConfig:
    """Grid of simulation points: the cartesian product of distances,
    physical error rates and decoder variants."""

    ds: tuple
    epsilons: tuple
    variants: tuple
    target_failures: int = 100
    max_shots: int = 10_000_000
    seed: int = 0
    weights_file: str = ""
    max_iterations: int | None = None
    batch_size: int = 1000

    def points(self):
        ws = load_weights(self.weights_file) if self.weights_file else None
        for d in self.ds:
            for eps in self.epsilons:
                for variant in self.variants:
                    needs_w = variant not in ("mwpm", "bp", "bp+match")
                    yield SimConfig(
                        d=int(d), epsilon=float(eps), variant=variant,
                        target_failures=self.target_failures,
                        max_shots=self.max_shots, seed=self.seed,
                        weights=ws if needs_w else None,
                        weights_file=self.weights_file if needs_w else "",
                        max_iterations=self.max_iterations,
                        batch_size=self.batch_size,
                    )


def _row_key(row: dict) -> tuple:
    return (str(row["d"]), str(row["epsilon"]), str(row["variant"]),
            str(row["seed"]))


def rows_to_csv(rows: list[dict]) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=RunStats.CSV_FIELDS,
                            lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return out.getvalue()


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def sweep(cfg: SweepConfig, out_path, workers: int = 1,
          resume: bool = True) -> list[dict]:
    """Run every grid point and write one CSV row each; existing rows of a
    previous partial run are kept (resume by grid point).  The file content
    is a pure function of the sweep config, whatever the worker count.

    A grid point that raises is flagged with zero shots and NaN estimates and
    the sweep continues.
    """
    import sys
    from pathlib import Path

    out_path = Path(out_path)
    existing = {}
    if resume and out_path.exists():
        for row in read_csv_rows(out_path):
            existing[_row_key(row)] = row

    rows = []
    for point in cfg.points():
        probe = {"d": point.d, "epsilon": point.epsilon,
                 "variant": point.variant, "seed": point.seed}
        key = _row_key(probe)
        if key in existing:
            rows.append(existing[key])
        else:
            try:
                stats = run_point(point, workers=workers)
                row = stats.csv_row()
            except Exception as exc:  # flag the point, keep sweeping
                print(f"sweep point {key} failed: {exc}", file=sys.stderr)
                row = dict(probe, weights_file=point.weights_file, shots=0,
                           failures=0, ler="nan", ci_low="nan", ci_high="nan",
                           stage2_calls=0, stage2_fraction="nan",
                           mean_bp_iters="nan", max_bp_iters=0)
            rows.append({k: str(v) for k, v in row.items()})
        out_path.write_text(rows_to_csv(rows))  # checkpoint per grid point
    return rows


def report(csv_paths, out_dir) -> dict:
    """Merge sweep CSVs into one plot-data file per figure analog:
    LER vs epsilon and second-stage call fraction vs epsilon."""
    from pathlib import Path

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for path in csv_paths:
        rows.extend(read_csv_rows(path))
    rows.sort(key=lambda r: (r["variant"], int(r["d"]), float(r["epsilon"])))

    def write(name, fields):
        with open(out_dir / name, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fields, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: row[k] for k in fields})

    write("ler_vs_epsilon.csv",
          ("variant", "d", "epsilon", "ler", "ci_low", "ci_high"))
    write("stage2_vs_epsilon.csv",
          ("variant", "d", "epsilon", "stage2_fraction"))
    return {"rows": len(rows),
            "files": ["ler_vs_epsilon.csv", "stage2_vs_epsilon.csv"]}
