import numpy as np
import pytest

from beliefmatch.channel import DepolarizingChannel, ShotSeed, sample_error
from beliefmatch.pauli import PauliVector, pauli_mul, syndrome
from beliefmatch.simulate import (InvariantViolation, SimConfig, SweepConfig,
                                  is_logical_failure, negbin_ci, report,
                                  run_point, sweep)


class TestLogicalFailure:
    def test_exact_correction_succeeds(self, code4):
        e = sample_error(DepolarizingChannel(0.1), code4.n, ShotSeed(1, 1))
        assert not is_logical_failure(e, e, code4)

    def test_stabilizer_degenerate_correction_succeeds(self, code4):
        e = sample_error(DepolarizingChannel(0.1), code4.n, ShotSeed(1, 2))
        for j in (0, 7, 20):
            e_hat = pauli_mul(e, code4.h_std.row_vector(j))
            assert not is_logical_failure(e, e_hat, code4)

    def test_logical_residual_fails(self, code4):
        e = sample_error(DepolarizingChannel(0.1), code4.n, ShotSeed(1, 3))
        for logical in code4.logicals:
            assert is_logical_failure(e, pauli_mul(e, logical), code4)

    def test_syndrome_mismatch_raises(self, code4):
        e = PauliVector.single(code4.n, 0, 3)
        with pytest.raises(InvariantViolation):
            is_logical_failure(e, PauliVector.identity(code4.n), code4)


class TestNegbinCi:
    def test_zero_failures(self):
        low, high = negbin_ci(0, 10**5)
        assert low == 0.0
        # 1 - 0.025**(1/N) evaluated independently
        assert high == pytest.approx(3.688811415791804e-05, rel=1e-9)

    def test_brackets_point_estimate(self):
        low, high = negbin_ci(100, 10**5)
        assert low < 1e-3 < high
        assert low == pytest.approx(8.2e-4, rel=0.05)
        assert high == pytest.approx(1.2e-3, rel=0.05)

    def test_all_failures(self):
        low, high = negbin_ci(10, 10)
        assert high == 1.0 and 0 < low < 1

    def test_validation(self):
        with pytest.raises(ValueError):
            negbin_ci(5, 3)

    def test_bracket_property(self):
        from hypothesis import given, settings
        from hypothesis import strategies as st

        @settings(max_examples=200, deadline=None)
        @given(st.integers(0, 400), st.integers(0, 5000))
        def check(failures, extra):
            shots = failures + extra
            if shots == 0:
                return
            low, high = negbin_ci(failures, shots)
            assert 0.0 <= low <= failures / shots <= high <= 1.0

        check()

    @pytest.mark.parametrize("p", [0.01, 0.001])
    def test_coverage(self, p):
        rng = np.random.default_rng(17)
        n_l, reps = 100, 1000
        # trials until the n_l-th failure: n_l + negative binomial draws
        trials = n_l + rng.negative_binomial(n_l, p, size=reps)
        hit = 0
        for t in trials:
            low, high = negbin_ci(n_l, int(t))
            hit += low <= p <= high
        assert 0.96 <= hit / reps <= 0.99


class TestRunPoint:
    def test_zero_epsilon_no_failures(self):
        stats = run_point(SimConfig(d=4, epsilon=0.0, variant="mwpm",
                                    target_failures=1, max_shots=200,
                                    batch_size=50))
        assert stats.failures == 0 and stats.shots == 200
        assert stats.ler == 0.0 and stats.ci_low == 0.0 and stats.ci_high > 0

    def test_mwpm_stage2_fraction_is_one(self):
        stats = run_point(SimConfig(d=4, epsilon=0.05, variant="mwpm",
                                    target_failures=300, max_shots=300,
                                    batch_size=100))
        assert stats.stage2_fraction == 1.0
        assert stats.mean_bp_iters == 0.0

    def test_stop_rule_batch_granularity(self):
        stats = run_point(SimConfig(d=4, epsilon=0.15, variant="mwpm",
                                    target_failures=5, max_shots=10_000,
                                    batch_size=100))
        assert stats.failures >= 5
        assert stats.shots % 100 == 0

    def test_bare_bp_counts_nonconverged_as_failures(self):
        cfg = SimConfig(d=4, epsilon=0.1, variant="bp", target_failures=2000,
                        max_shots=2000, batch_size=500)
        stats = run_point(cfg)
        # stage-2 "invocations" report the non-convergence fraction exactly
        assert stats.stage2_calls > 0
        assert stats.failures >= stats.stage2_calls

    def test_deterministic_across_workers(self):
        cfg = SimConfig(d=4, epsilon=0.08, variant="bp+match",
                        target_failures=60, max_shots=4000, batch_size=250)
        serial = run_point(cfg, workers=1)
        parallel = run_point(cfg, workers=2)
        assert serial.csv_row() == parallel.csv_row()

    def test_weighted_variant_requires_weights(self):
        with pytest.raises(ValueError):
            run_point(SimConfig(d=4, epsilon=0.05, variant="conv-rnbp+match",
                                target_failures=1, max_shots=10))

    def test_mwpm_ler_monotone_in_epsilon(self):
        def ler_at(eps):
            return run_point(SimConfig(d=4, epsilon=eps, variant="mwpm",
                                       target_failures=40, max_shots=50_000,
                                       seed=5, batch_size=1000))

        low, high = ler_at(0.03), ler_at(0.10)
        assert low.ler <= high.ler
        assert low.ci_high < high.ci_low  # clearly separated at these rates


class TestSweep:
    def test_rows_and_resume(self, tmp_path):
        out = tmp_path / "sweep.csv"
        cfg = SweepConfig(ds=(4,), epsilons=(0.05, 0.1), variants=("mwpm",),
                          target_failures=20, max_shots=500, batch_size=100)
        rows = sweep(cfg, out, workers=1)
        assert len(rows) == 2
        text_first = out.read_text()
        # resumed run recomputes nothing and leaves the file byte-identical
        rows2 = sweep(cfg, out, workers=1)
        assert out.read_text() == text_first
        assert rows2 == rows

    def test_rerun_identical_and_worker_independent(self, tmp_path):
        cfg = SweepConfig(ds=(4,), epsilons=(0.06,), variants=("bp+match",),
                          target_failures=15, max_shots=1500, batch_size=250)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        sweep(cfg, a, workers=1)
        sweep(cfg, b, workers=2)
        assert a.read_text() == b.read_text()

    def test_report_files(self, tmp_path):
        out = tmp_path / "sweep.csv"
        cfg = SweepConfig(ds=(4,), epsilons=(0.1,), variants=("mwpm", "bp"),
                          target_failures=10, max_shots=300, batch_size=100)
        sweep(cfg, out)
        info = report([out], tmp_path / "plots")
        assert info["rows"] == 2
        ler = (tmp_path / "plots" / "ler_vs_epsilon.csv").read_text()
        assert ler.splitlines()[0] == "variant,d,epsilon,ler,ci_low,ci_high"
        frac = (tmp_path / "plots" / "stage2_vs_epsilon.csv").read_text()
        assert len(frac.splitlines()) == 3
