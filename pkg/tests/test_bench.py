import numpy as np
import pytest

from qtail.bench import (
    BenchLock,
    BenchProtocol,
    fit_scaling,
    run_bench,
    scaling_sweep,
    zero_batch,
)
from qtail.errors import ConfigError, QtailError


def tiny_protocol(**kw):
    defaults = dict(
        head="cdl",
        num_labels=4,
        warmup_steps=2,
        measured_steps=3,
        batch_size=4,
        feature_dim=32,
        depth=2,
        payload_shape=(8, 8, 1),
    )
    defaults.update(kw)
    return BenchProtocol(**defaults)


class TestZeroBatch:
    def test_shapes(self):
        b = zero_batch(32, (8, 8, 1), 8)
        assert b.payloads.shape == (32, 8, 8, 1)
        assert b.labels.shape == (32, 8)
        assert len(b.sample_ids) == 32

    def test_all_zero(self):
        b = zero_batch(32, (4, 4, 1), 8)
        assert b.payloads.sum() == 0
        assert b.labels.sum() == 0

    def test_minimal_unit(self):
        b = zero_batch(1, (2, 2, 1), 1)
        assert b.payloads.shape == (1, 2, 2, 1)

    def test_bad_dims(self):
        with pytest.raises(ConfigError):
            zero_batch(0, (2, 2, 1), 1)


class TestRunBench:
    def test_sample_counts(self, tmp_path):
        res = run_bench(tiny_protocol(measured_steps=5), lock_path=tmp_path / "l")
        assert len(res.samples) == 5
        assert len(res.warmup_samples) == 2

    def test_mean_std_recomputable(self, tmp_path):
        res = run_bench(tiny_protocol(), lock_path=tmp_path / "l")
        arr = np.array(res.samples)
        assert res.mean == float(arr.mean())
        assert res.std == float(arr.std(ddof=1))

    def test_work_deterministic(self, tmp_path):
        a = run_bench(tiny_protocol(head="dqc"), lock_path=tmp_path / "l1")
        b = run_bench(tiny_protocol(head="dqc"), lock_path=tmp_path / "l2")
        assert a.final_loss == b.final_loss  # bit-identical work, timing aside

    def test_fingerprint_recorded(self, tmp_path):
        res = run_bench(tiny_protocol(), lock_path=tmp_path / "l", tag="unit")
        for key in ("host", "cpu_count", "numba_threads", "timestamp", "tag"):
            assert key in res.fingerprint
        assert res.fingerprint["tag"] == "unit"

    def test_validation(self):
        with pytest.raises(ConfigError):
            BenchProtocol(warmup_steps=0)
        with pytest.raises(ConfigError):
            BenchProtocol(measured_steps=1)
        with pytest.raises(ConfigError):
            BenchProtocol(head="dqc", num_labels=30)


class TestBenchLock:
    def test_exclusive(self, tmp_path):
        path = tmp_path / "lock"
        with BenchLock(path):
            with pytest.raises(QtailError, match="lock"):
                with BenchLock(path):
                    pass
        with BenchLock(path):
            pass  # released after exit

    def test_partial_via_run_bench(self, tmp_path):
        path = tmp_path / "lock"
        with BenchLock(path):
            with pytest.raises(QtailError):
                run_bench(tiny_protocol(), lock_path=path)


class TestScalingSweep:
    def test_rows_and_state_bytes(self, tmp_path):
        rows = scaling_sweep([2, 4], tiny_protocol(), lock_path=tmp_path / "l")
        assert len(rows) == 4  # two heads x two sizes
        by_key = {(r["head"], r["n"]): r for r in rows}
        assert by_key[("dqc", 4)]["state_bytes"] == 2**4 * 16
        assert by_key[("cdl", 2)]["state_bytes"] == 2**2 * 16

    def test_state_bytes_19(self):
        from qtail.qsim import state_bytes

        assert state_bytes(19) == 8388608

    def test_requires_ascending(self, tmp_path):
        with pytest.raises(ConfigError):
            scaling_sweep([4, 2], tiny_protocol(), lock_path=tmp_path / "l")


class TestFitScaling:
    def synth_rows(self, head, fn):
        return [
            {"n": n, "head": head, "mean": fn(n), "std": 0.0,
             "state_bytes": 2**n * 16}
            for n in range(2, 13)
        ]

    def test_identifies_linear(self):
        rows = self.synth_rows("cdl", lambda n: 0.05 + 0.001 * n)
        assert fit_scaling(rows)["cdl"]["preferred"] == "linear"

    def test_identifies_exponential(self):
        rows = self.synth_rows("dqc", lambda n: 0.01 + 2e-5 * 2**n)
        fit = fit_scaling(rows)["dqc"]
        assert fit["preferred"] == "exp"
        assert fit["exp_rss"] < fit["linear_rss"]

    def test_noisy_exponential_still_wins(self):
        rng = np.random.default_rng(0)
        rows = self.synth_rows(
            "dqc", lambda n: (0.01 + 2e-5 * 2**n) * (1 + 0.05 * rng.normal())
        )
        assert fit_scaling(rows)["dqc"]["preferred"] == "exp"
