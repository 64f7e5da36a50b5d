"""Analytic cost formulas, the element meter, and report plumbing."""
import numpy as np
import pytest

from gvlm import engine, perf
from gvlm.engine.tensor import Tensor
from gvlm.errors import ContractError, InputError


class TestAnalyticFormulas:
    def test_paper_scale_logits_tensor(self):
        got = perf.logits_bytes(32, 512, 50000, 4)
        assert got == 3_276_800_000
        # within 2% of the quoted ~3.32 GB
        assert abs(got - 3.32e9) / 3.32e9 < 0.02

    def test_logits_bytes_trivial_and_small(self):
        assert perf.logits_bytes(1, 1, 1, 1) == 1
        assert perf.logits_bytes(2, 3, 5, 8) == 240

    def test_grouped_activation_bytes(self):
        got = perf.grouped_activation_bytes(32, 512, 224, 224, 4)
        assert got == 29_360_128
        assert perf.logits_bytes(32, 512, 50000, 4) / got > 100

    def test_degenerate_grouping_is_dense_plus_one(self):
        v = 5000
        assert perf.grouped_activation_bytes(2, 3, v, 1, 4) == 2 * 3 * (v + 1) * 4

    def test_head_flops(self):
        assert perf.head_flops_dense(128, 50000) == 12_850_000
        assert perf.head_flops_grouped(128, 224, 224) == 115_136
        # d=1 sanity against the symbolic expansion
        assert perf.head_flops_dense(1, 77) == 3 * 77
        assert perf.head_flops_grouped(1, 10, 5) == 2 * 5 + 2 * 10 + 2 * 10

    def test_formulas_are_exact_big_integers(self):
        got = perf.logits_bytes(10**6, 10**6, 10**6, 8)
        assert got == 8 * 10**18  # exceeds int64; plain ints keep it exact

    def test_validation(self):
        with pytest.raises(InputError):
            perf.logits_bytes(0, 1, 1, 1)
        with pytest.raises(InputError):
            perf.grouped_activation_bytes(1, 1, 0, 1, 4)

    def test_property_against_naive_recompute(self, rng):
        for _ in range(200):
            b, s, v, d, S, G, by = (int(rng.integers(1, 100)) for _ in range(7))
            assert perf.logits_bytes(b, s, v, by) == b * s * v * by
            assert perf.grouped_activation_bytes(b, s, S, G, by) == b * s * (S + G) * by
            assert perf.head_flops_dense(d, v) == 2 * d * v + v
            assert perf.head_flops_grouped(d, S, G) == 2 * d * G + 2 * d * S + 2 * S


class TestElementMeter:
    def test_counts_single_tensor(self):
        with perf.ElementMeter() as m:
            t = engine.zeros((4, 4))
        assert m.peak == 16
        del t

    def test_peak_tracks_frees(self):
        with perf.ElementMeter() as m:
            a = engine.zeros(100)
            del a
            b = engine.zeros(60)
            del b
        assert m.peak == 100

    def test_views_are_free(self):
        with perf.ElementMeter() as m:
            t = engine.zeros((8, 8))
            engine.reshape(t, (64,))  # view, no new buffer
        assert m.peak == 64

    def test_nesting_rejected(self):
        with perf.ElementMeter():
            with pytest.raises(ContractError):
                with perf.ElementMeter():
                    pass

    def test_meter_off_is_bit_identical(self, rng):
        def run():
            x = Tensor(rng_local.standard_normal((6, 6)), requires_grad=True)
            loss = engine.cross_entropy(engine.matmul(x, x), [0, 1, 2, 3, 4, 5])
            engine.backward(loss)
            return loss.item(), x.grad.tobytes()

        rng_local = np.random.default_rng(5)
        plain = run()
        rng_local = np.random.default_rng(5)
        with perf.ElementMeter():
            metered = run()
        assert plain == metered

    def test_element_meter_function(self):
        assert perf.element_meter(lambda: engine.zeros(10)) == 10


class TestMeasuredRuns:
    def test_dense_peak_dominated_by_logits(self):
        peak = perf.head_training_peak("dense", b=8, s=64, v=4096, d=64)
        assert peak >= 8 * 64 * 4096

    def test_desk_ratio_at_least_ten(self):
        dense = perf.head_training_peak("dense", b=8, s=64, v=4096, d=64)
        grouped = perf.head_training_peak("grouped", b=8, s=64, v=4096, d=64)
        assert dense / grouped >= 10

    def test_grouped_peak_scales_with_s_plus_g(self):
        # fixed v: the padded layout makes peak follow b*s*(S+G)
        peaks = {
            s: perf.head_training_peak("grouped", b=4, s=32, v=1024, d=16, group_size=s)
            for s in (8, 32, 128)
        }
        assert peaks[32] < peaks[8]
        assert peaks[32] < peaks[128]


class TestCostReport:
    def test_csv_row_and_table(self):
        report = perf.CostReport.analytic(b=8, s=64, v=4096, d=64, group_size=64, num_groups=64, dtype_bytes=4)
        header_cols = perf.CostReport.CSV_HEADER.split(",")
        row_cols = report.csv_row().split(",")
        assert len(header_cols) == len(row_cols)
        assert row_cols[:7] == ["8", "64", "4096", "64", "64", "64", "4"]
        assert "logits tensor" in report.table()

    def test_environment_descriptor_contents(self):
        env = perf.environment_descriptor()
        assert "dtype=" in env and "backend=" in env and "workers=" in env and "host=" in env


class TestThroughputSmoke:
    def test_grouped_beats_dense_at_big_vocab(self):
        tps = perf.throughput_bench(d=32, v=8192, seq=32, batch=2, n_layers=1, trials=3)
        assert tps["grouped"] > tps["dense"]

    def test_backend_bench_reports_available_backends(self):
        res = perf.backend_bench(d=16, v=256, seq=16, batch=2, steps=2)
        assert "numpy" in res
        if engine.backend_name() == "ext":
            assert res["ext"] > res["numpy"]
