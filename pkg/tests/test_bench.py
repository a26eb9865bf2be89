import json
import time

import numpy as np
import pytest

from s4dc import bench, model

CFG = model.ModelConfig(num_blocks=2, channels=8, ssm_order=4)


class _BusyStub:
    """Burns a fixed wall time per buffer, whatever its content."""

    def __init__(self, seconds):
        self.seconds = seconds

    def process_buffer(self, u, out=None):
        t0 = time.perf_counter()
        while time.perf_counter() - t0 < self.seconds:
            pass
        return u


@pytest.fixture(scope="module")
def weights():
    return model.make_random_weights(CFG, seed=40)


class TestRunBench:
    def test_stub_reproduces_derived_ratio(self, weights):
        report = bench.run_bench(
            weights, buffer_sizes=(4096,), audio_seconds=10,
            processor_factory=lambda size: _BusyStub(0.001))
        # 4096 samples of audio at 44.1 kHz take 92.88 ms; a 1 ms stub
        # should therefore report a ratio of ~92.9
        expected = 4096 / 44100 / 0.001
        assert report.rows[0].speed_ratio == pytest.approx(expected, rel=0.10)

    def test_stub_ratio_reproducible_within_5pct(self, weights):
        ratios = []
        for _ in range(2):
            report = bench.run_bench(
                weights, buffer_sizes=(4096,), audio_seconds=10,
                processor_factory=lambda size: _BusyStub(0.001))
            ratios.append(report.rows[0].speed_ratio)
        assert abs(ratios[0] - ratios[1]) / ratios[0] < 0.05

    def test_row_per_buffer_size_sorted(self, weights):
        report = bench.run_bench(
            weights, buffer_sizes=(2048, 512, 1024), audio_seconds=10,
            processor_factory=lambda size: _BusyStub(0.0001))
        assert [r.buffer_size for r in report.rows] == [512, 1024, 2048]

    def test_ratio_definition(self, weights):
        report = bench.run_bench(
            weights, buffer_sizes=(1024,), audio_seconds=10,
            processor_factory=lambda size: _BusyStub(0.0002))
        row = report.rows[0]
        assert row.speed_ratio == pytest.approx(
            row.audio_seconds / row.wall_seconds)
        assert row.per_buffer_p99 >= row.per_buffer_p50 > 0

    def test_real_stream_smoke(self, weights):
        report = bench.run_bench(weights, buffer_sizes=(4096,), audio_seconds=10)
        row = report.rows[0]
        assert row.speed_ratio > 0
        assert row.audio_seconds >= 10.0

    def test_preconditions(self, weights):
        with pytest.raises(ValueError):
            bench.run_bench(weights, buffer_sizes=())
        with pytest.raises(ValueError):
            bench.run_bench(weights, buffer_sizes=(128,), audio_seconds=5)

    def test_json_schema(self, weights):
        report = bench.run_bench(
            weights, buffer_sizes=(128, 256), audio_seconds=10,
            processor_factory=lambda size: _BusyStub(0.00005))
        data = json.loads(report.to_json())
        assert data["sample_rate"] == 44100
        assert len(data["rows"]) == 2
        assert set(data["rows"][0]) == {
            "buffer_size", "buffers_timed", "audio_seconds", "wall_seconds",
            "speed_ratio", "per_buffer_p50", "per_buffer_p99"}

    def test_table_lines(self, weights):
        report = bench.run_bench(
            weights, buffer_sizes=(128,), audio_seconds=10,
            processor_factory=lambda size: _BusyStub(0.00005))
        lines = report.table().splitlines()
        assert len(lines) == 2 and "ratio" in lines[0]


class TestRtSafety:
    def test_recurrent_path_is_allocation_free(self, weights):
        report = bench.check_rt_safety(weights, buffer_size=128,
                                       audio_seconds=2.0)
        assert report.net_bytes <= bench.RT_NET_ALLOWANCE
        assert report.peak_transient_bytes <= bench.RT_TRANSIENT_ALLOWANCE
        assert report.allocation_free
        assert report.per_buffer_p99 > 0

    def test_harness_detects_allocating_path(self, weights):
        # the FFT engine allocates its outputs; the harness must see that
        report = bench.check_rt_safety(weights, buffer_size=128,
                                       audio_seconds=1.0, mode="fft")
        assert report.peak_transient_bytes > bench.RT_TRANSIENT_ALLOWANCE
        assert not report.allocation_free

    def test_signal_deterministic(self):
        a = bench.synth_signal(1000, seed=3)
        b = bench.synth_signal(1000, seed=3)
        assert np.array_equal(a, b)
        assert np.max(np.abs(a)) <= 0.5 + 1e-12
