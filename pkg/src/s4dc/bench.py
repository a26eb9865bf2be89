"""Real-time benchmark harness: stream buffers, time them, report ratios.

The protocol: synthetic audio is streamed through a fresh StreamProcessor
one buffer at a time (state passed across buffers), timing only the
``process_buffer`` calls. The first ``WARMUP_BUFFERS`` buffers are excluded
(plan construction, scratch allocation). The speed ratio is audio playback
time divided by wall-clock inference time; above 1.0 the engine is faster
than real time. Results are hardware-dependent and reported, not asserted.

``check_rt_safety`` verifies the real-time contract of the recurrent
engine: after warm-up, a long run of fixed-size buffers must not grow the
heap (no per-buffer allocations retained) and must not create array-sized
temporaries (peak traced memory stays within a small constant of the
steady state). CPython itself churns a few hundred transient bytes of view
and frame objects per call through its freelists; the thresholds below are
far under the smallest numpy buffer the engine could accidentally allocate,
so a single stray temporary or broadcast buffer fails the check.
"""

import gc
import json
import math
import os
import time
import tracemalloc
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import model, stream

DEFAULT_BUFFER_SIZES = (128, 256, 512, 1024, 2048, 4096)
WARMUP_BUFFERS = 8
MIN_AUDIO_SECONDS = 10.0
DEFAULT_CONTROL = model.ControlVector(0.5, 0.0)

# check_rt_safety allowances, in bytes. Net growth covers interpreter and
# tracemalloc residue (measured ~5 KiB over thousands of buffers); the
# transient allowance is well below one (channels, buffer) float64 plane
# or a numpy broadcast buffer (~32 KiB each).
RT_NET_ALLOWANCE = 16384
RT_TRANSIENT_ALLOWANCE = 4096


def synth_signal(num_samples: int, seed: int = 0, sample_rate: int = 44100):
    """Deterministic program-like material: 1/f sine stack plus light noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(num_samples) / sample_rate
    x = np.zeros(num_samples)
    freqs = np.array([55.0, 110.0, 220.0, 330.0, 440.0, 880.0, 1760.0, 3520.0])
    for f, phase in zip(freqs, rng.uniform(0, 2 * np.pi, freqs.size)):
        x += (55.0 / f) * np.sin(2 * np.pi * f * t + phase)
    x += 0.02 * rng.standard_normal(num_samples)
    # slow amplitude ripple so compression-style models see level changes
    x *= 0.5 + 0.45 * np.sin(2 * np.pi * 0.5 * t)
    return 0.5 * x / np.max(np.abs(x))


@dataclass(frozen=True)
class BenchRow:
    buffer_size: int
    buffers_timed: int
    audio_seconds: float
    wall_seconds: float
    speed_ratio: float
    per_buffer_p50: float
    per_buffer_p99: float


@dataclass(frozen=True)
class BenchReport:
    sample_rate: int
    rows: tuple

    def to_dict(self) -> dict:
        return {"sample_rate": self.sample_rate,
                "rows": [vars(r).copy() for r in self.rows]}

    def to_json(self, indent=None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def table(self) -> str:
        lines = [f"{'buffer':>7} {'audio s':>9} {'wall s':>9} {'ratio':>8} "
                 f"{'p50 ms':>8} {'p99 ms':>8}"]
        for r in self.rows:
            lines.append(
                f"{r.buffer_size:>7d} {r.audio_seconds:>9.2f} "
                f"{r.wall_seconds:>9.3f} {r.speed_ratio:>8.2f} "
                f"{r.per_buffer_p50 * 1e3:>8.3f} {r.per_buffer_p99 * 1e3:>8.3f}")
        return "\n".join(lines)


@contextmanager
def _pinned_to_one_core(enable: bool):
    if enable and hasattr(os, "sched_setaffinity"):
        previous = os.sched_getaffinity(0)
        os.sched_setaffinity(0, {min(previous)})
        try:
            yield
        finally:
            os.sched_setaffinity(0, previous)
    else:
        yield


def run_bench(weights: model.ModelWeights,
              buffer_sizes=DEFAULT_BUFFER_SIZES,
              audio_seconds: float = 60.0,
              sample_rate: int = 44100,
              ctrl: model.ControlVector = DEFAULT_CONTROL,
              processor_factory=None,
              pin_core: bool = True) -> BenchReport:
    """Time buffered streaming at each buffer size.

    ``processor_factory(buffer_size)`` may substitute the processor (the
    tests inject a fixed-delay stub to validate the harness arithmetic);
    by default a fresh FFT-mode stream over ``weights`` is opened per size.
    """
    if not buffer_sizes:
        raise ValueError("buffer_sizes must be nonempty")
    if audio_seconds < MIN_AUDIO_SECONDS:
        raise ValueError(f"audio_seconds must be >= {MIN_AUDIO_SECONDS} "
                         "for stable timing")
    if processor_factory is None:
        def processor_factory(size):
            return stream.open_stream(weights, ctrl, mode="fft", buffer_hint=size)

    rows = []
    with _pinned_to_one_core(pin_core):
        for size in sorted(buffer_sizes):
            n_timed = math.ceil(audio_seconds * sample_rate / size)
            total = WARMUP_BUFFERS + n_timed
            signal = synth_signal(total * size, seed=size, sample_rate=sample_rate)
            buffers = [signal[i * size:(i + 1) * size] for i in range(total)]
            sp = processor_factory(size)
            times = np.empty(n_timed)
            for i, buf in enumerate(buffers):
                t0 = time.perf_counter()
                sp.process_buffer(buf)
                elapsed = time.perf_counter() - t0
                if i >= WARMUP_BUFFERS:
                    times[i - WARMUP_BUFFERS] = elapsed
            wall = float(np.sum(times))
            audio = n_timed * size / sample_rate
            rows.append(BenchRow(
                buffer_size=size,
                buffers_timed=n_timed,
                audio_seconds=audio,
                wall_seconds=wall,
                speed_ratio=audio / wall,
                per_buffer_p50=float(np.percentile(times, 50)),
                per_buffer_p99=float(np.percentile(times, 99)),
            ))
    return BenchReport(sample_rate=sample_rate, rows=tuple(rows))


@dataclass(frozen=True)
class RtSafetyReport:
    buffer_size: int
    buffers: int
    audio_seconds: float
    net_bytes: int             # traced growth across the whole timed run
    peak_bytes: int            # traced peak relative to the starting level
    per_buffer_p50: float
    per_buffer_p99: float

    @property
    def peak_transient_bytes(self) -> int:
        return self.peak_bytes - max(self.net_bytes, 0)

    @property
    def allocation_free(self) -> bool:
        return (self.net_bytes <= RT_NET_ALLOWANCE
                and self.peak_transient_bytes <= RT_TRANSIENT_ALLOWANCE)

    def to_dict(self) -> dict:
        return {"buffer_size": self.buffer_size, "buffers": self.buffers,
                "audio_seconds": self.audio_seconds,
                "net_bytes": self.net_bytes, "peak_bytes": self.peak_bytes,
                "peak_transient_bytes": self.peak_transient_bytes,
                "allocation_free": self.allocation_free,
                "per_buffer_p50": self.per_buffer_p50,
                "per_buffer_p99": self.per_buffer_p99}


def check_rt_safety(weights: model.ModelWeights,
                    buffer_size: int = 128,
                    audio_seconds: float = 10.0,
                    sample_rate: int = 44100,
                    ctrl: model.ControlVector = DEFAULT_CONTROL,
                    mode: str = "recurrent") -> RtSafetyReport:
    """Stream fixed-size buffers under tracemalloc and report allocations.

    Runs the given engine after a warm-up, then counts heap traffic across
    ``audio_seconds`` worth of buffers. See the module docstring for what
    the thresholds mean; ``mode="fft"`` fails by construction (the FFT has
    no preallocated-output API) and serves as the harness's self-test.
    """
    sp = stream.open_stream(weights, ctrl, mode=mode, buffer_hint=buffer_size)
    n = math.ceil(audio_seconds * sample_rate / buffer_size)
    signal = synth_signal((n + WARMUP_BUFFERS) * buffer_size,
                          seed=7, sample_rate=sample_rate)
    views = [signal[i * buffer_size:(i + 1) * buffer_size]
             for i in range(n + WARMUP_BUFFERS)]
    in_buf = np.empty(buffer_size)
    out = np.empty(buffer_size)
    times = np.empty(n)

    for i in range(WARMUP_BUFFERS):
        np.copyto(in_buf, views[i])
        sp.process_buffer(in_buf, out=out)
    gc.collect()

    tracemalloc.start()
    base, _ = tracemalloc.get_traced_memory()
    tracemalloc.reset_peak()
    for i in range(n):
        np.copyto(in_buf, views[WARMUP_BUFFERS + i])
        t0 = time.perf_counter()
        sp.process_buffer(in_buf, out=out)
        times[i] = time.perf_counter() - t0
    current, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()

    return RtSafetyReport(
        buffer_size=buffer_size,
        buffers=n,
        audio_seconds=n * buffer_size / sample_rate,
        net_bytes=current - base,
        peak_bytes=peak - base,
        per_buffer_p50=float(np.percentile(times, 50)),
        per_buffer_p99=float(np.percentile(times, 99)),
    )
