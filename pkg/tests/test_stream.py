import numpy as np
import pytest

from s4dc import model, stream
from s4dc.errors import NonFiniteError

CFG = model.ModelConfig(num_blocks=2, channels=8, ssm_order=4,
                        control_embedding_dim=32)
CTRL = model.ControlVector(0.7, 1.0)


@pytest.fixture(scope="module")
def weights():
    return model.make_random_weights(CFG, seed=33)


@pytest.fixture(scope="module")
def signal():
    return np.random.default_rng(34).uniform(-0.8, 0.8, 8192)


def oneshot(weights, u):
    y, _ = model.model_forward(weights, u, CTRL)
    return y


class TestOpenStream:
    def test_fresh_state_is_zero(self, weights):
        sp = stream.open_stream(weights, CTRL)
        assert all(np.all(x == 0) for x in sp._states)
        assert sp.position == 0

    def test_streams_are_independent(self, weights):
        a = stream.open_stream(weights, CTRL)
        b = stream.open_stream(weights, CTRL)
        a.process_buffer(np.ones(64))
        assert all(np.all(x == 0) for x in b._states)

    def test_silence_through_passthrough_weights(self):
        sp = stream.open_stream(model.make_passthrough_weights(CFG), CTRL)
        assert np.all(sp.process_buffer(np.zeros(256)) == 0.0)


class TestChunkingInvariance:
    def test_one_big_call_vs_many_small(self, weights, signal):
        u = signal[:4096]
        sp = stream.open_stream(weights, CTRL)
        y_one = sp.process_buffer(u).copy()
        sp2 = stream.open_stream(weights, CTRL)
        y_many = np.concatenate(
            [sp2.process_buffer(u[i:i + 128]).copy() for i in range(0, 4096, 128)])
        assert np.max(np.abs(y_one - y_many)) < 1e-5

    def test_matches_model_forward(self, weights, signal):
        u = signal[:2048]
        sp = stream.open_stream(weights, CTRL)
        parts = [sp.process_buffer(u[i:i + 160]).copy() for i in range(0, 2048, 160)]
        assert np.max(np.abs(np.concatenate(parts) - oneshot(weights, u))) < 1e-10

    def test_variable_buffer_sizes(self, weights, signal):
        rng = np.random.default_rng(35)
        u = signal[:3000]
        sp = stream.open_stream(weights, CTRL)
        parts, lo = [], 0
        while lo < 3000:
            n = min(int(rng.integers(1, 500)), 3000 - lo)
            parts.append(sp.process_buffer(u[lo:lo + n]).copy())
            lo += n
        assert np.max(np.abs(np.concatenate(parts) - oneshot(weights, u))) < 1e-10

    def test_recurrent_mode_agrees_with_fft_mode(self, weights, signal):
        u = signal[:1024]
        y_fft = stream.open_stream(weights, CTRL, mode="fft").process_buffer(u)
        y_rec = stream.open_stream(weights, CTRL, mode="recurrent").process_buffer(u)
        assert np.max(np.abs(y_fft - y_rec)) < 1e-10


class TestPerSample:
    def test_sample_equals_length_one_buffer(self, weights):
        a = stream.open_stream(weights, CTRL)
        b = stream.open_stream(weights, CTRL)
        for v in (0.3, -0.5, 0.9, 0.0):
            assert a.process_sample(v) == pytest.approx(
                float(b.process_buffer(np.array([v]))[0]), abs=1e-6)

    def test_sine_per_sample_vs_buffered(self, weights):
        t = np.arange(4410)
        u = 0.5 * np.sin(2 * np.pi * 997 * t / 44100)
        sp = stream.open_stream(weights, CTRL)
        y_buf = np.concatenate(
            [sp.process_buffer(u[i:i + 441]).copy() for i in range(0, 4410, 441)])
        sp2 = stream.open_stream(weights, CTRL)
        y_smp = np.array([sp2.process_sample(v) for v in u])
        assert np.max(np.abs(y_buf - y_smp)) < 1e-4

    def test_length_one_buffers_equal_samples(self, weights, signal):
        u = signal[:50]
        sp = stream.open_stream(weights, CTRL)
        y1 = np.array([sp.process_sample(v) for v in u])
        assert np.max(np.abs(y1 - oneshot(weights, u))) < 1e-10


class TestResetAndPoison:
    def test_reset_equals_fresh(self, weights, signal):
        u = signal[:512]
        sp = stream.open_stream(weights, CTRL)
        first = sp.process_buffer(u).copy()
        sp.process_buffer(signal[512:1024])
        sp.reset()
        assert np.array_equal(sp.process_buffer(u), first)
        assert sp.position == 512

    def test_reset_idempotent(self, weights):
        sp = stream.open_stream(weights, CTRL)
        sp.reset()
        sp.reset()
        assert sp.position == 0

    def test_nan_input_poisons_until_reset(self, weights):
        sp = stream.open_stream(weights, CTRL)
        with pytest.raises(NonFiniteError):
            sp.process_buffer(np.array([0.1, np.nan, 0.2]))
        with pytest.raises(NonFiniteError):
            sp.process_buffer(np.zeros(4))
        sp.reset()
        out = sp.process_buffer(np.zeros(4))
        assert np.all(np.isfinite(out))


class TestOutParameter:
    def test_out_buffer_reused(self, weights, signal):
        sp = stream.open_stream(weights, CTRL, mode="recurrent", buffer_hint=128)
        out = np.empty(128)
        got = sp.process_buffer(signal[:128], out=out)
        assert got is out
        sp2 = stream.open_stream(weights, CTRL)
        assert np.allclose(out, sp2.process_buffer(signal[:128]), atol=1e-10)
