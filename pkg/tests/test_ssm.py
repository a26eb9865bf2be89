import numpy as np
import pytest

from s4dc import ssm
from s4dc.errors import (
    DimensionMismatchError,
    InvalidOrderError,
    NonFiniteError,
    UnstableError,
)


def make_coeffs(lam, b, c, d, dt):
    return ssm.SsmCoefficients(
        lam=np.atleast_2d(np.asarray(lam, dtype=np.complex128)),
        b=np.atleast_2d(np.asarray(b, dtype=np.complex128)),
        c=np.atleast_2d(np.asarray(c, dtype=np.complex128)),
        d=np.atleast_1d(np.asarray(d, dtype=np.float64)),
        dt=np.atleast_1d(np.asarray(dt, dtype=np.float64)),
    )


def random_discrete(seed, channels=4, order=4):
    return ssm.discretize(ssm.init_s4d(order, channels, seed))


def naive_impulse_response(dis, length):
    """Oracle: run the recurrence literally on a unit impulse, scalar loops only."""
    h_count, n_count = dis.abar.shape
    k = np.zeros((h_count, length))
    for h in range(h_count):
        x = np.zeros(n_count, dtype=np.complex128)
        for t in range(length):
            u = 1.0 if t == 0 else 0.0
            x = dis.abar[h] * x + dis.bbar[h] * u
            k[h, t] = 2.0 * np.real(np.sum(dis.c[h] * x))
    return k


def rel_l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestDiscretize:
    def test_closed_form(self):
        # lambda=-1, dt=ln2: Abar = exp(-ln2) = 1/2, Bbar = (1/2 - 1)/(-1) = 1/2
        dis = ssm.discretize(make_coeffs([-1.0], [1.0], [1.0], [0.0], [np.log(2.0)]))
        assert dis.abar[0, 0] == pytest.approx(0.5, abs=1e-15)
        assert dis.bbar[0, 0] == pytest.approx(0.5, abs=1e-15)

    def test_small_lambda_limit(self):
        dis = ssm.discretize(make_coeffs([-1e-12], [1.0], [1.0], [0.0], [0.01]))
        assert dis.bbar[0, 0] == pytest.approx(0.01, rel=1e-12)

    def test_random_stable(self):
        for seed in range(10):
            dis = random_discrete(seed, channels=8, order=6)
            assert np.all(np.abs(dis.abar) < 1.0)

    def test_rejects_unstable_pole(self):
        with pytest.raises(UnstableError):
            make_coeffs([0.5], [1.0], [1.0], [0.0], [0.1])

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(UnstableError):
            make_coeffs([-1.0], [1.0], [1.0], [0.0], [0.0])

    def test_rejects_nonfinite(self):
        with pytest.raises(NonFiniteError):
            make_coeffs([-1.0], [np.nan], [1.0], [0.0], [0.1])


class TestKernel:
    def test_single_mode_geometric(self):
        dis = ssm.DiscreteSsm(
            abar=np.array([[0.5 + 0j]]),
            bbar=np.array([[1.0 + 0j]]),
            c=np.array([[0.5 + 0j]]),
            d=np.array([0.0]),
        )
        k = ssm.kernel(dis, 8)
        assert np.allclose(k[0], 0.5 ** np.arange(8), atol=1e-15)

    def test_zero_c_gives_zero_kernel(self):
        dis = random_discrete(3)
        dis = ssm.DiscreteSsm(dis.abar, dis.bbar, np.zeros_like(dis.c), dis.d)
        assert np.all(ssm.kernel(dis, 32) == 0.0)

    def test_length_one(self):
        dis = random_discrete(4)
        k = ssm.kernel(dis, 1)
        expect = 2.0 * np.real(np.sum(dis.c * dis.bbar, axis=1))
        assert np.allclose(k[:, 0], expect, atol=1e-15)

    def test_matches_naive_recurrence_oracle(self):
        dis = random_discrete(7, channels=3, order=4)
        assert np.allclose(ssm.kernel(dis, 64), naive_impulse_response(dis, 64),
                           atol=1e-14)


class TestStep:
    def test_pure_feedthrough(self):
        dis = random_discrete(1, channels=2, order=4)
        dis = ssm.DiscreteSsm(dis.abar, dis.bbar, np.zeros_like(dis.c),
                              np.ones(2))
        state = ssm.zero_state(dis)
        state.x[:] = 0.3 + 0.1j
        u = np.array([0.7, -0.2])
        y, _ = ssm.step(dis, state, u)
        assert np.allclose(y, u, atol=1e-15)

    def test_zero_everything(self):
        dis = random_discrete(2)
        y, st = ssm.step(dis, ssm.zero_state(dis), np.zeros(dis.channels))
        assert np.all(y == 0.0) and np.all(st.x == 0.0)
        assert st.position == 1

    def test_impulse_reproduces_kernel(self):
        dis = random_discrete(5, channels=2, order=4)
        k = ssm.kernel(dis, 64)
        state = ssm.zero_state(dis)
        out = np.empty((2, 64))
        for t in range(64):
            u = np.full(2, 1.0 if t == 0 else 0.0)
            out[:, t], state = ssm.step(dis, state, u)
        assert np.allclose(out, k, atol=1e-14)

    def test_dimension_mismatch(self):
        dis = random_discrete(0, channels=3)
        with pytest.raises(DimensionMismatchError):
            ssm.step(dis, ssm.zero_state(dis), np.zeros(2))


class TestBlockProcessing:
    def test_recurrent_length_one_equals_step(self):
        dis = random_discrete(11)
        u = np.random.default_rng(0).standard_normal((dis.channels, 1))
        y_blk, st_blk = ssm.process_block_recurrent(dis, ssm.zero_state(dis), u)
        y_step, st_step = ssm.step(dis, ssm.zero_state(dis), u[:, 0])
        assert np.allclose(y_blk[:, 0], y_step, atol=1e-15)
        assert np.allclose(st_blk.x, st_step.x, atol=1e-15)

    def test_recurrent_concat_associativity(self):
        dis = random_discrete(12, channels=3, order=4)
        rng = np.random.default_rng(1)
        u = rng.standard_normal((3, 200))
        y_full, st_full = ssm.process_block_recurrent(dis, ssm.zero_state(dis), u)
        y_a, st = ssm.process_block_recurrent(dis, ssm.zero_state(dis), u[:, :77])
        y_b, st = ssm.process_block_recurrent(dis, st, u[:, 77:])
        assert np.allclose(np.hstack([y_a, y_b]), y_full, atol=1e-12)
        assert np.allclose(st.x, st_full.x, atol=1e-12)

    def test_fft_impulse_is_kernel(self):
        dis = random_discrete(13, channels=2, order=4)
        u = np.zeros((2, 50))
        u[:, 0] = 1.0
        y, _ = ssm.process_block_fft(dis, ssm.zero_state(dis), u)
        expect = ssm.kernel(dis, 50) + dis.d[:, None] * u
        assert np.allclose(y, expect, atol=1e-13)

    def test_fft_state_ringdown_decays(self):
        dis = random_discrete(14, channels=4, order=4)
        state = ssm.zero_state(dis)
        state.x[:] = np.random.default_rng(2).standard_normal((4, 4)) \
            + 1j * np.random.default_rng(3).standard_normal((4, 4))
        norms = []
        for _ in range(4):
            y, state = ssm.process_block_fft(dis, state, np.zeros((4, 1024)))
            norms.append(np.linalg.norm(y))
        assert norms[0] > 0.0
        for a, b in zip(norms, norms[1:]):
            assert b <= a * (1.0 + 1e-12)

    @pytest.mark.parametrize("length", [1, 64, 257, 4096])
    def test_modes_agree(self, length):
        dis = random_discrete(15, channels=4, order=4)
        rng = np.random.default_rng(length)
        u = rng.standard_normal((4, length))
        state0 = ssm.zero_state(dis)
        state0.x[:] = 0.1 * (rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
        y_fft, st_fft = ssm.process_block_fft(dis, ssm.SsmState(state0.x.copy()), u)
        y_rec, st_rec = ssm.process_block_recurrent(dis, ssm.SsmState(state0.x.copy()), u)
        assert rel_l2(y_fft, y_rec) < 1e-10
        assert np.allclose(st_fft.x, st_rec.x, rtol=1e-9, atol=1e-12)

    def test_mode_equivalence_grid(self):
        cases = 0
        for order in (2, 4, 8):
            for channels in (1, 16, 32):
                dis = random_discrete(100 + cases, channels=channels, order=order)
                rng = np.random.default_rng(cases)
                u = rng.standard_normal((channels, 257))
                y_fft, _ = ssm.process_block_fft(dis, ssm.zero_state(dis), u)
                y_rec, _ = ssm.process_block_recurrent(dis, ssm.zero_state(dis), u)
                assert rel_l2(y_fft, y_rec) < 1e-10
                cases += 1

    def test_state_exactness_random_splits(self):
        dis = random_discrete(16, channels=2, order=4)
        rng = np.random.default_rng(5)
        u = rng.standard_normal((2, 500))
        y_full, _ = ssm.process_block_fft(dis, ssm.zero_state(dis), u)
        for split in rng.integers(1, 499, size=5):
            y_a, st = ssm.process_block_fft(dis, ssm.zero_state(dis), u[:, :split])
            y_b, _ = ssm.process_block_fft(dis, st, u[:, split:])
            assert np.allclose(np.hstack([y_a, y_b]), y_full, atol=1e-10)

    def test_recurrent_causality_bit_exact(self):
        # zeroing the tail of the input cannot change earlier outputs at all
        dis = random_discrete(17, channels=2, order=4)
        rng = np.random.default_rng(6)
        u = rng.standard_normal((2, 128))
        u2 = u.copy()
        u2[:, 64:] = 0.0
        y1, _ = ssm.process_block_recurrent(dis, ssm.zero_state(dis), u)
        y2, _ = ssm.process_block_recurrent(dis, ssm.zero_state(dis), u2)
        assert np.array_equal(y1[:, :64], y2[:, :64])


class TestInitS4d:
    def test_deterministic(self):
        a = ssm.init_s4d(4, 8, seed=42)
        b = ssm.init_s4d(4, 8, seed=42)
        for name in ("lam", "b", "c", "d", "dt"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_pole_formula(self):
        coeffs = ssm.init_s4d(6, 2, seed=0)
        assert coeffs.lam[0, 0] == pytest.approx(-0.5)
        assert coeffs.lam[1, 3] == pytest.approx(-0.5 + 3j * np.pi)

    def test_invariants_hold(self):
        coeffs = ssm.init_s4d(8, 16, seed=9)
        assert np.all(coeffs.lam.real < 0)
        assert np.all(coeffs.dt > 0)
        assert np.all((coeffs.dt >= 1e-3) & (coeffs.dt <= 1e-1))

    def test_invalid_order(self):
        with pytest.raises(InvalidOrderError):
            ssm.init_s4d(0, 4, seed=0)
        with pytest.raises(InvalidOrderError):
            ssm.init_s4d(3, 4, seed=0)
