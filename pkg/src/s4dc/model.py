"""Compressor network: expansion, S4D blocks with FiLM conditioning, contraction.

Signal flow (mono audio, c inner channels):

    u (1xL) -> expand -> [block]*num_blocks -> contract -> tanh -> y (1xL)

Each block:

    residual = x
    h = prelu1( mix @ x + bias )        # frame-wise channel mixing
    h = s4d(h)                          # per-channel diagonal SSM, stateful
    h = norm_scale * h + norm_shift     # folded inference-mode BatchNorm
    h = prelu2( film(gamma, beta, h) )  # per-channel affine conditioning
    x = h + residual

External controls (peak reduction, compress/limit switch) pass once through
a small MLP; every block then derives its own (gamma, beta) from that shared
embedding with a per-block linear map.

Weights are stored as 32-bit tensors (the container format's dtype); all
arithmetic here upcasts to float64.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import ssm
from .errors import DimensionMismatchError, NonFiniteError, StateMismatchError

CONTROL_HIDDEN = 16  # width of the two hidden control-MLP layers


@dataclass(frozen=True)
class ModelConfig:
    num_blocks: int = 4
    channels: int = 32
    ssm_order: int = 4
    control_dim: int = 2
    control_embedding_dim: int = 32
    sample_rate: int = 44100

    def __post_init__(self):
        for name in ("num_blocks", "channels", "ssm_order", "control_dim",
                     "control_embedding_dim", "sample_rate"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.control_dim != 2:
            raise ValueError("this model is conditioned on exactly two controls")


@dataclass(frozen=True)
class ControlVector:
    """External effect controls, normalized.

    peak_reduction in [0, 1]; limit_switch 0.0 (compress) or 1.0 (limit).
    """

    peak_reduction: float
    limit_switch: float

    def __post_init__(self):
        if not 0.0 <= self.peak_reduction <= 1.0:
            raise ValueError("peak_reduction must lie in [0, 1]")
        if self.limit_switch not in (0.0, 1.0):
            raise ValueError("limit_switch must be 0.0 or 1.0")

    def as_array(self) -> np.ndarray:
        return np.array([self.peak_reduction, self.limit_switch], dtype=np.float64)


@dataclass(frozen=True)
class BlockWeights:
    mix_w: np.ndarray      # (c, c)
    mix_b: np.ndarray      # (c,)
    prelu1_a: np.ndarray   # (c,)
    ssm: ssm.SsmCoefficients
    norm_scale: np.ndarray  # (c,)
    norm_shift: np.ndarray  # (c,)
    film_w: np.ndarray     # (2c, E)
    film_b: np.ndarray     # (2c,)
    prelu2_a: np.ndarray   # (c,)


@dataclass(frozen=True)
class ModelWeights:
    config: ModelConfig
    expand_w: np.ndarray   # (c, 1)
    expand_b: np.ndarray   # (c,)
    blocks: tuple
    control_w: tuple       # three (out, in) matrices: 2->16->16->E
    control_b: tuple
    control_prelu: tuple   # two (16,) slope vectors
    contract_w: np.ndarray  # (1, c)
    contract_b: np.ndarray  # (1,)

    def __post_init__(self):
        cfg = self.config
        c, n, e = cfg.channels, cfg.ssm_order, cfg.control_embedding_dim
        if len(self.blocks) != cfg.num_blocks:
            raise DimensionMismatchError("blocks length must equal num_blocks")
        _expect(self.expand_w, (c, 1), "expand.weight")
        _expect(self.expand_b, (c,), "expand.bias")
        _expect(self.contract_w, (1, c), "contract.weight")
        _expect(self.contract_b, (1,), "contract.bias")
        dims = [(CONTROL_HIDDEN, cfg.control_dim),
                (CONTROL_HIDDEN, CONTROL_HIDDEN),
                (e, CONTROL_HIDDEN)]
        if len(self.control_w) != 3 or len(self.control_b) != 3 or len(self.control_prelu) != 2:
            raise DimensionMismatchError("control MLP must be 3 linear layers with 2 PReLUs")
        for i, (w, b) in enumerate(zip(self.control_w, self.control_b)):
            _expect(w, dims[i], f"control_mlp.{i}.weight")
            _expect(b, (dims[i][0],), f"control_mlp.{i}.bias")
        for i, a in enumerate(self.control_prelu):
            _expect(a, (CONTROL_HIDDEN,), f"control_mlp.{i}.prelu")
        for i, bw in enumerate(self.blocks):
            _expect(bw.mix_w, (c, c), f"blocks.{i}.mix.weight")
            _expect(bw.mix_b, (c,), f"blocks.{i}.mix.bias")
            _expect(bw.prelu1_a, (c,), f"blocks.{i}.prelu1.a")
            _expect(bw.prelu2_a, (c,), f"blocks.{i}.prelu2.a")
            _expect(bw.norm_scale, (c,), f"blocks.{i}.norm.scale")
            _expect(bw.norm_shift, (c,), f"blocks.{i}.norm.shift")
            _expect(bw.film_w, (2 * c, e), f"blocks.{i}.film.weight")
            _expect(bw.film_b, (2 * c,), f"blocks.{i}.film.bias")
            if bw.ssm.channels != c or bw.ssm.order != n:
                raise DimensionMismatchError(f"blocks.{i}.ssm dims disagree with config")
            if np.any(bw.norm_scale == 0):
                raise ValueError(f"blocks.{i}.norm.scale must be nonzero")


def _expect(arr, shape, name):
    if np.asarray(arr).shape != shape:
        raise DimensionMismatchError(
            f"{name}: expected shape {shape}, got {np.asarray(arr).shape}")


@dataclass
class ModelState:
    """One SSM state per block, threaded through chunked processing."""

    ssm_states: list


def new_state(weights: ModelWeights) -> ModelState:
    c, n = weights.config.channels, weights.config.ssm_order
    return ModelState(
        [ssm.SsmState(np.zeros((c, n), dtype=np.complex128), 0)
         for _ in range(weights.config.num_blocks)])


def prelu(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-channel parametric ReLU: x where x >= 0, a*x elsewhere."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[0] != x.shape[0]:
        raise DimensionMismatchError("PReLU slope count must match channels")
    slope = a[:, None] if x.ndim == 2 else a
    return np.maximum(x, 0.0) + slope * np.minimum(x, 0.0)


def film(gamma: np.ndarray, beta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Feature-wise affine: y[h, t] = gamma[h] * x[h, t] + beta[h]."""
    gamma = np.asarray(gamma, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if gamma.shape != (x.shape[0],) or beta.shape != (x.shape[0],):
        raise DimensionMismatchError("gamma/beta must have one entry per channel")
    return gamma[:, None] * x + beta[:, None]


def embed_controls(weights: ModelWeights, ctrl: ControlVector) -> np.ndarray:
    """Run the control MLP once; the result feeds every FiLM layer."""
    v = ctrl.as_array()
    for i in range(3):
        v = np.asarray(weights.control_w[i], dtype=np.float64) @ v \
            + np.asarray(weights.control_b[i], dtype=np.float64)
        if i < 2:
            v = prelu(weights.control_prelu[i], v)
    if not np.all(np.isfinite(v)):
        raise NonFiniteError("control embedding is not finite")
    return v


def film_params(bw: BlockWeights, emb: np.ndarray):
    """Per-block (gamma, beta) derived from the shared control embedding."""
    gb = np.asarray(bw.film_w, dtype=np.float64) @ emb \
        + np.asarray(bw.film_b, dtype=np.float64)
    c = gb.shape[0] // 2
    return gb[:c], gb[c:]


def block_forward(bw: BlockWeights, x: np.ndarray, emb: np.ndarray,
                  state: ssm.SsmState, ssm_mode: str = "fft"):
    """One S4 block over a (c, L) buffer. Returns (output, successor state)."""
    h = np.asarray(bw.mix_w, dtype=np.float64) @ x \
        + np.asarray(bw.mix_b, dtype=np.float64)[:, None]
    h = prelu(bw.prelu1_a, h)
    dis = ssm.discretize(bw.ssm)
    if ssm_mode == "fft":
        h, state = ssm.process_block_fft(dis, state, h)
    elif ssm_mode == "recurrent":
        h, state = ssm.process_block_recurrent(dis, state, h)
    else:
        raise ValueError(f"unknown ssm_mode {ssm_mode!r}")
    h = np.asarray(bw.norm_scale, dtype=np.float64)[:, None] * h \
        + np.asarray(bw.norm_shift, dtype=np.float64)[:, None]
    gamma, beta = film_params(bw, emb)
    h = prelu(bw.prelu2_a, film(gamma, beta, h))
    return h + x, state


def model_forward(weights: ModelWeights, u: np.ndarray, ctrl: ControlVector,
                  state: ModelState = None, ssm_mode: str = "fft"):
    """Render a mono buffer through the whole network.

    Parameters
    ----------
    u : (L,) real samples, nominally in [-1, 1]. Out-of-range input is
        processed as-is but flagged with a RuntimeWarning.
    state : carried across calls for chunked processing; None starts fresh.

    Returns
    -------
    (y, state') with y an (L,) array, |y| < 1 after the final tanh.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 1:
        raise DimensionMismatchError("input must be a 1-D mono buffer")
    if state is None:
        state = new_state(weights)
    _check_state(weights, state)
    if u.size and np.max(np.abs(u)) > 1.0:
        warnings.warn("input exceeds the nominal [-1, 1] range", RuntimeWarning)

    emb = embed_controls(weights, ctrl)
    x = np.asarray(weights.expand_w, dtype=np.float64) @ u[None, :] \
        + np.asarray(weights.expand_b, dtype=np.float64)[:, None]
    new_states = []
    for bw, st in zip(weights.blocks, state.ssm_states):
        x, st = block_forward(bw, x, emb, st, ssm_mode=ssm_mode)
        new_states.append(st)
    y = (np.asarray(weights.contract_w, dtype=np.float64) @ x)[0] \
        + np.asarray(weights.contract_b, dtype=np.float64)[0]
    return np.tanh(y), ModelState(new_states)


def _check_state(weights: ModelWeights, state: ModelState):
    cfg = weights.config
    if len(state.ssm_states) != cfg.num_blocks:
        raise StateMismatchError("state has wrong number of blocks")
    for st in state.ssm_states:
        if st.x.shape != (cfg.channels, cfg.ssm_order):
            raise StateMismatchError(
                f"state shape {st.x.shape} does not match config "
                f"({cfg.channels}, {cfg.ssm_order})")


def make_passthrough_weights(config: ModelConfig) -> ModelWeights:
    """Analytic all-pass configuration: the whole network reduces to tanh(u).

    Every block doubles its input (identity inner path + residual); the
    contraction divides the accumulated gain back out on channel 0. FiLM is
    pinned to gamma=1, beta=0 so any control value gives the same output.
    """
    c, n, e = config.channels, config.ssm_order, config.control_embedding_dim
    coeffs = ssm.init_s4d(n, c, seed=0)
    passthrough_ssm = ssm.SsmCoefficients(
        lam=coeffs.lam, b=coeffs.b,
        c=np.zeros((c, n), dtype=np.complex64),
        d=np.ones(c, dtype=np.float32),
        dt=coeffs.dt)
    block = BlockWeights(
        mix_w=np.eye(c, dtype=np.float32),
        mix_b=np.zeros(c, dtype=np.float32),
        prelu1_a=np.ones(c, dtype=np.float32),
        ssm=passthrough_ssm,
        norm_scale=np.ones(c, dtype=np.float32),
        norm_shift=np.zeros(c, dtype=np.float32),
        film_w=np.zeros((2 * c, e), dtype=np.float32),
        film_b=np.concatenate([np.ones(c), np.zeros(c)]).astype(np.float32),
        prelu2_a=np.ones(c, dtype=np.float32),
    )
    contract_w = np.zeros((1, c), dtype=np.float32)
    contract_w[0, 0] = 2.0 ** -config.num_blocks
    return ModelWeights(
        config=config,
        expand_w=np.ones((c, 1), dtype=np.float32),
        expand_b=np.zeros(c, dtype=np.float32),
        blocks=tuple(block for _ in range(config.num_blocks)),
        control_w=_zero_control_w(config),
        control_b=(np.zeros(CONTROL_HIDDEN, dtype=np.float32),
                   np.zeros(CONTROL_HIDDEN, dtype=np.float32),
                   np.zeros(e, dtype=np.float32)),
        control_prelu=(np.full(CONTROL_HIDDEN, 0.25, dtype=np.float32),
                       np.full(CONTROL_HIDDEN, 0.25, dtype=np.float32)),
        contract_w=contract_w,
        contract_b=np.zeros(1, dtype=np.float32),
    )


def _zero_control_w(config: ModelConfig):
    return (np.zeros((CONTROL_HIDDEN, config.control_dim), dtype=np.float32),
            np.zeros((CONTROL_HIDDEN, CONTROL_HIDDEN), dtype=np.float32),
            np.zeros((config.control_embedding_dim, CONTROL_HIDDEN), dtype=np.float32))


def make_random_weights(config: ModelConfig, seed: int) -> ModelWeights:
    """Random but stable weights for testing and synthetic benchmarks.

    Linear layers use uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); SSMs use the
    deterministic S4D initialization; FiLM starts at gamma=1, beta=0 plus a
    control-dependent perturbation so distinct controls produce distinct
    renders.
    """
    c, n, e = config.channels, config.ssm_order, config.control_embedding_dim
    rng = np.random.default_rng(seed)

    def linear(out_dim, in_dim):
        bound = 1.0 / np.sqrt(in_dim)
        w = rng.uniform(-bound, bound, (out_dim, in_dim)).astype(np.float32)
        b = rng.uniform(-bound, bound, out_dim).astype(np.float32)
        return w, b

    expand_w, expand_b = linear(c, 1)
    blocks = []
    for i in range(config.num_blocks):
        mix_w, mix_b = linear(c, c)
        film_w, _ = linear(2 * c, e)
        film_b = np.concatenate([np.ones(c), np.zeros(c)]).astype(np.float32)
        blocks.append(BlockWeights(
            mix_w=mix_w, mix_b=mix_b,
            prelu1_a=np.full(c, 0.25, dtype=np.float32),
            ssm=ssm.init_s4d(n, c, seed=int(rng.integers(2 ** 31))),
            norm_scale=np.ones(c, dtype=np.float32),
            norm_shift=np.zeros(c, dtype=np.float32),
            film_w=film_w, film_b=film_b,
            prelu2_a=np.full(c, 0.25, dtype=np.float32),
        ))
    w0, b0 = linear(CONTROL_HIDDEN, config.control_dim)
    w1, b1 = linear(CONTROL_HIDDEN, CONTROL_HIDDEN)
    w2, b2 = linear(e, CONTROL_HIDDEN)
    contract_w, contract_b = linear(1, c)
    return ModelWeights(
        config=config,
        expand_w=expand_w, expand_b=expand_b,
        blocks=tuple(blocks),
        control_w=(w0, w1, w2), control_b=(b0, b1, b2),
        control_prelu=(np.full(CONTROL_HIDDEN, 0.25, dtype=np.float32),
                       np.full(CONTROL_HIDDEN, 0.25, dtype=np.float32)),
        contract_w=contract_w, contract_b=contract_b,
    )
