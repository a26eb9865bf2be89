"""Diagonal state-space (S4D) layer math.

Each layer is a bank of H independent single-input single-output IIR
systems of order N with a diagonal (per-mode) state matrix:

    x[t] = Abar * x[t-1] + Bbar * u[t]        (elementwise over modes)
    y[t] = 2*Re( sum_n c_n * x_n[t] ) + d * u[t]

The continuous-time poles ``lambda`` (Re < 0) are discretized by zero-order
hold.  Modes are stored once and the output takes twice the real part of
the complex sum, which is equivalent to running each mode together with its
conjugate pair.

Block processing comes in two interchangeable flavours:

* ``process_block_recurrent`` — literal per-sample recurrence. Exact, slow.
* ``process_block_fft``       — materialize the impulse response for the
  block length, convolve via zero-padded FFT, add the ring-in of the
  incoming state, and compute the exact state at the block boundary.

Both advance the state identically, so a stream may be split at any sample
without discontinuities.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    InvalidOrderError,
    NonFiniteError,
    UnstableError,
)

# Below this |lambda| the ZOH input map uses its analytic limit Bbar = dt*B
# to avoid catastrophic cancellation in (exp(dt*lambda) - 1)/lambda.
ZOH_LIMIT_THRESHOLD = 1e-8

# Log-uniform range for the discretization step at initialization.
DT_MIN = 1e-3
DT_MAX = 1e-1


@dataclass(frozen=True)
class SsmCoefficients:
    """Continuous-time diagonal SSM parameters for H channels of order N.

    Attributes
    ----------
    lam : (H, N) complex
        Continuous-time poles; Re(lam) < 0 for every mode.
    b : (H, N) complex
        Input vectors.
    c : (H, N) complex
        Output vectors.
    d : (H,) real
        Direct feedthrough per channel.
    dt : (H,) real
        Positive discretization step, dimensionless relative to the
        sample period.
    """

    lam: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    dt: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam)
        if lam.ndim != 2:
            raise DimensionMismatchError("lam must be (channels, order)")
        h, n = lam.shape
        if n < 1 or h < 1:
            raise InvalidOrderError(f"need H >= 1 and N >= 1, got H={h}, N={n}")
        for name in ("b", "c"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (h, n):
                raise DimensionMismatchError(f"{name} must have shape {(h, n)}")
        for name in ("d", "dt"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != (h,):
                raise DimensionMismatchError(f"{name} must have shape {(h,)}")
        for name in ("lam", "b", "c", "d", "dt"):
            if not np.all(np.isfinite(np.asarray(getattr(self, name)))):
                raise NonFiniteError(f"{name} contains NaN or Inf")
        if np.any(lam.real >= 0):
            raise UnstableError("all poles must satisfy Re(lambda) < 0")
        if np.any(np.asarray(self.dt) <= 0):
            raise UnstableError("all step sizes dt must be positive")

    @property
    def channels(self) -> int:
        return self.lam.shape[0]

    @property
    def order(self) -> int:
        return self.lam.shape[1]


@dataclass(frozen=True)
class DiscreteSsm:
    """ZOH-discretized diagonal SSM. ``|abar| < 1`` for every mode."""

    abar: np.ndarray  # (H, N) complex128, discrete poles
    bbar: np.ndarray  # (H, N) complex128, discrete input map
    c: np.ndarray     # (H, N) complex128
    d: np.ndarray     # (H,) float64

    @property
    def channels(self) -> int:
        return self.abar.shape[0]

    @property
    def order(self) -> int:
        return self.abar.shape[1]


@dataclass
class SsmState:
    """Per-layer complex state carried across buffers. Zero at stream start."""

    x: np.ndarray  # (H, N) complex128
    position: int = 0


def zero_state(ssm: DiscreteSsm) -> SsmState:
    return SsmState(np.zeros((ssm.channels, ssm.order), dtype=np.complex128), 0)


def discretize(coeffs: SsmCoefficients) -> DiscreteSsm:
    """Zero-order-hold discretization of continuous diagonal coefficients.

        Abar = exp(dt * lambda)
        Bbar = (Abar - 1) / lambda * B       (-> dt * B as lambda -> 0)

    Raises
    ------
    NonFiniteError
        If any discrete coefficient is NaN or Inf.
    UnstableError
        If any discrete pole has magnitude >= 1.
    """
    lam = np.asarray(coeffs.lam, dtype=np.complex128)
    b = np.asarray(coeffs.b, dtype=np.complex128)
    dtl = np.asarray(coeffs.dt, dtype=np.float64)[:, None] * lam
    abar = np.exp(dtl)
    small = np.abs(lam) < ZOH_LIMIT_THRESHOLD
    denom = np.where(small, 1.0, lam)
    bbar = np.where(small, np.asarray(coeffs.dt, dtype=np.float64)[:, None] * b,
                    (abar - 1.0) / denom * b)
    if not (np.all(np.isfinite(abar)) and np.all(np.isfinite(bbar))):
        raise NonFiniteError("discretization produced NaN or Inf")
    if np.any(np.abs(abar) >= 1.0):
        raise UnstableError("discrete pole magnitude >= 1")
    return DiscreteSsm(
        abar=abar,
        bbar=bbar,
        c=np.asarray(coeffs.c, dtype=np.complex128),
        d=np.asarray(coeffs.d, dtype=np.float64),
    )


def _pole_powers(abar: np.ndarray, length: int) -> np.ndarray:
    """(H, N, L) array with powers[..., t] = abar ** t."""
    h, n = abar.shape
    out = np.empty((h, n, length), dtype=np.complex128)
    out[..., 0] = 1.0
    if length > 1:
        np.cumprod(np.broadcast_to(abar[..., None], (h, n, length - 1)),
                   axis=-1, out=out[..., 1:])
    return out


def _kernel_from_powers(ssm: DiscreteSsm, powers: np.ndarray) -> np.ndarray:
    return 2.0 * np.real(np.einsum("hn,hnt->ht", ssm.c * ssm.bbar, powers))


def kernel(ssm: DiscreteSsm, length: int) -> np.ndarray:
    """Truncated impulse response, one row per channel.

        K[h, t] = 2 * Re( sum_n c[h,n] * Bbar[h,n] * Abar[h,n]**t )

    The feedthrough ``d`` is not folded in; it is applied separately by the
    block-processing ops.

    Returns
    -------
    (H, length) float64 array.
    """
    if length < 1:
        raise DimensionMismatchError("kernel length must be >= 1")
    k = _kernel_from_powers(ssm, _pole_powers(ssm.abar, length))
    if not np.all(np.isfinite(k)):
        raise NonFiniteError("kernel overflowed")
    return k


def step(ssm: DiscreteSsm, state: SsmState, u: np.ndarray):
    """Advance the recurrence by one sample.

    Parameters
    ----------
    u : (H,) real frame.

    Returns
    -------
    (y, state') with y an (H,) real frame and state' the successor state.
    """
    h, n = ssm.abar.shape
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (h,):
        raise DimensionMismatchError(f"frame must have shape {(h,)}, got {u.shape}")
    if state.x.shape != (h, n):
        raise DimensionMismatchError("state does not match system dimensions")
    x = ssm.abar * state.x + ssm.bbar * u[:, None]
    y = 2.0 * np.real(np.sum(ssm.c * x, axis=1)) + ssm.d * u
    return y, SsmState(x, state.position + 1)


def process_block_recurrent(ssm: DiscreteSsm, state: SsmState, u: np.ndarray):
    """Process an (H, L) block by iterating the recurrence sample by sample.

    Exact by construction; serves as the oracle for the FFT path and as the
    low-latency engine. Returns (y, state') like :func:`step`.
    """
    u = np.asarray(u, dtype=np.float64)
    _check_block(ssm, state, u)
    length = u.shape[1]
    x = state.x.astype(np.complex128, copy=True)
    y = np.empty_like(u)
    for t in range(length):
        x = ssm.abar * x + ssm.bbar * u[:, t, None]
        y[:, t] = 2.0 * np.real(np.sum(ssm.c * x, axis=1)) + ssm.d * u[:, t]
    if not np.all(np.isfinite(y)):
        raise NonFiniteError("recurrent block produced NaN or Inf")
    return y, SsmState(x, state.position + length)


@dataclass(frozen=True)
class FftBlockPlan:
    """Reusable precomputation for process_block_fft at one block length."""

    length: int
    nfft: int
    kernel_rfft: np.ndarray  # (H, nfft//2 + 1) complex
    powers: np.ndarray       # (H, N, L), powers[..., t] = abar**t


def plan_fft_block(ssm: DiscreteSsm, length: int) -> FftBlockPlan:
    if length < 1:
        raise DimensionMismatchError("block length must be >= 1")
    powers = _pole_powers(ssm.abar, length)
    nfft = 1 << (2 * length - 1).bit_length()
    kernel_rfft = np.fft.rfft(_kernel_from_powers(ssm, powers), nfft)
    return FftBlockPlan(length, nfft, kernel_rfft, powers)


def process_block_fft(ssm: DiscreteSsm, state: SsmState, u: np.ndarray,
                      plan: FftBlockPlan = None):
    """Process an (H, L) block by FFT convolution with the length-L kernel.

    Output is the causal linear convolution of the block with the kernel,
    plus feedthrough, plus the ring-in of the incoming state:

        y_state[h, t] = 2 * Re( sum_n c * Abar**(t+1) * x0[h, n] )

    The successor state is computed exactly:

        x'[h, n] = Abar**L * x0 + Bbar * sum_t Abar**(L-1-t) * u[h, t]

    The convolution is linear, not circular: the FFT size is the next power
    of two >= 2L. A plan from :func:`plan_fft_block` may be supplied to
    amortize kernel generation across repeated same-length blocks.
    """
    u = np.asarray(u, dtype=np.float64)
    _check_block(ssm, state, u)
    length = u.shape[1]
    if plan is None:
        plan = plan_fft_block(ssm, length)
    elif plan.length != length:
        raise DimensionMismatchError("plan was built for a different block length")
    powers = plan.powers

    y = np.fft.irfft(np.fft.rfft(u, plan.nfft) * plan.kernel_rfft,
                     plan.nfft)[:, :length]
    y += ssm.d[:, None] * u
    if np.any(state.x):
        y += 2.0 * np.real(
            np.einsum("hn,hnt->ht", ssm.c * ssm.abar * state.x, powers))

    drive = np.einsum("hnt,ht->hn", powers[:, :, ::-1], u)
    x = ssm.abar * powers[:, :, -1] * state.x + ssm.bbar * drive
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
        raise NonFiniteError("fft block produced NaN or Inf")
    return y, SsmState(x, state.position + length)


def _check_block(ssm: DiscreteSsm, state: SsmState, u: np.ndarray):
    h, n = ssm.abar.shape
    if u.ndim != 2 or u.shape[0] != h:
        raise DimensionMismatchError(f"block must have shape ({h}, L), got {u.shape}")
    if u.shape[1] < 1:
        raise DimensionMismatchError("block length must be >= 1")
    if state.x.shape != (h, n):
        raise DimensionMismatchError("state does not match system dimensions")


def init_s4d(order: int, channels: int, seed: int) -> SsmCoefficients:
    """Deterministic S4D-Lin style initialization.

    Poles lam[h, n] = -1/2 + i*pi*n, input vectors B = 1, output vectors
    drawn from a standard complex normal, step sizes log-uniform in
    [1e-3, 1e-1], zero feedthrough. Stored as 32-bit tensors like any
    other model weight.
    """
    if order < 1:
        raise InvalidOrderError(f"order must be >= 1, got {order}")
    if order % 2 != 0:
        raise InvalidOrderError(f"order must be even, got {order}")
    if channels < 1:
        raise InvalidOrderError(f"channels must be >= 1, got {channels}")
    rng = np.random.default_rng(seed)
    lam = np.broadcast_to(-0.5 + 1j * np.pi * np.arange(order), (channels, order))
    c = (rng.standard_normal((channels, order))
         + 1j * rng.standard_normal((channels, order))) / np.sqrt(2.0)
    dt = np.exp(rng.uniform(np.log(DT_MIN), np.log(DT_MAX), size=channels))
    return SsmCoefficients(
        lam=lam.astype(np.complex64),
        b=np.ones((channels, order), dtype=np.complex64),
        c=c.astype(np.complex64),
        d=np.zeros(channels, dtype=np.float32),
        dt=dt.astype(np.float32),
    )
