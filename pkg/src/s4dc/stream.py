"""Buffer-oriented and per-sample stream processing with exact state hand-off.

A StreamProcessor owns one audio stream: fixed weights, fixed controls (the
control embedding and every block's FiLM affine are precomputed at open),
and the per-block SSM states. Buffers of any length, varying call to call,
produce output identical to one-shot processing of the concatenated stream.

Two engines:

* ``fft`` (default) — blocks are filtered by FFT convolution with a cached
  per-length kernel plan; temporaries are bounded by the buffer size.
* ``recurrent`` — the literal per-sample recurrence. This path is built for
  a real-time audio thread: buffers are laid out time-major, per-channel
  constants are materialized as (length, channels) planes, and every numpy
  op runs in-place on preallocated scratch, so after warm-up (the first
  call at a given buffer length) the processing path performs no heap
  allocation beyond a few hundred transient bytes of interpreter overhead.
  Per-sample stepping uses this path.

Broadcasting is deliberately absent from the recurrent path: numpy's ufunc
machinery buffers broadcast operands (tens of kilobytes per call), which is
exactly the allocation churn a real-time thread must avoid.

The normalization and FiLM affines are fused into a single per-channel
scale/shift at open time (both are per-channel affines and the controls are
constant for the life of the stream).
"""

from dataclasses import dataclass

import numpy as np

from . import model, ssm
from .errors import DimensionMismatchError, NonFiniteError

MODES = ("fft", "recurrent")


@dataclass
class _BlockRt:
    """Per-block constants in the hot path's layout (time-major, float64)."""

    mix_wT: np.ndarray       # (c, c), transpose of the mixing matrix
    bias: np.ndarray         # (c,)
    a1: np.ndarray           # (c,)
    a2: np.ndarray           # (c,)
    scale: np.ndarray        # (c,) fused norm*film scale
    shift: np.ndarray        # (c,) fused norm*film shift
    abar: np.ndarray         # (N, c) complex, mode-major
    bbar_rows: list          # N contiguous (c,) complex rows
    cvec: np.ndarray         # (N, c) complex
    d: np.ndarray            # (c,)
    dis: ssm.DiscreteSsm     # channel-major twin for the FFT path


class _Scratch:
    """Capacity-sized planes and small complex temporaries, all preallocated."""

    def __init__(self, blocks, expand_b, contract_b, channels, order, capacity):
        c = channels
        self.capacity = capacity
        self.sig = np.empty((capacity, c))
        self.mix = np.empty((capacity, c))
        self.neg = np.empty((capacity, c))
        self.ucol = np.empty((capacity, 1))
        self.yrow = np.empty((capacity, 1))
        self.fin = np.empty(capacity, dtype=bool)
        self.expand_b = np.empty((capacity, c))
        self.expand_b[:] = expand_b
        self.contract_b = np.empty((capacity, 1))
        self.contract_b[:] = contract_b
        self.blk_bias = [_plane(b.bias, capacity) for b in blocks]
        self.blk_a1 = [_plane(b.a1, capacity) for b in blocks]
        self.blk_a2 = [_plane(b.a2, capacity) for b in blocks]
        self.blk_scale = [_plane(b.scale, capacity) for b in blocks]
        self.blk_shift = [_plane(b.shift, capacity) for b in blocks]
        self.cn = np.empty((order, c), dtype=np.complex128)
        self.cn_rows = [self.cn[n] for n in range(order)]
        self.csum = np.empty(c, dtype=np.complex128)
        self.csum_real = self.csum.real
        self.rowc = np.empty(c, dtype=np.complex128)
        self.ft = np.empty(c)
        self.u1 = np.empty(1)
        self.y1 = np.empty(1)


def _plane(vec, capacity):
    out = np.empty((capacity, vec.shape[0]))
    out[:] = vec
    return out


class _Views:
    """Length-L slices of the scratch planes, created once per length."""

    def __init__(self, s: _Scratch, num_blocks: int, length: int):
        self.sig = s.sig[:length]
        self.mix = s.mix[:length]
        self.neg = s.neg[:length]
        self.ucol = s.ucol[:length]
        self.ucol_flat = s.ucol[:length, 0]
        self.yrow = s.yrow[:length]
        self.ycol = s.yrow[:length, 0]
        self.fin = s.fin[:length]
        self.expand_b = s.expand_b[:length]
        self.contract_b = s.contract_b[:length]
        self.mix_rows = [self.mix[t] for t in range(length)]
        self.blk_bias = [s.blk_bias[i][:length] for i in range(num_blocks)]
        self.blk_a1 = [s.blk_a1[i][:length] for i in range(num_blocks)]
        self.blk_a2 = [s.blk_a2[i][:length] for i in range(num_blocks)]
        self.blk_scale = [s.blk_scale[i][:length] for i in range(num_blocks)]
        self.blk_shift = [s.blk_shift[i][:length] for i in range(num_blocks)]


class StreamProcessor:
    """Single-owner stream: one audio thread, shared immutable weights."""

    def __init__(self, weights: model.ModelWeights, ctrl: model.ControlVector,
                 mode: str = "fft", buffer_hint: int = None):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.weights = weights
        self.control = ctrl
        self.mode = mode
        self.buffer_hint = buffer_hint
        self.embedding = model.embed_controls(weights, ctrl)
        self.position = 0

        cfg = weights.config
        self._blocks = []
        for bw in weights.blocks:
            gamma, beta = model.film_params(bw, self.embedding)
            nscale = np.asarray(bw.norm_scale, dtype=np.float64)
            nshift = np.asarray(bw.norm_shift, dtype=np.float64)
            dis = ssm.discretize(bw.ssm)
            abar = np.ascontiguousarray(dis.abar.T)
            bbar = np.ascontiguousarray(dis.bbar.T)
            self._blocks.append(_BlockRt(
                mix_wT=np.ascontiguousarray(np.asarray(bw.mix_w, dtype=np.float64).T),
                bias=np.asarray(bw.mix_b, dtype=np.float64),
                a1=np.asarray(bw.prelu1_a, dtype=np.float64),
                a2=np.asarray(bw.prelu2_a, dtype=np.float64),
                scale=gamma * nscale,
                shift=gamma * nshift + beta,
                abar=abar,
                bbar_rows=[bbar[n] for n in range(cfg.ssm_order)],
                cvec=np.ascontiguousarray(dis.c.T),
                d=dis.d.copy(),
                dis=dis))
        self._expand_wT = np.ascontiguousarray(
            np.asarray(weights.expand_w, dtype=np.float64).T)
        self._contract_wT = np.ascontiguousarray(
            np.asarray(weights.contract_w, dtype=np.float64).T)
        self._expand_b = np.asarray(weights.expand_b, dtype=np.float64)
        self._contract_b = np.asarray(weights.contract_b, dtype=np.float64)
        # mode-major (N, c) states; the FFT path sees them transposed
        self._states = [np.zeros((cfg.ssm_order, cfg.channels), dtype=np.complex128)
                        for _ in weights.blocks]
        self._plans = [{} for _ in weights.blocks]
        self._scratch = None
        self._views = {}
        self._poisoned = False
        if buffer_hint:
            self._get_views(buffer_hint)
            if mode == "fft":
                for blk, plans in zip(self._blocks, self._plans):
                    plans[buffer_hint] = ssm.plan_fft_block(blk.dis, buffer_hint)

    # -- public surface ----------------------------------------------------

    def process_buffer(self, u, out=None):
        """Process one buffer; returns the rendered samples.

        ``u`` is a 1-D float array of any length >= 1. Passing float64 ``u``
        and ``out`` arrays keeps the recurrent engine allocation-free after
        warm-up.
        """
        return self._process(u, out, self.mode)

    def process_sample(self, u: float) -> float:
        """Process a single sample via the recurrence (never the FFT)."""
        s = self._ensure_scratch(1)
        s.u1[0] = u
        self._process(s.u1, s.y1, "recurrent")
        return float(s.y1[0])

    def reset(self):
        """Zero all SSM states and clear any poisoned flag. Idempotent."""
        for x in self._states:
            x[:] = 0.0
        self.position = 0
        self._poisoned = False

    # -- engine ------------------------------------------------------------

    def _ensure_scratch(self, length):
        if self._scratch is None or self._scratch.capacity < length:
            cfg = self.weights.config
            self._scratch = _Scratch(self._blocks, self._expand_b,
                                     self._contract_b, cfg.channels,
                                     cfg.ssm_order, length)
            self._views = {}
        return self._scratch

    def _get_views(self, length):
        v = self._views.get(length)
        if v is None:
            s = self._ensure_scratch(length)
            v = _Views(s, len(self._blocks), length)
            self._views[length] = v
        return v

    def _process(self, u, out, mode):
        if self._poisoned:
            raise NonFiniteError("stream is poisoned; call reset()")
        u = np.asarray(u, dtype=np.float64)
        if u.ndim != 1 or u.shape[0] < 1:
            raise DimensionMismatchError("buffer must be 1-D with length >= 1")
        length = u.shape[0]
        if out is None:
            out = np.empty(length)
        elif out.shape != u.shape:
            raise DimensionMismatchError("out must match the buffer length")
        v = self._get_views(length)

        np.copyto(v.ucol_flat, u)
        np.matmul(v.ucol, self._expand_wT, out=v.sig)
        np.add(v.sig, v.expand_b, out=v.sig)
        try:
            for idx, blk in enumerate(self._blocks):
                if mode == "fft":
                    self._block_fft(idx, blk, v, length)
                else:
                    self._block_recurrent(idx, blk, v, length)
        except NonFiniteError:
            self._poisoned = True
            raise
        np.matmul(v.sig, self._contract_wT, out=v.yrow)
        np.add(v.yrow, v.contract_b, out=v.yrow)
        np.tanh(v.yrow, out=v.yrow)

        np.isfinite(v.ycol, out=v.fin)
        if not v.fin.all():
            self._poisoned = True
            raise NonFiniteError("stream produced NaN or Inf; poisoned until reset()")
        np.copyto(out, v.ycol)
        self.position += length
        return out

    def _mix_prelu(self, idx, blk, v):
        np.matmul(v.sig, blk.mix_wT, out=v.mix)
        np.add(v.mix, v.blk_bias[idx], out=v.mix)
        _prelu_inplace(v.mix, v.blk_a1[idx], v.neg)

    def _block_fft(self, idx, blk, v, length):
        self._mix_prelu(idx, blk, v)
        plan = self._plans[idx].get(length)
        if plan is None:
            plan = self._plans[idx][length] = ssm.plan_fft_block(blk.dis, length)
        state = ssm.SsmState(self._states[idx].T, self.position)
        y, state = ssm.process_block_fft(blk.dis, state, v.mix.T, plan=plan)
        np.copyto(self._states[idx], state.x.T)
        yt = y.T
        np.multiply(yt, v.blk_scale[idx], out=yt)
        np.add(yt, v.blk_shift[idx], out=yt)
        _prelu_inplace(yt, v.blk_a2[idx], v.neg)
        np.add(v.sig, yt, out=v.sig)

    def _block_recurrent(self, idx, blk, v, length):
        self._mix_prelu(idx, blk, v)
        s = self._scratch
        x = self._states[idx]
        order = x.shape[0]
        cn, cn_rows, csum, rowc, ft = s.cn, s.cn_rows, s.csum, s.rowc, s.ft
        for t in range(length):
            row = v.mix_rows[t]
            np.copyto(rowc, row)
            np.multiply(blk.abar, x, out=x)
            for n in range(order):
                np.multiply(blk.bbar_rows[n], rowc, out=cn_rows[n])
            np.add(x, cn, out=x)
            np.multiply(blk.cvec, x, out=cn)
            np.copyto(csum, cn_rows[0])
            for n in range(1, order):
                np.add(csum, cn_rows[n], out=csum)
            np.multiply(blk.d, row, out=ft)
            np.multiply(s.csum_real, 2.0, out=row)
            np.add(row, ft, out=row)
        np.multiply(v.mix, v.blk_scale[idx], out=v.mix)
        np.add(v.mix, v.blk_shift[idx], out=v.mix)
        _prelu_inplace(v.mix, v.blk_a2[idx], v.neg)
        np.add(v.sig, v.mix, out=v.sig)


def _prelu_inplace(buf, slope_plane, neg):
    np.minimum(buf, 0.0, out=neg)
    np.multiply(neg, slope_plane, out=neg)
    np.maximum(buf, 0.0, out=buf)
    np.add(buf, neg, out=buf)


def open_stream(weights: model.ModelWeights, ctrl: model.ControlVector,
                mode: str = "fft", buffer_hint: int = None) -> StreamProcessor:
    """Create a fresh zero-state stream with the control embedding cached.

    Changing controls mid-stream is not supported: open a new stream. Two
    streams over the same weights are fully independent.
    """
    return StreamProcessor(weights, ctrl, mode=mode, buffer_hint=buffer_hint)
