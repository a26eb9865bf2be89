"""Classical feedforward dynamic range compressor.

Synthesizes input/target pairs at desk scale so the engine and metrics can
be exercised end-to-end without a recorded dataset. Deliberately simple and
fully specified: rectified one-pole envelope detector (fixed 1 ms time
constant), static gain curve with a quadratic soft knee, one-pole gain
smoothing in dB with separate attack and release time constants, then gain
and make-up applied to the dry signal. This is a test oracle, not an
emulation of any particular analog unit.
"""

from dataclasses import dataclass

import numpy as np

DETECTOR_TAU_MS = 1.0
LEVEL_FLOOR = 1e-10  # detector values below this read as -200 dB


@dataclass(frozen=True)
class DrcParams:
    threshold_db: float = -20.0
    ratio: float = 4.0
    attack_ms: float = 10.0
    release_ms: float = 300.0
    makeup_db: float = 0.0
    knee_db: float = 6.0

    def __post_init__(self):
        if self.ratio < 1.0:
            raise ValueError("ratio must be >= 1")
        if self.attack_ms <= 0.0 or self.release_ms <= 0.0:
            raise ValueError("attack and release times must be positive")
        if self.knee_db < 0.0:
            raise ValueError("knee width must be >= 0 dB")


@dataclass
class DrcState:
    detector: float = 0.0  # smoothed |x|
    gain_db: float = 0.0   # smoothed gain, dB


def static_gain_db(level_db: float, p: DrcParams) -> float:
    """Gain of the static compression curve at a given detector level.

    Zero below the knee, the usual downward slope above it, quadratic
    interpolation inside the knee region.
    """
    half = p.knee_db / 2.0
    over = level_db - p.threshold_db
    if over <= -half:
        return 0.0
    if over >= half:
        return over / p.ratio - over
    # inside the knee: smoothly bends from slope 0 to slope (1/ratio - 1)
    return (1.0 / p.ratio - 1.0) * (over + half) ** 2 / (2.0 * p.knee_db)


def _coeff(tau_ms: float, sample_rate: float) -> float:
    return float(np.exp(-1.0 / (tau_ms * sample_rate / 1000.0)))


def compress_block(x, p: DrcParams, sample_rate: float, state: DrcState):
    """Process one block, carrying detector and gain state across calls."""
    x = np.asarray(x, dtype=np.float64)
    det_a = _coeff(DETECTOR_TAU_MS, sample_rate)
    atk_a = _coeff(p.attack_ms, sample_rate)
    rel_a = _coeff(p.release_ms, sample_rate)
    makeup = 10.0 ** (p.makeup_db / 20.0)

    detector = state.detector
    gain_db = state.gain_db
    y = np.empty_like(x)
    for t in range(x.size):
        detector = det_a * detector + (1.0 - det_a) * abs(x[t])
        level_db = 20.0 * np.log10(max(detector, LEVEL_FLOOR))
        target = static_gain_db(level_db, p)
        a = atk_a if target < gain_db else rel_a
        gain_db = a * gain_db + (1.0 - a) * target
        y[t] = x[t] * 10.0 ** (gain_db / 20.0) * makeup
    return y, DrcState(detector, gain_db)


def compress(x, p: DrcParams, sample_rate: float) -> np.ndarray:
    """One-shot compression from silence (zero state)."""
    y, _ = compress_block(x, p, sample_rate, DrcState())
    return y
