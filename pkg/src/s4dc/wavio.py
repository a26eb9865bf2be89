"""Mono WAV read/write at the engine boundary.

Reads RIFF/WAVE with fmt tag 1 (PCM, 16- or 24-bit) or 3 (32-bit IEEE
float), single channel. PCM samples are normalized by 2**(bits-1). Writes
32-bit float mono, so write -> read round-trips bit-exactly.

The engine is sample-rate naive; reading a rate other than 44100 Hz works
but warns, since published compressor weights assume 44.1 kHz material.
"""

import struct
import warnings

import numpy as np

from .errors import CorruptWavError, MultichannelInputError, UnsupportedFormatError

NOMINAL_RATE = 44100

_FMT_PCM = 1
_FMT_FLOAT = 3


def read_wav(data: bytes):
    """Parse WAV bytes. Returns (samples as float64 in [-1, 1], sample_rate)."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise CorruptWavError("not a RIFF/WAVE stream")
    fmt = None
    body = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        size = struct.unpack_from("<I", data, pos + 4)[0]
        start = pos + 8
        if start + size > len(data):
            raise CorruptWavError(f"chunk {cid!r} extends past end of file")
        if cid == b"fmt ":
            if size < 16:
                raise CorruptWavError("fmt chunk too small")
            fmt = struct.unpack_from("<HHIIHH", data, start)
        elif cid == b"data":
            body = data[start:start + size]
        pos = start + size + (size & 1)  # chunks are word-aligned
    if fmt is None or body is None:
        raise CorruptWavError("missing fmt or data chunk")

    audio_format, channels, sample_rate, _, block_align, bits = fmt
    if channels != 1:
        raise MultichannelInputError(f"expected mono, got {channels} channels")
    if block_align and len(body) % block_align:
        raise CorruptWavError("data chunk is not a whole number of frames")

    if audio_format == _FMT_FLOAT and bits == 32:
        samples = np.frombuffer(body, dtype="<f4").astype(np.float64)
    elif audio_format == _FMT_PCM and bits == 16:
        samples = np.frombuffer(body, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == _FMT_PCM and bits == 24:
        raw = np.frombuffer(body, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        val = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
        val -= (val & 0x800000) << 1  # sign extension
        samples = val.astype(np.float64) / float(1 << 23)
    else:
        raise UnsupportedFormatError(
            f"unsupported encoding: format tag {audio_format}, {bits}-bit")

    if sample_rate != NOMINAL_RATE:
        warnings.warn(
            f"sample rate is {sample_rate} Hz; compressor weights assume "
            f"{NOMINAL_RATE} Hz material", RuntimeWarning)
    return samples, int(sample_rate)


def write_wav(samples, sample_rate: int) -> bytes:
    """Encode mono samples as a 32-bit float WAV."""
    payload = np.asarray(samples, dtype="<f4").tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, _FMT_FLOAT, 1, int(sample_rate),
        int(sample_rate) * 4, 4, 32,
        b"data", len(payload))
    return header + payload
