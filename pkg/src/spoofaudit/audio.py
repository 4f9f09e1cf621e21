"""Audio container, 16-bit PCM WAV I/O and primitive sample-level edits."""

from __future__ import annotations

import math
import os
import struct
import wave
from dataclasses import dataclass

import numpy as np

PCM_SCALE = 32768.0


class WavError(Exception):
    """Base class for WAV parsing problems."""


class MalformedHeaderError(WavError):
    pass


class UnsupportedEncodingError(WavError):
    pass


class UnsupportedChannelsError(WavError):
    pass


class UnsupportedBitDepthError(WavError):
    pass


class SpanError(ValueError):
    pass


class SampleRateMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AudioSignal:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioSignal holds mono audio only")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_ms(self) -> float:
        return 1000.0 * len(self) / self.sample_rate

    @classmethod
    def empty(cls, sample_rate: int) -> "AudioSignal":
        return cls(np.zeros(0), sample_rate)


@dataclass(frozen=True)
class TimeSpan:
    start_ms: float
    end_ms: float

    def __post_init__(self):
        if not (0 <= self.start_ms <= self.end_ms):
            raise SpanError(f"invalid span [{self.start_ms}, {self.end_ms}]")

    @property
    def duration_ms(self) -> float:
        return self.end_ms - self.start_ms


def ms_to_samples(ms: float, sample_rate: int) -> int:
    """Round a millisecond offset to the nearest sample (halves round up)."""
    return int(math.floor(ms * sample_rate / 1000.0 + 0.5))


# ---------------------------------------------------------------------------
# WAV I/O

def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack("<4sI", data[pos:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if len(body) != size:
            raise MalformedHeaderError(
                f"chunk {cid!r} declares {size} bytes, file holds {len(body)}")
        yield cid, body
        pos += 8 + size + (size & 1)


def load_wav(path) -> AudioSignal:
    """Read a mono 16-bit little-endian PCM WAV file.

    Samples are scaled by 1/32768 so full scale maps onto [-1, 1).
    Each unsupported property raises its own ``WavError`` subclass.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedHeaderError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    pcm = None
    for cid, body in _iter_chunks(data):
        if cid == b"fmt ":
            if len(body) < 16:
                raise MalformedHeaderError(f"{path}: fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif cid == b"data":
            pcm = body
    if fmt is None or pcm is None:
        raise MalformedHeaderError(f"{path}: missing fmt or data chunk")

    tag, channels, rate, _byte_rate, block_align, bits = fmt
    if tag != 1:
        raise UnsupportedEncodingError(f"{path}: format tag {tag} is not PCM")
    if channels != 1:
        raise UnsupportedChannelsError(f"{path}: {channels} channels, expected mono")
    if bits != 16:
        raise UnsupportedBitDepthError(f"{path}: {bits}-bit samples, expected 16")
    if rate <= 0 or block_align != 2:
        raise MalformedHeaderError(f"{path}: inconsistent fmt fields")
    if len(pcm) % 2:
        raise MalformedHeaderError(f"{path}: odd data chunk length")

    ints = np.frombuffer(pcm, dtype="<i2")
    return AudioSignal(ints.astype(np.float64) / PCM_SCALE, rate)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    scaled = np.rint(np.asarray(samples, dtype=np.float64) * PCM_SCALE)
    return np.clip(scaled, -32768, 32767).astype("<i2")


def save_wav(signal: AudioSignal, path) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise OSError(f"cannot write {path}: directory does not exist")
    if os.path.isdir(path):
        raise OSError(f"cannot write {path}: is a directory")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(signal.sample_rate)
        wf.writeframes(to_pcm16(signal.samples).tobytes())


def quantize(signal: AudioSignal) -> AudioSignal:
    """Return the signal exactly as it would read back from a WAV file."""
    return AudioSignal(to_pcm16(signal.samples).astype(np.float64) / PCM_SCALE,
                       signal.sample_rate)


# ---------------------------------------------------------------------------
# primitive edits

def span_to_indices(signal: AudioSignal, span: TimeSpan) -> tuple[int, int]:
    start = ms_to_samples(span.start_ms, signal.sample_rate)
    end = ms_to_samples(span.end_ms, signal.sample_rate)
    if end > len(signal):
        raise SpanError(f"span ends at {span.end_ms} ms, signal lasts "
                        f"{signal.duration_ms:.3f} ms")
    return start, end


def slice_signal(signal: AudioSignal, span: TimeSpan) -> AudioSignal:
    start, end = span_to_indices(signal, span)
    return AudioSignal(signal.samples[start:end].copy(), signal.sample_rate)


def concat(a: AudioSignal, b: AudioSignal) -> AudioSignal:
    if a.sample_rate != b.sample_rate:
        raise SampleRateMismatchError(f"{a.sample_rate} Hz vs {b.sample_rate} Hz")
    return AudioSignal(np.concatenate([a.samples, b.samples]), a.sample_rate)


def unify_duration(signal: AudioSignal, target_s: float) -> AudioSignal:
    """Truncate, or repeat the whole signal head-to-tail, to exactly target_s."""
    if len(signal) == 0:
        raise ValueError("cannot unify the duration of an empty signal")
    if target_s <= 0:
        raise ValueError("target duration must be positive")
    n = int(math.floor(target_s * signal.sample_rate + 0.5))
    return AudioSignal(np.resize(signal.samples, n), signal.sample_rate)


def sample_variance(signal: AudioSignal) -> float:
    """Population variance (divide by N)."""
    if len(signal) < 2:
        raise ValueError("variance needs at least two samples")
    x = signal.samples
    if x.min() == x.max():
        return 0.0  # np.var leaves rounding residue when the mean is inexact
    return float(np.var(x))
