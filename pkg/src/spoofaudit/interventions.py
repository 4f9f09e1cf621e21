"""Inference-time signal edits driven by per-file side information.

Every edit either removes a contiguous run of samples or inserts a new
segment; samples outside the edited region are copied bit for bit.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .audio import (AudioSignal, SampleRateMismatchError, TimeSpan, concat, ms_to_samples,
                    sample_variance, slice_signal)
from .vad import EndpointAnnotation, trim_to_endpoints

KINDS = ("RemovePrefix", "TrimEndpoints", "PrependSignature", "InsertSegment",
         "InjectNoise", "InjectSilence", "TrimThenPrepend")


class SideInfoError(KeyError):
    """The intervention needs side information the caller did not supply."""


def file_seed(seed: int, file_id: str) -> int:
    """Combine a run seed with a stable (process-independent) hash of file_id."""
    digest = hashlib.sha256(f"{seed}:{file_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


# ---------------------------------------------------------------------------
# primitives

def extract_signature(signal: AudioSignal, first_ms: float = 100.0) -> AudioSignal:
    if first_ms > signal.duration_ms + 1e-9:
        raise ValueError(f"signal of {signal.duration_ms:.1f} ms is shorter than {first_ms} ms")
    return slice_signal(signal, TimeSpan(0.0, min(first_ms, signal.duration_ms)))


def make_white_noise(duration_ms: float, sample_rate: int, seed: int) -> AudioSignal:
    """Standard-normal noise rescaled to zero mean and exactly unit variance."""
    n = ms_to_samples(duration_ms, sample_rate)
    if n < 2:
        raise ValueError("noise segment needs at least two samples")
    x = np.random.default_rng(seed).standard_normal(n)
    x -= x.mean()
    x /= np.sqrt(np.mean(x ** 2))
    return AudioSignal(x, sample_rate)


def scale_noise_for_snr(noise: AudioSignal, reference: AudioSignal,
                        snr_exponent: float) -> AudioSignal:
    """alpha * noise with alpha = sqrt(Var(X) * 10**-snr).

    The noise is standardised first, so the output variance equals
    Var(reference) * 10**-snr_exponent up to round-off.  Note the exponent
    is a plain log10 power ratio, not decibels.
    """
    var_x = sample_variance(reference)
    if var_x <= 0:
        raise ValueError("reference signal has zero variance")
    n = noise.samples - noise.samples.mean()
    var_n = np.mean(n ** 2)
    if var_n <= 0:
        raise ValueError("noise has zero variance")
    alpha = np.sqrt(var_x * 10.0 ** (-snr_exponent))
    return AudioSignal(alpha * n / np.sqrt(var_n), noise.sample_rate)


def insertion_offset(signal: AudioSignal, location: str, seed: int | None = None) -> int:
    if location == "start":
        return 0
    if location == "random":
        if seed is None:
            raise ValueError("random location needs a seed")
        return int(np.random.default_rng(seed).integers(0, len(signal) + 1))
    raise ValueError(f"unknown location {location!r}")


def insert_segment(signal: AudioSignal, segment: AudioSignal, location: str = "start",
                   seed: int | None = None) -> AudioSignal:
    if signal.sample_rate != segment.sample_rate:
        raise SampleRateMismatchError(f"{signal.sample_rate} Hz vs {segment.sample_rate} Hz")
    at = insertion_offset(signal, location, seed)
    x = signal.samples
    return AudioSignal(np.concatenate([x[:at], segment.samples, x[at:]]), signal.sample_rate)


def mix_segment(signal: AudioSignal, segment: AudioSignal, location: str = "start",
                seed: int | None = None) -> AudioSignal:
    """Additive variant: the segment is summed onto the signal (length unchanged)."""
    if signal.sample_rate != segment.sample_rate:
        raise SampleRateMismatchError(f"{signal.sample_rate} Hz vs {segment.sample_rate} Hz")
    n = len(segment)
    if n > len(signal):
        raise ValueError("segment longer than the signal it is mixed into")
    at = 0 if location == "start" else int(np.random.default_rng(seed).integers(0, len(signal) - n + 1))
    x = signal.samples.copy()
    x[at:at + n] += segment.samples
    return AudioSignal(x, signal.sample_rate)


# ---------------------------------------------------------------------------
# declarative interventions

@dataclass(frozen=True)
class Intervention:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown intervention kind {self.kind!r}")
        for key in ("ms", "duration_ms"):
            if key in self.params and not self.params[key] > 0:
                raise ValueError(f"{self.kind}: {key} must be positive")
        loc = self.params.get("location", "start")
        if loc not in ("start", "random"):
            raise ValueError(f"{self.kind}: unknown location {loc!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "Intervention":
        return cls(d["kind"], dict(d.get("params", {})))

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params)}


@dataclass(frozen=True)
class SideInfo:
    annotations: dict = field(default_factory=dict)   # file_id -> EndpointAnnotation
    signature: AudioSignal | None = None
    segments: dict = field(default_factory=dict)      # name -> AudioSignal for InsertSegment
    seed: int = 0

    def annotation(self, file_id) -> EndpointAnnotation:
        try:
            return self.annotations[file_id]
        except KeyError:
            raise SideInfoError(f"no endpoint annotation for {file_id}") from None

    def require_signature(self) -> AudioSignal:
        if self.signature is None:
            raise SideInfoError("intervention needs a signature signal")
        return self.signature


def _trim(signal, side, file_id):
    span = side.annotation(file_id).span
    # annotations can overshoot the file end by a fraction of a sample
    end = min(span.end_ms, signal.duration_ms)
    return trim_to_endpoints(signal, TimeSpan(min(span.start_ms, end), end))


def apply_intervention(intervention: Intervention, signal: AudioSignal,
                       side: SideInfo = SideInfo(), file_id: str = "") -> AudioSignal:
    kind, p = intervention.kind, intervention.params
    location = p.get("location", "start")
    seed = file_seed(side.seed, file_id)

    if kind == "RemovePrefix":
        ms = float(p.get("ms", 100.0))
        if ms > signal.duration_ms:
            raise ValueError(f"{file_id}: {signal.duration_ms:.1f} ms file is shorter than "
                             f"the {ms} ms prefix")
        return slice_signal(signal, TimeSpan(ms, signal.duration_ms))
    if kind == "TrimEndpoints":
        return _trim(signal, side, file_id)
    if kind == "PrependSignature":
        return concat(side.require_signature(), signal)
    if kind == "TrimThenPrepend":
        return concat(side.require_signature(), _trim(signal, side, file_id))
    if kind == "InsertSegment":
        name = p.get("segment", "signature")
        segment = side.signature if name == "signature" else side.segments.get(name)
        if segment is None:
            raise SideInfoError(f"no segment named {name!r}")
        return insert_segment(signal, segment, location, seed)
    if kind == "InjectNoise":
        noise = make_white_noise(float(p.get("duration_ms", 100.0)), signal.sample_rate, seed)
        noise = scale_noise_for_snr(noise, signal, float(p.get("snr_exponent", 0.0)))
        if p.get("mode", "concat") == "mix":
            return mix_segment(signal, noise, location, seed + 1)
        return insert_segment(signal, noise, location, seed + 1)
    if kind == "InjectSilence":
        n = ms_to_samples(float(p.get("duration_ms", 100.0)), signal.sample_rate)
        return insert_segment(signal, AudioSignal(np.zeros(n), signal.sample_rate),
                              location, seed + 1)
    raise ValueError(f"unhandled intervention {kind}")
