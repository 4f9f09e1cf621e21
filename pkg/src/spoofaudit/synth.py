"""Deterministic synthetic bonafide/replay corpus with injected artefacts.

Speech is a crude stand-in: a few harmonics of a wandering F0 under a
syllabic envelope, with short fricative-like noise bursts.  Replays pass
the clean utterance through a low-pass + echo channel and add a noise
floor.  Class-correlated artefacts (clicks, DTMF, leading zeros, the
nonspeech-prefix pattern, corrupted files, over-long phrases) are injected
with configurable prevalences and recorded as ground truth.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import signal as sps

from .audio import AudioSignal, TimeSpan, ms_to_samples, quantize, save_wav
from .audit import DTMF_HIGH, DTMF_KEYS, DTMF_LOW, ProtocolEntry, write_protocol
from .interventions import file_seed
from .metrics import BONAFIDE, SPOOF
from .vad import EndpointAnnotation, write_annotations

SUBSETS = ("train", "dev", "eval")
PREFIX = {"train": "T", "dev": "D", "eval": "E"}


@dataclass(frozen=True)
class ChannelParams:
    """Per-file random channels.

    Every file is recorded through a low-pass with cutoff drawn from
    ``mic_lowpass_hz`` followed by white self-noise of level ``mic_noise``.
    Replays first pass a loudspeaker stage: low-pass with cutoff from
    ``replay_lowpass_hz``, an echo with decay from ``echo_decay`` and a
    white noise floor.
    """
    mic_lowpass_hz: tuple = (2000.0, 6000.0)
    replay_lowpass_hz: tuple = (3000.0, 3800.0)
    echo_delay_ms: tuple = (5.0, 15.0)
    echo_decay: tuple = (0.0, 0.3)
    noise_floor: float = 3e-5
    mic_noise: float = 1e-4

    def __post_init__(self):
        for name in ("mic_lowpass_hz", "replay_lowpass_hz", "echo_delay_ms", "echo_decay"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: empty range {lo}..{hi}")
            object.__setattr__(self, name, (float(lo), float(hi)))


@dataclass(frozen=True)
class CorpusSpec:
    counts: dict = field(default_factory=lambda: {"train": [200, 200], "dev": [100, 100],
                                                  "eval": [100, 100]})
    sample_rate: int = 16000
    phrases: tuple = (("S01", 2.0), ("S02", 0.75), ("S03", 1.5), ("S04", 1.8),
                      ("S05", 1.2), ("S06", 2.2))
    p_bcs_bonafide: float = 0.36
    p_bcs_spoof: float = 0.025
    p_dtmf_spoof: float = 0.45
    p_silence_bonafide: float = 0.19
    p_early_speech_bonafide: float = 0.40
    p_early_speech_spoof: float = 0.69
    p_long_s02: float = 0.15
    # nonspeech padding (ms): leading range for late-speech files, trailing range
    late_lead_bonafide_ms: tuple = (400.0, 1000.0)
    late_lead_spoof_ms: tuple = (340.0, 500.0)
    trail_bonafide_ms: tuple = (200.0, 600.0)
    trail_spoof_ms: tuple = (30.0, 150.0)
    n_corrupted: int = 4
    ambient_level: float = 1e-4
    channel: ChannelParams = ChannelParams()
    seed: int = 2017

    def __post_init__(self):
        for name in ("p_bcs_bonafide", "p_bcs_spoof", "p_dtmf_spoof", "p_silence_bonafide",
                     "p_early_speech_bonafide", "p_early_speech_spoof", "p_long_s02"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} is not a probability")
        for name in ("late_lead_bonafide_ms", "late_lead_spoof_ms"):
            lo, hi = getattr(self, name)
            if not 320.0 <= lo <= hi:
                raise ValueError(f"{name} must lie above the 300 ms early-speech boundary")
        for name in ("trail_bonafide_ms", "trail_spoof_ms"):
            lo, hi = getattr(self, name)
            if not 0.0 <= lo <= hi:
                raise ValueError(f"{name}: bad range {lo}..{hi}")
        if self.p_dtmf_spoof > self.p_early_speech_spoof:
            raise ValueError("DTMF is only placed in early-speech spoof files, so "
                             "p_dtmf_spoof must not exceed p_early_speech_spoof")
        for subset, pair in self.counts.items():
            if subset not in SUBSETS or len(pair) != 2 or min(pair) <= 0:
                raise ValueError(f"bad counts for {subset!r}: {pair}")
        if self.n_corrupted > sum(self.counts["train"]):
            raise ValueError("more corrupted files than training files")

    @classmethod
    def from_dict(cls, d: dict) -> "CorpusSpec":
        d = dict(d)
        if "channel" in d:
            d["channel"] = ChannelParams(**{k: tuple(v) if isinstance(v, list) else v
                                            for k, v in d["channel"].items()})
        for k in ("late_lead_bonafide_ms", "late_lead_spoof_ms", "trail_bonafide_ms",
                  "trail_spoof_ms"):
            if k in d:
                d[k] = tuple(d[k])
        if "phrases" in d:
            d["phrases"] = tuple((p, float(s)) for p, s in d["phrases"])
        return cls(**d)

    def to_dict(self):
        d = asdict(self)
        d["phrases"] = [list(p) for p in self.phrases]
        return d


# ---------------------------------------------------------------------------
# speech stand-in

def _speech_core(duration_s: float, fs: int, rng: np.random.Generator) -> np.ndarray:
    # whole number of syllables, so the envelope is high at both ends
    rate = rng.uniform(3.0, 6.0)
    duration_s = max(1, round(duration_s * rate)) / rate
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    base = rng.uniform(100.0, 220.0)
    f0 = base * (1 + 0.08 * np.sin(2 * np.pi * rng.uniform(0.3, 1.0) * t + rng.uniform(0, 2 * np.pi)))
    f0 *= 1 + 0.04 * np.sin(2 * np.pi * rng.uniform(1.5, 3.0) * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(f0) / fs
    voiced = np.zeros(n)
    for k in range(1, int(rng.integers(3, 6)) + 1):
        voiced += rng.uniform(0.6, 1.0) / k * np.sin(k * phase + rng.uniform(0, 2 * np.pi))

    env = 0.3 + 0.7 * np.cos(np.pi * rate * t) ** 2
    # short pauses inside the utterance
    for _ in range(int(rng.integers(0, 3))):
        width = rng.uniform(0.06, 0.15)
        if duration_s < 4 * width:
            continue
        centre = rng.uniform(0.3, 0.7) * duration_s
        gate = np.clip((np.abs(t - centre) - width / 2) / 0.01, 0.0, 1.0)
        env *= gate
    # raised-cosine attack and release: real onsets are not sample-sharp steps
    ramp = min(n // 4, int(rng.uniform(0.01, 0.03) * fs))
    if ramp:
        fade = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        env[:ramp] *= fade
        env[n - ramp:] *= fade[::-1]
    x = voiced * env

    sos = sps.butter(4, [2500.0, 6000.0], btype="bandpass", fs=fs, output="sos")
    for _ in range(int(rng.integers(1, 4))):
        m = int(rng.uniform(0.03, 0.08) * fs)
        if m >= n // 2:
            continue
        lo = int(rng.integers(n // 5, n - m - n // 5 + 1))
        burst = sps.sosfilt(sos, rng.standard_normal(m)) * np.hanning(m)
        x[lo:lo + m] += 0.25 * burst / max(np.max(np.abs(burst)), 1e-12)
    return x / np.max(np.abs(x))


def phrase_duration(phrase: str, nominal_s: float, rng, long_instance: bool = False) -> float:
    if long_instance:
        return rng.uniform(1.9, 2.4)
    return nominal_s * rng.uniform(0.8, 1.2)


def synth_utterance(phrase=("S01", 2.0), seed: int = 0, fs: int = 16000,
                    lead_ms: float | None = None, trail_ms: float | None = None,
                    ambient_level: float = 1e-4, long_instance: bool = False):
    """Speech-like utterance with ambient padding; returns (signal, true span)."""
    rng = np.random.default_rng(seed)
    name, nominal = phrase
    dur = phrase_duration(name, nominal, rng, long_instance)
    core = _speech_core(dur, fs, rng) * rng.uniform(0.5, 0.8)
    lead = ms_to_samples(rng.uniform(50, 400) if lead_ms is None else lead_ms, fs)
    trail = ms_to_samples(rng.uniform(80, 400) if trail_ms is None else trail_ms, fs)
    x = np.concatenate([np.zeros(lead), core, np.zeros(trail)])
    x += ambient_level * rng.standard_normal(x.size)
    span = TimeSpan(1000.0 * lead / fs, 1000.0 * (lead + core.size) / fs)
    return AudioSignal(x, fs), span


def _lowpass(x: np.ndarray, cutoff_hz: float, fs: int) -> np.ndarray:
    """Second-order Butterworth run forward and backward (squared magnitude, no phase)."""
    if cutoff_hz >= 0.45 * fs:
        return x.copy()
    return sps.sosfiltfilt(sps.butter(2, cutoff_hz, fs=fs, output="sos"), x)


def _peak_match(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    peak_in, peak_out = np.max(np.abs(x)), np.max(np.abs(y))
    return y * (peak_in / peak_out) if peak_out > 0 else y


def record(signal: AudioSignal, channel: ChannelParams = ChannelParams(), seed: int = 0):
    """Recording channel shared by both classes: random-bandwidth low-pass plus self-noise."""
    rng = np.random.default_rng(seed)
    cutoff = rng.uniform(*channel.mic_lowpass_hz)
    y = _lowpass(signal.samples, cutoff, signal.sample_rate)
    y = _peak_match(y, signal.samples)
    y = y + channel.mic_noise * rng.standard_normal(y.size)
    return AudioSignal(y, signal.sample_rate)


def simulate_replay(signal: AudioSignal, channel: ChannelParams = ChannelParams(),
                    seed: int = 0) -> AudioSignal:
    """Loudspeaker stage: low-pass, 3-tap decaying echo, peak-preserving gain, noise floor."""
    fs = signal.sample_rate
    x = signal.samples
    rng = np.random.default_rng(seed)
    y = _lowpass(x, rng.uniform(*channel.replay_lowpass_hz), fs)
    d = max(1, ms_to_samples(rng.uniform(*channel.echo_delay_ms), fs))
    decay = rng.uniform(*channel.echo_decay)
    h = np.zeros(2 * d + 1)
    h[0], h[d], h[2 * d] = 1.0, decay, decay ** 2
    y = _peak_match(np.convolve(y, h)[:x.size], x)
    y += channel.noise_floor * rng.standard_normal(x.size)
    return AudioSignal(np.clip(y, -0.99, 0.99), fs)


# ---------------------------------------------------------------------------
# artefacts

def make_click(duration_ms: float, fs: int, rng) -> np.ndarray:
    """Decaying broadband burst (alternating-sign noise, so its ZCR is high)."""
    n = max(2, ms_to_samples(duration_ms, fs))
    tau = n / 3.0
    signs = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    mag = rng.uniform(0.5, 1.0, n) * np.exp(-np.arange(n) / tau)
    return rng.uniform(0.6, 0.9) * signs * mag


def make_dtmf(key: str, duration_ms: float, fs: int, amplitude: float) -> np.ndarray:
    row = next(i for i, r in enumerate(DTMF_KEYS) if key in r)
    col = DTMF_KEYS[row].index(key)
    n = ms_to_samples(duration_ms, fs)
    t = np.arange(n) / fs
    tone = amplitude * (np.sin(2 * np.pi * DTMF_LOW[row] * t) + np.sin(2 * np.pi * DTMF_HIGH[col] * t))
    ramp = min(n // 4, ms_to_samples(5.0, fs))
    if ramp:
        fade = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        tone[:ramp] *= fade
        tone[-ramp:] *= fade[::-1]
    return tone


def _avoid(value, bad_centres, rng, lo, hi, margin=2.0):
    # redraw until the value sits clear of bucket edges the audit uses
    while any(abs(value - c) < margin for c in bad_centres):
        value = rng.uniform(lo, hi)
    return value


@dataclass
class FileTruth:
    file_id: str
    subset: str
    label: str
    phrase: str
    speech_start_ms: float | None
    speech_end_ms: float | None
    duration_s: float
    artefacts: list = field(default_factory=list)   # dicts: kind, onset_ms, duration_ms[, key]
    leading_silence_ms: float = 0.0
    early_speech: bool = False
    corrupted: bool = False
    long_phrase: bool = False

    def has(self, kind):
        return any(a["kind"] == kind for a in self.artefacts)


def _bonafide(fid, subset, phrase, spec: CorpusSpec, rng, seed):
    fs = spec.sample_rate
    early = rng.random() < spec.p_early_speech_bonafide
    bcs = rng.random() < spec.p_bcs_bonafide
    sil = rng.random() < spec.p_silence_bonafide
    long_inst = phrase[0] == "S02" and rng.random() < spec.p_long_s02

    sil_ms = 0.0
    if sil:
        hi = 60.0 if bcs else 150.0
        sil_ms = _avoid(rng.uniform(12.0, hi), (70.0, 100.0), rng, 12.0, hi)
    click_ms = rng.uniform(max(5.0, sil_ms + 5.0), 95.0) if bcs else None
    if early:
        lo = max(15.0, sil_ms + 15.0, (click_ms + 35.0) if bcs else 0.0)
        start = rng.uniform(lo, 270.0)
    else:
        start = rng.uniform(*spec.late_lead_bonafide_ms)

    x, span = synth_utterance(phrase, seed, fs, lead_ms=start,
                              trail_ms=rng.uniform(*spec.trail_bonafide_ms),
                              ambient_level=spec.ambient_level, long_instance=long_inst)
    x = record(x, spec.channel, seed + 2)
    samples = x.samples.copy()
    arts = []
    if sil:
        samples[:ms_to_samples(sil_ms, fs)] = 0.0
        arts.append({"kind": "SILENCE", "onset_ms": 0.0, "duration_ms": sil_ms})
    if bcs:
        click = make_click(rng.uniform(1.0, 3.0), fs, rng)
        at = ms_to_samples(click_ms, fs)
        samples[at:at + click.size] += click
        arts.append({"kind": "BCS", "onset_ms": click_ms, "duration_ms": 1000.0 * click.size / fs})
    sig = quantize(AudioSignal(samples, fs))
    return sig, FileTruth(fid, subset, BONAFIDE, phrase[0], span.start_ms, span.end_ms,
                          sig.duration_ms / 1000.0, arts, sil_ms, span.start_ms < 300.0,
                          False, long_inst)


def _spoof(fid, subset, phrase, spec: CorpusSpec, rng, seed):
    fs = spec.sample_rate
    early = rng.random() < spec.p_early_speech_spoof
    dtmf = early and rng.random() < spec.p_dtmf_spoof / max(spec.p_early_speech_spoof, 1e-12)
    bcs = (not dtmf) and rng.random() < spec.p_bcs_spoof
    long_inst = phrase[0] == "S02" and rng.random() < spec.p_long_s02

    click_ms = rng.uniform(5.0, 60.0) if bcs else None
    if early:
        lo = max(10.0, (click_ms + 35.0) if bcs else 0.0)
        start = rng.uniform(lo, 200.0 if dtmf else 270.0)
    else:
        start = rng.uniform(*spec.late_lead_spoof_ms)

    clean, span = synth_utterance(phrase, seed, fs, lead_ms=start,
                                  trail_ms=rng.uniform(*spec.trail_spoof_ms),
                                  ambient_level=spec.ambient_level, long_instance=long_inst)
    replay = record(simulate_replay(clean, spec.channel, seed + 1), spec.channel, seed + 2)
    samples = replay.samples.copy()
    arts = []
    if dtmf:
        dur = rng.uniform(60.0, 100.0)
        onset = max(0.0, start - rng.uniform(10.0, 60.0))
        onset = min(onset, 250.0 - dur)
        key = "0123456789*#ABCD"[int(rng.integers(0, 16))]
        lo_ = ms_to_samples(onset, fs)
        speech_rms = np.sqrt(np.mean(samples[ms_to_samples(span.start_ms, fs):
                                             ms_to_samples(span.end_ms, fs)] ** 2))
        tone = make_dtmf(key, dur, fs, speech_rms)
        samples[lo_:lo_ + tone.size] += tone
        arts.append({"kind": "DTMF", "onset_ms": onset, "duration_ms": dur, "key": key})
    if bcs:
        click = make_click(rng.uniform(1.0, 3.0), fs, rng)
        at = ms_to_samples(click_ms, fs)
        samples[at:at + click.size] += click
        arts.append({"kind": "BCS", "onset_ms": click_ms, "duration_ms": 1000.0 * click.size / fs})
    sig = quantize(AudioSignal(np.clip(samples, -0.99, 0.99), fs))
    return sig, FileTruth(fid, subset, SPOOF, phrase[0], span.start_ms, span.end_ms,
                          sig.duration_ms / 1000.0, arts, 0.0, span.start_ms < 300.0,
                          False, long_inst)


def _corrupted(fid, subset, label, phrase, spec: CorpusSpec, rng, seed):
    fs = spec.sample_rate
    n = ms_to_samples(rng.uniform(1000.0, 2000.0), fs)
    x = AudioSignal(spec.ambient_level * np.random.default_rng(seed).standard_normal(n), fs)
    if label == SPOOF:
        x = simulate_replay(x, spec.channel, seed + 1)
    x = record(x, spec.channel, seed + 2)
    sig = quantize(x)
    return sig, FileTruth(fid, subset, label, phrase[0], None, None, sig.duration_ms / 1000.0,
                          [], 0.0, False, True, False)


def _layout(spec: CorpusSpec):
    """(subset, file_id, label, phrase, corrupted) for every file, in id order."""
    rng = np.random.default_rng(spec.seed)
    out = []
    for subset in SUBSETS:
        n_bona, n_spoof = spec.counts[subset]
        labels = np.array([BONAFIDE] * n_bona + [SPOOF] * n_spoof)
        labels = labels[rng.permutation(labels.size)]
        for i, label in enumerate(labels, 1):
            phrase = spec.phrases[int(rng.integers(0, len(spec.phrases)))]
            out.append([subset, f"{PREFIX[subset]}_{i:06d}", str(label), phrase, False])
    # corrupted files: half bonafide, half spoof, from the training set
    train = [row for row in out if row[0] == "train"]
    for k in range(spec.n_corrupted):
        want = BONAFIDE if k % 2 == 0 else SPOOF
        pool = [row for row in train if row[2] == want and not row[4]]
        pool[int(rng.integers(0, len(pool)))][4] = True
    return out


def generate_file(spec: CorpusSpec, subset, file_id, label, phrase, corrupted):
    seed = file_seed(spec.seed, file_id) % (2 ** 32)
    rng = np.random.default_rng(seed)
    if corrupted:
        return _corrupted(file_id, subset, label, phrase, spec, rng, seed)
    if label == BONAFIDE:
        return _bonafide(file_id, subset, phrase, spec, rng, seed)
    return _spoof(file_id, subset, phrase, spec, rng, seed)


def generate_corpus(spec: CorpusSpec, out_dir) -> dict:
    """Write WAVs, protocols, annotations, artefact lists and ground truth.

    Layout::

        out_dir/wav/<file_id>.wav
        out_dir/protocols/{train,dev,eval}.txt   <file_id> <label> <phrase>
        out_dir/annotations.txt                  true speech endpoints
        out_dir/artefacts_truth.txt              <file_id> <KIND> <onset_ms> <duration_ms>
        out_dir/ground_truth.json
        out_dir/corpus_spec.json

    Returns the ground-truth dict (file_id -> FileTruth).
    """
    wav_dir = os.path.join(out_dir, "wav")
    proto_dir = os.path.join(out_dir, "protocols")
    os.makedirs(wav_dir, exist_ok=True)
    os.makedirs(proto_dir, exist_ok=True)

    truth: dict[str, FileTruth] = {}
    protocols = {s: [] for s in SUBSETS}
    for subset, fid, label, phrase, corrupted in _layout(spec):
        sig, ft = generate_file(spec, subset, fid, label, phrase, corrupted)
        save_wav(sig, os.path.join(wav_dir, f"{fid}.wav"))
        truth[fid] = ft
        protocols[subset].append(ProtocolEntry(fid, label, phrase[0]))

    for subset, entries in protocols.items():
        write_protocol(entries, os.path.join(proto_dir, f"{subset}.txt"))
    write_annotations([EndpointAnnotation(f, t.speech_start_ms, t.speech_end_ms, "manual")
                       for f, t in truth.items() if not t.corrupted],
                      os.path.join(out_dir, "annotations.txt"))
    with open(os.path.join(out_dir, "artefacts_truth.txt"), "w") as fh:
        for fid in sorted(truth):
            for a in truth[fid].artefacts:
                fh.write(f"{fid} {a['kind']} {a['onset_ms']!r} {a['duration_ms']!r}\n")
    with open(os.path.join(out_dir, "ground_truth.json"), "w") as fh:
        json.dump({f: asdict(t) for f, t in sorted(truth.items())}, fh, indent=1, sort_keys=True)
    with open(os.path.join(out_dir, "corpus_spec.json"), "w") as fh:
        json.dump(spec.to_dict(), fh, indent=1, sort_keys=True)
    return truth


def load_ground_truth(path) -> dict:
    with open(path) as fh:
        raw = json.load(fh)
    return {f: FileTruth(**d) for f, d in raw.items()}
