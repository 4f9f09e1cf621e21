"""Heuristic artefact detectors and corpus-level prevalence reports.

The click and DTMF detectors are heuristics calibrated on synthetic audio;
reports mark them as such.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict, field

import numpy as np

from .audio import AudioSignal, PCM_SCALE, WavError, load_wav, ms_to_samples
from .vad import (DTMF_HIGH, DTMF_KEYS, DTMF_LOW, NoSpeechError, VadConfig, detect_endpoints,
                  tone_powers)

ARTEFACT_NAMES = ("early_speech", "bcs", "dtmf", "silence_10ms", "silence_70ms",
                  "silence_100ms", "corrupted", "duration_anomaly")
HEURISTIC = ("bcs", "dtmf")


@dataclass(frozen=True)
class AuditConfig:
    zero_tol: float = 1.0 / PCM_SCALE
    bcs_window_ms: float = 100.0
    bcs_sub_ms: float = 2.0
    bcs_context_ms: float = 50.0
    click_ratio: float = 6.0
    click_abs_floor: float = 0.05
    dtmf_scan_ms: float = 250.0
    dtmf_hop_ms: float = 20.0
    dtmf_margin: float = 2.0
    dtmf_min_hops: int = 2
    # share of block energy the two tones must carry; keeps broadband noise out
    dtmf_min_fraction: float = 0.15
    early_speech_ms: float = 300.0
    duration_factor: float = 2.0
    duration_limits: dict = field(default_factory=dict)   # phrase -> seconds, overrides
    vad: VadConfig = VadConfig()

    @classmethod
    def from_dict(cls, d: dict) -> "AuditConfig":
        d = dict(d)
        if "vad" in d:
            d["vad"] = VadConfig(**d["vad"])
        return cls(**d)


@dataclass
class ArtefactFlags:
    file_id: str
    leading_silence_ms: float
    has_bcs_start: bool
    bcs_onset_ms: float | None
    bcs_score: float
    dtmf_key: str | None
    dtmf_onset_ms: float | None
    dtmf_duration_ms: float | None
    early_speech_300ms: bool
    is_corrupted: bool
    duration_s: float
    speech_start_ms: float | None = None
    speech_end_ms: float | None = None
    duration_anomaly: bool = False

    @property
    def speech_duration_s(self):
        if self.speech_start_ms is None:
            return None
        return (self.speech_end_ms - self.speech_start_ms) / 1000.0


# ---------------------------------------------------------------------------
# single-file detectors

def detect_leading_silence(signal: AudioSignal, zero_tol: float = 1.0 / PCM_SCALE) -> float:
    """Length in ms of the longest prefix with |sample| <= zero_tol."""
    loud = np.flatnonzero(np.abs(signal.samples) > zero_tol)
    n = loud[0] if loud.size else len(signal)
    return 1000.0 * n / signal.sample_rate


def _rms(x):
    return float(np.sqrt(np.mean(x ** 2))) if x.size else 0.0


def detect_burst_click(signal: AudioSignal, window_ms: float = 100.0, sub_ms: float = 2.0,
                       context_ms: float = 50.0, click_ratio: float = 6.0,
                       click_abs_floor: float = 0.05):
    """Look for an abrupt transient in the first ``window_ms``.

    Slides a ``sub_ms`` window in 1 ms steps; a click is a sub-window whose
    RMS exceeds both ``click_abs_floor`` and ``click_ratio`` times the RMS
    of the surrounding ``context_ms`` (half on each side, sub-window
    excluded).  Returns (found, best ratio, onset ms of the best sub-window).
    """
    fs = signal.sample_rate
    x = signal.samples
    sub = max(1, ms_to_samples(sub_ms, fs))
    half = ms_to_samples(context_ms / 2.0, fs)
    step = max(1, ms_to_samples(1.0, fs))
    limit = min(len(x), ms_to_samples(window_ms, fs))
    found, best, onset = False, 0.0, None
    for lo in range(0, max(limit - sub, 0) + 1, step):
        seg = x[lo:lo + sub]
        level = _rms(seg)
        if level <= click_abs_floor:
            continue
        context = np.concatenate([x[max(0, lo - half):lo], x[lo + sub:lo + sub + half]])
        ratio = level / max(_rms(context), 1e-12)
        if ratio > best:
            best, onset = ratio, 1000.0 * lo / fs
        if ratio > click_ratio:
            found = True
    return found, best, onset


def goertzel_power(block: np.ndarray, freq: float, sample_rate: int) -> float:
    """|X(f)|^2 of a block at an arbitrary frequency (Goertzel recurrence)."""
    coeff = 2.0 * np.cos(2.0 * np.pi * freq / sample_rate)
    s1 = s2 = 0.0
    for v in block:
        s1, s2 = v + coeff * s1 - s2, s1
    return s1 * s1 + s2 * s2 - coeff * s1 * s2


def dtmf_hops(signal: AudioSignal, scan_ms: float = 250.0, hop_ms: float = 20.0,
              margin: float = 2.0, min_fraction: float = 0.15):
    """Per-hop DTMF key (or None) over the first ``scan_ms``."""
    fs = signal.sample_rate
    hop = ms_to_samples(hop_ms, fs)
    limit = min(len(signal), ms_to_samples(scan_ms, fs))
    n_blocks = limit // hop
    if n_blocks == 0:
        return []
    blocks = signal.samples[:n_blocks * hop].reshape(n_blocks, hop)
    energy = np.sum(blocks ** 2, axis=1)
    powers = tone_powers(blocks, DTMF_LOW + DTMF_HIGH, fs)
    keys = []
    for b in range(n_blocks):
        picks = []
        for group in (powers[b, :4], powers[b, 4:]):
            w = int(np.argmax(group))
            others = np.delete(group, w)
            picks.append(w if group[w] > margin * others.mean() else None)
        lo, hi = picks
        if lo is None or hi is None or energy[b] <= 0:
            keys.append(None)
            continue
        share = 2.0 * (powers[b, lo] + powers[b, 4 + hi]) / (hop * energy[b])
        keys.append(DTMF_KEYS[lo][hi] if share >= min_fraction else None)
    return keys


def detect_dtmf(signal: AudioSignal, scan_ms: float = 250.0, hop_ms: float = 20.0,
                margin: float = 2.0, min_hops: int = 2, min_fraction: float = 0.15):
    """(key, onset_ms, duration_ms) of the first persistent DTMF key, else (None, None, None)."""
    keys = dtmf_hops(signal, scan_ms, hop_ms, margin, min_fraction)
    b = 0
    while b < len(keys):
        if keys[b] is None:
            b += 1
            continue
        e = b
        while e + 1 < len(keys) and keys[e + 1] == keys[b]:
            e += 1
        if e - b + 1 >= min_hops:
            return keys[b], b * hop_ms, (e - b + 1) * hop_ms
        b = e + 1
    return None, None, None


def has_early_speech(signal: AudioSignal, vad: VadConfig = VadConfig(),
                     limit_ms: float = 300.0) -> bool:
    try:
        return detect_endpoints(signal, vad).start_ms < limit_ms
    except NoSpeechError:
        return False


def audit_signal(file_id: str, signal: AudioSignal, config: AuditConfig = AuditConfig()) -> ArtefactFlags:
    c = config
    bcs, score, onset = detect_burst_click(signal, c.bcs_window_ms, c.bcs_sub_ms,
                                           c.bcs_context_ms, c.click_ratio, c.click_abs_floor)
    key, d_on, d_dur = detect_dtmf(signal, c.dtmf_scan_ms, c.dtmf_hop_ms, c.dtmf_margin,
                                   c.dtmf_min_hops, c.dtmf_min_fraction)
    try:
        span = detect_endpoints(signal, c.vad)
        corrupted, start, end = False, span.start_ms, span.end_ms
    except NoSpeechError:
        corrupted, start, end = True, None, None
    return ArtefactFlags(
        file_id=file_id,
        leading_silence_ms=detect_leading_silence(signal, c.zero_tol),
        has_bcs_start=bool(bcs), bcs_onset_ms=onset if bcs else None, bcs_score=float(score),
        dtmf_key=key, dtmf_onset_ms=d_on, dtmf_duration_ms=d_dur,
        early_speech_300ms=bool((not corrupted) and start < c.early_speech_ms),
        is_corrupted=corrupted, duration_s=signal.duration_ms / 1000.0,
        speech_start_ms=start, speech_end_ms=end)


# ---------------------------------------------------------------------------
# corpus level

@dataclass(frozen=True)
class ProtocolEntry:
    file_id: str
    label: str
    phrase: str


def read_protocol(path) -> list[ProtocolEntry]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected '<file_id> <label> <phrase>'")
            out.append(ProtocolEntry(*parts))
    return out


def write_protocol(entries, path) -> None:
    with open(path, "w") as fh:
        for e in entries:
            fh.write(f"{e.file_id} {e.label} {e.phrase}\n")


def flag_duration_anomalies(flags: dict, phrases: dict, config: AuditConfig) -> dict:
    """Mark files whose detected speech lasts over the phrase limit.

    The default limit is ``duration_factor`` times the phrase's median
    speech duration; ``config.duration_limits`` overrides per phrase.
    Returns the limit used per phrase.
    """
    by_phrase: dict[str, list[float]] = {}
    for fid, f in flags.items():
        if f.speech_duration_s is not None:
            by_phrase.setdefault(phrases[fid], []).append(f.speech_duration_s)
    limits = {p: config.duration_limits.get(p, config.duration_factor * float(np.median(v)))
              for p, v in by_phrase.items()}
    for fid, f in flags.items():
        d = f.speech_duration_s
        f.duration_anomaly = bool(d is not None and d > limits[phrases[fid]])
    return limits


def artefact_present(flags: ArtefactFlags, name: str) -> bool:
    return {
        "early_speech": flags.early_speech_300ms,
        "bcs": flags.has_bcs_start,
        "dtmf": flags.dtmf_key is not None,
        "silence_10ms": flags.leading_silence_ms > 10.0,
        "silence_70ms": flags.leading_silence_ms > 70.0,
        "silence_100ms": flags.leading_silence_ms > 100.0,
        "corrupted": flags.is_corrupted,
        "duration_anomaly": flags.duration_anomaly,
    }[name]


@dataclass
class ArtefactReport:
    flags: dict                 # file_id -> ArtefactFlags
    subsets: dict               # subset -> list[ProtocolEntry]
    missing: list
    duration_limits: dict

    def table(self) -> dict:
        """{subset: {label: {artefact: {count, total, percent, files}}}}."""
        out = {}
        for subset, entries in self.subsets.items():
            out[subset] = {}
            for label in sorted({e.label for e in entries}):
                ids = [e.file_id for e in entries if e.label == label and e.file_id in self.flags]
                row = {}
                for name in ARTEFACT_NAMES:
                    files = sorted(f for f in ids if artefact_present(self.flags[f], name))
                    row[name] = {"count": len(files), "total": len(ids),
                                 "percent": round(100.0 * len(files) / len(ids), 2) if ids else 0.0,
                                 "files": files}
                out[subset][label] = row
        return out

    def files_with(self, name: str) -> list[str]:
        return sorted(f for f, fl in self.flags.items() if artefact_present(fl, name))

    def to_dict(self):
        return {"heuristic_flags": list(HEURISTIC), "missing": self.missing,
                "duration_limits_s": self.duration_limits, "subsets": self.table(),
                "files": {f: asdict(fl) for f, fl in sorted(self.flags.items())}}

    def write(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)

    def side_info_lines(self) -> list[str]:
        lines = []
        for fid in sorted(self.flags):
            f = self.flags[fid]
            if f.has_bcs_start:
                lines.append(f"{fid} BCS {f.bcs_onset_ms!r} {2.0!r}")
            if f.dtmf_key is not None:
                lines.append(f"{fid} DTMF {f.dtmf_onset_ms!r} {f.dtmf_duration_ms!r}")
            if f.leading_silence_ms > 0:
                lines.append(f"{fid} SILENCE {0.0!r} {f.leading_silence_ms!r}")
        return lines


def audit_corpus(protocols: dict, audio_dir, config: AuditConfig = AuditConfig()) -> ArtefactReport:
    """Run every detector over the files listed in ``protocols`` (subset -> entries).

    Missing or unreadable files are collected in ``report.missing``.
    """
    flags, phrases, missing = {}, {}, []
    for subset in sorted(protocols):
        for e in protocols[subset]:
            path = os.path.join(audio_dir, f"{e.file_id}.wav")
            try:
                signal = load_wav(path)
            except (OSError, WavError) as exc:
                missing.append({"file_id": e.file_id, "error": str(exc)})
                continue
            flags[e.file_id] = audit_signal(e.file_id, signal, config)
            phrases[e.file_id] = e.phrase
    limits = flag_duration_anomalies(flags, phrases, config)
    return ArtefactReport(flags, dict(protocols), missing, limits)


# ---------------------------------------------------------------------------
# side-info lists: "<file_id> <BCS|DTMF|SILENCE> <onset_ms> <duration_ms>"

@dataclass(frozen=True)
class ArtefactMark:
    file_id: str
    kind: str
    onset_ms: float
    duration_ms: float


def write_side_info(lines_or_marks, path) -> None:
    with open(path, "w") as fh:
        for item in lines_or_marks:
            if isinstance(item, ArtefactMark):
                item = f"{item.file_id} {item.kind} {item.onset_ms!r} {item.duration_ms!r}"
            fh.write(item + "\n")


def read_side_info(path) -> list[ArtefactMark]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4 or parts[1] not in ("BCS", "DTMF", "SILENCE"):
                raise ValueError(f"{path}:{lineno}: malformed artefact line")
            out.append(ArtefactMark(parts[0], parts[1], float(parts[2]), float(parts[3])))
    return out
