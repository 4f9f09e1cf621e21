"""Energy plus zero-crossing speech endpoint detection and annotation files.

The detector only locates the first and last speech frame; nothing between
the endpoints is ever removed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioSignal, TimeSpan, ms_to_samples, slice_signal


DTMF_LOW = (697.0, 770.0, 852.0, 941.0)
DTMF_HIGH = (1209.0, 1336.0, 1477.0, 1633.0)
DTMF_KEYS = ("123A", "456B", "789C", "*0#D")


class NoSpeechError(ValueError):
    """Raised when a signal contains no frame classified as speech."""


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class VadConfig:
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    energy_percentile_floor: float = 3.0
    energy_ratio_threshold: float = 4.0
    zcr_threshold: float = 0.35
    hangover_frames: int = 5
    min_speech_ms: float = 100.0
    # raw detections spanning less than this are impulses (clicks, pops) and
    # are dropped before the hangover can join them to nearby speech
    min_burst_ms: float = 30.0
    # sub-blocks used to place an endpoint inside its boundary frame
    refine_ms: float = 2.5
    absolute_floor: float = 1e-12
    # the noise floor is never placed closer than this to the loudest frame
    dynamic_range_db: float = 30.0
    # frames quieter than this (mean square, dB re full scale) are never speech
    min_level_db: float = -60.0
    # hop-sized blocks dominated by one DTMF row/column pair are signalling,
    # not speech; they are silenced before detection
    reject_dtmf: bool = True
    dtmf_share: float = 0.6
    dtmf_edge_share: float = 0.25
    dtmf_margin: float = 2.0

    def __post_init__(self):
        if min(self.frame_ms, self.hop_ms, self.energy_ratio_threshold,
               self.zcr_threshold) <= 0:
            raise ValueError("VAD thresholds and frame sizes must be positive")
        if self.min_burst_ms < 0:
            raise ValueError("min_burst_ms must be >= 0")
        if self.hangover_frames < 0:
            raise ValueError("hangover_frames must be >= 0")


@dataclass(frozen=True)
class EndpointAnnotation:
    file_id: str
    speech_start_ms: float
    speech_end_ms: float
    source: str = "manual"

    def __post_init__(self):
        if not (0 <= self.speech_start_ms < self.speech_end_ms):
            raise AnnotationError(
                f"{self.file_id}: need 0 <= start < end, got "
                f"{self.speech_start_ms}, {self.speech_end_ms}")

    @property
    def span(self) -> TimeSpan:
        return TimeSpan(self.speech_start_ms, self.speech_end_ms)


def frame_features(signal: AudioSignal, config: VadConfig):
    """Per-frame mean energy and zero-crossing rate."""
    fs = signal.sample_rate
    win = ms_to_samples(config.frame_ms, fs)
    hop = ms_to_samples(config.hop_ms, fs)
    x = signal.samples
    if len(x) < win:
        x = np.concatenate([x, np.zeros(win - len(x))])
    frames = np.lib.stride_tricks.sliding_window_view(x, win)[::hop]
    energy = np.mean(frames ** 2, axis=1)
    signs = np.sign(frames)
    zcr = np.mean(signs[:, 1:] * signs[:, :-1] < 0, axis=1)
    return energy, zcr, win, hop


def _fill_gaps(mask: np.ndarray, max_gap: int, barrier=None) -> np.ndarray:
    out = mask.copy()
    idx = np.flatnonzero(mask)
    for a, b in zip(idx[:-1], idx[1:]):
        if 1 < b - a <= max_gap + 1 and (barrier is None or not barrier[a + 1:b].any()):
            out[a:b] = True
    return out


def _drop_short_runs(mask: np.ndarray, min_len: int) -> np.ndarray:
    out = mask.copy()
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(int)))
    for start, stop in zip(edges[::2], edges[1::2]):
        if stop - start < min_len:
            out[start:stop] = False
    return out


def tone_powers(blocks: np.ndarray, freqs, sample_rate: int) -> np.ndarray:
    """|X(f)|^2 per block (rows) and frequency; the Goertzel value, vectorised."""
    n = blocks.shape[1]
    basis = np.exp(-2j * np.pi * np.outer(freqs, np.arange(n)) / sample_rate)
    return np.abs(blocks @ basis.T) ** 2


def dtmf_pairs(blocks: np.ndarray, sample_rate: int, margin: float = 2.0):
    """Dominant DTMF row and column index per block (-1 without a clear winner)
    and the share of block energy carried by that tone pair."""
    powers = tone_powers(blocks, DTMF_LOW + DTMF_HIGH, sample_rate)
    rows = np.arange(len(blocks))
    picks = []
    for group in (powers[:, :4], powers[:, 4:]):
        w = np.argmax(group, axis=1)
        top = group[rows, w]
        rest = (group.sum(axis=1) - top) / 3.0
        picks.append(np.where(top > margin * rest, w, -1))
    lo, hi = picks
    energy = np.sum(blocks ** 2, axis=1)
    pair = powers[rows, np.maximum(lo, 0)] + powers[rows, 4 + np.maximum(hi, 0)]
    with np.errstate(divide="ignore", invalid="ignore"):
        share = np.where(energy > 0, 2.0 * pair / (blocks.shape[1] * energy), 0.0)
    return lo, hi, np.where((lo >= 0) & (hi >= 0), share, 0.0)


def suppress_dtmf(signal: AudioSignal, config: VadConfig = VadConfig()) -> AudioSignal:
    """Copy of ``signal`` with every DTMF-dominated hop block set to zero."""
    return _suppress_dtmf(signal, config)[0]


def _suppress_dtmf(signal, config):
    hop = ms_to_samples(config.hop_ms, signal.sample_rate)
    n = len(signal) // hop
    if not config.reject_dtmf or n == 0:
        return signal, np.zeros(len(signal), dtype=bool)
    x = signal.samples.copy()
    blocks = x[:n * hop].reshape(n, hop)
    lo, hi, share = dtmf_pairs(blocks, signal.sample_rate, config.dtmf_margin)
    tonal = share >= config.dtmf_share
    # blocks straddling a tone edge hold only part of it: accept the same key
    # at a lower share next to a fully tonal block
    edge = share >= config.dtmf_edge_share
    same_prev = np.r_[False, (lo[1:] == lo[:-1]) & (hi[1:] == hi[:-1])]
    same_next = np.r_[same_prev[1:], False]
    grown = tonal.copy()
    grown[1:] |= tonal[:-1] & same_prev[1:] & edge[1:]
    grown[:-1] |= tonal[1:] & same_next[:-1] & edge[:-1]
    blocks[grown] = 0.0
    silenced = np.zeros(len(x), dtype=bool)
    silenced[:n * hop] = np.repeat(grown, hop)
    return AudioSignal(x, signal.sample_rate), silenced


def speech_mask(signal: AudioSignal, config: VadConfig = VadConfig()):
    signal, silenced = _suppress_dtmf(signal, config)
    energy, zcr, win, hop = frame_features(signal, config)
    # the hangover never bridges across a silenced tone
    counts = np.concatenate([[0], np.cumsum(silenced)])
    starts = np.arange(len(energy)) * hop
    ends = np.minimum(starts + win, len(silenced))
    barrier = 2 * (counts[ends] - counts[np.minimum(starts, len(silenced))]) >= win
    # digitally silent frames would drag the percentile to zero; estimate the
    # floor from the frames that carry any signal at all
    live = energy[energy > config.absolute_floor]
    floor = np.percentile(live, config.energy_percentile_floor) if live.size else 0.0
    # with no noise-only frames (clean tone, already trimmed speech) the
    # percentile lands inside speech; cap it well below the peak
    floor = min(floor, energy.max() * 10.0 ** (-config.dynamic_range_db / 10.0))
    floor = max(floor, config.absolute_floor)
    threshold = max(floor * config.energy_ratio_threshold, 10.0 ** (config.min_level_db / 10.0))
    raw = (energy > threshold) & (zcr < config.zcr_threshold)
    # a burst of d ms lights about (d + frame) / hop overlapping frames
    burst = int(round((config.min_burst_ms + config.frame_ms) / config.hop_ms)) - 1
    raw = _drop_short_runs(raw, burst)
    mask = _fill_gaps(raw, config.hangover_frames, barrier)
    min_frames = max(1, int(np.ceil((config.min_speech_ms - config.frame_ms)
                                    / config.hop_ms)) + 1)
    return _drop_short_runs(mask, min_frames), threshold, win, hop


def detect_endpoints(signal: AudioSignal, config: VadConfig = VadConfig()) -> TimeSpan:
    """Span from the first to the last speech frame.

    Boundaries are refined to the first/last ``refine_ms`` block inside the
    boundary frame whose energy clears the speech threshold.
    """
    if signal.duration_ms < config.min_speech_ms:
        raise NoSpeechError(f"signal of {signal.duration_ms:.1f} ms is shorter "
                            f"than min_speech_ms={config.min_speech_ms}")
    mask, threshold, win, hop = speech_mask(signal, config)
    hits = np.flatnonzero(mask)
    if hits.size == 0:
        raise NoSpeechError("no speech frames found")

    x = suppress_dtmf(signal, config).samples
    n = len(x)
    block = max(1, ms_to_samples(config.refine_ms, signal.sample_rate))

    def block_energy(lo, hi):
        seg = x[lo:min(hi, n)]
        usable = (seg.size // block) * block
        if usable == 0:
            return np.array([np.mean(seg ** 2)]) if seg.size else np.zeros(1)
        return np.mean(seg[:usable].reshape(-1, block) ** 2, axis=1)

    lo = hits[0] * hop
    loud = np.flatnonzero(block_energy(lo, lo + win) > threshold)
    start = lo + (loud[0] * block if loud.size else 0)

    hi = min(hits[-1] * hop + win, n)
    seg_lo = max(hi - win, 0)
    seg_lo += (hi - seg_lo) % block
    loud = np.flatnonzero(block_energy(seg_lo, hi) > threshold)
    end = seg_lo + (loud[-1] + 1) * block if loud.size else hi
    end = min(max(end, start + 1), n)

    fs = signal.sample_rate
    return TimeSpan(1000.0 * start / fs, 1000.0 * end / fs)


def trim_to_endpoints(signal: AudioSignal, span: TimeSpan) -> AudioSignal:
    return slice_signal(signal, span)


# ---------------------------------------------------------------------------
# annotation files: "<file_id> <start_ms> <end_ms>" per line, '#' comments

def parse_annotations(path, source: str = "manual") -> dict[str, EndpointAnnotation]:
    out: dict[str, EndpointAnnotation] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 3:
                raise AnnotationError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            file_id = parts[0]
            try:
                start, end = float(parts[1]), float(parts[2])
            except ValueError:
                raise AnnotationError(f"{path}:{lineno}: non-numeric endpoint") from None
            if file_id in out:
                raise AnnotationError(f"{path}:{lineno}: duplicate file_id {file_id}")
            try:
                out[file_id] = EndpointAnnotation(file_id, start, end, source)
            except AnnotationError as exc:
                raise AnnotationError(f"{path}:{lineno}: {exc}") from None
    return out


def write_annotations(annotations, path) -> None:
    items = annotations.values() if isinstance(annotations, dict) else annotations
    with open(path, "w") as fh:
        for a in sorted(items, key=lambda a: a.file_id):
            fh.write(f"{a.file_id} {a.speech_start_ms!r} {a.speech_end_ms!r}\n")
