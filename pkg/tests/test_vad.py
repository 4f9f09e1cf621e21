import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spoofaudit.audio import AudioSignal, TimeSpan
from spoofaudit.synth import synth_utterance
from spoofaudit.synth import make_dtmf
from spoofaudit.vad import (AnnotationError, EndpointAnnotation, NoSpeechError, VadConfig,
                            detect_endpoints, dtmf_pairs, parse_annotations, suppress_dtmf,
                            trim_to_endpoints, write_annotations)

FS = 16000
HOP = VadConfig().hop_ms


def burst(lead_ms=300, tone_ms=1000, tail_ms=200, freq=300.0, noise=0.0, seed=0):
    n_lead, n_tone, n_tail = (int(v * FS / 1000) for v in (lead_ms, tone_ms, tail_ms))
    t = np.arange(n_tone) / FS
    x = np.concatenate([np.zeros(n_lead), 0.5 * np.sin(2 * np.pi * freq * t), np.zeros(n_tail)])
    if noise:
        x += noise * np.random.default_rng(seed).standard_normal(x.size)
    return AudioSignal(x, FS)


def test_tone_burst_span():
    span = detect_endpoints(burst())
    assert span.start_ms == pytest.approx(300, abs=HOP)
    assert span.end_ms == pytest.approx(1300, abs=HOP)


def test_tone_burst_in_noise():
    span = detect_endpoints(burst(noise=1e-3))
    assert span.start_ms == pytest.approx(300, abs=HOP)
    assert span.end_ms == pytest.approx(1300, abs=HOP)


def test_all_zero_is_no_speech():
    with pytest.raises(NoSpeechError):
        detect_endpoints(AudioSignal(np.zeros(FS), FS))
    with pytest.raises(NoSpeechError):
        detect_endpoints(AudioSignal(np.zeros(100), FS))


def test_white_noise_only_has_high_zcr():
    x = AudioSignal(0.1 * np.random.default_rng(0).standard_normal(FS), FS)
    with pytest.raises(NoSpeechError):
        detect_endpoints(x)


def test_speech_from_sample_zero():
    x, _ = synth_utterance(("S01", 1.5), seed=3, lead_ms=0.0, trail_ms=200.0)
    assert detect_endpoints(x).start_ms <= HOP


def test_trim_examples():
    x = burst()
    full = TimeSpan(0, x.duration_ms)
    np.testing.assert_array_equal(trim_to_endpoints(x, full).samples, x.samples)
    y = trim_to_endpoints(x, detect_endpoints(x))
    assert abs(y.samples[0]) < 0.5 and len(y) < len(x)
    assert np.count_nonzero(y.samples[:16] == 0) < 16  # leading zeros gone
    again = detect_endpoints(y)
    assert again.start_ms <= HOP and again.end_ms >= y.duration_ms - HOP


def test_interior_pause_is_kept():
    # a 400 ms gap inside the utterance must survive trimming
    a = burst(200, 500, 0).samples
    b = burst(400, 500, 200).samples
    x = AudioSignal(np.concatenate([a, b]), FS)
    span = detect_endpoints(x)
    assert span.start_ms == pytest.approx(200, abs=HOP)
    assert span.end_ms == pytest.approx(1600, abs=HOP)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 400), st.integers(0, 400), st.integers(0, 2 ** 16))
def test_padding_does_not_change_speech_duration(lead, tail, seed):
    x, _ = synth_utterance(("S03", 1.0), seed=seed, lead_ms=150.0, trail_ms=150.0)
    d0 = detect_endpoints(x).duration_ms
    padded = AudioSignal(np.concatenate([np.zeros(lead * 16), x.samples, np.zeros(tail * 16)]), FS)
    assert abs(detect_endpoints(padded).duration_ms - d0) <= 2 * HOP


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 16))
def test_idempotence(seed):
    x, _ = synth_utterance(("S01", 1.2), seed=seed)
    y = trim_to_endpoints(x, detect_endpoints(x))
    z = trim_to_endpoints(y, detect_endpoints(y))
    assert abs(z.duration_ms - y.duration_ms) <= 2 * HOP


def test_endpoint_accuracy_on_synthetic_utterances():
    rng = np.random.default_rng(11)
    errors = []
    for i in range(200):
        lead = float(rng.uniform(0, 600))
        x, true = synth_utterance(("S0", float(rng.uniform(0.7, 2.2))), seed=i, lead_ms=lead)
        span = detect_endpoints(x)
        errors.append(max(abs(span.start_ms - true.start_ms), abs(span.end_ms - true.end_ms)))
    errors = np.array(errors)
    assert np.mean(errors <= 50) >= 0.95
    assert errors.mean() <= 50


def with_tone(x, key, onset_ms, dur_ms, amp):
    s = x.samples.copy()
    tone = make_dtmf(key, dur_ms, FS, amp)
    at = int(onset_ms * FS / 1000)
    s[at:at + tone.size] += tone
    return AudioSignal(s, FS)


def test_dtmf_pairs_identifies_key():
    tone = make_dtmf("8", 40.0, FS, 0.3)[160:480].reshape(2, 160)  # 852 Hz + 1336 Hz
    lo, hi, share = dtmf_pairs(tone, FS)
    assert list(lo) == [2, 2] and list(hi) == [1, 1]
    assert np.all(share > 0.9)
    noise = np.random.default_rng(0).standard_normal((3, 160))
    assert np.all(dtmf_pairs(noise, FS)[2] < 0.6)


def test_suppress_dtmf_zeroes_tone_only():
    x, _ = synth_utterance(("S0", 1.0), seed=3, lead_ms=400.0)
    y = with_tone(x, "4", 100.0, 80.0, 0.3)
    out = suppress_dtmf(y).samples
    assert np.max(np.abs(out[1760:2880])) == 0.0   # 110..180 ms: tone interior
    np.testing.assert_array_equal(out[8000:], y.samples[8000:])
    np.testing.assert_array_equal(suppress_dtmf(y, VadConfig(reject_dtmf=False)).samples,
                                  y.samples)


@pytest.mark.parametrize("gap_ms", [10.0, 30.0, 60.0])
def test_dtmf_before_speech_not_an_endpoint(gap_ms):
    x, true = synth_utterance(("S0", 1.2), seed=4, lead_ms=200.0)
    y = with_tone(x, "9", 200.0 - gap_ms - 70.0, 70.0 + gap_ms / 2, 0.3)
    span = detect_endpoints(y)
    assert abs(span.start_ms - true.start_ms) <= 20.0
    assert detect_endpoints(y, VadConfig(reject_dtmf=False)).start_ms < true.start_ms - 20.0


@pytest.mark.parametrize("gap_ms", [5.0, 15.0])
def test_click_before_speech_not_an_endpoint(gap_ms):
    x, true = synth_utterance(("S0", 1.2), seed=5, lead_ms=200.0)
    y = x.samples.copy()
    at = int((true.start_ms - gap_ms - 3.0) * 16)
    y[at:at + 48] += 0.5 * np.hanning(48)  # 3 ms pop
    y = AudioSignal(y, 16000)
    assert abs(detect_endpoints(y).start_ms - true.start_ms) <= 20.0
    assert detect_endpoints(y, VadConfig(min_burst_ms=0.0)).start_ms < true.start_ms - gap_ms


# -- annotation files -----------------------------------------------------------

def test_parse_line(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("# header\nT_000001 312.5 1840.0  # trailing comment\n\n")
    a = parse_annotations(p)["T_000001"]
    assert (a.speech_start_ms, a.speech_end_ms, a.source) == (312.5, 1840.0, "manual")


@pytest.mark.parametrize("text,needle", [
    ("A 1 2\nA 3 4\n", "duplicate file_id A"),
    ("A 1\n", ":1:"),
    ("A 1 2\nB x 3\n", ":2:"),
    ("A 5 2\n", ":1:"),
])
def test_parse_errors(tmp_path, text, needle):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(AnnotationError, match=needle):
        parse_annotations(p)


def test_annotation_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    anns = {}
    for i in range(1000):
        start = float(rng.uniform(0, 1000))
        anns[f"F_{i:06d}"] = EndpointAnnotation(f"F_{i:06d}", start, start + float(rng.uniform(1e-3, 3000)))
    write_annotations(anns, tmp_path / "a.txt")
    assert parse_annotations(tmp_path / "a.txt") == anns


def test_config_validation():
    with pytest.raises(ValueError):
        VadConfig(zcr_threshold=0)
    with pytest.raises(ValueError):
        VadConfig(hangover_frames=-1)
