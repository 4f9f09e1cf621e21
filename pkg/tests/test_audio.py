import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spoofaudit.audio import (AudioSignal, MalformedHeaderError, SampleRateMismatchError,
                              SpanError, TimeSpan, UnsupportedBitDepthError,
                              UnsupportedChannelsError, UnsupportedEncodingError, concat,
                              load_wav, ms_to_samples, quantize, sample_variance, save_wav,
                              slice_signal, unify_duration)

FS = 16000


def _wav_bytes(pcm: bytes, tag=1, channels=1, rate=FS, bits=16):
    align = channels * bits // 8
    fmt = struct.pack("<HHIIHH", tag, channels, rate, rate * align, align, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt + b"data" + struct.pack("<I", len(pcm)) + pcm
    return b"RIFF" + struct.pack("<I", len(body)) + body


def test_load_zero_file(tmp_path):
    p = tmp_path / "z.wav"
    p.write_bytes(_wav_bytes(np.zeros(16000, "<i2").tobytes()))
    x = load_wav(p)
    assert len(x) == 16000 and x.sample_rate == FS
    assert np.all(x.samples == 0.0)


def test_load_single_max_sample(tmp_path):
    p = tmp_path / "one.wav"
    p.write_bytes(_wav_bytes(np.array([32767], "<i2").tobytes()))
    assert load_wav(p).samples[0] == 32767 / 32768


@pytest.mark.parametrize("kw,err", [
    ({"tag": 3}, UnsupportedEncodingError),
    ({"channels": 2}, UnsupportedChannelsError),
    ({"bits": 8}, UnsupportedBitDepthError),
])
def test_load_rejects_unsupported(tmp_path, kw, err):
    p = tmp_path / "bad.wav"
    p.write_bytes(_wav_bytes(b"\0\0\0\0", **kw))
    with pytest.raises(err):
        load_wav(p)


def test_load_rejects_garbage_and_truncation(tmp_path):
    p = tmp_path / "g.wav"
    p.write_bytes(b"not a wav file at all")
    with pytest.raises(MalformedHeaderError):
        load_wav(p)
    good = _wav_bytes(np.zeros(100, "<i2").tobytes())
    p.write_bytes(good[:-20])  # data chunk shorter than declared
    with pytest.raises(MalformedHeaderError):
        load_wav(p)


def test_save_data_chunk_size(tmp_path):
    p = tmp_path / "s.wav"
    save_wav(AudioSignal(np.zeros(FS), FS), p)
    data = p.read_bytes()
    i = data.index(b"data")
    assert struct.unpack("<I", data[i + 4:i + 8])[0] == 32000


def test_save_to_missing_directory(tmp_path):
    with pytest.raises(OSError):
        save_wav(AudioSignal(np.zeros(10), FS), tmp_path / "nope" / "x.wav")


def test_round_trip_random_signals(tmp_path):
    rng = np.random.default_rng(0)
    p = tmp_path / "r.wav"
    for _ in range(100):
        x = AudioSignal(rng.uniform(-1, 1, int(rng.integers(1, 2000))), FS)
        save_wav(x, p)
        y = load_wav(p)
        assert np.max(np.abs(y.samples - x.samples)) <= 1 / 32768
    # quantize() predicts the file contents exactly
    np.testing.assert_array_equal(quantize(x).samples, y.samples)


def test_slice_examples():
    x = AudioSignal(np.arange(FS) / FS, FS)
    np.testing.assert_array_equal(slice_signal(x, TimeSpan(0, 1000)).samples, x.samples)
    assert len(slice_signal(x, TimeSpan(100, 1000))) == 14400
    assert len(slice_signal(x, TimeSpan(0, 0))) == 0
    with pytest.raises(SpanError):
        slice_signal(x, TimeSpan(0, 1001))
    with pytest.raises(SpanError):
        TimeSpan(10, 5)


def test_concat_examples():
    a = AudioSignal(np.ones(1600), FS)
    b = AudioSignal(-np.ones(14400), FS)
    ab = concat(a, b)
    assert len(ab) == 16000 and ab.samples[0] == 1.0
    np.testing.assert_array_equal(concat(a, AudioSignal.empty(FS)).samples, a.samples)
    np.testing.assert_array_equal(slice_signal(ab, TimeSpan(0, 100)).samples, a.samples)
    with pytest.raises(SampleRateMismatchError):
        concat(a, AudioSignal(np.ones(3), 8000))


def test_unify_duration_examples():
    p = np.random.default_rng(1).standard_normal(FS)
    x = AudioSignal(p, FS)
    np.testing.assert_array_equal(unify_duration(AudioSignal(np.resize(p, 4 * FS), FS), 4.0).samples,
                                  np.resize(p, 4 * FS))
    np.testing.assert_array_equal(unify_duration(x, 4.0).samples, np.tile(p, 4))
    long = AudioSignal(np.random.default_rng(2).standard_normal(5 * FS), FS)
    np.testing.assert_array_equal(unify_duration(long, 3.0).samples, long.samples[:3 * FS])
    with pytest.raises(ValueError):
        unify_duration(AudioSignal.empty(FS), 1.0)


@settings(max_examples=1000, deadline=None)
@given(st.integers(1, 5000), st.floats(0.001, 0.5))
def test_unify_duration_length(n, target):
    y = unify_duration(AudioSignal(np.ones(n), FS), target)
    assert len(y) == ms_to_samples(1000 * target, FS)


@given(st.integers(0, 3000), st.integers(0, 3000))
def test_slice_partition(n, cut):
    x = AudioSignal(np.zeros(n), 1000)  # 1 sample per ms keeps spans exact
    cut = min(cut, n)
    head = slice_signal(x, TimeSpan(0, cut))
    tail = slice_signal(x, TimeSpan(cut, n))
    assert len(head) + len(tail) == n


def test_sample_variance_examples():
    assert sample_variance(AudioSignal(np.full(10, 0.3), FS)) == 0.0
    assert sample_variance(AudioSignal(np.array([-1.0, 1.0]), FS)) == 1.0
    with pytest.raises(ValueError):
        sample_variance(AudioSignal(np.array([0.5]), FS))
    x = np.random.default_rng(3).standard_normal(10001)
    mean = sum(x) / len(x)
    two_pass = sum((v - mean) ** 2 for v in x) / len(x)
    assert sample_variance(AudioSignal(x, FS)) == pytest.approx(two_pass, rel=1e-12)


@given(st.lists(st.floats(-1, 1), min_size=2, max_size=200), st.sampled_from([0.5, 2.0]))
def test_sample_variance_scaling(values, a):
    x = np.array(values)
    v = sample_variance(AudioSignal(x, FS))
    assert sample_variance(AudioSignal(a * x, FS)) == pytest.approx(a * a * v, rel=1e-9, abs=1e-300)


def test_ms_to_samples_rounds_half_up():
    assert ms_to_samples(0.03125, FS) == 1  # exactly half a sample
    assert ms_to_samples(0.03, FS) == 0
    assert ms_to_samples(100, FS) == 1600
