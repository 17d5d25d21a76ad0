"""Feature extraction: framing geometry, mel filterbank, scaling laws,
WAV round trips and decode errors."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlgl import features as F
from mlgl.config import FeatureConfig
from mlgl.errors import DataError, WavError
from mlgl.wav import read_wav, write_wav


# ------------------------------------------------------------------ geometry

@pytest.mark.parametrize("sr,want_window,want_hop", [
    (44100, 2029, 1353),
    (32000, 1472, 982),
    (8000, 368, 246),
    (16000, 736, 491),
])
def test_window_and_hop(sr, want_window, want_hop):
    window, hop = F.window_and_hop(sr)
    assert window == round(0.046 * sr)
    assert (window, hop) == (want_window, want_hop)
    assert hop == window - window // 3


@pytest.mark.parametrize("sr,seconds,want_frames", [
    (44100, 15.0, 488),
    (32000, 15.0, 488),
    (8000, 1.0, 32),
])
def test_frame_counts_for_standard_clips(sr, seconds, want_frames):
    window, hop = F.window_and_hop(sr)
    n = int(round(sr * seconds))
    assert F.frame_count(n, window, hop) == want_frames
    feats = F.log_mel(np.zeros(n), sr, n_mels=8)
    assert feats.shape == (8, want_frames)


def test_short_signal_padded_to_one_frame():
    feats = F.log_mel(np.zeros(10), 8000, n_mels=4)
    assert feats.shape == (4, 1)


def test_log_mel_input_validation():
    with pytest.raises(DataError):
        F.log_mel(np.zeros((10, 2)), 8000)
    with pytest.raises(DataError):
        F.log_mel(np.zeros(0), 8000)
    with pytest.raises(DataError):
        F.window_and_hop(10)  # sub-2-sample window


def test_next_pow2():
    assert F.next_pow2(1) == 1
    assert F.next_pow2(2) == 2
    assert F.next_pow2(3) == 4
    assert F.next_pow2(2029) == 2048
    assert F.next_pow2(2048) == 2048


# ---------------------------------------------------------------- mel scale

def test_htk_mel_formula_spot_values():
    assert math.isclose(float(F.hz_to_mel(700.0)), 2595.0 * math.log10(2.0),
                        rel_tol=1e-12)
    assert float(F.hz_to_mel(0.0)) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(min_value=1.0, max_value=20000.0))
def test_mel_inverse_identity(f):
    assert math.isclose(float(F.mel_to_hz(F.hz_to_mel(f))), f, rel_tol=1e-10)


def test_mel_filterbank_shape_and_peaks():
    fb = F.mel_filterbank(64, 2048, 44100)
    assert fb.shape == (64, 1025)
    assert (fb >= 0).all() and (fb <= 1).all()
    # every triangle reaches a real peak and they are ordered by frequency
    peaks = fb.argmax(axis=1)
    assert (np.diff(peaks) > 0).all()
    assert (fb.max(axis=1) > 0.5).all()
    # interior bins are covered by at least one filter
    covered = fb.sum(axis=0)
    assert (covered[peaks[0]:peaks[-1]] > 0).all()


def test_mel_filterbank_matches_loop_construction():
    n_mels, n_fft, sr = 6, 256, 8000
    fb = F.mel_filterbank(n_mels, n_fft, sr)
    edges = F.mel_to_hz(np.linspace(0.0, float(F.hz_to_mel(sr / 2)), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sr / n_fft
    want = np.zeros_like(fb)
    for m in range(n_mels):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        for k, f in enumerate(freqs):
            if lo <= f <= mid:
                want[m, k] = (f - lo) / (mid - lo)
            elif mid < f <= hi:
                want[m, k] = (hi - f) / (hi - mid)
    np.testing.assert_allclose(fb, want, atol=1e-12)


# ------------------------------------------------------------- scaling laws

def test_amplitude_scaling_shifts_by_two_log():
    gen = np.random.default_rng(0)
    x = gen.standard_normal(8000)  # loud enough that the floor is negligible
    base = F.log_mel(x, 8000, n_mels=16, dtype=np.float64)
    for c in (0.5, 2.0, 7.0):
        scaled = F.log_mel(c * x, 8000, n_mels=16, dtype=np.float64)
        np.testing.assert_allclose(scaled - base, 2.0 * np.log(c), atol=1e-6)


def test_silence_hits_log_floor():
    feats = F.log_mel(np.zeros(8000), 8000, n_mels=8, log_floor=1e-10,
                      dtype=np.float64)
    np.testing.assert_allclose(feats, np.log(1e-10), atol=1e-12)


def test_pure_tone_lands_in_matching_band():
    sr, f0 = 8000, 1000.0
    t = np.arange(sr) / sr
    x = 0.5 * np.sin(2 * np.pi * f0 * t)
    feats = F.log_mel(x, sr, n_mels=32, dtype=np.float64)
    band = int(feats.mean(axis=1).argmax())
    window = F.window_and_hop(sr)[0]
    fb = F.mel_filterbank(32, F.next_pow2(window), sr)
    freqs = np.arange(fb.shape[1]) * sr / F.next_pow2(window)
    centers = freqs[fb.argmax(axis=1)]
    assert abs(centers[band] - f0) < 200.0


def test_features_deterministic():
    x = np.random.default_rng(1).standard_normal(4000)
    a = F.log_mel(x, 8000)
    b = F.log_mel(x, 8000)
    assert a.dtype == np.float32 and (a == b).all()


# ---------------------------------------------------------------- resampling

def test_resample_linear_ramp_is_exact():
    x = np.linspace(0.0, 1.0, 101)  # one "second" at 100 Hz, a pure ramp
    y = F.resample_linear(x, 100, 50)
    positions = np.arange(y.size) * 2.0
    np.testing.assert_allclose(y, positions / 100.0, atol=1e-12)


def test_resample_identity_when_rates_match():
    x = np.random.default_rng(2).standard_normal(100)
    assert F.resample_linear(x, 8000, 8000) is x


def test_features_from_samples_resamples_to_config_rate():
    cfg = FeatureConfig(sample_rate=8000, n_mels=8)
    x = np.random.default_rng(3).standard_normal(16000)
    feats = F.features_from_samples(x, 16000, cfg)
    window, hop = F.window_and_hop(8000)
    assert feats.shape == (8, F.frame_count(8000, window, hop))


# ------------------------------------------------------------------ downmix

def test_downmix_modes():
    x = np.array([[1.0, 3.0], [2.0, 4.0]])
    np.testing.assert_allclose(F.downmix(x, "mean"), [2.0, 3.0])
    np.testing.assert_allclose(F.downmix(x, "left"), [1.0, 2.0])
    np.testing.assert_allclose(F.downmix(x, "right"), [3.0, 4.0])
    mono = np.array([1.0, 2.0])
    assert F.downmix(mono, "mean") is mono
    with pytest.raises(DataError):
        F.downmix(x, "center")
    with pytest.raises(DataError):
        F.downmix(np.zeros((4, 1)), "right")


# ---------------------------------------------------------------------- wav

@pytest.mark.parametrize("fmt,atol", [("pcm16", 1.0 / 32768), ("float32", 1e-7)])
def test_wav_round_trip_mono(tmp_path, fmt, atol):
    x = 0.8 * np.sin(np.linspace(0, 20, 500))
    path = tmp_path / "t.wav"
    write_wav(path, x, 8000, fmt=fmt)
    back, sr = read_wav(path)
    assert sr == 8000
    assert back.shape == x.shape
    np.testing.assert_allclose(back, x, atol=atol)


def test_wav_round_trip_stereo(tmp_path):
    gen = np.random.default_rng(4)
    x = 0.5 * gen.standard_normal((300, 2))
    path = tmp_path / "st.wav"
    write_wav(path, x, 44100, fmt="float32")
    back, sr = read_wav(path)
    assert sr == 44100 and back.shape == (300, 2)
    np.testing.assert_allclose(back, x, atol=1e-7)


def test_wav_skips_unknown_chunks(tmp_path):
    x = np.linspace(-0.5, 0.5, 64)
    path = tmp_path / "x.wav"
    write_wav(path, x, 8000)
    raw = path.read_bytes()
    # splice an odd-sized junk chunk between fmt and data
    head, rest = raw[:36], raw[36:]
    junk = b"JUNK" + (3).to_bytes(4, "little") + b"abc" + b"\x00"
    patched = head[:4] + (len(raw) - 8 + len(junk)).to_bytes(4, "little") \
        + head[8:] + junk + rest
    path.write_bytes(patched)
    back, _ = read_wav(path)
    np.testing.assert_allclose(back, x, atol=1e-4)


def test_wav_error_offsets(tmp_path):
    path = tmp_path / "bad.wav"

    path.write_bytes(b"RIF")
    with pytest.raises(WavError) as e:
        read_wav(path)
    assert e.value.offset == 0

    path.write_bytes(b"OGGSxxxxxxxxxxxx")
    with pytest.raises(WavError) as e:
        read_wav(path)
    assert e.value.offset == 0

    path.write_bytes(b"RIFF" + b"\x10\x00\x00\x00" + b"AIFF" + b"\x00" * 8)
    with pytest.raises(WavError) as e:
        read_wav(path)
    assert e.value.offset == 8

    write_wav(path, np.zeros(16), 8000)
    whole = path.read_bytes()
    path.write_bytes(whole[:-7])  # truncate inside the data chunk
    with pytest.raises(WavError) as e:
        read_wav(path)
    assert "overruns" in str(e.value)


def test_wav_unsupported_format_code(tmp_path):
    path = tmp_path / "alaw.wav"
    write_wav(path, np.zeros(8), 8000)
    raw = bytearray(path.read_bytes())
    raw[20] = 6  # fmt code: a-law
    path.write_bytes(bytes(raw))
    with pytest.raises(WavError) as e:
        read_wav(path)
    assert "unsupported format" in str(e.value)


def test_wav_missing_data_chunk(tmp_path):
    path = tmp_path / "nodata.wav"
    write_wav(path, np.zeros(8), 8000)
    raw = bytearray(path.read_bytes())
    raw[36:40] = b"datx"
    path.write_bytes(bytes(raw))
    with pytest.raises(WavError) as e:
        read_wav(path)
    assert "no data chunk" in str(e.value)


def test_pcm16_clipping_on_write(tmp_path):
    path = tmp_path / "clip.wav"
    write_wav(path, np.array([2.0, -2.0]), 8000)
    back, _ = read_wav(path)
    np.testing.assert_allclose(back, [32767 / 32768, -1.0], atol=1e-9)
