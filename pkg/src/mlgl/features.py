"""Log-mel spectrogram extraction.

Frames use a symmetric Hamming window of round(window_seconds * sr)
samples with one-third overlap (hop = window - floor(window / 3)), FFT
size the next power of two at or above the window, a 64-band triangular
mel filterbank spanning 0..sr/2, and a natural log with additive floor.
Output is (n_mels, n_frames).
"""
from __future__ import annotations

import numpy as np

from .errors import DataError
from .wav import read_wav


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters with unit peaks, rows (n_mels, n_fft//2 + 1)."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * (sample_rate / n_fft)
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def window_and_hop(sample_rate: int, window_seconds: float = 0.046) -> tuple[int, int]:
    window = int(round(window_seconds * sample_rate))
    if window < 2:
        raise DataError(f"window of {window} samples is too short at {sample_rate} Hz")
    return window, window - window // 3


def next_pow2(n: int) -> int:
    return 1 << (n - 1).bit_length()


def frame_count(n_samples: int, window: int, hop: int) -> int:
    if n_samples < window:
        return 1
    return 1 + (n_samples - window) // hop


def downmix(samples: np.ndarray, mode: str = "mean") -> np.ndarray:
    if samples.ndim == 1:
        return samples
    if mode == "mean":
        return samples.mean(axis=1)
    if mode == "left":
        return samples[:, 0]
    if mode == "right":
        if samples.shape[1] < 2:
            raise DataError("downmix mode 'right' needs at least two channels")
        return samples[:, 1]
    raise DataError(f"downmix mode must be mean, left or right, not {mode!r}")


def resample_linear(samples: np.ndarray, sr_in: int, sr_out: int) -> np.ndarray:
    if sr_in == sr_out:
        return samples
    n_out = int(round(samples.size * sr_out / sr_in))
    positions = np.arange(n_out) * (sr_in / sr_out)
    return np.interp(positions, np.arange(samples.size), samples)


def log_mel(samples: np.ndarray, sample_rate: int, n_mels: int = 64,
            window_seconds: float = 0.046, log_floor: float = 1e-10,
            dtype=np.float32) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("log_mel expects a mono signal; downmix first")
    if x.size == 0:
        raise DataError("cannot extract features from an empty signal")
    window, hop = window_and_hop(sample_rate, window_seconds)
    if x.size < window:
        x = np.pad(x, (0, window - x.size))
    n_frames = frame_count(x.size, window, hop)
    frames = np.lib.stride_tricks.sliding_window_view(x, window)[::hop][:n_frames]
    spectrum = np.abs(np.fft.rfft(frames * np.hamming(window), n=next_pow2(window), axis=1)) ** 2
    banked = spectrum @ mel_filterbank(n_mels, next_pow2(window), sample_rate).T
    return np.log(banked + log_floor).T.astype(dtype)


def features_from_samples(samples: np.ndarray, sr_in: int, cfg) -> np.ndarray:
    """Full pipeline from raw (possibly multichannel) audio with a
    FeatureConfig: downmix, resample, log-mel."""
    mono = downmix(np.asarray(samples, dtype=np.float64), cfg.downmix)
    mono = resample_linear(mono, sr_in, cfg.sample_rate)
    return log_mel(mono, cfg.sample_rate, cfg.n_mels, cfg.window_seconds, cfg.log_floor)


def features_from_wav(path, cfg) -> np.ndarray:
    samples, sr = read_wav(path)
    return features_from_samples(samples, sr, cfg)
