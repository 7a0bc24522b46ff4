"""WAV ingestion, the one-second padding rule, and MFCC extraction.

Pipeline per clip: frame (no centering, hop-strided), periodic Hann
window, magnitude FFT at the next power of two >= window, triangular mel
filterbank on 0-8 kHz, log with a 1e-10 floor, orthonormal DCT-II keeping
all coefficients. No pre-emphasis is applied.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataspace import ALLOWED_MEL_COUNTS, CLIP_SAMPLES, SAMPLE_RATE, DataConfig

LOG_FLOOR = 1e-10
PCM_SCALE = 32768.0


class AudioFormatError(ValueError):
    """The file is not mono 16-bit PCM at 16 kHz (no silent resampling)."""


@dataclass
class Waveform:
    samples: np.ndarray  # float64 in [-1, 1]
    sample_rate: int = SAMPLE_RATE

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class FeatureMap:
    values: np.ndarray  # (frames, coefficients)
    source_config: DataConfig

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def coefficients(self) -> int:
        return self.values.shape[1]


def load_wav(path) -> Waveform:
    """Read a mono 16-bit PCM WAV at 16 kHz, scaled by 1/32768."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            n = wf.getnframes()
            raw = wf.readframes(n)
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: not a readable WAV ({exc})") from exc
    if channels != 1:
        raise AudioFormatError(f"{path}: {channels} channels, need mono")
    if width != 2:
        raise AudioFormatError(
            f"{path}: {8 * width}-bit samples, need 16-bit PCM")
    if rate != SAMPLE_RATE:
        raise AudioFormatError(
            f"{path}: sample rate {rate} Hz, need {SAMPLE_RATE} Hz")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE
    return Waveform(samples=samples, sample_rate=rate)


def save_wav(path, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    """Write float samples in [-1, 1] as mono 16-bit PCM."""
    pcm = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(pcm * (PCM_SCALE - 1)).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())


def pad_to_one_second(w: Waveform) -> Waveform:
    """Append zeros up to exactly one second; longer clips are rejected."""
    n = len(w.samples)
    if n > CLIP_SAMPLES:
        raise ValueError(
            f"clip has {n} samples; utterances must be at most one second")
    if n == CLIP_SAMPLES:
        return w
    padded = np.zeros(CLIP_SAMPLES, dtype=w.samples.dtype)
    padded[:n] = w.samples
    return Waveform(samples=padded, sample_rate=w.sample_rate)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(fft_bins: int, n_mels: int, sample_rate: int = SAMPLE_RATE,
                   f_min: float = 0.0, f_max: float = 8000.0,
                   allow_any_count: bool = False) -> np.ndarray:
    """Triangular filters (n_mels, fft_bins), centers equispaced in mel."""
    if n_mels not in ALLOWED_MEL_COUNTS and not allow_any_count:
        raise ValueError(
            f"{n_mels} mel filters outside the search space "
            f"{ALLOWED_MEL_COUNTS}; pass allow_any_count to override")
    n_fft = 2 * (fft_bins - 1)
    freqs = np.arange(fft_bins, dtype=np.float64) * sample_rate / n_fft
    mel_points = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    fb = np.zeros((n_mels, fft_bins), dtype=np.float64)
    for m in range(n_mels):
        left, center, right = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        up = (freqs - left) / (center - left)
        down = (right - freqs) / (right - center)
        fb[m] = np.maximum(0.0, np.minimum(up, down))
    return fb


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows D[k] . x implement the transform."""
    k = np.arange(n, dtype=np.float64).reshape(-1, 1)
    i = np.arange(n, dtype=np.float64).reshape(1, -1)
    d = np.cos(np.pi * k * (2 * i + 1) / (2 * n)) * np.sqrt(2.0 / n)
    d[0] /= np.sqrt(2.0)
    return d


def _next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def hann_window(n: int) -> np.ndarray:
    """Periodic (DFT-even) Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def frame_signal(samples: np.ndarray, window_size: int, hop: int) -> np.ndarray:
    """(num_frames, window_size) strided view copy, no centering."""
    n = len(samples)
    num = 1 + (n - window_size) // hop
    idx = np.arange(window_size)[None, :] + hop * np.arange(num)[:, None]
    return samples[idx]


def mfcc(w: Waveform, config: DataConfig) -> FeatureMap:
    """MFCC feature map for one padded clip under one data config."""
    if len(w.samples) != CLIP_SAMPLES:
        raise ValueError(
            f"mfcc needs a padded {CLIP_SAMPLES}-sample clip, got {len(w.samples)}; "
            "apply pad_to_one_second first")
    frames = frame_signal(w.samples.astype(np.float64),
                          config.window_size, config.hop_length)
    frames = frames * hann_window(config.window_size)
    n_fft = _next_pow2(config.window_size)
    spectrum = np.abs(np.fft.rfft(frames, n=n_fft, axis=1))
    fb = mel_filterbank(n_fft // 2 + 1, config.mel_filters,
                        sample_rate=w.sample_rate)
    mel_energies = spectrum @ fb.T
    log_mel = np.log(np.maximum(mel_energies, LOG_FLOOR))
    coeffs = log_mel @ dct_matrix(config.mel_filters).T
    return FeatureMap(values=coeffs, source_config=config)
