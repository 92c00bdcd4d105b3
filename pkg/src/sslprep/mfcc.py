"""39-dimensional MFCC extraction: 13 cepstra plus delta and delta-delta.

The numeric conventions follow the common Kaldi-style recipe: snip-edges
framing, in-frame pre-emphasis, Hamming window, power spectrum of the
zero-padded frame, triangular mel filters constructed in mel space,
natural log with a floor, and an orthonormal DCT-II. Everything is
deterministic (there is no dithering), so repeated extraction of the
same audio is bit-identical, which the downstream storage and labeling
guarantees rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, DimensionMismatchError
from .records import FeatureMatrix, WaveRecord


@dataclass
class MfccConfig:
    sample_rate: int = 16000
    frame_length: float = 0.025
    frame_shift: float = 0.010
    fft_size: int = 512
    num_mel_bins: int = 23
    num_cepstra: int = 13
    low_freq: float = 20.0
    high_freq: float | None = None  # None means Nyquist
    log_floor: float = 1e-10
    preemphasis: float = 0.97
    delta_window: int = 2

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        if self.frame_shift > self.frame_length:
            raise ConfigError("frame_shift must not exceed frame_length")
        if self.num_cepstra > self.num_mel_bins:
            raise ConfigError("num_cepstra must not exceed num_mel_bins")
        if self.fft_size < self.frame_samples or self.fft_size & (self.fft_size - 1):
            raise ConfigError(
                f"fft_size must be a power of two >= {self.frame_samples}, got {self.fft_size}"
            )
        if self.resolved_high_freq > self.sample_rate / 2:
            raise ConfigError("high_freq must not exceed the Nyquist frequency")
        if self.low_freq < 0 or self.low_freq >= self.resolved_high_freq:
            raise ConfigError("low_freq must lie in [0, high_freq)")
        if self.log_floor <= 0:
            raise ConfigError("log_floor must be positive")
        if not 0.0 <= self.preemphasis < 1.0:
            raise ConfigError("preemphasis must lie in [0, 1)")
        if self.delta_window < 1:
            raise ConfigError("delta_window must be >= 1")

    @property
    def frame_samples(self) -> int:
        return int(round(self.frame_length * self.sample_rate))

    @property
    def shift_samples(self) -> int:
        return int(round(self.frame_shift * self.sample_rate))

    @property
    def resolved_high_freq(self) -> float:
        return self.sample_rate / 2 if self.high_freq is None else self.high_freq

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{f.name} = {'none' if value is None else value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MfccConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in known:
                raise ConfigError(f"line {lineno}: unknown MFCC option {key!r}")
            if value.lower() == "none":
                kwargs[key] = None
            elif known[key].type in ("int", int):
                kwargs[key] = int(value)
            else:
                kwargs[key] = float(value)
        return cls(**kwargs)


def frame_count(num_samples: int, config: MfccConfig) -> int:
    """Number of full analysis windows that fit (no padding of the tail)."""
    frame_len = config.frame_samples
    if num_samples < frame_len:
        return 0
    return 1 + (num_samples - frame_len) // config.shift_samples


def _hz_to_mel(freq):
    return 1127.0 * np.log1p(np.asarray(freq, dtype=np.float64) / 700.0)


def mel_filterbank(config: MfccConfig) -> np.ndarray:
    """Triangular mel filters, shape (num_mel_bins, fft_size//2 + 1).

    Triangles are equally spaced and evaluated in mel space at the FFT bin
    frequencies, so a filter's response is exactly linear in mel, not in Hz.
    """
    mel_edges = np.linspace(
        _hz_to_mel(config.low_freq),
        _hz_to_mel(config.resolved_high_freq),
        config.num_mel_bins + 2,
    )
    bin_freqs = np.arange(config.fft_size // 2 + 1) * (config.sample_rate / config.fft_size)
    bin_mels = _hz_to_mel(bin_freqs)

    left = mel_edges[:-2, None]
    center = mel_edges[1:-1, None]
    right = mel_edges[2:, None]
    up = (bin_mels[None, :] - left) / (center - left)
    down = (right - bin_mels[None, :]) / (right - center)
    return np.maximum(0.0, np.minimum(up, down))


def dct_matrix(num_rows: int, size: int) -> np.ndarray:
    """First num_rows rows of the orthonormal DCT-II matrix of the given size."""
    n = np.arange(size)
    k = np.arange(num_rows)[:, None]
    mat = np.sqrt(2.0 / size) * np.cos(np.pi * k * (2 * n + 1) / (2 * size))
    mat[0] /= np.sqrt(2.0)
    return mat


def mfcc(wave: WaveRecord, config: MfccConfig) -> FeatureMatrix:
    """Base cepstra: one row of num_cepstra coefficients per analysis frame."""
    if wave.sample_rate != config.sample_rate:
        raise DimensionMismatchError(
            f"{wave.utt_id!r}: sample rate {wave.sample_rate} != configured {config.sample_rate}"
        )
    frame_len = config.frame_samples
    shift = config.shift_samples
    num_frames = frame_count(wave.num_samples, config)
    if num_frames == 0:
        values = np.empty((0, config.num_cepstra), dtype=np.float32)
        return FeatureMatrix(wave.utt_id, values, config.frame_shift)

    signal = wave.samples.astype(np.float64)
    frames = np.lib.stride_tricks.sliding_window_view(signal, frame_len)[::shift].copy()

    if config.preemphasis:
        frames[:, 1:] -= config.preemphasis * frames[:, :-1]
        frames[:, 0] *= 1.0 - config.preemphasis
    frames *= np.hamming(frame_len)

    power = np.abs(np.fft.rfft(frames, n=config.fft_size)) ** 2
    mel_energies = power @ mel_filterbank(config).T
    log_mel = np.log(np.maximum(mel_energies, config.log_floor))
    # Coefficients 1.. are invariant to a constant added across mel bins
    # (those DCT rows sum to zero), but the rounded row sums leak that
    # common mode at the 1e-14 level.  Removing bin 0 before the transform
    # cancels it structurally: a constant log-mel row yields exact zeros.
    dct = dct_matrix(config.num_cepstra, config.num_mel_bins)
    base = log_mel[:, :1]
    cepstra = (log_mel - base) @ dct.T
    cepstra[:, 0] += base[:, 0] * float(dct[0].sum())
    return FeatureMatrix(wave.utt_id, cepstra.astype(np.float32), config.frame_shift)


def _regression_delta(values: np.ndarray, window: int) -> np.ndarray:
    # least-squares slope over +-window frames, edges replicated
    if values.shape[0] == 0:
        return np.zeros_like(values, dtype=np.float64)
    padded = np.pad(values, ((window, window), (0, 0)), mode="edge")
    num = np.zeros_like(values, dtype=np.float64)
    for w in range(1, window + 1):
        num += w * (padded[window + w : padded.shape[0] - window + w]
                    - padded[window - w : padded.shape[0] - window - w])
    return num / (2.0 * sum(w * w for w in range(1, window + 1)))


def add_deltas(features: FeatureMatrix, delta_window: int = 2) -> FeatureMatrix:
    """Append delta and delta-delta columns: T x 13 becomes T x 39.

    Edge frames are replicated before the regression, so a time-constant
    input has exactly zero deltas.
    """
    if features.dim != 13:
        raise DimensionMismatchError(
            f"{features.utt_id!r}: expected 13 cepstra before deltas, got dim {features.dim}"
        )
    base = features.values.astype(np.float64)
    delta = _regression_delta(base, delta_window)
    delta2 = _regression_delta(delta, delta_window)
    stacked = np.hstack([base, delta, delta2]).astype(np.float32)
    return FeatureMatrix(features.utt_id, stacked, features.frame_shift)


def extract_mfcc39(wave: WaveRecord, config: MfccConfig) -> FeatureMatrix:
    """Full 39-dimensional features for one utterance.

    Peak memory is proportional to this utterance's frame count only;
    corpus-level streaming is per utterance, never whole-corpus.
    """
    return add_deltas(mfcc(wave, config), config.delta_window)
