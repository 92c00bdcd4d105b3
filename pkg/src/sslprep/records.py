"""Core per-utterance value types shared across the pipeline.

All of these are plain value objects: cheap to construct, safe to hand
between workers, and validated eagerly so downstream code can trust them.
Float payloads are 32-bit, matching the on-disk formats.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, LabelRangeError


def _check_utt_id(utt_id: str) -> None:
    if not utt_id or any(ch.isspace() for ch in utt_id):
        raise ValueError(f"utt_id must be non-empty and whitespace-free, got {utt_id!r}")


@dataclass
class WaveRecord:
    """Mono PCM audio normalized to [-1.0, 1.0] float32."""

    utt_id: str
    sample_rate: int
    samples: np.ndarray

    def __post_init__(self):
        _check_utt_id(self.utt_id)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.samples = np.ascontiguousarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {self.samples.shape}")
        if self.samples.size and (
            float(self.samples.min()) < -1.0 or float(self.samples.max()) > 1.0
        ):
            raise ValueError("samples outside [-1.0, 1.0]")

    @property
    def num_samples(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate


@dataclass
class FeatureMatrix:
    """Per-utterance T x D frame features (MFCC or external representations)."""

    utt_id: str
    values: np.ndarray
    frame_shift: float = 0.010

    def __post_init__(self):
        _check_utt_id(self.utt_id)
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError(f"values must be 2-D, got shape {self.values.shape}")
        if self.values.shape[1] < 1:
            raise ValueError("feature dimension must be >= 1")
        if not np.isfinite(self.values).all():
            raise ValueError(f"non-finite feature values in {self.utt_id!r}")

    @property
    def num_frames(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])


@dataclass
class AssignmentSeq:
    """Per-utterance cluster labels in [0, codebook_size)."""

    utt_id: str
    labels: np.ndarray
    codebook_size: int

    def __post_init__(self):
        _check_utt_id(self.utt_id)
        if self.codebook_size < 1:
            raise ValueError(f"codebook_size must be >= 1, got {self.codebook_size}")
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int32)
        if self.labels.ndim != 1:
            raise ValueError(f"labels must be 1-D, got shape {self.labels.shape}")
        if self.labels.size and (
            int(self.labels.min()) < 0 or int(self.labels.max()) >= self.codebook_size
        ):
            raise LabelRangeError(
                f"labels of {self.utt_id!r} outside [0, {self.codebook_size})"
            )

    def __len__(self) -> int:
        return int(self.labels.size)


def check_same_length(a, b) -> int:
    """Return the common length of two sequences, or raise."""
    if len(a) != len(b):
        raise DimensionMismatchError(f"sequence lengths differ: {len(a)} vs {len(b)}")
    return len(a)


@dataclass
class Diagnostics:
    """Cluster-usage summary over an assignment archive."""

    codebook_size: int
    histogram: np.ndarray = field(repr=False)
    normalized_entropy: float = 0.0
    empty_clusters: int = 0
    num_frames: int = 0
    num_utterances: int = 0
