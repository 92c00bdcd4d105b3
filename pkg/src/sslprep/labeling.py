"""Fused feature extraction and cluster assignment.

Labeling streams one utterance at a time: decode audio, compute features
in memory, assign each frame to its nearest centroid, write only the
integer labels.  Feature matrices never touch persistent storage, which
is the whole point: label archives are two orders of magnitude smaller
than the float features they replace.
"""

from __future__ import annotations

import dataclasses
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from .ark import ArkWriter, iter_ark_int_vectors, read_ark_ints, read_ark_matrix
from .errors import (
    ArkFormatError,
    ConfigError,
    DimensionMismatchError,
    LabelRangeError,
    WavError,
)
from .kmeans import Codebook, FrameSource, assign_frames
from .manifest import ManifestEntry, ShardManifest, read_scp, write_scp
from .mfcc import MfccConfig, extract_mfcc39
from .records import Diagnostics, FeatureMatrix
from .wav import read_wav


@dataclasses.dataclass
class FeatureSource:
    """How to turn a manifest entry into a feature matrix.

    mode "mfcc": entry points at a WAV file; features are 39-dim MFCCs
    computed on the fly.  mode "ark": entry points at a precomputed float
    matrix record (e.g. hidden activations exported by a teacher model);
    ``layer_index`` is carried into provenance only.
    """

    mode: str = "mfcc"
    mfcc_config: MfccConfig = dataclasses.field(default_factory=MfccConfig)
    layer_index: int | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("mfcc", "ark"):
            raise ConfigError(f"feature source mode must be mfcc or ark, got {self.mode!r}")

    @property
    def feature_kind(self) -> str:
        return "mfcc39" if self.mode == "mfcc" else "external"

    @property
    def dim_hint(self) -> int | None:
        """Feature dim known ahead of reading, if any."""
        if self.mode == "mfcc":
            return 3 * self.mfcc_config.num_cepstra
        return None

    def features_for(self, entry: ManifestEntry) -> FeatureMatrix:
        if self.mode == "mfcc":
            wave = read_wav(entry.source_path, utt_id=entry.utt_id)
            return extract_mfcc39(wave, self.mfcc_config)
        return read_ark_matrix(entry)


def shard_frame_source(source: FeatureSource, entries: Sequence[ManifestEntry]) -> FrameSource:
    """Adapt one shard's manifest entries to a re-iterable frame stream."""
    entries = list(entries)

    def stream() -> Iterable[np.ndarray]:
        for entry in entries:
            yield source.features_for(entry).values

    return stream


@dataclasses.dataclass
class LabelReport:
    """What one shard's labeling pass did, with byte-level accounting."""

    shard_index: int
    num_utterances: int = 0
    num_frames: int = 0
    inertia: float = 0.0
    histogram: np.ndarray = dataclasses.field(default_factory=lambda: np.zeros(0, np.int64))
    failures: list[tuple[str, str]] = dataclasses.field(default_factory=list)
    ark_bytes: int = 0
    scp_bytes: int = 0

    @property
    def feature_bytes(self) -> int:
        """Feature payload persisted by this pass.  Always zero: the fused
        pipeline has no code path that writes a float matrix."""
        return 0


def label_corpus(
    manifest: ShardManifest,
    codebook: Codebook,
    source: FeatureSource,
    archive_path: str | Path,
) -> LabelReport:
    """Assign every utterance of one shard and write labels.ark + .scp.

    Entries are processed in manifest order.  An utterance that cannot be
    read or has the wrong feature dim is skipped and recorded in the
    report; the shard carries on.  Peak memory is one utterance's features
    plus the codebook, independent of corpus size.
    """
    hint = source.dim_hint
    if hint is not None and hint != codebook.dim:
        raise DimensionMismatchError(
            f"feature source yields dim {hint}, codebook expects {codebook.dim}"
        )
    archive_path = Path(archive_path)
    scp_path = archive_path.with_suffix(".scp")
    report = LabelReport(
        shard_index=manifest.worker_index,
        histogram=np.zeros(codebook.k, np.int64),
    )
    written: list[ManifestEntry] = []
    with ArkWriter(archive_path) as writer:
        for entry in manifest.entries:
            try:
                features = source.features_for(entry)
                seq, inertia = assign_frames(codebook, features)
            except (WavError, ArkFormatError, DimensionMismatchError, OSError) as err:
                report.failures.append((entry.utt_id, str(err)))
                continue
            written.append(writer.write_int_vector(seq))
            report.num_utterances += 1
            report.num_frames += seq.labels.shape[0]
            report.inertia += inertia
            report.histogram += np.bincount(seq.labels, minlength=codebook.k)
        report.ark_bytes = writer.bytes_written
    report.scp_bytes = write_scp(written, scp_path, relative=True)
    return report


def render_reports(reports: Sequence[LabelReport], k: int) -> str:
    """Plain-text summary across shards, stable across reruns."""
    lines = [f"codebook_size: {k}", f"shards: {len(reports)}"]
    total_frames = 0
    total_failures = 0
    for report in sorted(reports, key=lambda r: r.shard_index):
        total_frames += report.num_frames
        total_failures += len(report.failures)
        occupied = int(np.count_nonzero(report.histogram))
        lines.append(
            f"shard {report.shard_index}: utterances={report.num_utterances} "
            f"frames={report.num_frames} inertia={report.inertia!r} "
            f"occupied_clusters={occupied} ark_bytes={report.ark_bytes} "
            f"scp_bytes={report.scp_bytes} feature_bytes={report.feature_bytes}"
        )
        for utt_id, reason in report.failures:
            lines.append(f"shard {report.shard_index} failed {utt_id}: {reason}")
    lines.append(f"total_frames: {total_frames}")
    lines.append(f"total_failures: {total_failures}")
    return "\n".join(lines) + "\n"


def _label_streams(path: str | Path, k: int | None) -> Iterable[np.ndarray]:
    path = Path(path)
    if path.suffix == ".scp":
        for entry in read_scp(path):
            yield read_ark_ints(entry, codebook_size=k).labels
    else:
        for seq in iter_ark_int_vectors(path, codebook_size=k):
            yield seq.labels


def cluster_diagnostics(archive_path: str | Path, k: int) -> Diagnostics:
    """Occupancy statistics of an assignment archive (.ark or .scp).

    Normalized entropy is H / ln k over the label distribution; 1.0 means
    perfectly uniform usage, 0.0 means collapse to a single cluster.  By
    convention k = 1 reports 0.0.  A label outside [0, k) is an error.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    histogram = np.zeros(k, np.int64)
    num_utterances = 0
    for labels in _label_streams(archive_path, k):
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise LabelRangeError(
                f"label outside [0, {k}) in archive {archive_path}"
            )
        histogram += np.bincount(labels, minlength=k)
        num_utterances += 1
    total = int(histogram.sum())
    if total == 0 or k == 1:
        entropy = 0.0
    else:
        probs = histogram[histogram > 0] / total
        entropy = float(-(probs * np.log(probs)).sum() / np.log(k))
    return Diagnostics(
        codebook_size=k,
        histogram=histogram,
        normalized_entropy=entropy,
        empty_clusters=int(np.count_nonzero(histogram == 0)),
        num_frames=total,
        num_utterances=num_utterances,
    )


def render_diagnostics(diag: Diagnostics) -> str:
    lines = [
        f"codebook_size: {diag.codebook_size}",
        f"utterances: {diag.num_utterances}",
        f"frames: {diag.num_frames}",
        f"empty_clusters: {diag.empty_clusters}",
        f"normalized_entropy: {diag.normalized_entropy:.6f}",
    ]
    top = np.argsort(diag.histogram)[::-1][:10]
    for cluster in top:
        count = int(diag.histogram[cluster])
        if count == 0:
            break
        lines.append(f"cluster {int(cluster)}: {count}")
    return "\n".join(lines) + "\n"


__all__ = [
    "FeatureSource",
    "LabelReport",
    "label_corpus",
    "shard_frame_source",
    "render_reports",
    "cluster_diagnostics",
    "render_diagnostics",
]
