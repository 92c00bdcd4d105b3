"""Pseudo-label preparation toolkit for self-supervised speech training.

The pipeline: stream WAV audio, extract 39-dim MFCC features on the fly,
train a memory-bounded k-means codebook with reservoir sampling and
worker-parallel Lloyd iterations, then label every frame with its nearest
centroid while writing only the integer assignments.  Side utilities plan
payload-bounded training batches, sample masked spans, score masked
prediction accuracy, and aggregate ten-task benchmark rows.
"""

from ._version import __version__
from .ark import ArkWriter, iter_ark_int_vectors, iter_ark_matrices, read_ark_ints, read_ark_matrix
from .batching import (
    AccumPlan,
    BatchPlan,
    MaskSet,
    MaskSpec,
    accum_plan,
    load_batch_plan,
    masked_accuracy,
    plan_batches,
    sample_masks,
    save_batch_plan,
)
from .codebook import (
    load_codebook,
    load_partial_stats,
    load_sample_buffer,
    save_codebook,
    save_partial_stats,
    save_sample_buffer,
)
from .errors import (
    ArkFormatError,
    CodebookFormatError,
    ConfigError,
    DegenerateDataError,
    DimensionMismatchError,
    LabelRangeError,
    SslprepError,
    WavChannelError,
    WavEncodingError,
    WavError,
    WavHeaderError,
)
from .kmeans import (
    Codebook,
    PartialStats,
    Provenance,
    SampleBuffer,
    accumulate_partial,
    assign_frames,
    kmeanspp_init,
    merge_partials,
    reservoir_sample,
    train_kmeans,
    update_centroids,
)
from .labeling import (
    FeatureSource,
    LabelReport,
    cluster_diagnostics,
    label_corpus,
    render_diagnostics,
    render_reports,
    shard_frame_source,
)
from .manifest import ManifestEntry, ShardManifest, read_scp, shard_manifest, write_scp
from .mfcc import MfccConfig, add_deltas, extract_mfcc39, frame_count, mfcc
from .records import AssignmentSeq, Diagnostics, FeatureMatrix, WaveRecord
from .superb import SuperbRow, parse_rows, superb_score
from .wav import read_wav, read_wav_header, write_wav

__all__ = [
    "__version__",
    "AccumPlan", "ArkFormatError", "ArkWriter", "AssignmentSeq", "BatchPlan",
    "Codebook", "CodebookFormatError", "ConfigError", "DegenerateDataError",
    "Diagnostics", "DimensionMismatchError", "FeatureMatrix", "FeatureSource",
    "LabelRangeError", "LabelReport", "ManifestEntry", "MaskSet", "MaskSpec",
    "MfccConfig", "PartialStats", "Provenance", "SampleBuffer", "ShardManifest",
    "SslprepError", "SuperbRow", "WaveRecord", "WavChannelError",
    "WavEncodingError", "WavError", "WavHeaderError",
    "accum_plan", "accumulate_partial", "add_deltas", "assign_frames",
    "cluster_diagnostics", "extract_mfcc39", "frame_count",
    "iter_ark_int_vectors", "iter_ark_matrices", "kmeanspp_init",
    "label_corpus", "load_batch_plan", "load_codebook", "load_partial_stats",
    "load_sample_buffer", "masked_accuracy", "merge_partials", "mfcc",
    "parse_rows", "plan_batches", "read_ark_ints", "read_ark_matrix",
    "read_scp", "read_wav", "read_wav_header", "render_diagnostics",
    "render_reports", "reservoir_sample", "sample_masks", "save_batch_plan",
    "save_codebook", "save_partial_stats", "save_sample_buffer",
    "shard_frame_source", "shard_manifest", "superb_score", "train_kmeans",
    "update_centroids", "write_scp", "write_wav",
]
