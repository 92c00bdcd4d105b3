import math

import numpy as np
import pytest

from sslprep import (
    ArkWriter,
    AssignmentSeq,
    Codebook,
    FeatureMatrix,
    FeatureSource,
    MfccConfig,
    Provenance,
    ShardManifest,
    assign_frames,
    cluster_diagnostics,
    extract_mfcc39,
    label_corpus,
    read_ark_ints,
    read_scp,
    read_wav,
    render_diagnostics,
    render_reports,
    shard_frame_source,
)
from sslprep.errors import ConfigError, DimensionMismatchError, LabelRangeError
from sslprep.manifest import ManifestEntry


def random_codebook(rng, k, dim):
    return Codebook(rng.standard_normal((k, dim)).astype(np.float32), Provenance())


def write_label_archive(path, seqs):
    with ArkWriter(path) as writer:
        return [writer.write_int_vector(seq) for seq in seqs]


# ------------------------------------------------------------------ fused


def test_fused_labels_match_two_phase_oracle_mfcc(tmp_path, desk_scp, rng):
    entries = read_scp(desk_scp)[:4]
    manifest = ShardManifest(0, 1, entries)
    codebook = random_codebook(rng, 5, 39)
    source = FeatureSource(mode="mfcc")
    report = label_corpus(manifest, codebook, source, tmp_path / "labels.ark")

    # two-phase oracle: materialize features first, then assign
    total_inertia = 0.0
    expected = {}
    for entry in entries:
        wave = read_wav(entry.source_path, utt_id=entry.utt_id)
        features = extract_mfcc39(wave, MfccConfig())
        seq, inertia = assign_frames(codebook, features)
        expected[entry.utt_id] = seq.labels
        total_inertia += inertia

    got = {e.utt_id: read_ark_ints(e).labels for e in read_scp(tmp_path / "labels.scp")}
    assert set(got) == set(expected)
    for utt_id in expected:
        assert np.array_equal(got[utt_id], expected[utt_id])
    assert report.inertia == pytest.approx(total_inertia, rel=1e-12)
    assert report.num_utterances == 4
    assert report.feature_bytes == 0


def test_fused_labels_match_two_phase_oracle_ark(tmp_path, rng):
    # precomputed float features stored in an archive, labeled from there
    feats = [
        FeatureMatrix(f"utt{i}", rng.standard_normal((20 + i, 6)).astype(np.float32))
        for i in range(3)
    ]
    feat_ark = tmp_path / "feats.ark"
    with ArkWriter(feat_ark) as writer:
        entries = [writer.write_matrix(f) for f in feats]
    codebook = random_codebook(rng, 4, 6)
    manifest = ShardManifest(0, 1, entries)
    label_corpus(manifest, codebook, FeatureSource(mode="ark"), tmp_path / "labels.ark")
    got = {e.utt_id: read_ark_ints(e).labels for e in read_scp(tmp_path / "labels.scp")}
    for f in feats:
        seq, _ = assign_frames(codebook, f)
        assert np.array_equal(got[f.utt_id], seq.labels)


def test_only_label_archives_are_written(tmp_path, desk_scp, rng):
    entries = read_scp(desk_scp)[:3]
    manifest = ShardManifest(0, 1, entries)
    before = {p.name for p in tmp_path.iterdir()}
    label_corpus(manifest, random_codebook(rng, 3, 39), FeatureSource(), tmp_path / "labels.ark")
    created = {p.name for p in tmp_path.iterdir()} - before
    assert created == {"labels.ark", "labels.scp"}


def test_bad_utterances_are_skipped_and_reported(tmp_path, desk_scp, rng):
    entries = read_scp(desk_scp)[:3]
    entries.insert(1, ManifestEntry("ghost", str(tmp_path / "missing.wav")))
    manifest = ShardManifest(0, 1, entries)
    report = label_corpus(
        manifest, random_codebook(rng, 3, 39), FeatureSource(), tmp_path / "labels.ark"
    )
    assert report.num_utterances == 3
    assert [utt for utt, _ in report.failures] == ["ghost"]
    survived = {e.utt_id for e in read_scp(tmp_path / "labels.scp")}
    assert "ghost" not in survived and len(survived) == 3


def test_wrong_dim_record_is_reported_not_fatal(tmp_path, rng):
    feat_ark = tmp_path / "feats.ark"
    with ArkWriter(feat_ark) as writer:
        ok = writer.write_matrix(FeatureMatrix("ok", rng.standard_normal((5, 6)).astype(np.float32)))
        bad = writer.write_matrix(FeatureMatrix("bad", rng.standard_normal((5, 7)).astype(np.float32)))
    manifest = ShardManifest(0, 1, [ok, bad])
    report = label_corpus(
        manifest, random_codebook(rng, 2, 6), FeatureSource(mode="ark"), tmp_path / "labels.ark"
    )
    assert report.num_utterances == 1
    assert report.failures and report.failures[0][0] == "bad"


def test_dim_hint_mismatch_fails_before_any_io(tmp_path, desk_scp, rng):
    manifest = ShardManifest(0, 1, read_scp(desk_scp))
    with pytest.raises(DimensionMismatchError):
        label_corpus(manifest, random_codebook(rng, 3, 5), FeatureSource(), tmp_path / "l.ark")
    assert not (tmp_path / "l.ark").exists()


def test_empty_manifest_yields_empty_outputs(tmp_path, rng):
    manifest = ShardManifest(0, 1, [])
    report = label_corpus(
        manifest, random_codebook(rng, 3, 4), FeatureSource(mode="ark"), tmp_path / "labels.ark"
    )
    assert report.num_utterances == 0
    assert report.num_frames == 0
    assert (tmp_path / "labels.ark").stat().st_size == 0
    assert (tmp_path / "labels.scp").read_text() == ""


def test_shard_frame_source_is_reiterable(tmp_path, desk_scp):
    entries = read_scp(desk_scp)[:2]
    stream = shard_frame_source(FeatureSource(), entries)
    first = [chunk.copy() for chunk in stream()]
    second = list(stream())
    assert len(first) == len(second) == 2
    for a, b in zip(first, second):
        assert np.array_equal(a, b)


def test_render_reports_mentions_every_shard_and_failure(tmp_path, rng):
    from sslprep.labeling import LabelReport

    reports = [
        LabelReport(1, num_utterances=2, num_frames=50, inertia=1.5,
                    histogram=np.array([25, 25, 0]), ark_bytes=100, scp_bytes=20),
        LabelReport(0, num_utterances=1, num_frames=30, inertia=0.5,
                    histogram=np.array([30, 0, 0]), failures=[("u9", "truncated")],
                    ark_bytes=60, scp_bytes=10),
    ]
    text = render_reports(reports, k=3)
    assert text.index("shard 0:") < text.index("shard 1:")
    assert "failed u9: truncated" in text
    assert "total_frames: 80" in text
    assert "feature_bytes=0" in text


# ------------------------------------------------------------ diagnostics


def labels_fixture(tmp_path, counts, k):
    labels = np.repeat(np.arange(len(counts), dtype=np.int32), counts)
    seqs = [AssignmentSeq("u0", labels, k)]
    path = tmp_path / "labels.ark"
    write_label_archive(path, seqs)
    return path


def test_entropy_of_known_split(tmp_path):
    path = labels_fixture(tmp_path, [70, 20, 10], k=3)
    diag = cluster_diagnostics(path, k=3)
    expected = -sum(p * math.log(p) for p in (0.7, 0.2, 0.1)) / math.log(3)
    assert diag.normalized_entropy == pytest.approx(expected, abs=1e-12)
    assert diag.histogram.tolist() == [70, 20, 10]
    assert diag.empty_clusters == 0
    assert diag.num_frames == 100


def test_uniform_usage_scores_one(tmp_path):
    path = labels_fixture(tmp_path, [25, 25, 25, 25], k=4)
    diag = cluster_diagnostics(path, k=4)
    assert diag.normalized_entropy == pytest.approx(1.0, abs=1e-12)


def test_collapsed_usage_scores_zero(tmp_path):
    path = labels_fixture(tmp_path, [100], k=5)
    diag = cluster_diagnostics(path, k=5)
    assert diag.normalized_entropy == 0.0
    assert diag.empty_clusters == 4


def test_k1_archive_scores_zero_by_convention(tmp_path):
    path = labels_fixture(tmp_path, [50], k=1)
    diag = cluster_diagnostics(path, k=1)
    assert diag.normalized_entropy == 0.0
    assert diag.empty_clusters == 0


def test_empty_archive_scores_zero(tmp_path):
    path = tmp_path / "labels.ark"
    write_label_archive(path, [])
    diag = cluster_diagnostics(path, k=8)
    assert diag.num_frames == 0
    assert diag.normalized_entropy == 0.0
    assert diag.empty_clusters == 8


def test_out_of_range_label_is_an_error(tmp_path):
    path = labels_fixture(tmp_path, [5, 5, 5, 5, 5, 5, 5, 5, 5, 5], k=10)
    with pytest.raises(LabelRangeError):
        cluster_diagnostics(path, k=5)
    with pytest.raises(ConfigError):
        cluster_diagnostics(path, k=0)


def test_scp_and_ark_dispatch_agree(tmp_path):
    seqs = [
        AssignmentSeq("a", np.array([0, 1, 1, 2], np.int32), 3),
        AssignmentSeq("b", np.array([2, 2], np.int32), 3),
    ]
    path = tmp_path / "labels.ark"
    entries = write_label_archive(path, seqs)
    from sslprep.manifest import write_scp

    write_scp(entries, tmp_path / "labels.scp", relative=True)
    via_ark = cluster_diagnostics(path, k=3)
    via_scp = cluster_diagnostics(tmp_path / "labels.scp", k=3)
    assert np.array_equal(via_ark.histogram, via_scp.histogram)
    assert via_ark.num_utterances == via_scp.num_utterances == 2


def test_render_diagnostics_lists_top_clusters(tmp_path):
    path = labels_fixture(tmp_path, [10, 60, 30], k=4)
    text = render_diagnostics(cluster_diagnostics(path, k=4))
    assert "empty_clusters: 1" in text
    lines = text.strip().splitlines()
    assert lines[-3:] == ["cluster 1: 60", "cluster 2: 30", "cluster 0: 10"]
