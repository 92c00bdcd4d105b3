import pathlib

import pytest

from sslprep import ManifestEntry, read_scp, shard_manifest, write_scp
from sslprep.errors import ConfigError
from sslprep.manifest import build_wav_manifest, unshard
from sslprep.wav import write_wav

from conftest import make_sine


def entries(n):
    return [ManifestEntry(f"utt{i:03d}", f"/data/f{i}.ark", byte_offset=10 * i) for i in range(n)]


def test_scp_round_trip(tmp_path):
    original = entries(7)
    path = tmp_path / "feats.scp"
    written = write_scp(original, path)
    assert written == path.stat().st_size
    back = read_scp(path)
    assert [e.utt_id for e in back] == [e.utt_id for e in original]
    assert [e.byte_offset for e in back] == [e.byte_offset for e in original]
    assert all(e.source_path == o.source_path for e, o in zip(back, original))


def test_scp_relative_paths_resolve_against_scp_dir(tmp_path):
    sub = tmp_path / "corpus"
    sub.mkdir()
    (sub / "a.wav").write_bytes(b"")
    (sub / "feats.scp").write_text("a a.wav\n", encoding="utf-8")
    (back,) = read_scp(sub / "feats.scp")
    assert pathlib.Path(back.source_path).is_absolute()
    assert pathlib.Path(back.source_path) == (sub / "a.wav").resolve()


def test_write_scp_relative_mode(tmp_path):
    inside = tmp_path / "labels.ark"
    inside.write_bytes(b"")
    outside = ManifestEntry("o", "/elsewhere/x.ark", byte_offset=5)
    path = tmp_path / "labels.scp"
    write_scp([ManifestEntry("i", str(inside), byte_offset=3), outside], path, relative=True)
    text = path.read_text(encoding="utf-8")
    assert "i labels.ark:3" in text
    # entries outside the scp directory keep their absolute path
    assert "o /elsewhere/x.ark:5" in text


def test_wav_paths_have_no_offset(tmp_path):
    (tmp_path / "w.scp").write_text("w /somewhere/w.wav\n", encoding="utf-8")
    (entry,) = read_scp(tmp_path / "w.scp")
    assert entry.byte_offset is None
    assert entry.rxspec().endswith("w.wav")


def test_malformed_scp_line(tmp_path):
    (tmp_path / "bad.scp").write_text("just_one_token\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_scp(tmp_path / "bad.scp")


def test_round_robin_sharding_covers_all_exactly_once():
    original = entries(11)
    shards = shard_manifest(original, 3)
    assert [s.worker_index for s in shards] == [0, 1, 2]
    assert all(s.total_workers == 3 for s in shards)
    # entry i goes to shard i mod 3
    for shard in shards:
        for position, entry in enumerate(shard.entries):
            assert entry.utt_id == f"utt{shard.worker_index + 3 * position:03d}"
    assert sorted(e.utt_id for s in shards for e in s.entries) == sorted(
        e.utt_id for e in original
    )


def test_unshard_is_inverse_of_sharding():
    original = entries(10)
    for workers in (1, 2, 3, 7, 10):
        shards = shard_manifest(original, workers)
        assert [e.utt_id for e in unshard(shards)] == [e.utt_id for e in original]


def test_more_workers_than_entries_gives_empty_shards():
    shards = shard_manifest(entries(2), 5)
    assert [len(s) for s in shards] == [1, 1, 0, 0, 0]


def test_zero_workers_rejected():
    with pytest.raises(ConfigError):
        shard_manifest(entries(3), 0)


def test_build_wav_manifest_fills_lengths(tmp_path):
    rec = make_sine("m", 330.0, seconds=0.5)
    write_wav(tmp_path / "m.wav", rec)
    raw = [ManifestEntry("m", str(tmp_path / "m.wav"))]
    (filled,) = build_wav_manifest(raw)
    assert filled.length == 8000
