"""Corpus manifests: scp index files and round-robin worker sharding.

An scp file is one record per line, ``<utt_id> <path>[:<byte_offset>]``.
Entries with a byte offset address binary archive records; entries without
one point at whole files (WAV audio). Relative paths are resolved against
the directory of the scp file they came from, which keeps generated output
trees relocatable and byte-identical across re-runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .records import _check_utt_id
from .wav import read_wav_header


@dataclass
class ManifestEntry:
    """One utterance: where it lives and how long its payload is."""

    utt_id: str
    source_path: str
    byte_offset: int | None = None
    length: int | None = None  # samples for wav, frames for archive records

    def __post_init__(self):
        _check_utt_id(self.utt_id)

    def rxspec(self) -> str:
        """The ``path[:offset]`` form used in scp lines."""
        if self.byte_offset is None:
            return self.source_path
        return f"{self.source_path}:{self.byte_offset}"


@dataclass
class ShardManifest:
    """The slice of a corpus assigned to one worker."""

    worker_index: int
    total_workers: int
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        if self.total_workers < 1:
            raise ConfigError(f"total_workers must be >= 1, got {self.total_workers}")
        if not 0 <= self.worker_index < self.total_workers:
            raise ConfigError(
                f"worker_index {self.worker_index} out of range for {self.total_workers} workers"
            )

    def __len__(self) -> int:
        return len(self.entries)


def shard_manifest(entries, total_workers: int) -> list[ShardManifest]:
    """Deterministic round-robin partition: entry i goes to shard i % W.

    Round-robin (rather than contiguous blocks) spreads utterance-length
    skew evenly, so shard workloads stay balanced.
    """
    if total_workers < 1:
        raise ConfigError(f"total_workers must be >= 1, got {total_workers}")
    shards = [ShardManifest(w, total_workers) for w in range(total_workers)]
    for i, entry in enumerate(entries):
        shards[i % total_workers].entries.append(entry)
    return shards


def unshard(shards) -> list[ManifestEntry]:
    """Inverse of shard_manifest: interleave shards back into corpus order."""
    out = []
    longest = max((len(s) for s in shards), default=0)
    for i in range(longest):
        for shard in shards:
            if i < len(shard.entries):
                out.append(shard.entries[i])
    return out


def _split_rxspec(rxspec: str) -> tuple[str, int | None]:
    path, sep, tail = rxspec.rpartition(":")
    if sep and tail.isdigit():
        return path, int(tail)
    return rxspec, None


def read_scp(path) -> list[ManifestEntry]:
    """Parse an scp file; relative paths are resolved against the scp's directory.

    Resolution yields absolute paths so entries stay valid when handed to
    processes with a different working directory.
    """
    base = Path(path).resolve().parent
    entries = []
    with open(path, "r", encoding="utf-8") as fd:
        for lineno, line in enumerate(fd, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: malformed scp line {line!r}")
            utt_id, rxspec = parts
            source, offset = _split_rxspec(rxspec)
            if not Path(source).is_absolute():
                source = str(base / source)
            entries.append(ManifestEntry(utt_id, source, offset))
    return entries


def write_scp(entries, path, relative: bool = False) -> int:
    """Write entries as an scp file; returns bytes written.

    With relative=True, paths under the scp's own directory are stored
    relative to it (used for generated archives, keeping outputs portable).
    """
    base = Path(path).parent.resolve()
    written = 0
    with open(path, "w", encoding="utf-8") as fd:
        for entry in entries:
            source = entry.source_path
            if relative:
                try:
                    source = str(Path(source).resolve().relative_to(base))
                except ValueError:
                    pass
            spec = source if entry.byte_offset is None else f"{source}:{entry.byte_offset}"
            written += fd.write(f"{entry.utt_id} {spec}\n")
    return written


def build_wav_manifest(entries) -> list[ManifestEntry]:
    """Fill in sample counts by scanning WAV headers (payloads untouched)."""
    out = []
    for entry in entries:
        _, num_samples, _ = read_wav_header(entry.source_path)
        out.append(replace(entry, length=num_samples))
    return out
