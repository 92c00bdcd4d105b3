"""Binary persistence for clustering artifacts.

Three little-endian container formats share one header discipline
(4-byte magic, u32 version, fixed-size dims, then payload):

  codebook       magic "PLKM": u32 version, u32 k, u32 dim,
                 u32 provenance length + provenance JSON (utf-8),
                 k*dim float32 centroids.
  partial stats  magic "PLPS": u32 version, u32 k, u32 dim,
                 k int64 counts, k*dim float64 sums, float64 inertia.
  sample buffer  magic "PLSB": u32 version, i64 budget, u32 dim,
                 i64 seen, i64 seed, u32 stored count,
                 count*dim float32 frames.

Everything is written in one deterministic pass: identical inputs yield
byte-identical files, which is what makes re-runs of the pipeline
verifiable by checksum.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CodebookFormatError
from .kmeans import Codebook, PartialStats, Provenance, SampleBuffer

_CODEBOOK_MAGIC = b"PLKM"
_STATS_MAGIC = b"PLPS"
_BUFFER_MAGIC = b"PLSB"
_VERSION = 1


def _read_exact(fd, size: int, what: str) -> bytes:
    data = fd.read(size)
    if len(data) != size:
        raise CodebookFormatError(
            f"truncated file: wanted {size} bytes for {what}, got {len(data)}"
        )
    return data


def _expect_header(fd, magic: bytes) -> None:
    got = _read_exact(fd, 4, "magic")
    if got != magic:
        raise CodebookFormatError(
            f"bad magic {got!r}, expected {magic.decode('ascii')!r}"
        )
    (version,) = struct.unpack("<I", _read_exact(fd, 4, "version"))
    if version != _VERSION:
        raise CodebookFormatError(f"unsupported version {version}")


def save_codebook(codebook: Codebook, path: str | Path) -> None:
    prov = codebook.provenance.to_json().encode("utf-8")
    with open(path, "wb") as fd:
        fd.write(_CODEBOOK_MAGIC)
        fd.write(struct.pack("<IIII", _VERSION, codebook.k, codebook.dim, len(prov)))
        fd.write(prov)
        fd.write(np.ascontiguousarray(codebook.centroids, "<f4").tobytes())


def load_codebook(path: str | Path) -> Codebook:
    with open(path, "rb") as fd:
        _expect_header(fd, _CODEBOOK_MAGIC)
        k, dim, prov_len = struct.unpack("<III", _read_exact(fd, 12, "dims"))
        prov = Provenance.from_json(
            _read_exact(fd, prov_len, "provenance").decode("utf-8")
        )
        payload = _read_exact(fd, k * dim * 4, "centroids")
        extra = fd.read(1)
    if extra:
        raise CodebookFormatError("trailing bytes after centroid payload")
    centroids = np.frombuffer(payload, "<f4").reshape(k, dim)
    return Codebook(centroids, prov)


def provenance_text(codebook: Codebook) -> str:
    """Human-readable sidecar describing how a codebook was produced."""
    prov = codebook.provenance
    layer = "none" if prov.layer_index is None else str(prov.layer_index)
    lines = [
        f"codebook_size: {codebook.k}",
        f"dim: {codebook.dim}",
        f"feature_kind: {prov.feature_kind}",
        f"layer_index: {layer}",
        f"seed: {prov.seed}",
        f"sample_budget: {prov.sample_budget}",
        f"iterations_run: {prov.iterations_run}",
        f"final_inertia: {prov.final_inertia!r}",
        f"tool_version: {prov.tool_version}",
        f"config_hash: {prov.config_hash}",
    ]
    return "\n".join(lines) + "\n"


def save_partial_stats(stats: PartialStats, path: str | Path) -> None:
    with open(path, "wb") as fd:
        fd.write(_STATS_MAGIC)
        fd.write(struct.pack("<III", _VERSION, stats.k, stats.dim))
        fd.write(np.ascontiguousarray(stats.counts, "<i8").tobytes())
        fd.write(np.ascontiguousarray(stats.sums, "<f8").tobytes())
        fd.write(struct.pack("<d", stats.inertia))


def load_partial_stats(path: str | Path) -> PartialStats:
    with open(path, "rb") as fd:
        _expect_header(fd, _STATS_MAGIC)
        k, dim = struct.unpack("<II", _read_exact(fd, 8, "dims"))
        counts = np.frombuffer(_read_exact(fd, k * 8, "counts"), "<i8")
        sums = np.frombuffer(_read_exact(fd, k * dim * 8, "sums"), "<f8")
        (inertia,) = struct.unpack("<d", _read_exact(fd, 8, "inertia"))
        extra = fd.read(1)
    if extra:
        raise CodebookFormatError("trailing bytes after stats payload")
    return PartialStats(sums.reshape(k, dim), counts, inertia)


def save_sample_buffer(buffer: SampleBuffer, path: str | Path) -> None:
    with open(path, "wb") as fd:
        fd.write(_BUFFER_MAGIC)
        fd.write(struct.pack("<IqIqqI", _VERSION, buffer.budget, buffer.dim,
                             buffer.seen, buffer.seed, buffer.count))
        fd.write(np.ascontiguousarray(buffer.frames, "<f4").tobytes())


def load_sample_buffer(path: str | Path) -> SampleBuffer:
    with open(path, "rb") as fd:
        _expect_header(fd, _BUFFER_MAGIC)
        budget, dim, seen, seed, count = struct.unpack(
            "<qIqqI", _read_exact(fd, 32, "buffer header")
        )
        frames = np.frombuffer(_read_exact(fd, count * dim * 4, "frames"), "<f4")
        extra = fd.read(1)
    if extra:
        raise CodebookFormatError("trailing bytes after buffer payload")
    return SampleBuffer(budget, dim, frames.reshape(count, dim), seen, seed)
