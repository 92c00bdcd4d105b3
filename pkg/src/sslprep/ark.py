"""Binary archive ("ark") records for float matrices and int label vectors.

Wire format (all integers little-endian):

    <utt_id> ' ' \\0 'B' <payload>

    float matrix payload:  'FM ' (\\x04 int32 rows) (\\x04 int32 cols)
                           rows*cols float32, row-major
    int vector payload:    (\\x04 int32 count) then per element (\\x04 int32)

The \\x04 bytes are per-value size markers. An scp entry's byte offset
addresses the \\0B that starts the payload, so records can be read directly
by seeking: no index scan, no loading of neighbours. Readers are safe to
use concurrently on disjoint entries; each archive file has a single
writer and is append-only.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ArkFormatError
from .manifest import ManifestEntry
from .records import AssignmentSeq, FeatureMatrix

_BINARY_FLAG = b"\x00B"
_MATRIX_TOKEN = b"FM "
_INT_SIZE = b"\x04"


def _pack_int_vector(values: np.ndarray) -> bytes:
    out = np.empty(len(values), dtype=[("size", "i1"), ("value", "<i4")])
    out["size"] = 4
    out["value"] = values
    return out.tobytes()


class ArkWriter:
    """Single-owner append writer for one archive file.

    Returns a ManifestEntry per record so callers can emit scp lines with
    exact offsets. Not safe for concurrent use; open one writer per file.
    """

    def __init__(self, path, append: bool = False):
        self.path = str(path)
        self._fd = open(path, "ab" if append else "wb")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._fd is not None:
            self._fd.close()
            self._fd = None

    @property
    def bytes_written(self) -> int:
        return self._fd.tell() if self._fd is not None else 0

    def _begin_record(self, utt_id: str) -> int:
        self._fd.write(utt_id.encode("utf-8"))
        self._fd.write(b" ")
        offset = self._fd.tell()
        self._fd.write(_BINARY_FLAG)
        return offset

    def write_matrix(self, matrix: FeatureMatrix) -> ManifestEntry:
        offset = self._begin_record(matrix.utt_id)
        rows, cols = matrix.values.shape
        self._fd.write(_MATRIX_TOKEN)
        self._fd.write(_INT_SIZE + struct.pack("<i", rows))
        self._fd.write(_INT_SIZE + struct.pack("<i", cols))
        self._fd.write(np.ascontiguousarray(matrix.values, dtype="<f4").tobytes())
        return ManifestEntry(matrix.utt_id, self.path, offset, rows)

    def write_int_vector(self, seq: AssignmentSeq) -> ManifestEntry:
        offset = self._begin_record(seq.utt_id)
        self._fd.write(_INT_SIZE + struct.pack("<i", len(seq)))
        self._fd.write(_pack_int_vector(seq.labels))
        return ManifestEntry(seq.utt_id, self.path, offset, len(seq))


def _read_exact(fd, n: int, what: str) -> bytes:
    data = fd.read(n)
    if len(data) != n:
        raise ArkFormatError(f"truncated archive while reading {what}")
    return data


def _read_key(fd) -> str | None:
    """Read a space-terminated utterance key; None at end of archive."""
    chars = bytearray()
    while True:
        b = fd.read(1)
        if not b:
            if chars:
                raise ArkFormatError("archive ends inside a record key")
            return None
        if b == b" ":
            break
        chars += b
    if not chars:
        raise ArkFormatError("empty record key")
    return chars.decode("utf-8")


def _read_sized_int32(fd, what: str) -> int:
    marker = _read_exact(fd, 1, what)
    if marker != _INT_SIZE:
        raise ArkFormatError(f"bad size marker 0x{marker[0]:02X} before {what}")
    return struct.unpack("<i", _read_exact(fd, 4, what))[0]


def _read_matrix_payload(fd, utt_id: str) -> np.ndarray:
    flag = _read_exact(fd, 2, "binary flag")
    if flag != _BINARY_FLAG:
        raise ArkFormatError(f"{utt_id!r}: corrupt binary flag {flag!r}")
    token = _read_exact(fd, 3, "matrix token")
    if token != _MATRIX_TOKEN:
        raise ArkFormatError(f"{utt_id!r}: unsupported record token {token!r}")
    rows = _read_sized_int32(fd, "row count")
    cols = _read_sized_int32(fd, "column count")
    if rows < 0 or cols <= 0:
        raise ArkFormatError(f"{utt_id!r}: bad matrix dims {rows}x{cols}")
    payload = fd.read(rows * cols * 4)
    if len(payload) != rows * cols * 4:
        raise ArkFormatError(f"{utt_id!r}: payload shorter than {rows}x{cols} header")
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()


def _read_int_vector_payload(fd, utt_id: str) -> np.ndarray:
    flag = _read_exact(fd, 2, "binary flag")
    if flag != _BINARY_FLAG:
        raise ArkFormatError(f"{utt_id!r}: corrupt binary flag {flag!r}")
    count = _read_sized_int32(fd, "vector length")
    if count < 0:
        raise ArkFormatError(f"{utt_id!r}: negative vector length {count}")
    payload = fd.read(count * 5)
    if len(payload) != count * 5:
        raise ArkFormatError(f"{utt_id!r}: payload shorter than {count}-element header")
    if count == 0:
        return np.empty(0, dtype=np.int32)
    rec = np.frombuffer(payload, dtype=[("size", "i1"), ("value", "<i4")])
    if not (rec["size"] == 4).all():
        raise ArkFormatError(f"{utt_id!r}: unexpected element size marker")
    return rec["value"].astype(np.int32)


def _seek_record(entry: ManifestEntry):
    fd = open(entry.source_path, "rb")
    if entry.byte_offset is None:
        fd.close()
        raise ArkFormatError(f"{entry.utt_id!r}: manifest entry has no byte offset")
    fd.seek(entry.byte_offset)
    return fd


def read_ark_matrix(entry: ManifestEntry, frame_shift: float = 0.010) -> FeatureMatrix:
    """Read one float-matrix record addressed by a manifest entry.

    The archive stores no frame timing, so frame_shift is supplied by the
    caller (it defaults to the standard 10 ms hop).
    """
    with _seek_record(entry) as fd:
        values = _read_matrix_payload(fd, entry.utt_id)
    return FeatureMatrix(entry.utt_id, values, frame_shift)


def read_ark_ints(entry: ManifestEntry, codebook_size: int | None = None) -> AssignmentSeq:
    """Read one int-vector record; codebook_size defaults to max(label)+1."""
    with _seek_record(entry) as fd:
        values = _read_int_vector_payload(fd, entry.utt_id)
    if codebook_size is None:
        codebook_size = int(values.max()) + 1 if values.size else 1
    return AssignmentSeq(entry.utt_id, values, codebook_size)


def iter_ark_matrices(path, frame_shift: float = 0.010):
    """Yield (sequentially) every float-matrix record in an archive."""
    with open(path, "rb") as fd:
        while True:
            utt_id = _read_key(fd)
            if utt_id is None:
                return
            yield FeatureMatrix(utt_id, _read_matrix_payload(fd, utt_id), frame_shift)


def iter_ark_int_vectors(path, codebook_size: int | None = None):
    """Yield every int-vector record in an archive as AssignmentSeq."""
    with open(path, "rb") as fd:
        while True:
            utt_id = _read_key(fd)
            if utt_id is None:
                return
            values = _read_int_vector_payload(fd, utt_id)
            k = codebook_size
            if k is None:
                k = int(values.max()) + 1 if values.size else 1
            yield AssignmentSeq(utt_id, values, k)


def verify_entry_key(entry: ManifestEntry) -> None:
    """Check that the record behind an entry really carries the entry's key.

    An offset addresses the payload, past the key, so this walks backwards:
    it re-reads a window ending at the offset and confirms it ends with
    ``<utt_id> ``.
    """
    key_bytes = entry.utt_id.encode("utf-8") + b" "
    with open(entry.source_path, "rb") as fd:
        start = (entry.byte_offset or 0) - len(key_bytes)
        if start < 0:
            raise ArkFormatError(f"{entry.utt_id!r}: offset too small to hold its key")
        fd.seek(start)
        found = fd.read(len(key_bytes))
    if found != key_bytes:
        raise ArkFormatError(
            f"entry key {entry.utt_id!r} does not match record at offset {entry.byte_offset}"
        )


def ark_paths(directory, stem: str, shard_index: int | None = None) -> tuple[Path, Path]:
    """Conventional (ark, scp) path pair, e.g. labels.0.ark / labels.0.scp."""
    directory = Path(directory)
    name = stem if shard_index is None else f"{stem}.{shard_index}"
    return directory / f"{name}.ark", directory / f"{name}.scp"
