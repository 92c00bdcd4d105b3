"""RIFF/WAVE reading and writing.

Deliberately small: mono PCM16 or IEEE float32 only. Multi-channel files
are an error rather than an implicit downmix, and anything outside the two
supported encodings is rejected outright, so a corrupt corpus surfaces as
loud failures instead of silently skewed features.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .errors import WavChannelError, WavEncodingError, WavHeaderError
from .records import WaveRecord

_FORMAT_PCM = 1
_FORMAT_IEEE_FLOAT = 3
_FORMAT_EXTENSIBLE = 0xFFFE

_PCM16_SCALE = 32768.0


def _read_exact(fd, n: int, what: str) -> bytes:
    data = fd.read(n)
    if len(data) != n:
        raise WavHeaderError(f"truncated file while reading {what}")
    return data


def _parse_header(fd):
    """Walk the RIFF chunks and return (sample_rate, channels, fmt, bits, data_offset, data_size)."""
    riff, _, wave = struct.unpack("<4sI4s", _read_exact(fd, 12, "RIFF header"))
    if riff != b"RIFF" or wave != b"WAVE":
        raise WavHeaderError("not a RIFF/WAVE file")

    fmt_fields = None
    while True:
        head = fd.read(8)
        if len(head) == 0:
            raise WavHeaderError("no data chunk found")
        if len(head) != 8:
            raise WavHeaderError("truncated chunk header")
        chunk_id, chunk_size = struct.unpack("<4sI", head)
        if chunk_id == b"fmt ":
            body = _read_exact(fd, chunk_size, "fmt chunk")
            if chunk_size < 16:
                raise WavHeaderError("fmt chunk too short")
            audio_format, channels, sample_rate, _, block_align, bits = struct.unpack(
                "<HHIIHH", body[:16]
            )
            fmt_fields = (audio_format, channels, sample_rate, block_align, bits)
        elif chunk_id == b"data":
            if fmt_fields is None:
                raise WavHeaderError("data chunk before fmt chunk")
            return (*fmt_fields, fd.tell(), chunk_size)
        else:
            # LIST/fact/etc: skip, chunks are word-aligned
            fd.seek(chunk_size + (chunk_size & 1), io.SEEK_CUR)


def read_wav_header(path) -> tuple[int, int, str]:
    """Return (sample_rate, num_samples, encoding) without reading the payload.

    Useful for building corpus manifests: only the header bytes are touched.
    """
    with open(path, "rb") as fd:
        audio_format, channels, sample_rate, block_align, bits, _, data_size = _parse_header(fd)
    encoding = _encoding_name(audio_format, bits)
    if channels != 1:
        raise WavChannelError(f"{path}: expected mono, got {channels} channels")
    if block_align == 0:
        raise WavHeaderError(f"{path}: zero block alignment")
    return sample_rate, data_size // block_align, encoding


def _encoding_name(audio_format: int, bits: int) -> str:
    if audio_format == _FORMAT_PCM and bits == 16:
        return "pcm16"
    if audio_format == _FORMAT_IEEE_FLOAT and bits == 32:
        return "float32"
    if audio_format == _FORMAT_EXTENSIBLE:
        raise WavEncodingError("WAVE_FORMAT_EXTENSIBLE is not supported")
    if audio_format in (_FORMAT_PCM, _FORMAT_IEEE_FLOAT):
        raise WavEncodingError(f"unsupported bit depth {bits} for format {audio_format}")
    raise WavEncodingError(f"unsupported audio format tag 0x{audio_format:04X}")


def read_wav(path, utt_id: str | None = None) -> WaveRecord:
    """Decode a mono PCM16 / float32 WAV file into a normalized WaveRecord.

    PCM16 samples are scaled by 1/32768. utt_id defaults to the file stem.
    """
    path = Path(path)
    with open(path, "rb") as fd:
        audio_format, channels, sample_rate, block_align, bits, offset, data_size = _parse_header(fd)
        encoding = _encoding_name(audio_format, bits)
        if channels != 1:
            raise WavChannelError(f"{path}: expected mono, got {channels} channels")
        fd.seek(offset)
        payload = fd.read(data_size)
    if len(payload) != data_size:
        raise WavHeaderError(f"{path}: data chunk shorter than header claims")

    if encoding == "pcm16":
        samples = np.frombuffer(payload, dtype="<i2").astype(np.float32) / _PCM16_SCALE
    else:
        samples = np.frombuffer(payload, dtype="<f4").astype(np.float32)
        if samples.size and (float(samples.min()) < -1.0 or float(samples.max()) > 1.0):
            raise WavEncodingError(f"{path}: float samples outside [-1.0, 1.0]")
    return WaveRecord(utt_id or path.stem, int(sample_rate), samples)


def write_wav(path, record: WaveRecord, encoding: str = "pcm16") -> None:
    """Write a WaveRecord as mono PCM16 (quantized) or float32 (lossless)."""
    if encoding == "pcm16":
        quantized = np.clip(
            np.rint(record.samples.astype(np.float64) * _PCM16_SCALE), -32768, 32767
        ).astype("<i2")
        payload = quantized.tobytes()
        audio_format, bits = _FORMAT_PCM, 16
    elif encoding == "float32":
        payload = record.samples.astype("<f4").tobytes()
        audio_format, bits = _FORMAT_IEEE_FLOAT, 32
    else:
        raise WavEncodingError(f"unsupported write encoding {encoding!r}")

    block_align = bits // 8
    byte_rate = record.sample_rate * block_align
    with open(path, "wb") as fd:
        fd.write(b"RIFF")
        fd.write(struct.pack("<I", 36 + len(payload)))
        fd.write(b"WAVE")
        fd.write(b"fmt ")
        fd.write(
            struct.pack(
                "<IHHIIHH", 16, audio_format, 1, record.sample_rate, byte_rate, block_align, bits
            )
        )
        fd.write(b"data")
        fd.write(struct.pack("<I", len(payload)))
        fd.write(payload)
