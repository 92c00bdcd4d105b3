"""Exception taxonomy.

The CLI maps these onto distinct exit codes, so keep the split between
configuration, file-format/I-O, and numeric errors intact.
"""


class SslprepError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SslprepError):
    """Invalid or inconsistent configuration."""


class WavError(SslprepError):
    """Base class for WAV decoding problems."""


class WavHeaderError(WavError):
    """Malformed RIFF/WAVE container structure."""


class WavEncodingError(WavError):
    """Sample encoding we do not support (or corrupt sample data)."""


class WavChannelError(WavError):
    """Multi-channel audio; silent downmixing is never performed."""


class ArkFormatError(SslprepError):
    """Corrupt or unsupported binary archive record."""


class CodebookFormatError(SslprepError):
    """Corrupt or unsupported codebook / partial-stats / sample-buffer file."""


class DimensionMismatchError(SslprepError):
    """Operands disagree on feature dimensionality or sequence length."""


class DegenerateDataError(SslprepError):
    """Too little (or too repetitive) data for the requested operation."""


class LabelRangeError(SslprepError):
    """A cluster label lies outside [0, codebook_size)."""
