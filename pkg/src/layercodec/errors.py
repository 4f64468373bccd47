"""Exception hierarchy shared by every codec stage."""


class CodecError(Exception):
    """Base class for all errors raised by :mod:`layercodec`."""


class InvalidInput(CodecError, ValueError):
    pass


class InvalidWeights(CodecError, ValueError):
    pass


class InvalidMaskSet(CodecError, ValueError):
    pass


class EncodingError(CodecError):
    pass


class DecodingError(CodecError):
    pass


class SerializationError(CodecError):
    pass


class FormatError(CodecError):
    """Malformed or truncated container / weights file."""


class CorruptionError(FormatError):
    """CRC mismatch on a container section."""


class RangeError(CodecError, IndexError):
    """Requested layer index is beyond what the container holds."""


class DecodeOrderError(CodecError):
    """An inter frame was requested without its reference."""
