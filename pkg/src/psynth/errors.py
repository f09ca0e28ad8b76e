"""Exception and warning types shared across the package."""


class PsynthError(Exception):
    """Base class for all package errors."""


class UnsupportedFormatError(PsynthError):
    """Audio file uses a codec or sample format we do not decode."""


class CorruptFileError(PsynthError):
    """Audio or container file is structurally damaged (truncated chunks, bad hash)."""


class NoSignalError(PsynthError):
    """Entire waveform is below the silence threshold."""


class SilentInputError(PsynthError):
    """Feature extraction requested on a silent waveform."""


class SilentOutputError(PsynthError):
    """A synthesis backend produced a waveform below the silence threshold."""


class InsufficientDataError(PsynthError):
    """Not enough records to fit a normalizer or build a dataset."""


class ShapeMismatchError(PsynthError):
    """Tensor or parameter shapes are inconsistent with the configuration."""


class InvalidConfigError(PsynthError):
    """Model or training configuration violates its invariants."""


class NonFiniteError(PsynthError):
    """A loss, gradient or parameter became NaN or Inf."""


class VersionMismatchError(PsynthError):
    """Serialized file carries an unknown format version."""


class HashMismatchError(CorruptFileError):
    """Stored content hash does not match the payload."""


class ClippingWarning(UserWarning):
    """Samples outside [-1, 1] were hard-clipped."""


class TruncationWarning(UserWarning):
    """A waveform longer than the target length had its tail dropped."""
