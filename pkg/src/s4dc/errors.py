"""Error taxonomy shared across the engine."""


class S4dcError(Exception):
    """Base class for all errors raised by this package."""


# --- state-space math ---

class NonFiniteError(S4dcError):
    """A computation produced NaN or Inf."""


class UnstableError(S4dcError):
    """Discrete poles lie on or outside the unit circle."""


class DimensionMismatchError(S4dcError):
    """Array shapes do not agree with the system dimensions."""


class InvalidOrderError(S4dcError):
    """Requested SSM order is not representable."""


class StateMismatchError(S4dcError):
    """A state object was built for a different model configuration."""


# --- weight container ---

class ContainerError(S4dcError):
    """Base class for weight-container load failures."""


class BadMagicError(ContainerError):
    """File does not start with the container magic."""


class UnsupportedVersionError(ContainerError):
    """Container version is newer than this reader understands."""


class CorruptManifestError(ContainerError):
    """Manifest is unreadable or inconsistent with the payload."""


class MissingTensorError(ContainerError):
    """A tensor required by the documented layout is absent."""


class ShapeMismatchError(ContainerError):
    """A tensor's shape disagrees with the model configuration."""


# --- audio files ---

class UnsupportedFormatError(S4dcError):
    """WAV encoding this reader does not handle."""


class MultichannelInputError(S4dcError):
    """Engine is mono; the file has more than one channel."""


class CorruptWavError(S4dcError):
    """File is not a well-formed RIFF/WAVE stream."""


# --- metrics ---

class LengthMismatchError(S4dcError):
    """Compared signals have different lengths."""


class EmptySignalError(S4dcError):
    """Signal has no samples."""


class SilentReferenceError(S4dcError):
    """Reference signal has zero energy, so the ratio is undefined."""


class TooShortError(S4dcError):
    """Signal is shorter than the metric's minimum analysis window."""
