"""Exception hierarchy shared across the pipeline."""


class AddPipeError(Exception):
    """Base class for all pipeline errors."""


class ParseError(AddPipeError):
    """Input file is structurally malformed."""


class ValidationError(AddPipeError):
    """Input parsed but violates a dataset invariant; message names the record."""


class MaskFormatError(AddPipeError):
    """Run-length or polygon mask payload is not well formed."""


class NoInstancesError(AddPipeError):
    """Image has no annotations to remove."""


class MissingMaskError(AddPipeError):
    """Instance lacks a mask and no segmentation fallback is configured."""


class ArityMismatchError(AddPipeError):
    """Template placeholders incompatible with the given object phrases."""


class EmptyBankError(AddPipeError):
    """Template bank contains no templates."""


class ShapeMismatchError(AddPipeError):
    """Tensor or image operands have incompatible shapes."""


class TimestepOutOfRangeError(AddPipeError):
    """Timestep outside [0, total_steps]."""


class InvalidRangeError(AddPipeError):
    """Schedule parameters outside their valid range."""


class EmptyCandidatesError(AddPipeError):
    """No candidate categories available for sampling."""


class NoAddedObjectsError(AddPipeError):
    """Grounding found none of the added objects; record is dropped."""


class EmptyPoolError(AddPipeError):
    """A sample pool with a nonzero mix share is empty."""


class ZeroVectorError(AddPipeError):
    """Cosine similarity is undefined for a zero vector."""


class DimMismatchError(AddPipeError):
    """Vectors have different dimensions."""


class BackendError(AddPipeError):
    """A model backend call failed; message carries job context."""


class BackendTimeoutError(BackendError):
    """Remote backend did not answer within the deadline."""


class ProtocolError(BackendError):
    """Remote response violates the wire protocol schema."""


class RemoteError(BackendError):
    """Bridge-reported failure with its error code and message."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class ConfigError(AddPipeError):
    """Pipeline configuration is invalid or references missing inputs."""
