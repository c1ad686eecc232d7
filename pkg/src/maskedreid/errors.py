"""Exception types shared across the package.

Validation-style errors (bad files, bad configs, bad arguments) derive from
``ValidationError``; failures that occur while a pipeline is running derive
from ``RuntimeFailure``. The CLI maps the two families to distinct exit codes.
"""


class MaskedReidError(Exception):
    """Base class for all package errors."""


class ValidationError(MaskedReidError):
    """Invalid input data, file, or configuration."""


class SchemaError(ValidationError):
    """A vocabulary or attribute file violates its schema."""


class EncodingError(ValidationError):
    """Attribute names cannot be encoded against the vocabulary."""


class AlignmentError(ValidationError):
    """A vector's length does not match the vocabulary it claims to follow."""


class ManifestError(ValidationError):
    """A dataset manifest is malformed or references missing files."""


class ConfigError(ValidationError):
    """A run configuration is malformed or inconsistent."""


class RuntimeFailure(MaskedReidError):
    """A pipeline failed while executing."""


class SamplingError(RuntimeFailure):
    """A batch cannot be sampled from the available records."""


class MiningError(RuntimeFailure):
    """In-batch triplet mining preconditions are violated."""


class ProtocolError(RuntimeFailure):
    """The evaluation protocol cannot produce a well-defined result."""


class TrainingError(RuntimeFailure):
    """Training aborted (for example on a non-finite loss)."""


class CheckpointError(ValidationError):
    """A checkpoint file is missing, corrupt, or from an unknown version."""
