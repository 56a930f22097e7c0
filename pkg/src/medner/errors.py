"""Exception hierarchy shared across the pipeline.

The CLI maps each class to a distinct exit code, so new error kinds should
subclass one of these rather than raising bare exceptions.
"""


class MednerError(Exception):
    """Base class for all pipeline errors."""


class ParseError(MednerError):
    """Malformed input file (CoNLL, embeddings, policy, ...)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(MednerError):
    """Tag or entity type not covered by the label schema."""


class ValidationError(MednerError):
    """Structurally invalid data: IOB violations, bad spans, bad arguments."""


class NumericError(MednerError):
    """Non-finite values encountered during training or inference."""


class ModelFormatError(MednerError):
    """Problem with a serialized model container."""


class VersionMismatchError(ModelFormatError):
    """Container format version not supported by this build."""


class ChecksumError(ModelFormatError):
    """Tensor payload corrupted or truncated."""


class ShapeMismatchError(ModelFormatError):
    """Tensor shape disagrees with the container manifest."""
