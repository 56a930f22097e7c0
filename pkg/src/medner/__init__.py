"""medner: biomedical named entity recognition and de-identification.

Pipeline stages: corpus ingestion -> embedding lookup -> BiLSTM-CNN-CRF
tagging -> chunk decoding with confidence scores -> de-identification ->
entity-level evaluation. Every numerical component is checked against
brute-force oracles at desk scale; see the test suite.
"""

__version__ = "0.1.0"

from . import chunking, corpus, deid, embeddings, evaluation, nercore
from .errors import (
    ChecksumError,
    MednerError,
    ModelFormatError,
    NumericError,
    ParseError,
    SchemaError,
    ShapeMismatchError,
    ValidationError,
    VersionMismatchError,
)

__all__ = [
    "chunking",
    "corpus",
    "deid",
    "embeddings",
    "evaluation",
    "nercore",
    "MednerError",
    "ParseError",
    "SchemaError",
    "ValidationError",
    "NumericError",
    "ModelFormatError",
    "VersionMismatchError",
    "ChecksumError",
    "ShapeMismatchError",
    "__version__",
]
