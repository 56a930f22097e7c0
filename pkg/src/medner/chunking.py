"""Turn tag sequences into entity chunks with character offsets and
confidence scores, and compute context-averaged chunk embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import LabelSchema, Sentence, iob_spans, validate_iob
from .embeddings import EmbeddingTable, pool_mean
from .errors import ParseError, ValidationError


@dataclass
class Chunk:
    """A decoded entity span.

    `token_span` is (first, last) token index, inclusive; `begin`/`end` are
    inclusive character offsets; `surface` is the chunk tokens joined with
    single spaces. Chunks parsed back from record files have no token span.
    """

    entity_type: str
    token_span: tuple[int, int] | None
    begin: int
    end: int
    surface: str
    confidence: float
    sent_index: int = 0

    def __post_init__(self):
        if self.token_span is not None and self.token_span[0] > self.token_span[1]:
            raise ValidationError(f"bad token span {self.token_span}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError(f"confidence {self.confidence} outside [0, 1]")
        if self.begin > self.end:
            raise ValidationError(f"bad character span [{self.begin}, {self.end}]")

    @property
    def span(self) -> tuple[int, int, str]:
        if self.token_span is None:
            raise ValidationError("chunk has no token span")
        return (self.token_span[0], self.token_span[1], self.entity_type)


def decode_chunks(
    sentence: Sentence,
    tag_sequence: list[str],
    marginals: np.ndarray | None = None,
    schema: LabelSchema | None = None,
    confidence_mode: str = "min",
) -> list[Chunk]:
    """Maximal B-X (I-X)* runs become chunks (input must be valid IOB2).

    Chunk confidence aggregates each token's posterior probability of its
    assigned tag: the minimum by default (a chunk is wrong if any token is),
    or the geometric mean. `marginals` may be the full (N, num_tags) matrix
    (requires `schema`) or a length-N vector of assigned-tag probabilities;
    without it every confidence is 1.
    """
    if len(tag_sequence) != len(sentence):
        raise ValidationError("tag sequence length does not match sentence")
    violations = validate_iob(tag_sequence, "IOB2")
    if violations:
        idx, reason = violations[0]
        raise ValidationError(f"invalid IOB2 sequence at index {idx}: {reason}")
    if confidence_mode not in ("min", "geomean"):
        raise ValidationError(f"unknown confidence_mode {confidence_mode!r}")

    probs: np.ndarray | None = None
    if marginals is not None:
        marginals = np.asarray(marginals, dtype=np.float64)
        if marginals.ndim == 2:
            if schema is None:
                raise ValidationError("matrix marginals require a schema")
            cols = [schema.tag_to_index[t] for t in tag_sequence]
            probs = marginals[np.arange(len(tag_sequence)), cols]
        elif marginals.ndim == 1:
            probs = marginals
        else:
            raise ValidationError("marginals must be a vector or a matrix")
        if probs.shape[0] != len(tag_sequence):
            raise ValidationError("marginals length does not match sentence")

    chunks = []
    for first, last, etype in iob_spans(tag_sequence, "IOB2"):
        if probs is None:
            confidence = 1.0
        elif confidence_mode == "min":
            confidence = float(np.min(probs[first : last + 1]))
        else:
            confidence = float(np.exp(np.mean(np.log(np.maximum(probs[first : last + 1], 1e-300)))))
        tokens = sentence.tokens[first : last + 1]
        chunks.append(
            Chunk(
                entity_type=etype,
                token_span=(first, last),
                begin=tokens[0].begin,
                end=tokens[-1].end,
                surface=" ".join(t.surface for t in tokens),
                confidence=min(confidence, 1.0),
                sent_index=sentence.sent_index,
            )
        )
    return chunks


def chunks_to_tags(chunks: list[Chunk], sentence_length: int) -> list[str]:
    """Exact inverse of decode_chunks on span/type information."""
    ordered = sorted(chunks, key=lambda c: c.span[:2])
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.span[0] <= prev.span[1]:
            raise ValidationError(
                f"chunks overlap: {prev.entity_type}@{prev.token_span} and "
                f"{cur.entity_type}@{cur.token_span}"
            )
    tags = ["O"] * sentence_length
    for chunk in ordered:
        first, last, etype = chunk.span
        if first < 0 or last >= sentence_length:
            raise ValidationError(
                f"chunk {etype}@{chunk.token_span} outside sentence of length {sentence_length}"
            )
        tags[first] = f"B-{etype}"
        for i in range(first + 1, last + 1):
            tags[i] = f"I-{etype}"
    return tags


@dataclass
class ChunkEmbedding:
    chunk: Chunk
    vector: np.ndarray


def chunk_embedding(table: EmbeddingTable, sentence: Sentence, chunk: Chunk) -> np.ndarray:
    """Average of the mean-pooled chunk vectors and sentence vectors."""
    if len(sentence) == 0:
        raise ValidationError("cannot embed a chunk of an empty sentence")
    first, last, _ = chunk.span
    if last >= len(sentence):
        raise ValidationError("chunk lies outside the sentence")
    chunk_vec = pool_mean([table.lookup(t.surface) for t in sentence.tokens[first : last + 1]])
    sent_vec = pool_mean([table.lookup(t.surface) for t in sentence.tokens])
    return (chunk_vec + sent_vec) / 2.0


RECORD_HEADER = "# sent\tbegin\tend\tsurface\tentity\tconfidence"


def write_chunk_records(chunks: list[Chunk]) -> str:
    """Line-delimited records: sentence, offsets, surface, type, confidence.

    Confidence is rounded to two decimals, matching the report layout.
    """
    lines = [RECORD_HEADER]
    for c in chunks:
        lines.append(
            f"{c.sent_index}\t{c.begin}\t{c.end}\t{c.surface}\t{c.entity_type}\t{c.confidence:.2f}"
        )
    return "\n".join(lines) + "\n"


def parse_chunk_records(text: str) -> list[Chunk]:
    chunks = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 6:
            raise ParseError(f"expected 6 tab-separated fields, found {len(parts)}", line=lineno)
        try:
            chunks.append(
                Chunk(
                    entity_type=parts[4],
                    token_span=None,
                    begin=int(parts[1]),
                    end=int(parts[2]),
                    surface=parts[3],
                    confidence=float(parts[5]),
                    sent_index=int(parts[0]),
                )
            )
        except (ValueError, ValidationError) as exc:
            raise ParseError(f"bad chunk record: {exc}", line=lineno)
    return chunks
