"""Corpus ingestion: sentence splitting, tokenization, CoNLL parsing, IOB
tag handling, vocabularies, and deterministic data splits.

Character offsets are 0-based with inclusive begin/end throughout. The
package-internal tagging scheme is IOB2; IOB1 is handled on import/export
only (see ``convert_scheme``).
"""

from __future__ import annotations

import logging
import string
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, SchemaError, ValidationError

log = logging.getLogger(__name__)

SCHEMES = ("IOB1", "IOB2")
DEFAULT_MAX_SEQ_LENGTH = 512

PAD_INDEX = 0
UNK_INDEX = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

# Words that end with '.' but do not close a sentence. Extensible via the
# `abbreviations` argument of sentence_split (the CLI reads them from a file).
DEFAULT_ABBREVIATIONS = frozenset(
    {
        "Dr.", "Mr.", "Mrs.", "Ms.", "Prof.", "St.",
        "Fig.", "Figs.", "Eq.", "No.", "al.",
        "e.g.", "i.e.", "etc.", "vs.", "cf.",
    }
)

_DETACH_PUNCT = frozenset(string.punctuation)


def _check_scheme(scheme: str) -> None:
    if scheme not in SCHEMES:
        raise ValidationError(f"unknown tagging scheme {scheme!r}, expected one of {SCHEMES}")


def split_tag(tag: str) -> tuple[str, str | None]:
    """Split an IOB tag into (prefix, entity type); 'O' maps to ('O', None)."""
    if tag == "O":
        return "O", None
    if len(tag) > 2 and tag[1] == "-" and tag[0] in ("B", "I"):
        return tag[0], tag[2:]
    raise ValidationError(f"malformed IOB tag {tag!r}")


@dataclass(frozen=True)
class Token:
    """A surface string anchored to its source text by inclusive offsets."""

    surface: str
    begin: int
    end: int
    tag: str | None = None

    def __post_init__(self):
        if not self.surface:
            raise ValidationError("token surface must be non-empty")
        if "\n" in self.surface or "\r" in self.surface:
            raise ValidationError(f"token surface contains a newline: {self.surface!r}")
        if self.begin < 0 or self.begin > self.end:
            raise ValidationError(f"bad token offsets [{self.begin}, {self.end}]")
        if self.end - self.begin + 1 != len(self.surface):
            raise ValidationError(
                f"token {self.surface!r} does not span [{self.begin}, {self.end}]"
            )

    def with_tag(self, tag: str | None) -> "Token":
        return Token(self.surface, self.begin, self.end, tag)


@dataclass
class Sentence:
    tokens: list[Token]
    doc_id: str = "doc0"
    sent_index: int = 0

    def __post_init__(self):
        if not self.tokens:
            raise ValidationError("sentence must contain at least one token")
        if self.sent_index < 0:
            raise ValidationError("sent_index must be non-negative")
        for prev, cur in zip(self.tokens, self.tokens[1:]):
            if cur.begin <= prev.end:
                raise ValidationError(
                    f"token offsets not strictly increasing at {cur.surface!r}"
                )
        tagged = [t.tag is not None for t in self.tokens]
        if any(tagged) and not all(tagged):
            raise ValidationError("sentence is partially tagged")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def is_tagged(self) -> bool:
        return self.tokens[0].tag is not None

    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    def tags(self) -> list[str]:
        if not self.is_tagged:
            raise ValidationError("sentence has no tags")
        return [t.tag for t in self.tokens]  # type: ignore[misc]

    def with_tags(self, tags: list[str] | None) -> "Sentence":
        if tags is not None and len(tags) != len(self.tokens):
            raise ValidationError("tag sequence length does not match sentence")
        new = [
            t.with_tag(tags[i] if tags is not None else None)
            for i, t in enumerate(self.tokens)
        ]
        return Sentence(new, self.doc_id, self.sent_index)


@dataclass
class LabelSchema:
    """Entity type inventory plus the derived IOB tag set and transition mask.

    Tag order is fixed: 'O' first, then 'B-t', 'I-t' for each entity type in
    declaration order. The transition mask appends virtual START and STOP
    states after the real tags.
    """

    entity_types: list[str]
    scheme: str = "IOB2"
    tags: list[str] = field(init=False)
    tag_to_index: dict[str, int] = field(init=False)

    def __post_init__(self):
        _check_scheme(self.scheme)
        if len(set(self.entity_types)) != len(self.entity_types):
            raise ValidationError("duplicate entity types in schema")
        for t in self.entity_types:
            if not t or "\n" in t:
                raise ValidationError(f"bad entity type name {t!r}")
        self.tags = ["O"]
        for t in self.entity_types:
            self.tags.append(f"B-{t}")
            self.tags.append(f"I-{t}")
        self.tag_to_index = {t: i for i, t in enumerate(self.tags)}

    @property
    def num_tags(self) -> int:
        return len(self.tags)

    @property
    def start_index(self) -> int:
        return self.num_tags

    @property
    def stop_index(self) -> int:
        return self.num_tags + 1

    def transition_mask(self) -> np.ndarray:
        """Boolean (num_tags+2)^2 matrix of legal transitions under the scheme.

        Row = source tag, column = target tag. START never receives, STOP
        never emits.
        """
        n = self.num_tags
        start, stop = self.start_index, self.stop_index
        mask = np.zeros((n + 2, n + 2), dtype=bool)
        infos = [split_tag(t) for t in self.tags]

        def legal(src: tuple[str, str | None], dst: tuple[str, str | None]) -> bool:
            dprefix, dtype = dst
            sprefix, stype = src
            if self.scheme == "IOB2":
                if dprefix == "I":
                    return sprefix in ("B", "I") and stype == dtype
                return True  # O and B-X reachable from anything
            # IOB1: I-X may start a chunk anywhere; B-X only splits two
            # adjacent chunks of type X.
            if dprefix == "B":
                return sprefix in ("B", "I") and stype == dtype
            return True

        for i, src in enumerate(infos):
            for j, dst in enumerate(infos):
                mask[i, j] = legal(src, dst)
            mask[i, stop] = True
        for j, dst in enumerate(infos):
            mask[start, j] = legal(("O", None), dst)
        return mask

    def to_text(self) -> str:
        lines = [f"scheme: {self.scheme}"]
        lines.extend(self.entity_types)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LabelSchema":
        scheme = "IOB2"
        types: list[str] = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.lower().startswith("scheme:"):
                scheme = line.split(":", 1)[1].strip()
                continue
            types.append(line)
        if not types:
            raise ParseError("schema file lists no entity types")
        return cls(types, scheme)


@dataclass
class Corpus:
    sentences: list[Sentence]
    schema: LabelSchema

    def __post_init__(self):
        known = set(self.schema.tags)
        for sent in self.sentences:
            if not sent.is_tagged:
                continue
            tags = sent.tags()
            bad = [t for t in tags if t not in known]
            if bad:
                raise SchemaError(
                    f"{sent.doc_id}[{sent.sent_index}]: tags not in schema: {sorted(set(bad))}"
                )
            violations = validate_iob(tags, self.schema.scheme)
            if violations:
                idx, reason = violations[0]
                raise ValidationError(
                    f"{sent.doc_id}[{sent.sent_index}]: invalid {self.schema.scheme} at "
                    f"token {idx}: {reason}"
                )

    def __len__(self) -> int:
        return len(self.sentences)

    def subset(self, indices: list[int]) -> "Corpus":
        return Corpus([self.sentences[i] for i in indices], self.schema)

    def entity_types_present(self) -> set[str]:
        present: set[str] = set()
        for sent in self.sentences:
            if not sent.is_tagged:
                continue
            for tag in sent.tags():
                prefix, etype = split_tag(tag)
                if etype is not None:
                    present.add(etype)
        return present


def sentence_split(
    raw_text: str, abbreviations: frozenset[str] | set[str] = DEFAULT_ABBREVIATIONS
) -> list[tuple[str, int, int]]:
    """Split text into sentences, returning (sentence_text, begin, end) triples.

    Boundaries occur after '.', '!' or '?' followed by whitespace and an
    upper-case letter or digit, and at newlines. Words in `abbreviations`
    never close a sentence. Offsets are inclusive; slices are trimmed of
    surrounding whitespace, so concatenating them preserves every
    non-whitespace character.
    """
    sentences: list[tuple[str, int, int]] = []
    n = len(raw_text)

    def close(start: int, end: int) -> None:
        while end >= start and raw_text[end].isspace():
            end -= 1
        if end >= start:
            sentences.append((raw_text[start : end + 1], start, end))

    start: int | None = None
    for i, ch in enumerate(raw_text):
        if ch == "\n":
            if start is not None:
                close(start, i - 1)
                start = None
            continue
        if start is None:
            if ch.isspace():
                continue
            start = i
        if ch in ".!?":
            j = i + 1
            while j < n and raw_text[j] in " \t":
                j += 1
            if j == i + 1 or j >= n or raw_text[j] == "\n":
                continue
            if not (raw_text[j].isupper() or raw_text[j].isdigit()):
                continue
            if ch == "." and _is_abbreviation(raw_text, i, abbreviations):
                continue
            close(start, i)
            start = None
    if start is not None:
        close(start, n - 1)
    return sentences


def _is_abbreviation(text: str, dot: int, abbreviations) -> bool:
    k = dot
    while k > 0 and not text[k - 1].isspace():
        k -= 1
    word = text[k : dot + 1]
    return word in abbreviations or word.lstrip("([{\"'") in abbreviations


def tokenize(sentence_text: str, base_offset: int = 0) -> list[Token]:
    """Whitespace-tokenize, detaching leading/trailing punctuation.

    Internal punctuation stays inside the token, so clinical terms like
    "COVID-19" or "2021-01-14" survive intact while "fever," splits into
    two tokens. Offsets are absolute via `base_offset`.
    """
    if not sentence_text:
        raise ValidationError("cannot tokenize empty text")
    tokens: list[Token] = []

    def emit(piece: str, rel_begin: int) -> None:
        begin = base_offset + rel_begin
        tokens.append(Token(piece, begin, begin + len(piece) - 1))

    pos = 0
    n = len(sentence_text)
    while pos < n:
        if sentence_text[pos].isspace():
            pos += 1
            continue
        end = pos
        while end < n and not sentence_text[end].isspace():
            end += 1
        chunk = sentence_text[pos:end]
        left, right = 0, len(chunk)
        while left < right and chunk[left] in _DETACH_PUNCT:
            left += 1
        while right > left and chunk[right - 1] in _DETACH_PUNCT:
            right -= 1
        for k in range(left):
            emit(chunk[k], pos + k)
        if right > left:
            emit(chunk[left:right], pos + left)
        for k in range(right, len(chunk)):
            emit(chunk[k], pos + k)
        pos = end
    return tokens


def validate_iob(tag_sequence: list[str], scheme: str) -> list[tuple[int, str]]:
    """Return (index, reason) pairs for every scheme violation; [] if valid."""
    _check_scheme(scheme)
    violations: list[tuple[int, str]] = []
    prev: tuple[str, str | None] | None = None
    for i, tag in enumerate(tag_sequence):
        try:
            prefix, etype = split_tag(tag)
        except ValidationError as exc:
            violations.append((i, str(exc)))
            prev = None
            continue
        if scheme == "IOB2":
            if prefix == "I" and not (prev is not None and prev[0] in ("B", "I") and prev[1] == etype):
                violations.append((i, f"I-{etype} must follow B-{etype} or I-{etype}"))
        else:  # IOB1
            if prefix == "B" and not (prev is not None and prev[0] in ("B", "I") and prev[1] == etype):
                violations.append((i, f"B-{etype} must follow a chunk of type {etype}"))
        prev = (prefix, etype)
    return violations


def iob_spans(tag_sequence: list[str], scheme: str = "IOB2") -> list[tuple[int, int, str]]:
    """Extract (start, end, type) chunk spans (end inclusive).

    Assumes the sequence is valid under `scheme`; callers that cannot
    guarantee that should run validate_iob first.
    """
    _check_scheme(scheme)
    spans: list[tuple[int, int, str]] = []
    open_start: int | None = None
    open_type: str | None = None

    def close(end: int) -> None:
        nonlocal open_start, open_type
        if open_start is not None:
            spans.append((open_start, end, open_type))  # type: ignore[arg-type]
            open_start = open_type = None

    for i, tag in enumerate(tag_sequence):
        prefix, etype = split_tag(tag)
        if prefix == "O":
            close(i - 1)
        elif prefix == "B":
            close(i - 1)
            open_start, open_type = i, etype
        else:  # I continues a same-type chunk, otherwise starts one (IOB1)
            if open_start is not None and open_type == etype:
                continue
            close(i - 1)
            open_start, open_type = i, etype
    close(len(tag_sequence) - 1)
    return spans


def spans_to_iob(
    spans: list[tuple[int, int, str]], length: int, scheme: str = "IOB2"
) -> list[str]:
    """Inverse of iob_spans for non-overlapping, in-bounds spans."""
    _check_scheme(scheme)
    tags = ["O"] * length
    prev_end: dict[int, str] = {}
    for start, end, etype in sorted(spans):
        if start < 0 or end >= length or start > end:
            raise ValidationError(f"span ({start}, {end}) out of bounds for length {length}")
        for i in range(start, end + 1):
            if tags[i] != "O":
                raise ValidationError(f"overlapping spans at token {i}")
        if scheme == "IOB2":
            first = f"B-{etype}"
        else:
            first = f"B-{etype}" if prev_end.get(start - 1) == etype else f"I-{etype}"
        tags[start] = first
        for i in range(start + 1, end + 1):
            tags[i] = f"I-{etype}"
        prev_end[end] = etype
    return tags


def convert_scheme(tag_sequence: list[str], from_scheme: str, to_scheme: str) -> list[str]:
    """Re-express a tag sequence in another scheme, preserving the chunk set."""
    _check_scheme(from_scheme)
    _check_scheme(to_scheme)
    violations = validate_iob(tag_sequence, from_scheme)
    if violations:
        idx, reason = violations[0]
        raise ValidationError(f"invalid {from_scheme} sequence at index {idx}: {reason}")
    spans = iob_spans(tag_sequence, from_scheme)
    return spans_to_iob(spans, len(tag_sequence), to_scheme)


@dataclass(frozen=True)
class ColumnSpec:
    """Which whitespace-separated column holds the token and which the tag."""

    token_col: int
    tag_col: int | None
    n_cols: int | None = None
    sep: str | None = None  # None splits on runs of whitespace


CONLL4 = ColumnSpec(token_col=0, tag_col=3, n_cols=4)
TSV2 = ColumnSpec(token_col=0, tag_col=1, n_cols=2, sep="\t")
FORMATS: dict[str, ColumnSpec] = {"conll4": CONLL4, "tsv2": TSV2}


def synthesize_offsets(surfaces: list[str]) -> list[tuple[int, int]]:
    """Offsets for tokens joined by single spaces (CoNLL has no raw text)."""
    offsets = []
    pos = 0
    for s in surfaces:
        offsets.append((pos, pos + len(s) - 1))
        pos += len(s) + 1
    return offsets


def parse_conll(
    text: str,
    column_spec: ColumnSpec = CONLL4,
    schema: LabelSchema | None = None,
    input_scheme: str = "IOB2",
    strict: bool = True,
    max_seq_length: int = DEFAULT_MAX_SEQ_LENGTH,
) -> Corpus:
    """Parse CoNLL-style annotated text into a Corpus (canonical IOB2).

    Blank lines separate sentences; lines starting with "-DOCSTART-" begin a
    new document. Character offsets are synthesized by joining tokens with
    single spaces, per sentence. IOB1 input is validated under IOB1 and
    converted. Unknown tags raise SchemaError when strict, otherwise they are
    replaced by 'O' with a warning.
    """
    _check_scheme(input_scheme)
    sentences: list[Sentence] = []
    pending: list[tuple[str, str | None, int]] = []  # surface, tag, line number
    doc_index = 0
    doc_has_content = False
    sent_index = 0
    seen_types: set[str] = set()
    known = set(schema.tags) if schema is not None else None

    def flush() -> None:
        nonlocal pending, sent_index, doc_has_content
        if not pending:
            return
        if len(pending) > max_seq_length:
            log.warning(
                "truncating sentence of %d tokens to max_seq_length=%d (doc%d sentence %d)",
                len(pending), max_seq_length, doc_index, sent_index,
            )
            pending = pending[:max_seq_length]
        surfaces = [p[0] for p in pending]
        tags = [p[1] for p in pending]
        offsets = synthesize_offsets(surfaces)
        has_tags = any(t is not None for t in tags)
        if has_tags and not all(t is not None for t in tags):
            bad = next(p for p in pending if p[1] is None)
            raise ParseError("mixed tagged/untagged lines in one sentence", line=bad[2])
        if has_tags:
            tags = _clean_tags(tags, pending, known, strict, seen_types)
            if input_scheme == "IOB1":
                tags = convert_scheme(tags, "IOB1", "IOB2")
        tokens = [
            Token(s, b, e, tags[i] if has_tags else None)
            for i, (s, (b, e)) in enumerate(zip(surfaces, offsets))
        ]
        sentences.append(Sentence(tokens, f"doc{doc_index}", sent_index))
        sent_index += 1
        doc_has_content = True
        pending = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("-DOCSTART-"):
            flush()
            if doc_has_content:
                doc_index += 1
                sent_index = 0
                doc_has_content = False
            continue
        parts = line.split(column_spec.sep)
        if column_spec.n_cols is not None and len(parts) != column_spec.n_cols:
            raise ParseError(
                f"expected {column_spec.n_cols} columns, found {len(parts)}", line=lineno
            )
        max_col = max(column_spec.token_col, column_spec.tag_col or 0)
        if max_col >= len(parts):
            raise ParseError(f"missing column {max_col}", line=lineno)
        surface = parts[column_spec.token_col].strip()
        if not surface:
            raise ParseError("empty token column", line=lineno)
        tag = parts[column_spec.tag_col].strip() if column_spec.tag_col is not None else None
        if tag == "":
            raise ParseError("empty tag column", line=lineno)
        pending.append((surface, tag, lineno))
    flush()

    if schema is None:
        schema = LabelSchema(sorted(seen_types), "IOB2")
    return Corpus(sentences, schema)


def _clean_tags(
    tags: list[str | None],
    pending: list[tuple[str, str | None, int]],
    known: set[str] | None,
    strict: bool,
    seen_types: set[str],
) -> list[str]:
    cleaned: list[str] = []
    for i, tag in enumerate(tags):
        assert tag is not None
        try:
            _, etype = split_tag(tag)
        except ValidationError:
            if strict:
                raise ParseError(f"malformed tag {tag!r}", line=pending[i][2])
            log.warning("replacing malformed tag %r with O", tag)
            cleaned.append("O")
            continue
        if known is not None and tag not in known:
            if strict:
                raise SchemaError(f"line {pending[i][2]}: tag {tag!r} not in schema")
            log.warning("replacing unknown tag %r with O", tag)
            cleaned.append("O")
            continue
        if etype is not None:
            seen_types.add(etype)
        cleaned.append(tag)
    return cleaned


def write_conll(corpus: Corpus, column_spec: ColumnSpec = CONLL4) -> str:
    """Serialize a Corpus back to CoNLL text (inverse of parse_conll)."""
    lines: list[str] = []
    filler = "-X-"
    prev_doc: str | None = None
    for sent in corpus.sentences:
        if prev_doc is not None and sent.doc_id != prev_doc:
            lines.append("-DOCSTART-")
            lines.append("")
        prev_doc = sent.doc_id
        for token in sent.tokens:
            tag = token.tag if token.tag is not None else "O"
            if column_spec.n_cols == 4:
                lines.append(f"{token.surface} {filler} {filler} {tag}")
            elif column_spec.sep == "\t":
                lines.append(f"{token.surface}\t{tag}")
            else:
                lines.append(f"{token.surface} {tag}")
        lines.append("")
    return "\n".join(lines) + ("\n" if lines else "")


def split_corpus(
    corpus: Corpus, ratios: tuple[float, float, float], seed: int
) -> tuple[Corpus, Corpus, Corpus]:
    """Deterministic train/validation/test partition with exact sizes.

    Sizes are floors of n*ratio with the remainder distributed by largest
    fractional part (ties favor the earlier split).
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValidationError("ratios must be three non-negative numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"ratios must sum to 1, got {sum(ratios)}")
    n = len(corpus)
    exact = [n * r for r in ratios]
    sizes = [int(np.floor(x)) for x in exact]
    remainder = n - sum(sizes)
    by_frac = sorted(range(3), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in range(remainder):
        sizes[by_frac[i % 3]] += 1
    perm = np.random.default_rng(seed).permutation(n)
    cuts = [sizes[0], sizes[0] + sizes[1]]
    parts = (
        sorted(perm[: cuts[0]].tolist()),
        sorted(perm[cuts[0] : cuts[1]].tolist()),
        sorted(perm[cuts[1] :].tolist()),
    )
    return tuple(corpus.subset(p) for p in parts)  # type: ignore[return-value]


def stratified_kfold(corpus: Corpus, k: int, seed: int) -> list[tuple[Corpus, Corpus]]:
    """K disjoint folds stratified by the set of entity types in a sentence.

    Sentences are bucketed by their type set; each bucket is shuffled, then
    members are dealt round-robin across folds with a cursor that carries over
    between buckets, keeping fold sizes within one of each other.
    """
    n = len(corpus)
    if k < 2:
        raise ValidationError("k must be at least 2")
    if k > n:
        raise ValidationError(f"k={k} exceeds corpus size {n}")
    buckets: dict[tuple[str, ...], list[int]] = {}
    for i, sent in enumerate(corpus.sentences):
        types: set[str] = set()
        if sent.is_tagged:
            for tag in sent.tags():
                _, etype = split_tag(tag)
                if etype is not None:
                    types.add(etype)
        buckets.setdefault(tuple(sorted(types)), []).append(i)
    rng = np.random.default_rng(seed)
    fold_of = {}
    cursor = 0
    for key in sorted(buckets):
        members = buckets[key]
        order = rng.permutation(len(members))
        for j in order:
            fold_of[members[j]] = cursor % k
            cursor += 1
    folds = []
    for f in range(k):
        test_idx = sorted(i for i in range(n) if fold_of[i] == f)
        train_idx = sorted(i for i in range(n) if fold_of[i] != f)
        folds.append((corpus.subset(train_idx), corpus.subset(test_idx)))
    return folds


@dataclass
class Vocabulary:
    """Word and character index maps with reserved PAD/UNK slots.

    Word indices are ordered by (frequency desc, lexicographic) after the
    reserved slots; characters by code point. Case is preserved: lowercase
    fallback for OOV words belongs to the embedding lookup, not here.
    """

    word_to_index: dict[str, int]
    char_to_index: dict[str, int]
    min_count: int = 1

    @property
    def num_words(self) -> int:
        return len(self.word_to_index) + 2

    @property
    def num_chars(self) -> int:
        return len(self.char_to_index) + 2

    def word_index(self, surface: str) -> int:
        return self.word_to_index.get(surface, UNK_INDEX)

    def char_indices(self, surface: str) -> list[int]:
        return [self.char_to_index.get(c, UNK_INDEX) for c in surface]

    def word_list(self) -> list[str]:
        return sorted(self.word_to_index, key=self.word_to_index.get)

    def char_list(self) -> list[str]:
        return sorted(self.char_to_index, key=self.char_to_index.get)

    @classmethod
    def from_lists(cls, words: list[str], chars: list[str], min_count: int = 1) -> "Vocabulary":
        return cls(
            {w: i + 2 for i, w in enumerate(words)},
            {c: i + 2 for i, c in enumerate(chars)},
            min_count,
        )


def build_vocab(corpus: Corpus, min_count: int = 1) -> Vocabulary:
    if not corpus.sentences:
        raise ValidationError("cannot build a vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    chars: set[str] = set()
    for sent in corpus.sentences:
        for token in sent.tokens:
            counts[token.surface] += 1
            chars.update(token.surface)
    words = sorted(
        (w for w, c in counts.items() if c >= min_count),
        key=lambda w: (-counts[w], w),
    )
    return Vocabulary.from_lists(words, sorted(chars), min_count)
