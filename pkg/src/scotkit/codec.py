"""Interleaved text-coordinate instruction codec.

An instruction is a caption whose grounded entity mentions are each
followed by a coordinate block. The canonical block grammar is

    <|box|>x1,y1,x2,y2<|/box|>

with four integers in [0, 1000] and no interior spaces. Spans are
1-based inclusive token indices into the caption token sequence.

Decoding binds every block to the single caption token immediately
preceding it; full multi-word span recovery is not attempted because the
serialized form does not mark span starts. Round trips therefore
preserve boxes and span end positions exactly, not phrase lengths.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .geometry import BBox

BOX_OPEN = "<|box|>"
BOX_CLOSE = "<|/box|>"

_TRAILING_PUNCT = set('.,;:!?"')
_BLOCK_RE = re.compile(r"<\|box\|>(.*?)<\|/box\|>", re.DOTALL)
_PLACEHOLDER_RE = re.compile(r"<\|bbox_(\d+)\|>")
_PLACEHOLDER_PREFIX_RE = re.compile(r"<\|bbox_[^|>]*\|?>?")


class CodecError(Exception):
    """Base class for instruction encoding/decoding failures."""


class PhraseNotFound(CodecError):
    def __init__(self, phrase: str):
        super().__init__(f"phrase not found in caption: {phrase!r}")
        self.phrase = phrase


class OverlappingSpans(CodecError):
    def __init__(self, phrase: str):
        super().__init__(f"every occurrence of {phrase!r} is already claimed")
        self.phrase = phrase


class MissingObject(CodecError):
    def __init__(self, index: int):
        super().__init__(f"placeholder <|bbox_{index}|> has no matching object")
        self.index = index


class UnusedObject(CodecError):
    def __init__(self, index: int):
        super().__init__(f"object {index} has no matching placeholder")
        self.index = index


class MalformedPlaceholder(CodecError):
    def __init__(self, text: str):
        super().__init__(f"malformed placeholder: {text!r}")
        self.text = text


class UnbalancedBlock(CodecError):
    pass


class CoordOutOfRange(CodecError):
    def __init__(self, value: str):
        super().__init__(f"coordinate out of [0, 1000]: {value!r}")
        self.value = value


class CoordCountNot4(CodecError):
    def __init__(self, payload: str):
        super().__init__(f"coordinate block must hold exactly 4 values: {payload!r}")
        self.payload = payload


class TokenKind(Enum):
    WORD = "word"
    BOX_OPEN = "box_open"
    COORD = "coord"
    BOX_CLOSE = "box_close"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    index: int


@dataclass(frozen=True)
class GroundedEntity:
    """A caption phrase with attributes, box, and inclusive token span."""

    phrase: str
    attributes: Mapping[str, str]
    box: BBox
    span: tuple[int, int]  # 1-based inclusive caption token indices

    def __post_init__(self):
        lo, hi = self.span
        if not (1 <= lo <= hi):
            raise CodecError(f"invalid span {self.span} for {self.phrase!r}")


@dataclass(frozen=True)
class InterleavedInstruction:
    """Token sequence with entities in appearance order.

    Span end indices are non-decreasing; ties only arise from placeholder
    substitution, where several boxes may follow the same mention.
    """

    tokens: tuple[Token, ...]
    entities: tuple[GroundedEntity, ...] = field(default=())

    @property
    def caption_tokens(self) -> list[str]:
        return [t.text for t in self.tokens if t.kind is TokenKind.WORD]

    @property
    def caption(self) -> str:
        return detokenize(self.caption_tokens)

    @property
    def boxes(self) -> list[BBox]:
        return [e.box for e in self.entities]


def tokenize(text: str) -> list[str]:
    """Whitespace split with trailing punctuation peeled into own tokens."""
    out: list[str] = []
    for chunk in text.split():
        tail: list[str] = []
        while len(chunk) > 1 and chunk[-1] in _TRAILING_PUNCT:
            tail.append(chunk[-1])
            chunk = chunk[:-1]
        out.append(chunk)
        out.extend(reversed(tail))
    return out


def detokenize(tokens: Sequence[str]) -> str:
    """Inverse of tokenize up to whitespace normalization: punctuation
    tokens re-attach to the preceding token."""
    parts: list[str] = []
    for tok in tokens:
        if parts and len(tok) == 1 and tok in _TRAILING_PUNCT:
            parts[-1] += tok
        else:
            parts.append(tok)
    return " ".join(parts)


def locate_spans(tokens: Sequence[str], phrases: Sequence[str]) -> list[tuple[int, int]]:
    """Find each phrase as a token span (1-based inclusive).

    Phrases are matched case-sensitively at the leftmost occurrence whose
    tokens are not yet claimed by an earlier phrase, so repeated mentions
    resolve to successive occurrences. Returned spans are pairwise
    disjoint, aligned with the input phrase order.
    """
    claimed = [False] * len(tokens)
    spans: list[tuple[int, int]] = []
    for phrase in phrases:
        needle = tokenize(phrase)
        if not needle:
            raise PhraseNotFound(phrase)
        k = len(needle)
        found = None
        occurred = False
        for i in range(len(tokens) - k + 1):
            if list(tokens[i : i + k]) != needle:
                continue
            occurred = True
            if not any(claimed[i : i + k]):
                found = i
                break
        if found is None:
            raise OverlappingSpans(phrase) if occurred else PhraseNotFound(phrase)
        for j in range(found, found + k):
            claimed[j] = True
        spans.append((found + 1, found + k))
    return spans


def _build_instruction(
    caption_tokens: Sequence[str],
    entities: Sequence[GroundedEntity],
) -> InterleavedInstruction:
    """Assemble the token sequence: caption tokens with each entity's
    coordinate block inserted right after its span end (entities must be
    ordered by span end)."""
    tokens: list[Token] = []
    idx = 0

    def emit(kind: TokenKind, text: str) -> None:
        nonlocal idx
        tokens.append(Token(kind, text, idx))
        idx += 1

    ei = 0
    for pos, word in enumerate(caption_tokens, start=1):
        emit(TokenKind.WORD, word)
        while ei < len(entities) and entities[ei].span[1] == pos:
            box = entities[ei].box
            emit(TokenKind.BOX_OPEN, BOX_OPEN)
            for coord in box.as_list():
                emit(TokenKind.COORD, str(coord))
            emit(TokenKind.BOX_CLOSE, BOX_CLOSE)
            ei += 1
    if ei != len(entities):
        raise CodecError("entity span ends exceed the caption length")
    return InterleavedInstruction(tuple(tokens), tuple(entities))


def interleave(
    caption: str,
    entities: Iterable[tuple[str, BBox]],
) -> InterleavedInstruction:
    """Attach each entity's coordinate block right after its mention.

    Entities are located via locate_spans and emitted in appearance
    order (strictly increasing span ends).
    """
    pairs = list(entities)
    tokens = tokenize(caption)
    spans = locate_spans(tokens, [p for p, _ in pairs])
    grounded = [
        GroundedEntity(phrase=p, attributes={}, box=b, span=s)
        for (p, b), s in zip(pairs, spans)
    ]
    grounded.sort(key=lambda e: e.span[1])
    return _build_instruction(tokens, grounded)


def substitute_placeholders(
    prompt_text: str,
    objects: Mapping[int, BBox],
) -> InterleavedInstruction:
    """Replace each ``<|bbox_N|>`` placeholder with the coordinate block
    of objects[N]. The token immediately preceding a placeholder becomes
    the entity's span end; consecutive placeholders share it."""
    for m in _PLACEHOLDER_PREFIX_RE.finditer(prompt_text):
        if not _PLACEHOLDER_RE.fullmatch(m.group(0)):
            raise MalformedPlaceholder(m.group(0))

    matches = list(_PLACEHOLDER_RE.finditer(prompt_text))
    seen: list[int] = []
    for m in matches:
        n = int(m.group(1))
        if n not in objects:
            raise MissingObject(n)
        if n in seen:
            raise MalformedPlaceholder(m.group(0))
        seen.append(n)
    for n in objects:
        if n not in seen:
            raise UnusedObject(n)

    caption_tokens: list[str] = []
    entities: list[GroundedEntity] = []
    cursor = 0
    for m in matches:
        caption_tokens.extend(tokenize(prompt_text[cursor : m.start()]))
        cursor = m.end()
        if not caption_tokens:
            raise MalformedPlaceholder(m.group(0))
        pos = len(caption_tokens)
        n = int(m.group(1))
        entities.append(
            GroundedEntity(
                phrase=caption_tokens[-1],
                attributes={},
                box=objects[n],
                span=(pos, pos),
            )
        )
    caption_tokens.extend(tokenize(prompt_text[cursor:]))
    return _build_instruction(caption_tokens, entities)


def _parse_block_payload(payload: str) -> BBox:
    if BOX_OPEN in payload or BOX_CLOSE in payload:
        raise UnbalancedBlock(f"nested block marker in payload: {payload!r}")
    parts = payload.split(",")
    if len(parts) != 4:
        raise CoordCountNot4(payload)
    coords = []
    for part in parts:
        part = part.strip()
        if not part or not (part.isdigit() or (part[0] == "-" and part[1:].isdigit())):
            raise CoordOutOfRange(part)
        value = int(part)
        if not 0 <= value <= 1000:
            raise CoordOutOfRange(part)
        coords.append(value)
    return BBox.from_list(coords)


def parse_instruction(text: str) -> InterleavedInstruction:
    """Decode serialized instruction text back into an instruction."""
    caption_tokens: list[str] = []
    entities: list[GroundedEntity] = []
    cursor = 0
    for m in _BLOCK_RE.finditer(text):
        segment = text[cursor : m.start()]
        if BOX_OPEN in segment or BOX_CLOSE in segment:
            raise UnbalancedBlock(f"stray block marker near: {segment!r}")
        caption_tokens.extend(tokenize(segment))
        cursor = m.end()
        if not caption_tokens:
            raise UnbalancedBlock("coordinate block with no preceding token")
        box = _parse_block_payload(m.group(1))
        pos = len(caption_tokens)
        entities.append(
            GroundedEntity(
                phrase=caption_tokens[-1],
                attributes={},
                box=box,
                span=(pos, pos),
            )
        )
    trailing = text[cursor:]
    if BOX_OPEN in trailing or BOX_CLOSE in trailing:
        raise UnbalancedBlock(f"stray block marker near: {trailing!r}")
    caption_tokens.extend(tokenize(trailing))
    return _build_instruction(caption_tokens, entities)


def parse(text: str) -> tuple[str, list[GroundedEntity]]:
    """Decode instruction text into (caption, entities)."""
    instr = parse_instruction(text)
    return instr.caption, list(instr.entities)


def serialize(instruction: InterleavedInstruction) -> str:
    """Canonical text form: single-space-joined tokens, each coordinate
    block rendered as one chunk with no interior spaces."""
    chunks: list[str] = []
    toks = instruction.tokens
    i = 0
    while i < len(toks):
        tok = toks[i]
        if tok.kind is TokenKind.WORD:
            chunks.append(tok.text)
            i += 1
        elif tok.kind is TokenKind.BOX_OPEN:
            coords = [t.text for t in toks[i + 1 : i + 5]]
            if len(coords) != 4 or toks[i + 5].kind is not TokenKind.BOX_CLOSE:
                raise UnbalancedBlock("corrupt coordinate block in token stream")
            chunks.append(f"{BOX_OPEN}{','.join(coords)}{BOX_CLOSE}")
            i += 6
        else:
            raise UnbalancedBlock(f"unexpected token {tok!r}")
    return " ".join(chunks)
