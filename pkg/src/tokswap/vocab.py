"""Shared vocabulary model for both tokenizer families.

A vocabulary is an ordered list of scored pieces. The first three ids are
special tokens, the next 256 are byte-fallback pieces, and everything after
that is learned. Word boundaries are carried by the U+2581 marker attached
as a prefix to the following word, so "a b" pretokenizes to "\u2581a\u2581b".

Texts that themselves contain U+2581 are outside the round-trip contract:
the marker cannot be told apart from a real occurrence of the character.
The corpus cleaning stage removes it.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass, field

from .errors import DataError

MARKER = "\u2581"  # attaches to the word that follows a space

UNK_ID = 0
BOS_ID = 1
EOS_ID = 2
SPECIAL_SURFACES = ("<unk>", "<s>", "</s>")
NUM_SPECIALS = len(SPECIAL_SURFACES)
NUM_BYTE_PIECES = 256
BASE_SIZE = NUM_SPECIALS + NUM_BYTE_PIECES

# Byte-fallback edges must lose against any ordinary piece path but still
# beat pieces sitting at the unigram log-prob floor.
BYTE_PIECE_SCORE = -1e7

VOCAB_KINDS = ("bpe", "unigram")


class VocabError(DataError):
    """Malformed vocabulary, at construction or load time."""


def byte_piece_surface(value: int) -> str:
    return "<0x%02X>" % value


RESERVED_SURFACES = frozenset(SPECIAL_SURFACES) | {
    byte_piece_surface(b) for b in range(NUM_BYTE_PIECES)
}


@dataclass
class Piece:
    surface: str
    score: float
    id: int


@dataclass
class TokenSequence:
    """Token ids plus the character span each token covers in the
    pretokenized string. Spans are emitted in order; a multi-byte fallback
    run gives the full char span to its first byte token and zero-width
    spans to the rest."""

    ids: list[int]
    offsets: list[tuple[int, int]]

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)


@dataclass
class Vocabulary:
    pieces: list[Piece]
    kind: str
    merges: list[tuple[str, str]] | None = None
    _surface_to_id: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in VOCAB_KINDS:
            raise VocabError(f"unknown vocabulary kind {self.kind!r}")
        if self.kind == "bpe" and self.merges is None:
            raise VocabError("bpe vocabulary requires a merge table")
        if self.kind == "unigram" and self.merges is not None:
            raise VocabError("unigram vocabulary must not carry merges")
        if len(self.pieces) < BASE_SIZE:
            raise VocabError(
                f"vocabulary needs at least {BASE_SIZE} pieces "
                "(specials plus byte fallback)"
            )
        lookup: dict[str, int] = {}
        for idx, piece in enumerate(self.pieces):
            if piece.id != idx:
                raise VocabError(f"piece id {piece.id} at index {idx} out of order")
            if not piece.surface:
                raise VocabError(f"empty surface at id {idx}")
            if piece.surface in lookup:
                raise VocabError(f"duplicate surface {piece.surface!r} at id {idx}")
            if piece.score != piece.score or piece.score in (float("inf"), float("-inf")):
                raise VocabError(f"non-finite score at id {idx}")
            if self.kind == "unigram" and piece.score > 0:
                raise VocabError(f"positive unigram score at id {idx}")
            lookup[piece.surface] = idx
        for i, surf in enumerate(SPECIAL_SURFACES):
            if self.pieces[i].surface != surf:
                raise VocabError(f"id {i} must be the special {surf!r}")
        for b in range(NUM_BYTE_PIECES):
            want = byte_piece_surface(b)
            if self.pieces[NUM_SPECIALS + b].surface != want:
                raise VocabError(f"id {NUM_SPECIALS + b} must be the byte piece {want!r}")
        self._surface_to_id = lookup

    @classmethod
    def build(
        cls,
        kind: str,
        learned: list[tuple[str, float]],
        merges: list[tuple[str, str]] | None = None,
    ) -> "Vocabulary":
        """Assemble a vocabulary from learned (surface, score) pairs, adding
        the fixed special and byte-fallback prefix."""
        pieces = [Piece(s, 0.0, i) for i, s in enumerate(SPECIAL_SURFACES)]
        for b in range(NUM_BYTE_PIECES):
            pieces.append(Piece(byte_piece_surface(b), 0.0, NUM_SPECIALS + b))
        for surface, score in learned:
            if surface in RESERVED_SURFACES:
                raise VocabError(f"learned piece collides with reserved surface {surface!r}")
            pieces.append(Piece(surface, score, len(pieces)))
        return cls(pieces, kind, merges)

    @property
    def size(self) -> int:
        return len(self.pieces)

    def __len__(self) -> int:
        return len(self.pieces)

    def has(self, surface: str) -> bool:
        return surface in self._surface_to_id

    def id_of(self, surface: str) -> int:
        return self._surface_to_id[surface]

    def surface_of(self, token_id: int) -> str:
        return self.pieces[token_id].surface

    def is_byte_id(self, token_id: int) -> bool:
        return NUM_SPECIALS <= token_id < BASE_SIZE

    def byte_id(self, value: int) -> int:
        return NUM_SPECIALS + value

    def learned_pieces(self) -> list[Piece]:
        return self.pieces[BASE_SIZE:]


def pretokenize(text: str) -> str:
    """Mark word boundaries: every space becomes the marker glued to the next
    word, and the first word gets one too. Empty text stays empty."""
    if not text:
        return ""
    return MARKER + text.replace(" ", MARKER)


def split_marked(marked: str) -> list[str]:
    """Split a pretokenized string into words, each starting with the marker."""
    if not marked:
        return []
    parts = marked.split(MARKER)
    return [MARKER + p for p in parts[1:]]


def byte_fallback_ids(vocab: Vocabulary, ch: str) -> list[int]:
    return [vocab.byte_id(b) for b in ch.encode("utf-8")]


def encode(vocab: Vocabulary, text: str) -> TokenSequence:
    """Tokenize text with whichever family the vocabulary was trained for.

    Total on any str input: characters outside the vocabulary fall back to
    byte pieces, so encoding never fails.
    """
    from . import bpe, unigram

    if vocab.kind == "bpe":
        return bpe.encode_bpe(vocab, vocab.merges, text)
    return unigram.encode_unigram(vocab, text)


def segment_standalone(vocab: Vocabulary, word: str) -> list[str]:
    """Segment a bare word without the leading boundary marker.

    Used for marker-sensitivity reporting; returns piece surfaces, with
    byte-fallback characters kept as themselves.
    """
    from . import bpe, unigram

    if not word:
        return []
    if vocab.kind == "bpe":
        return bpe.segment_word(vocab, vocab.merges, word)
    return unigram.segment_word(vocab, word)


@dataclass
class DecodeResult:
    text: str
    replacements: int  # count of invalid byte runs turned into U+FFFD


def _decode_utf8(buf: bytes) -> tuple[str, int]:
    out = []
    replaced = 0
    pos = 0
    while pos < len(buf):
        try:
            out.append(buf[pos:].decode("utf-8"))
            break
        except UnicodeDecodeError as exc:
            out.append(buf[pos : pos + exc.start].decode("utf-8"))
            out.append("\ufffd")
            replaced += 1
            pos += exc.start + max(1, exc.end - exc.start)
    return "".join(out), replaced


def decode_full(vocab: Vocabulary, ids) -> DecodeResult:
    try:
        ids = [operator.index(t) for t in ids]
    except TypeError:
        raise VocabError("token ids must be integers") from None
    for pos, tid in enumerate(ids):
        if not 0 <= tid < vocab.size:
            raise VocabError(f"token id {tid} out of range at position {pos}")
    parts: list[str] = []
    replaced = 0
    i = 0
    while i < len(ids):
        if vocab.is_byte_id(ids[i]):
            buf = bytearray()
            while i < len(ids) and vocab.is_byte_id(ids[i]):
                buf.append(ids[i] - NUM_SPECIALS)
                i += 1
            text, r = _decode_utf8(bytes(buf))
            parts.append(text)
            replaced += r
        else:
            parts.append(vocab.surface_of(ids[i]).replace(MARKER, " "))
            i += 1
    out = "".join(parts)
    if out.startswith(" "):
        out = out[1:]
    return DecodeResult(out, replaced)


def decode(vocab: Vocabulary, ids) -> str:
    return decode_full(vocab, ids).text


# ── Vocabulary file format ─────────────────────────────────────────────────
#
# VOCAB v1 kind=<bpe|unigram> size=<n>
# <id>\t<surface>\t<score>          (size lines, ids ascending from 0)
# MERGES                            (bpe only)
# <left>\t<right>                   (one merge per rank)
#
# Tabs, newlines and backslashes inside surfaces are escaped as \t \n \\.


def _escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def _unescape(s: str, lineno: int) -> str:
    out = []
    i = 0
    while i < len(s):
        c = s[i]
        if c != "\\":
            out.append(c)
            i += 1
            continue
        if i + 1 >= len(s):
            raise VocabError(f"line {lineno}: dangling escape")
        nxt = s[i + 1]
        if nxt == "t":
            out.append("\t")
        elif nxt == "n":
            out.append("\n")
        elif nxt == "\\":
            out.append("\\")
        else:
            raise VocabError(f"line {lineno}: bad escape \\{nxt}")
        i += 2
    return "".join(out)


def save_vocab(vocab: Vocabulary, path) -> None:
    lines = [f"VOCAB v1 kind={vocab.kind} size={vocab.size}"]
    for piece in vocab.pieces:
        lines.append(f"{piece.id}\t{_escape(piece.surface)}\t{piece.score!r}")
    if vocab.kind == "bpe":
        lines.append("MERGES")
        for left, right in vocab.merges:
            lines.append(f"{_escape(left)}\t{_escape(right)}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_vocab(path) -> Vocabulary:
    with open(path, "r", encoding="utf-8", newline="\n") as fh:
        raw = fh.read()
    lines = raw.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise VocabError("line 1: empty vocabulary file")

    header = lines[0].split(" ")
    if (
        len(header) != 4
        or header[0] != "VOCAB"
        or header[1] != "v1"
        or not header[2].startswith("kind=")
        or not header[3].startswith("size=")
    ):
        raise VocabError(f"line 1: bad header {lines[0]!r}")
    kind = header[2][5:]
    if kind not in VOCAB_KINDS:
        raise VocabError(f"line 1: unknown kind {kind!r}")
    try:
        size = int(header[3][5:])
    except ValueError:
        raise VocabError(f"line 1: bad size field {header[3]!r}") from None

    if len(lines) < 1 + size:
        raise VocabError(f"line {len(lines)}: truncated, header promises {size} pieces")

    pieces: list[Piece] = []
    seen: dict[str, int] = {}
    for idx in range(size):
        lineno = idx + 2
        cols = lines[1 + idx].split("\t")
        if len(cols) != 3:
            raise VocabError(f"line {lineno}: expected 3 tab-separated fields")
        try:
            pid = int(cols[0])
        except ValueError:
            raise VocabError(f"line {lineno}: bad id {cols[0]!r}") from None
        if pid != idx:
            raise VocabError(f"line {lineno}: id {pid} out of order, expected {idx}")
        surface = _unescape(cols[1], lineno)
        try:
            score = float(cols[2])
        except ValueError:
            raise VocabError(f"line {lineno}: malformed score {cols[2]!r}") from None
        if score != score or score in (float("inf"), float("-inf")):
            raise VocabError(f"line {lineno}: non-finite score")
        if surface in seen:
            raise VocabError(
                f"line {lineno}: duplicate surface {surface!r}, first at line {seen[surface]}"
            )
        seen[surface] = lineno
        pieces.append(Piece(surface, score, pid))

    merges: list[tuple[str, str]] | None = None
    rest = lines[1 + size :]
    if kind == "bpe":
        if not rest or rest[0] != "MERGES":
            raise VocabError(f"line {size + 2}: bpe vocabulary missing MERGES section")
        merges = []
        for off, line in enumerate(rest[1:]):
            lineno = size + 3 + off
            cols = line.split("\t")
            if len(cols) != 2:
                raise VocabError(f"line {lineno}: expected 2 tab-separated fields")
            merges.append((_unescape(cols[0], lineno), _unescape(cols[1], lineno)))
    elif rest:
        raise VocabError(f"line {size + 2}: trailing content after pieces")

    try:
        return Vocabulary(pieces, kind, merges)
    except VocabError as exc:
        raise VocabError(f"invalid vocabulary in {path}: {exc}") from None
