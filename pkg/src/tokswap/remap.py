"""Map model embeddings from an old vocabulary onto a new one.

Each new token is encoded with the old tokenizer and its embedding row is
initialized as the arithmetic mean of the rows of that decomposition,
accumulated in float64, summed in decomposition order, stored in float32.
A new token whose surface exists verbatim in the old vocabulary copies the
old row bit for bit.

Word-internal pieces need care: the old tokenizer treats any first word as
if a space preceded it, so encoding a marker-less surface yields a
marker-carrying first piece. When stripping that marker leaves a surface
the old vocabulary knows, its id is substituted; otherwise the marked piece
stays and the token is flagged as fallback.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .vocab import (
    MARKER,
    NUM_SPECIALS,
    Vocabulary,
    byte_fallback_ids,
    encode,
)

MAGIC = b"EMB1"
FORMAT_VERSION = 1
ROLES = ("embedding", "lm_head")

FLAG_EXACT = "exact_copy"
FLAG_AVERAGED = "averaged"
FLAG_MARKER_ADJUSTED = "marker_adjusted"
FLAG_FALLBACK = "fallback_only"


@dataclass
class EmbeddingMatrix:
    data: np.ndarray  # (vocab_size, dim) float32
    role: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise DataError(f"unknown matrix role {self.role!r}")
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise DataError("matrix must be two-dimensional")

    @property
    def vocab_size(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def save_matrix(matrix: EmbeddingMatrix, path) -> None:
    header = struct.pack(
        "<4sIIIB",
        MAGIC,
        FORMAT_VERSION,
        matrix.vocab_size,
        matrix.dim,
        ROLES.index(matrix.role),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(matrix.data.astype("<f4", copy=False).tobytes())


def load_matrix(path) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    hsize = struct.calcsize("<4sIIIB")
    if len(blob) < hsize:
        raise DataError(f"{path}: truncated header")
    magic, version, vocab_size, dim, role_byte = struct.unpack("<4sIIIB", blob[:hsize])
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    if role_byte >= len(ROLES):
        raise DataError(f"{path}: unknown role byte {role_byte}")
    want = vocab_size * dim * 4
    payload = blob[hsize:]
    if len(payload) != want:
        raise DataError(
            f"{path}: payload holds {len(payload)} bytes, header promises {want}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(vocab_size, dim)
    bad = ~np.isfinite(data)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise DataError(f"{path}: non-finite value at row {r}, column {c}")
    return EmbeddingMatrix(data.copy(), ROLES[role_byte])


@dataclass
class RemapEntry:
    new_id: int
    old_ids: list[int]
    flag: str


@dataclass
class RemapPlan:
    entries: list[RemapEntry]
    old_vocab_size: int
    new_vocab_size: int


@dataclass
class RemapReport:
    exact_copy_count: int = 0
    averaged_count: int = 0
    marker_adjusted_count: int = 0
    fallback_only_count: int = 0
    mean_decomposition_len: float = 0.0

    def total(self) -> int:
        return (
            self.exact_copy_count
            + self.averaged_count
            + self.marker_adjusted_count
            + self.fallback_only_count
        )


def plan_remap(old_vocab: Vocabulary, new_vocab: Vocabulary) -> tuple[RemapPlan, RemapReport]:
    """Decide, for every new token, which old rows average into it."""
    entries: list[RemapEntry] = []
    report = RemapReport()
    klen_total = 0

    for piece in new_vocab.pieces:
        nid = piece.id
        if nid < NUM_SPECIALS:
            entries.append(RemapEntry(nid, [nid], FLAG_EXACT))
            report.exact_copy_count += 1
            klen_total += 1
            continue
        if new_vocab.is_byte_id(nid):
            entries.append(RemapEntry(nid, [nid], FLAG_EXACT))
            report.exact_copy_count += 1
            klen_total += 1
            continue

        surface = piece.surface
        if old_vocab.has(surface):
            entries.append(RemapEntry(nid, [old_vocab.id_of(surface)], FLAG_EXACT))
            report.exact_copy_count += 1
            klen_total += 1
            continue

        if surface.startswith(MARKER):
            text = surface[len(MARKER) :].replace(MARKER, " ")
            if text:
                old_ids = list(encode(old_vocab, text).ids)
            else:
                # the surface was nothing but the marker itself
                old_ids = byte_fallback_ids(old_vocab, MARKER)
            flag = FLAG_AVERAGED
        else:
            old_ids = list(encode(old_vocab, surface).ids)
            flag = FLAG_AVERAGED
            if old_ids:
                first_surface = old_vocab.surface_of(old_ids[0])
                if first_surface.startswith(MARKER) and not old_vocab.is_byte_id(old_ids[0]):
                    stripped = first_surface[len(MARKER) :]
                    if stripped and old_vocab.has(stripped):
                        old_ids[0] = old_vocab.id_of(stripped)
                        flag = FLAG_MARKER_ADJUSTED
                    else:
                        flag = FLAG_FALLBACK
        if not old_ids:
            raise DataError(f"old tokenizer produced no tokens for {surface!r}")
        if flag == FLAG_AVERAGED and all(old_vocab.is_byte_id(i) for i in old_ids):
            flag = FLAG_FALLBACK

        entries.append(RemapEntry(nid, old_ids, flag))
        klen_total += len(old_ids)
        if flag == FLAG_AVERAGED:
            report.averaged_count += 1
        elif flag == FLAG_MARKER_ADJUSTED:
            report.marker_adjusted_count += 1
        else:
            report.fallback_only_count += 1

    report.mean_decomposition_len = klen_total / len(entries)
    plan = RemapPlan(entries, old_vocab.size, new_vocab.size)
    return plan, report


def apply_plan_rows(source: np.ndarray, plan: RemapPlan) -> np.ndarray:
    """Build the new matrix row by row. Single-source rows are copied
    verbatim; multi-source rows average in float64, summing in
    decomposition order, then cast back to the source dtype."""
    for entry in plan.entries:
        if not entry.old_ids:
            raise DataError(f"empty decomposition for new id {entry.new_id}")
    used = sorted({i for e in plan.entries for i in e.old_ids})
    for oid in used:
        if not 0 <= oid < source.shape[0]:
            raise DataError(f"plan references old id {oid} outside the matrix")
        row = source[oid]
        if not np.isfinite(row).all():
            raise DataError(f"non-finite values in source row {oid}")

    out = np.empty((plan.new_vocab_size, source.shape[1]), dtype=source.dtype)
    for entry in plan.entries:
        if len(entry.old_ids) == 1:
            out[entry.new_id] = source[entry.old_ids[0]]
        else:
            acc = np.zeros(source.shape[1], dtype=np.float64)
            for oid in entry.old_ids:
                acc += source[oid].astype(np.float64)
            out[entry.new_id] = (acc / len(entry.old_ids)).astype(source.dtype)
    return out


def remap_embeddings(old_matrix: EmbeddingMatrix, plan: RemapPlan) -> EmbeddingMatrix:
    if old_matrix.vocab_size != plan.old_vocab_size:
        raise DataError(
            f"matrix rows ({old_matrix.vocab_size}) do not match the plan's "
            f"old vocabulary ({plan.old_vocab_size})"
        )
    return EmbeddingMatrix(apply_plan_rows(old_matrix.data, plan), old_matrix.role)


def init_lm_head(
    new_embeddings: EmbeddingMatrix,
    old_head: EmbeddingMatrix | None,
    plan: RemapPlan,
    variant: str = "copy",
) -> EmbeddingMatrix:
    """Two ways to produce the new LM head: "copy" duplicates the freshly
    remapped embedding matrix; "hm" averages rows of the old head through
    the same plan used for embeddings."""
    if variant == "copy":
        return EmbeddingMatrix(new_embeddings.data.copy(), "lm_head")
    if variant == "hm":
        if old_head is None:
            raise DataError("hm variant needs the old LM head")
        if old_head.role != "lm_head":
            raise DataError(f"expected an lm_head matrix, got {old_head.role!r}")
        return EmbeddingMatrix(apply_plan_rows(old_head.data, plan), "lm_head")
    raise DataError(f"unknown head variant {variant!r}")
