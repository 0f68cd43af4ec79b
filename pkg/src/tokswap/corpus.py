"""Corpus cleaning and near-duplicate removal.

Normalization is NFC plus whitespace squeezing: runs of blanks become one
space, any whitespace run containing a newline becomes one newline, and the
ends are trimmed. The script filter keeps Cyrillic, Latin, digits, common
punctuation and whitespace, dropping emoji, logograms and everything else.

Near-duplicates are found with MinHash over character shingles and LSH
banding; the first document seen wins.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field
from hashlib import blake2b

import numpy as np

from .errors import DataError, UsageError

SHINGLE_K = 5
DEFAULT_NUM_PERM = 128
DEFAULT_BANDS = 16
DEFAULT_ROWS = 8
DEFAULT_THRESHOLD = 0.8
MIN_NUM_PERM = 16
DEFAULT_MINHASH_SEED = 0x5EED

_U64 = np.uint64


@dataclass
class Document:
    id: str
    text: str
    source: str = ""


@dataclass
class CorpusStats:
    doc_count: int = 0
    word_count: int = 0
    byte_count: int = 0
    dropped_dupes: int = 0
    dropped_filtered: int = 0


# ── Normalization ──────────────────────────────────────────────────────────


def normalize_text(raw) -> str:
    """Canonical text form: NFC, squeezed whitespace, trimmed. Idempotent.

    Accepts str or UTF-8 bytes; invalid byte sequences and lone surrogates
    are rejected with the offending byte offset.
    """
    if isinstance(raw, (bytes, bytearray)):
        try:
            text = bytes(raw).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DataError(f"invalid UTF-8 at byte offset {exc.start}") from None
    else:
        text = raw
        try:
            text.encode("utf-8")
        except UnicodeEncodeError as exc:
            raise DataError(f"invalid UTF-8 at byte offset {exc.start}") from None
    text = unicodedata.normalize("NFC", text)
    return _squeeze_whitespace(text)


def _squeeze_whitespace(text: str) -> str:
    out: list[str] = []
    run_has_newline = False
    in_run = False
    for ch in text:
        if ch.isspace():
            in_run = True
            if ch in ("\n", "\r"):
                run_has_newline = True
            continue
        if in_run:
            out.append("\n" if run_has_newline else " ")
            in_run = False
            run_has_newline = False
        out.append(ch)
    return "".join(out).strip()


# Kept scripts: Cyrillic (plus supplement), Latin letters up to Extended-B,
# ASCII digits, common punctuation, whitespace. Combining marks are not in
# any range, which keeps filtering NFC-stable.
_KEEP_RANGES = (
    (0x0041, 0x005A),
    (0x0061, 0x007A),
    (0x00C0, 0x00D6),
    (0x00D8, 0x00F6),
    (0x00F8, 0x00FF),
    (0x0100, 0x017F),
    (0x0180, 0x024F),
    (0x0400, 0x04FF),
    (0x0500, 0x052F),
)

_KEEP_PUNCT = set("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~") | set("«»„“”‘’‚–—…№")

_KEEP_DIGITS = set("0123456789")


def _keep_char(ch: str) -> bool:
    if ch.isspace():
        return True
    if ch in _KEEP_DIGITS or ch in _KEEP_PUNCT:
        return True
    cp = ord(ch)
    for lo, hi in _KEEP_RANGES:
        if lo <= cp <= hi:
            return True
    return False


def filter_script(text: str) -> str:
    """Drop characters outside the kept scripts, then squeeze whitespace
    again since removals can leave double spaces."""
    kept = "".join(ch for ch in text if _keep_char(ch))
    return _squeeze_whitespace(kept)


# ── MinHash ────────────────────────────────────────────────────────────────


def _splitmix64(v: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps by design
    v = (v + _U64(0x9E3779B97F4A7C15)).astype(_U64)
    v ^= v >> _U64(30)
    v = (v * _U64(0xBF58476D1CE4E5B9)).astype(_U64)
    v ^= v >> _U64(27)
    v = (v * _U64(0x94D049BB133111EB)).astype(_U64)
    v ^= v >> _U64(31)
    return v


def _shingle_hashes(text: str, k: int) -> np.ndarray:
    shingles = {text[i : i + k] for i in range(len(text) - k + 1)}
    vals = [
        int.from_bytes(blake2b(s.encode("utf-8"), digest_size=8).digest(), "little")
        for s in shingles
    ]
    return np.array(sorted(vals), dtype=_U64)


@dataclass
class MinHashSignature:
    values: np.ndarray  # shape (num_perm,), uint64 minima
    num_perm: int

    def __eq__(self, other):
        return (
            isinstance(other, MinHashSignature)
            and self.num_perm == other.num_perm
            and np.array_equal(self.values, other.values)
        )


def _perm_keys(num_perm: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, 2**64, size=num_perm, dtype=_U64)


def minhash_signature(
    text: str,
    num_perm: int = DEFAULT_NUM_PERM,
    shingle_k: int = SHINGLE_K,
    seed: int = DEFAULT_MINHASH_SEED,
) -> MinHashSignature | None:
    """MinHash over the character k-shingle set of the text.

    Returns None when the text is too short to form a single shingle; such
    documents are kept but never deduplicated. num_perm below 16 gives
    estimates too coarse to act on and is rejected.
    """
    if num_perm < MIN_NUM_PERM:
        raise UsageError(f"num_perm must be at least {MIN_NUM_PERM}, got {num_perm}")
    if shingle_k < 1:
        raise UsageError(f"shingle_k must be positive, got {shingle_k}")
    if not text:
        raise DataError("cannot fingerprint empty text")
    hashes = _shingle_hashes(text, shingle_k)
    if hashes.size == 0:
        return None
    keys = _perm_keys(num_perm, seed)
    mixed = _splitmix64(hashes[None, :] ^ keys[:, None])
    return MinHashSignature(mixed.min(axis=1), num_perm)


def estimated_jaccard(a: MinHashSignature, b: MinHashSignature) -> float:
    """Fraction of agreeing signature positions, an unbiased Jaccard estimate."""
    if a.num_perm != b.num_perm:
        raise UsageError("signatures built with different num_perm")
    return float(np.mean(a.values == b.values))


# ── LSH dedup ──────────────────────────────────────────────────────────────


def dedup_corpus(
    docs,
    threshold: float = DEFAULT_THRESHOLD,
    num_perm: int = DEFAULT_NUM_PERM,
    bands: int = DEFAULT_BANDS,
    rows: int = DEFAULT_ROWS,
    shingle_k: int = SHINGLE_K,
    seed: int = DEFAULT_MINHASH_SEED,
) -> tuple[list[Document], CorpusStats]:
    """Order-stable near-duplicate removal: a document is dropped when an
    LSH band collision points at an earlier survivor whose estimated Jaccard
    similarity reaches the threshold. Deterministic for a fixed seed."""
    if bands * rows != num_perm:
        raise UsageError(
            f"bands*rows must equal num_perm ({bands}*{rows} != {num_perm})"
        )
    if not 0.0 < threshold <= 1.0:
        raise UsageError(f"threshold must lie in (0,1], got {threshold}")

    survivors: list[Document] = []
    stats = CorpusStats()
    seen_ids: set[str] = set()
    buckets: list[dict[bytes, list[int]]] = [{} for _ in range(bands)]
    signatures: list[MinHashSignature] = []

    for doc in docs:
        if doc.id in seen_ids:
            raise DataError(f"duplicate document id {doc.id!r}")
        seen_ids.add(doc.id)
        if not doc.text:
            stats.dropped_filtered += 1
            continue
        sig = minhash_signature(doc.text, num_perm, shingle_k, seed)
        if sig is None:
            # too short to dedup; keep it, never index it
            survivors.append(doc)
            _tally(stats, doc)
            continue
        band_keys = [
            sig.values[b * rows : (b + 1) * rows].tobytes() for b in range(bands)
        ]
        candidate_ids: set[int] = set()
        for b, key in enumerate(band_keys):
            candidate_ids.update(buckets[b].get(key, ()))
        dropped = False
        for ci in sorted(candidate_ids):
            if estimated_jaccard(sig, signatures[ci]) >= threshold:
                stats.dropped_dupes += 1
                dropped = True
                break
        if dropped:
            continue
        slot = len(signatures)
        signatures.append(sig)
        for b, key in enumerate(band_keys):
            buckets[b].setdefault(key, []).append(slot)
        survivors.append(doc)
        _tally(stats, doc)

    return survivors, stats


def _tally(stats: CorpusStats, doc: Document) -> None:
    stats.doc_count += 1
    stats.word_count += len(doc.text.split())
    stats.byte_count += len(doc.text.encode("utf-8"))


# ── Document I/O ───────────────────────────────────────────────────────────


def read_documents(path) -> list[Document]:
    """Load newline-delimited JSON documents with id/text/source fields."""
    docs: list[Document] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: bad JSON ({exc.msg})") from None
            if not isinstance(rec, dict) or "id" not in rec or "text" not in rec:
                raise DataError(f"{path}: line {lineno}: need id and text fields")
            docs.append(
                Document(str(rec["id"]), str(rec["text"]), str(rec.get("source", "")))
            )
    return docs


def write_documents(docs, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            fh.write(
                json.dumps(
                    {"id": doc.id, "text": doc.text, "source": doc.source},
                    ensure_ascii=False,
                )
                + "\n"
            )
