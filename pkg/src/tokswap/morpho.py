"""Morphological quality measures for trained vocabularies.

Root integrity of a tokenized word is the best longest-common-subsequence
overlap between any of its tokens and the word's root, normalized by root
length. A token that preserves the whole root scores 1.0.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, asdict
from hashlib import sha256

from .errors import DataError
from .vocab import MARKER, Vocabulary, encode, segment_standalone

NOTE_PROJECTION = "projected from token counts, not measured wall clock"


@dataclass
class MorphRecord:
    word: str
    root: str


def lcs_length(a: str, b: str) -> int:
    """Length of the longest common subsequence of two strings."""
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for ca in a:
        cur = [0]
        for j, cb in enumerate(b, 1):
            if ca == cb:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(cur[j - 1], prev[j]))
        prev = cur
    return prev[-1]


def root_integrity(record: MorphRecord, token_surfaces) -> float:
    """Max over tokens of LCS(token, root) / len(root), markers stripped."""
    if not record.root:
        raise DataError(f"empty root for word {record.word!r}")
    if not token_surfaces:
        return 0.0
    best = 0
    for surface in token_surfaces:
        stripped = surface.replace(MARKER, "")
        got = lcs_length(stripped, record.root)
        if got > best:
            best = got
    return best / len(record.root)


def load_morph_dataset(path) -> tuple[list[MorphRecord], int]:
    """Read tab-separated word/root pairs. Unreadable lines are skipped and
    counted, never fatal."""
    records: list[MorphRecord] = []
    skipped = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2 or not cols[0]:
                skipped += 1
                continue
            records.append(MorphRecord(cols[0], cols[1]))
    return records, skipped


@dataclass
class TokenizerReport:
    tokenizer_name: str
    vocab_size: int
    mean_root_integrity: float
    mean_root_integrity_unmarked: float
    tokens_per_word_hist: dict[int, int]
    tokens_per_word_mean: float
    tokens_per_word_median: float
    evaluated: int
    skipped: int
    flagged_root_longer: int
    weighted: bool
    dataset_hash: str | None = None
    corpus_tokens: int | None = None
    corpus_hash: str | None = None

    def to_json(self) -> str:
        d = asdict(self)
        d["tokens_per_word_hist"] = {str(k): v for k, v in d["tokens_per_word_hist"].items()}
        return json.dumps(d, ensure_ascii=False, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TokenizerReport":
        d = json.loads(text)
        d["tokens_per_word_hist"] = {
            int(k): v for k, v in d["tokens_per_word_hist"].items()
        }
        return cls(**d)


def _dataset_hash(records) -> str:
    h = sha256()
    for r in records:
        h.update(r.word.encode("utf-8"))
        h.update(b"\t")
        h.update(r.root.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def _corpus_hash(texts) -> str:
    h = sha256()
    for t in texts:
        h.update(t.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


def token_surfaces(vocab: Vocabulary, seq) -> list[str]:
    """Surfaces for scoring: regular pieces verbatim, byte-fallback runs
    fused back into the characters they encode."""
    from .vocab import decode_full

    out: list[str] = []
    run: list[int] = []
    for tid in seq.ids:
        if vocab.is_byte_id(tid):
            run.append(tid)
            continue
        if run:
            out.append(decode_full(vocab, run).text)
            run = []
        out.append(vocab.surface_of(tid))
    if run:
        out.append(decode_full(vocab, run).text)
    return out


def evaluate_tokenizer(
    vocab: Vocabulary,
    records,
    word_freq: dict[str, int] | None = None,
    corpus_sample=None,
    name: str = "tokenizer",
) -> TokenizerReport:
    """Score a vocabulary against (word, root) records.

    Words are encoded standalone, marker attached, which matches how they
    appear at the start of a text; the marker-free segmentation feeds the
    sensitivity column. Pass word_freq for frequency weighting and a
    corpus_sample (iterable of texts) to record total token counts for
    efficiency projections.
    """
    records = list(records)
    weighted = word_freq is not None
    total_w = 0.0
    integ_sum = 0.0
    integ_sum_unmarked = 0.0
    hist: dict[int, int] = {}
    per_word_counts: list[tuple[int, float]] = []
    evaluated = 0
    skipped = 0
    flagged = 0

    for rec in records:
        if not rec.root or not rec.word:
            skipped += 1
            continue
        if len(rec.root) > len(rec.word):
            flagged += 1
        w = float(word_freq.get(rec.word, 1)) if weighted else 1.0
        seq = encode(vocab, rec.word)
        surfaces = token_surfaces(vocab, seq)
        integ_sum += w * root_integrity(rec, surfaces)
        unmarked = segment_standalone(vocab, rec.word)
        integ_sum_unmarked += w * root_integrity(rec, unmarked)
        ntok = len(seq)
        hist[ntok] = hist.get(ntok, 0) + (int(w) if weighted else 1)
        per_word_counts.append((ntok, w))
        total_w += w
        evaluated += 1

    if evaluated == 0:
        raise DataError("no usable records in the dataset")

    mean_tokens = sum(n * w for n, w in per_word_counts) / total_w
    median_tokens = _weighted_median(per_word_counts)

    corpus_tokens = None
    corpus_hash = None
    if corpus_sample is not None:
        texts = [t if isinstance(t, str) else t.text for t in corpus_sample]
        corpus_tokens = sum(len(encode(vocab, t)) for t in texts)
        corpus_hash = _corpus_hash(texts)

    return TokenizerReport(
        tokenizer_name=name,
        vocab_size=vocab.size,
        mean_root_integrity=integ_sum / total_w,
        mean_root_integrity_unmarked=integ_sum_unmarked / total_w,
        tokens_per_word_hist=dict(sorted(hist.items())),
        tokens_per_word_mean=mean_tokens,
        tokens_per_word_median=median_tokens,
        evaluated=evaluated,
        skipped=skipped,
        flagged_root_longer=flagged,
        weighted=weighted,
        dataset_hash=_dataset_hash(records),
        corpus_tokens=corpus_tokens,
        corpus_hash=corpus_hash,
    )


def _weighted_median(pairs) -> float:
    if not pairs:
        return 0.0
    if all(w == 1.0 for _, w in pairs):
        return float(statistics.median(n for n, _ in pairs))
    expanded = sorted(pairs)
    total = sum(w for _, w in expanded)
    acc = 0.0
    for n, w in expanded:
        acc += w
        if acc >= total / 2:
            return float(n)
    return float(expanded[-1][0])


@dataclass
class EfficiencyProjection:
    old_name: str
    new_name: str
    token_ratio: float
    speedup_percent: float
    memory_ratio: float
    note: str = NOTE_PROJECTION


def efficiency_projection(
    report_old: TokenizerReport, report_new: TokenizerReport
) -> EfficiencyProjection:
    """Project generation speedup and KV-memory ratio from total token
    counts over a shared corpus sample. A text that took 27 tokens before
    and 17 after projects to a 58.8 percent speedup."""
    old_total = report_old.corpus_tokens
    new_total = report_new.corpus_tokens
    if not old_total or not new_total:
        raise DataError("both reports need nonzero corpus token totals")
    if (
        report_old.corpus_hash
        and report_new.corpus_hash
        and report_old.corpus_hash != report_new.corpus_hash
    ):
        raise DataError("reports were built over different corpus samples")
    ratio = old_total / new_total
    return EfficiencyProjection(
        old_name=report_old.tokenizer_name,
        new_name=report_new.tokenizer_name,
        token_ratio=ratio,
        speedup_percent=(ratio - 1.0) * 100.0,
        memory_ratio=ratio,
    )
