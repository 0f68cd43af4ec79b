"""Byte-pair-encoding trainer and the merge-replay encoder.

Merges never cross word boundaries because candidate pairs are only counted
inside pretokenized words. The trainer keeps its final word segmentations
around so tests can confirm that replaying the merge table reproduces them.
"""

from __future__ import annotations

import heapq
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .errors import DataError
from .vocab import (
    BASE_SIZE,
    RESERVED_SURFACES,
    TokenSequence,
    Vocabulary,
    byte_fallback_ids,
    pretokenize,
    split_marked,
)

MIN_PAIR_FREQ = 2  # pairs seen once never merge

Pair = tuple[str, str]


@dataclass
class MergeTable:
    """Ordered merge rules; rank is the list position."""

    merges: list[Pair]
    ranks: dict[Pair, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ranks: dict[Pair, int] = {}
        for rank, pair in enumerate(self.merges):
            if pair in ranks:
                raise DataError(f"duplicate merge pair {pair!r}")
            if not pair[0] or not pair[1]:
                raise DataError(f"empty side in merge pair at rank {rank}")
            ranks[pair] = rank
        self.ranks = ranks

    def __len__(self) -> int:
        return len(self.merges)


def count_words(corpus) -> Counter:
    """Exact multiset of pretokenized words over an iterable of documents
    (anything with a .text) or plain strings. Each line counts separately,
    so newlines never end up inside words."""
    counts: Counter = Counter()
    for doc in corpus:
        text = doc if isinstance(doc, str) else doc.text
        for line in text.split("\n"):
            marked = pretokenize(line)
            if marked:
                counts.update(split_marked(marked))
    return counts


@dataclass
class BpeTrainResult:
    vocab: Vocabulary
    merge_table: MergeTable
    segmentations: dict[str, tuple[str, ...]]  # training-side word states


def _merge_word(syms: list[str], pair: Pair) -> list[str]:
    """Apply one merge everywhere in a word, leftmost occurrence first."""
    merged = pair[0] + pair[1]
    out: list[str] = []
    i = 0
    n = len(syms)
    while i < n:
        if i + 1 < n and syms[i] == pair[0] and syms[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(syms[i])
            i += 1
    return out


def _word_pairs(syms: list[str]) -> Counter:
    c: Counter = Counter()
    for i in range(len(syms) - 1):
        c[(syms[i], syms[i + 1])] += 1
    return c


def train_bpe_full(counts: Counter, vocab_size: int) -> BpeTrainResult:
    """Greedy merge training over word counts.

    The highest-frequency pair merges first; ties go to the pair whose
    concatenated surface is smallest in code-point order (the boundary
    marker U+2581 sorts above ASCII on its own). Training stops when the
    vocabulary is full or no pair reaches MIN_PAIR_FREQ.
    """
    if not counts:
        raise DataError("empty word counts")
    chars = sorted({ch for word in counts for ch in word})
    min_size = BASE_SIZE + len(chars)
    if vocab_size <= min_size:
        raise DataError(
            f"vocab_size {vocab_size} too small: need more than {min_size} "
            f"(specials + byte fallback + {len(chars)} base characters)"
        )

    words: list[list[str]] = []
    freqs: list[int] = []
    keys: list[str] = []
    for word, freq in counts.items():
        words.append(list(word))
        freqs.append(freq)
        keys.append(word)

    pair_counts: Counter = Counter()
    pair_words: defaultdict[Pair, set[int]] = defaultdict(set)
    for wi, syms in enumerate(words):
        for pair, occ in _word_pairs(syms).items():
            pair_counts[pair] += occ * freqs[wi]
            pair_words[pair].add(wi)

    # Lazy max-heap: every count change pushes a fresh entry, stale entries
    # are skipped on pop. Tuple order implements the tie-break.
    heap: list[tuple[int, str, Pair]] = [
        (-cnt, pair[0] + pair[1], pair) for pair, cnt in pair_counts.items()
    ]
    heapq.heapify(heap)

    merges: list[Pair] = []
    new_surfaces: list[str] = []
    surface_set = set(chars)
    current_size = min_size

    while current_size < vocab_size and heap:
        neg, _, pair = heapq.heappop(heap)
        cnt = pair_counts.get(pair, 0)
        if cnt != -neg:
            continue  # stale
        if cnt < MIN_PAIR_FREQ:
            break
        merged = pair[0] + pair[1]
        if merged in RESERVED_SURFACES:
            del pair_counts[pair]  # never resurface this pair
            continue

        merges.append(pair)
        if merged not in surface_set:
            surface_set.add(merged)
            new_surfaces.append(merged)
            current_size += 1

        touched: Counter = Counter()
        for wi in sorted(pair_words.pop(pair, ())):
            syms = words[wi]
            before = _word_pairs(syms)
            if pair not in before:
                continue
            after_syms = _merge_word(syms, pair)
            words[wi] = after_syms
            after = _word_pairs(after_syms)
            for p in before.keys() | after.keys():
                delta = after.get(p, 0) - before.get(p, 0)
                if delta:
                    touched[p] += delta * freqs[wi]
                if after.get(p, 0):
                    pair_words[p].add(wi)
        for p, delta in touched.items():
            nxt = pair_counts.get(p, 0) + delta
            if nxt <= 0:
                pair_counts.pop(p, None)
            else:
                pair_counts[p] = nxt
                heapq.heappush(heap, (-nxt, p[0] + p[1], p))
        pair_counts.pop(pair, None)

    learned = [(ch, 0.0) for ch in chars]
    learned += [(surf, -float(rank + 1)) for rank, surf in enumerate(new_surfaces)]
    table = MergeTable(merges)
    vocab = Vocabulary.build("bpe", learned, merges=list(merges))
    segmentations = {keys[wi]: tuple(words[wi]) for wi in range(len(words))}
    return BpeTrainResult(vocab, table, segmentations)


def train_bpe(counts: Counter, vocab_size: int = 32000) -> tuple[Vocabulary, MergeTable]:
    result = train_bpe_full(counts, vocab_size)
    return result.vocab, result.merge_table


def _replay(syms: list[str], ranks: dict[Pair, int]) -> list[str]:
    """Apply merges in ascending rank until none fits, leftmost-first within
    a rank. Reproduces the trainer's final segmentation on training words."""
    while len(syms) > 1:
        best_rank = None
        best_pair = None
        for i in range(len(syms) - 1):
            r = ranks.get((syms[i], syms[i + 1]))
            if r is not None and (best_rank is None or r < best_rank):
                best_rank = r
                best_pair = (syms[i], syms[i + 1])
        if best_pair is None:
            break
        syms = _merge_word(syms, best_pair)
    return syms


def segment_word(vocab: Vocabulary, merge_table, word: str) -> list[str]:
    """Segment one word (marker optional) into piece surfaces; characters
    with no piece stay as single-character strings."""
    ranks = merge_table.ranks if isinstance(merge_table, MergeTable) else MergeTable(list(merge_table)).ranks
    return _replay(list(word), ranks)


def encode_bpe(vocab: Vocabulary, merge_table, text: str) -> TokenSequence:
    if isinstance(merge_table, MergeTable):
        ranks = merge_table.ranks
    else:
        ranks = MergeTable(list(merge_table or [])).ranks
    marked = pretokenize(text)
    ids: list[int] = []
    offsets: list[tuple[int, int]] = []
    pos = 0
    for word in split_marked(marked):
        for sym in _replay(list(word), ranks):
            if vocab.has(sym):
                ids.append(vocab.id_of(sym))
                offsets.append((pos, pos + len(sym)))
                pos += len(sym)
            else:
                # unseen character: byte fallback, one char at a time
                for ch in sym:
                    bids = byte_fallback_ids(vocab, ch)
                    ids.append(bids[0])
                    offsets.append((pos, pos + 1))
                    for b in bids[1:]:
                        ids.append(b)
                        offsets.append((pos + 1, pos + 1))
                    pos += 1
    return TokenSequence(ids, offsets)
