import random
from collections import Counter

import pytest

from tokswap.bpe import (
    MIN_PAIR_FREQ,
    MergeTable,
    count_words,
    encode_bpe,
    segment_word,
    train_bpe,
    train_bpe_full,
)
from tokswap.errors import DataError
from tokswap.vocab import BASE_SIZE, MARKER, decode, pretokenize


# ── Reference implementation ────────────────────────────────────────────────
#
# A deliberately dumb trainer that recounts every pair from scratch after
# each merge. Slow but obviously correct; the fast trainer must agree.


def _merge_once(syms, pair):
    out, i = [], 0
    while i < len(syms):
        if i + 1 < len(syms) and (syms[i], syms[i + 1]) == pair:
            out.append(pair[0] + pair[1])
            i += 2
        else:
            out.append(syms[i])
            i += 1
    return out


def naive_train(counts):
    words = {w: list(w) for w in counts}
    merges = []
    while True:
        pc = Counter()
        for w, syms in words.items():
            for i in range(len(syms) - 1):
                pc[(syms[i], syms[i + 1])] += counts[w]
        if not pc:
            break
        pair, freq = min(pc.items(), key=lambda kv: (-kv[1], kv[0][0] + kv[0][1], kv[0]))
        if freq < MIN_PAIR_FREQ:
            break
        merges.append((pair, freq))
        for w in words:
            words[w] = _merge_once(words[w], pair)
    return merges, {w: tuple(s) for w, s in words.items()}


# ── Hand-checked training traces ────────────────────────────────────────────


def test_low_lower_merge_order():
    counts = Counter({f"{MARKER}low": 2, f"{MARKER}lower": 1})
    result = train_bpe_full(counts, 400)
    assert result.merge_table.merges == [
        ("l", "o"),
        ("lo", "w"),
        (MARKER, "low"),
    ]
    assert result.segmentations[f"{MARKER}low"] == (f"{MARKER}low",)
    assert result.segmentations[f"{MARKER}lower"] == (f"{MARKER}low", "e", "r")


def test_low_lower_scores():
    counts = Counter({f"{MARKER}low": 2, f"{MARKER}lower": 1})
    voc, _ = train_bpe(counts, 400)
    by_surface = {p.surface: p.score for p in voc.learned_pieces()}
    # Single characters rank zero, merge products count down from -1.
    for ch in "低elorw":
        if ch in by_surface:
            assert by_surface[ch] == 0.0
    assert by_surface["lo"] == -1.0
    assert by_surface["low"] == -2.0
    assert by_surface[f"{MARKER}low"] == -3.0


def test_repeated_letter_merges():
    counts = Counter({f"{MARKER}aa": 5})
    result = train_bpe_full(counts, 400)
    assert result.merge_table.merges == [("a", "a"), (MARKER, "aa")]


def test_tie_broken_by_concatenated_surface():
    # All four pairs occur twice; "ab" sorts lowest in code-point order.
    counts = Counter({f"{MARKER}ba": 2, f"{MARKER}ab": 2})
    result = train_bpe_full(counts, 400)
    assert result.merge_table.merges[0] == ("a", "b")


def test_singleton_pairs_never_merge():
    counts = Counter({f"{MARKER}xy": 1})
    result = train_bpe_full(counts, 400)
    assert result.merge_table.merges == []
    assert result.segmentations[f"{MARKER}xy"] == (MARKER, "x", "y")


def test_vocab_budget_respected():
    counts = Counter({f"{MARKER}abab": 10, f"{MARKER}abc": 5})
    chars = {MARKER, "a", "b", "c"}
    budget = BASE_SIZE + len(chars) + 2
    voc, table = train_bpe(counts, budget)
    assert voc.size <= budget
    assert len(voc.learned_pieces()) == len(chars) + 2


def test_empty_counts_rejected():
    with pytest.raises(DataError):
        train_bpe(Counter(), 400)


def test_too_small_budget_rejected():
    counts = Counter({f"{MARKER}ab": 3})
    with pytest.raises(DataError):
        train_bpe(counts, BASE_SIZE + 3)


# ── Agreement with the reference trainer ────────────────────────────────────


def test_matches_naive_trainer_on_random_corpora():
    rng = random.Random(99)
    for trial in range(25):
        alphabet = "абвг"[: rng.randint(2, 4)]
        counts = Counter()
        for _ in range(rng.randint(5, 40)):
            w = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 7)))
            counts[MARKER + w] += rng.randint(1, 9)
        expected_merges, expected_words = naive_train(counts)
        result = train_bpe_full(counts, 2000)
        got = result.merge_table.merges
        assert got == [p for p, _ in expected_merges], f"trial {trial}"
        assert result.segmentations == expected_words, f"trial {trial}"


def test_merge_frequencies_never_increase():
    rng = random.Random(5)
    counts = Counter()
    for _ in range(60):
        w = "".join(rng.choice("клмн") for _ in range(rng.randint(2, 8)))
        counts[MARKER + w] += rng.randint(1, 6)
    freqs = [f for _, f in naive_train(counts)[0]]
    assert freqs == sorted(freqs, reverse=True)
    assert all(f >= MIN_PAIR_FREQ for f in freqs)


def test_insertion_order_does_not_matter():
    rng = random.Random(17)
    items = []
    for _ in range(40):
        w = "".join(rng.choice("уфхц") for _ in range(rng.randint(1, 6)))
        items.append((MARKER + w, rng.randint(1, 5)))
    a = Counter()
    for w, f in items:
        a[w] += f
    b = Counter()
    for w, f in reversed(items):
        b[w] += f
    ra = train_bpe_full(a, 1000)
    rb = train_bpe_full(b, 1000)
    assert ra.merge_table.merges == rb.merge_table.merges
    assert ra.vocab == rb.vocab


# ── Replay encoder ──────────────────────────────────────────────────────────


def test_replay_reproduces_training_segmentations(small_corpus_counts):
    result = train_bpe_full(small_corpus_counts, BASE_SIZE + 300)
    for word, segmented in result.segmentations.items():
        assert tuple(segment_word(result.vocab, result.merge_table, word)) == segmented


def test_encode_matches_hand_example():
    counts = Counter({f"{MARKER}low": 2, f"{MARKER}lower": 1})
    voc, table = train_bpe(counts, 400)
    seq = encode_bpe(voc, table, "low lower")
    surfaces = [voc.surface_of(i) for i in seq.ids]
    assert surfaces == [f"{MARKER}low", f"{MARKER}low", "e", "r"]
    assert decode(voc, seq) == "low lower"


def test_encode_falls_back_to_bytes_for_unseen_chars():
    counts = Counter({f"{MARKER}low": 2})
    voc, table = train_bpe(counts, 400)
    seq = encode_bpe(voc, table, "low¥")
    # U+00A5 is C2 A5 in UTF-8.
    assert seq.ids[-2:] == [voc.byte_id(0xC2), voc.byte_id(0xA5)]
    assert decode(voc, seq) == "low¥"


def test_merges_never_cross_word_boundary():
    counts = Counter({f"{MARKER}ab": 4, f"{MARKER}ba": 4})
    voc, table = train_bpe(counts, 400)
    seq = encode_bpe(voc, table, "ab ab")
    surfaces = [voc.surface_of(i) for i in seq.ids]
    assert surfaces.count(f"{MARKER}ab") == 2


def test_count_words_splits_lines():
    counts = count_words(["a b\nc", "a"])
    assert counts == Counter({f"{MARKER}a": 2, f"{MARKER}b": 1, f"{MARKER}c": 1})


def test_merge_table_validation():
    with pytest.raises(DataError):
        MergeTable([("a", "b"), ("a", "b")])
    with pytest.raises(DataError):
        MergeTable([("", "b")])


def test_pretokenize_then_train_sees_markers(small_corpus_counts):
    assert all(w.startswith(MARKER) for w in small_corpus_counts)
